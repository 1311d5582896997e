//! Two-phase optimisation: generator-only pretraining on the auxiliary
//! loss, then joint adversarial training with both discriminators.

mod dataset;
mod log;

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autograd::{Tensor, Var};
use crate::dsp::{MelConfig, MelExtractor};
use crate::losses::{
    generator_total_loss, jcu_discriminator_loss, jcu_generator_loss, singer_perceptual_loss, LossWeights,
    MultiResStftLoss, StftLossConfig,
};
use crate::model::{
    Checkpoint, CondDiscConfig, GeneratorConfig, MultiBandGenerator, ParamSet, SingerConditionalDiscriminator,
    UncondDiscConfig, UnconditionalDiscriminator, Vocoder,
};
use crate::optim::{RAdam, RAdamConfig};
use crate::speaker_encoder::{SpeakerEncoder, SpeakerEncoderConfig};
use crate::{Error, Result};

pub use dataset::{Batch, Dataset, Utterance};
pub use log::{read_log, LogRecord};

/// Marker stored in the metadata of training checkpoints.
pub const CHECKPOINT_KIND: &str = "multisinger-train";

/// Every network and feature setting needed to rebuild the models.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mel: MelConfig,
    pub generator: GeneratorConfig,
    pub uncond_disc: UncondDiscConfig,
    pub cond_disc: CondDiscConfig,
    pub encoder: SpeakerEncoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.uncond_disc.validate()?;
        self.cond_disc.validate()?;
        self.encoder.validate()?;
        if self.mel.hop_size != self.generator.hop_size {
            return Err(Error::Config(format!(
                "mel hop {} differs from generator hop {}",
                self.mel.hop_size, self.generator.hop_size
            )));
        }
        if self.mel.n_mels != self.generator.low.conditioning_channels
            || self.mel.n_mels != self.generator.high.conditioning_channels
            || self.mel.n_mels != self.encoder.n_mels
        {
            return Err(Error::Config("mel band count must match generator and encoder inputs".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let base = RAdamConfig::default();
        Self {
            lr_g: 1e-4,
            lr_d: 5e-5,
            betas: base.betas,
            eps: base.eps,
            weight_decay: base.weight_decay,
            clip_norm: base.clip_norm,
        }
    }
}

impl OptimizerConfig {
    fn radam(&self, lr: f64) -> RAdamConfig {
        RAdamConfig {
            lr,
            betas: self.betas,
            eps: self.eps,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }

    pub fn generator(&self) -> RAdamConfig {
        self.radam(self.lr_g)
    }

    pub fn discriminator(&self) -> RAdamConfig {
        self.radam(self.lr_d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub pretrain_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    /// Samples per training excerpt.
    pub segment_length: usize,
    pub optimizer: OptimizerConfig,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub stft_loss: StftLossConfig,
    /// Include the singer perceptual term (needs a speaker encoder).
    pub perceptual_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_steps: 1000,
            total_steps: 2000,
            batch_size: 2,
            segment_length: 8192,
            optimizer: OptimizerConfig::default(),
            checkpoint_interval: 500,
            seed: 0,
            weights: LossWeights::default(),
            stft_loss: StftLossConfig::default(),
            perceptual_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pretrain_steps > self.total_steps {
            return Err(Error::Config(format!(
                "pretrain_steps {} exceeds total_steps {}",
                self.pretrain_steps, self.total_steps
            )));
        }
        if self.segment_length == 0 || self.segment_length % 512 != 0 {
            return Err(Error::Config(format!(
                "segment_length {} must be a positive multiple of 256 and 512",
                self.segment_length
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.optimizer.generator().validate()?;
        self.optimizer.discriminator().validate()?;
        self.weights.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Joint,
}

/// Losses and diagnostics of one optimisation step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub phase: Phase,
    pub l_stft: f64,
    pub l_spl: f64,
    pub l_adv_g: Option<f64>,
    pub l_adv_d: Option<f64>,
    /// Mean unconditional scores on real and fake excerpts.
    pub d_real: Option<f64>,
    pub d_fake: Option<f64>,
    /// Mean singer-conditional scores on real and fake excerpts.
    pub ds_real: Option<f64>,
    pub ds_fake: Option<f64>,
    pub grad_norm_g: f64,
}

/// Exponential moving averages of the logged losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningLosses {
    pub l_stft: f64,
    pub l_spl: f64,
    pub l_adv_g: f64,
    pub l_adv_d: f64,
}

impl RunningLosses {
    const DECAY: f64 = 0.9;

    fn update(&mut self, m: &StepMetrics) {
        let ema = |acc: &mut f64, v: f64| *acc = Self::DECAY * *acc + (1.0 - Self::DECAY) * v;
        ema(&mut self.l_stft, m.l_stft);
        ema(&mut self.l_spl, m.l_spl);
        if let Some(v) = m.l_adv_g {
            ema(&mut self.l_adv_g, v);
        }
        if let Some(v) = m.l_adv_d {
            ema(&mut self.l_adv_d, v);
        }
    }

    fn to_tensor(self) -> Tensor {
        Tensor::new(vec![4], vec![self.l_stft, self.l_spl, self.l_adv_g, self.l_adv_d])
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.data() {
            &[l_stft, l_spl, l_adv_g, l_adv_d] => Ok(Self {
                l_stft,
                l_spl,
                l_adv_g,
                l_adv_d,
            }),
            _ => Err(Error::format("checkpoint", "running losses need 4 values")),
        }
    }
}

/// Everything that changes during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub generator: MultiBandGenerator,
    pub d_uncond: UnconditionalDiscriminator,
    pub d_cond: SingerConditionalDiscriminator,
    pub opt_g: RAdam,
    pub opt_du: RAdam,
    pub opt_ds: RAdam,
    pub rng: ChaCha8Rng,
    pub running: RunningLosses,
}

impl TrainState {
    pub fn new(model: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        let generator = MultiBandGenerator::new(model.generator.clone(), train.seed)?;
        let d_uncond = UnconditionalDiscriminator::new(model.uncond_disc.clone(), train.seed.wrapping_add(1))?;
        let d_cond = SingerConditionalDiscriminator::new(model.cond_disc.clone(), train.seed.wrapping_add(2))?;
        Ok(Self {
            step: 0,
            opt_g: RAdam::new(train.optimizer.generator(), generator.params())?,
            opt_du: RAdam::new(train.optimizer.discriminator(), d_uncond.params())?,
            opt_ds: RAdam::new(train.optimizer.discriminator(), d_cond.params())?,
            generator,
            d_uncond,
            d_cond,
            rng: ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(3)),
            running: RunningLosses::default(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.generator.params().all_finite() && self.d_uncond.params().all_finite() && self.d_cond.params().all_finite()
    }
}

/// Owns the models, the corpus and the frozen encoder for one run.
pub struct Trainer {
    model: ModelConfig,
    config: TrainConfig,
    data: Dataset,
    encoder: Option<SpeakerEncoder>,
    mel: MelExtractor,
    stft_loss: MultiResStftLoss,
    state: TrainState,
}

fn mean_of(v: &Var) -> f64 {
    v.value().sum() / v.value().numel() as f64
}

fn finite_or_diverged(step: u64, what: &str, v: &Var) -> Result<f64> {
    let x = v.value().item();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Diverged {
            step,
            detail: format!("{what} is {x}"),
        })
    }
}

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig, data: Dataset, encoder: Option<SpeakerEncoder>) -> Result<Self> {
        let state = TrainState::new(&model, &config)?;
        Self::with_state(model, config, data, encoder, state)
    }

    fn with_state(
        model: ModelConfig,
        config: TrainConfig,
        data: Dataset,
        encoder: Option<SpeakerEncoder>,
        state: TrainState,
    ) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if data.segment_length() != config.segment_length {
            return Err(Error::Config(format!(
                "dataset cut for {} samples, config asks for {}",
                data.segment_length(),
                config.segment_length
            )));
        }
        if config.perceptual_loss && encoder.is_none() {
            return Err(Error::Config("perceptual loss enabled but no speaker encoder given".into()));
        }
        if config.total_steps > config.pretrain_steps {
            if let Some(u) = data.items().iter().find(|u| u.embedding.is_none()) {
                return Err(Error::MissingEmbedding(u.id.clone()));
            }
        }
        Ok(Self {
            mel: MelExtractor::new(model.mel.clone())?,
            stft_loss: MultiResStftLoss::new(&config.stft_loss)?,
            model,
            config,
            data,
            encoder,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.total_steps
    }

    /// Lengthen or shorten the schedule of a resumed run. The new total may
    /// not fall below the pretraining phase or the steps already taken.
    pub fn set_total_steps(&mut self, total: u64) -> Result<()> {
        let floor = self.config.pretrain_steps.max(self.state.step);
        if total < floor {
            return Err(Error::Config(format!("total_steps {total} is below {floor}")));
        }
        if total > self.config.pretrain_steps {
            if let Some(u) = self.data.items().iter().find(|u| u.embedding.is_none()) {
                return Err(Error::MissingEmbedding(u.id.clone()));
            }
        }
        self.config.total_steps = total;
        Ok(())
    }

    fn next_batch(&mut self) -> Batch {
        let frames = self.config.segment_length / self.model.generator.hop_size;
        let noise_len = self.state.generator.noise_len(frames);
        self.data.sample(&mut self.state.rng, self.config.batch_size, noise_len)
    }

    /// Auxiliary terms for a generator output; returns `(l_stft, l_spl)`.
    fn aux_losses(&self, x: &Var, y: &Var) -> Result<(Var, Var)> {
        let l_stft = self.stft_loss.forward(x, y)?;
        let l_spl = match (&self.encoder, self.config.perceptual_loss) {
            (Some(enc), true) => singer_perceptual_loss(x, y, enc, &enc.params().bind(false), &self.mel)?,
            _ => Var::constant(Tensor::scalar(0.0)),
        };
        Ok((l_stft, l_spl))
    }

    /// One step of whichever phase the counter is in.
    pub fn step(&mut self) -> Result<StepMetrics> {
        if self.state.step < self.config.pretrain_steps {
            self.pretrain_step()
        } else {
            self.joint_step()
        }
    }

    /// Generator-only update on `½(L_spl + L_stft)`.
    pub fn pretrain_step(&mut self) -> Result<StepMetrics> {
        self.guarded(Self::pretrain_inner)
    }

    /// Discriminator update on detached fakes, then a generator update
    /// against the refreshed discriminators.
    pub fn joint_step(&mut self) -> Result<StepMetrics> {
        self.guarded(Self::joint_inner)
    }

    /// Non-finite values anywhere in a step are reported as divergence.
    fn guarded(&mut self, f: fn(&mut Self) -> Result<StepMetrics>) -> Result<StepMetrics> {
        let step = self.state.step;
        f(self).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Diverged { step, detail },
            other => other,
        })
    }

    fn pretrain_inner(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let batch = self.next_batch();
        let p_g = self.state.generator.params().bind(true);
        let x = Var::constant(batch.audio.clone());
        let y = self.state.generator.forward(&p_g, &Var::constant(batch.noise.clone()), &batch.mel)?;
        let (l_stft, l_spl) = self.aux_losses(&x, &y)?;
        let loss = generator_total_loss(&l_spl, &l_stft, None, &self.config.weights);
        finite_or_diverged(step, "generator loss", &loss)?;
        let grads = p_g.grads(&loss.backward());
        let grad_norm_g = self.state.opt_g.step(self.state.generator.params_mut(), &grads)?;
        let metrics = StepMetrics {
            step,
            phase: Phase::Pretrain,
            l_stft: l_stft.value().item(),
            l_spl: l_spl.value().item(),
            l_adv_g: None,
            l_adv_d: None,
            d_real: None,
            d_fake: None,
            ds_real: None,
            ds_fake: None,
            grad_norm_g,
        };
        self.finish(metrics)
    }

    fn joint_inner(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let batch = self.next_batch();
        let s = Var::constant(batch.require_embeddings(&self.data)?.clone());
        let x = Var::constant(batch.audio.clone());
        let p_g = self.state.generator.params().bind(true);
        let y = self.state.generator.forward(&p_g, &Var::constant(batch.noise.clone()), &batch.mel)?;

        let y_det = y.detach();
        let p_du = self.state.d_uncond.params().bind(true);
        let p_ds = self.state.d_cond.params().bind(true);
        let d_real = self.state.d_uncond.forward(&p_du, &x)?;
        let d_fake = self.state.d_uncond.forward(&p_du, &y_det)?;
        let ds_real = self.state.d_cond.forward(&p_ds, &x, &s)?;
        let ds_fake = self.state.d_cond.forward(&p_ds, &y_det, &s)?;
        let l_d = jcu_discriminator_loss(&d_real, &d_fake, &ds_real, &ds_fake);
        let l_adv_d = finite_or_diverged(step, "discriminator loss", &l_d)?;
        let g_d = l_d.backward();
        self.state.opt_du.step(self.state.d_uncond.params_mut(), &p_du.grads(&g_d))?;
        self.state.opt_ds.step(self.state.d_cond.params_mut(), &p_ds.grads(&g_d))?;

        let q_du = self.state.d_uncond.params().bind(false);
        let q_ds = self.state.d_cond.params().bind(false);
        let g_fake = self.state.d_uncond.forward(&q_du, &y)?;
        let gs_fake = self.state.d_cond.forward(&q_ds, &y, &s)?;
        let l_adv_g = jcu_generator_loss(&g_fake, &gs_fake);
        let (l_stft, l_spl) = self.aux_losses(&x, &y)?;
        let loss = generator_total_loss(&l_spl, &l_stft, Some(&l_adv_g), &self.config.weights);
        finite_or_diverged(step, "generator loss", &loss)?;
        let grads = p_g.grads(&loss.backward());
        let grad_norm_g = self.state.opt_g.step(self.state.generator.params_mut(), &grads)?;

        let metrics = StepMetrics {
            step,
            phase: Phase::Joint,
            l_stft: l_stft.value().item(),
            l_spl: l_spl.value().item(),
            l_adv_g: Some(l_adv_g.value().item()),
            l_adv_d: Some(l_adv_d),
            d_real: Some(mean_of(&d_real)),
            d_fake: Some(mean_of(&d_fake)),
            ds_real: Some(mean_of(&ds_real)),
            ds_fake: Some(mean_of(&ds_fake)),
            grad_norm_g,
        };
        self.finish(metrics)
    }

    fn finish(&mut self, metrics: StepMetrics) -> Result<StepMetrics> {
        if !self.state.all_finite() {
            return Err(Error::Diverged {
                step: metrics.step,
                detail: "non-finite parameter after update".into(),
            });
        }
        self.state.running.update(&metrics);
        self.state.step += 1;
        Ok(metrics)
    }

    /// Mean discriminator scores on a fresh batch without touching the
    /// training RNG: `(d_real, d_fake, ds_real, ds_fake)`.
    pub fn probe_discriminators(&self, seed: u64, batch: usize) -> Result<(f64, f64, f64, f64)> {
        let frames = self.config.segment_length / self.model.generator.hop_size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = self.data.sample(&mut rng, batch, self.state.generator.noise_len(frames));
        let s = Var::constant(b.require_embeddings(&self.data)?.clone());
        let p_g = self.state.generator.params().bind(false);
        let x = Var::constant(b.audio.clone());
        let y = self.state.generator.forward(&p_g, &Var::constant(b.noise.clone()), &b.mel)?;
        let p_du = self.state.d_uncond.params().bind(false);
        let p_ds = self.state.d_cond.params().bind(false);
        Ok((
            mean_of(&self.state.d_uncond.forward(&p_du, &x)?),
            mean_of(&self.state.d_uncond.forward(&p_du, &y)?),
            mean_of(&self.state.d_cond.forward(&p_ds, &x, &s)?),
            mean_of(&self.state.d_cond.forward(&p_ds, &y, &s)?),
        ))
    }

    /// Full training state, including the configs and the RNG position.
    pub fn checkpoint(&self) -> Checkpoint {
        let st = &self.state;
        let meta = json!({
            "kind": CHECKPOINT_KIND,
            "step": st.step,
            "model": self.model,
            "train": self.config,
            "optimizer_steps": {
                "g": st.opt_g.steps_taken(),
                "du": st.opt_du.steps_taken(),
                "ds": st.opt_ds.steps_taken(),
            },
            "rng": {
                "seed": st.rng.get_seed(),
                "stream": st.rng.get_stream(),
                "word_pos": st.rng.get_word_pos().to_string(),
            },
        });
        let mut ck = Checkpoint::new(meta);
        ck.insert_group("generator", st.generator.params());
        ck.insert_group("d_uncond", st.d_uncond.params());
        ck.insert_group("d_cond", st.d_cond.params());
        st.opt_g.save_into(&mut ck, "opt_g");
        st.opt_du.save_into(&mut ck, "opt_du");
        st.opt_ds.save_into(&mut ck, "opt_ds");
        let mut running = ParamSet::new();
        running.insert("losses", st.running.to_tensor());
        ck.insert_group("running", &running);
        ck
    }

    /// Rebuild a trainer from [`Trainer::checkpoint`] output. The corpus and
    /// encoder are supplied again; configs come from the checkpoint.
    pub fn resume(ck: &Checkpoint, data: Dataset, encoder: Option<SpeakerEncoder>) -> Result<Self> {
        let (model, config) = training_configs(ck)?;
        let meta = &ck.meta;
        let bad = |what: &str| Error::format("checkpoint", format!("missing or invalid `{what}`"));
        let step = meta["step"].as_u64().ok_or_else(|| bad("step"))?;
        let opt_step = |k: &str| meta["optimizer_steps"][k].as_u64().ok_or_else(|| bad("optimizer_steps"));
        let seed: [u8; 32] = serde_json::from_value(meta["rng"]["seed"].clone()).map_err(|_| bad("rng.seed"))?;
        let stream = meta["rng"]["stream"].as_u64().ok_or_else(|| bad("rng.stream"))?;
        let word_pos: u128 = meta["rng"]["word_pos"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("rng.word_pos"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let generator = MultiBandGenerator::with_params(model.generator.clone(), ck.group("generator"))?;
        let d_uncond = UnconditionalDiscriminator::with_params(model.uncond_disc.clone(), ck.group("d_uncond"))?;
        let d_cond = SingerConditionalDiscriminator::with_params(model.cond_disc.clone(), ck.group("d_cond"))?;
        let opt_g = RAdam::restore(config.optimizer.generator(), generator.params(), ck, "opt_g", opt_step("g")?)?;
        let opt_du = RAdam::restore(config.optimizer.discriminator(), d_uncond.params(), ck, "opt_du", opt_step("du")?)?;
        let opt_ds = RAdam::restore(config.optimizer.discriminator(), d_cond.params(), ck, "opt_ds", opt_step("ds")?)?;
        let running = RunningLosses::from_tensor(ck.group("running").get("losses").ok_or_else(|| bad("running"))?)?;
        let state = TrainState {
            step,
            generator,
            d_uncond,
            d_cond,
            opt_g,
            opt_du,
            opt_ds,
            rng,
            running,
        };
        Self::with_state(model, config, data, encoder, state)
    }
}

/// Model and training configs echoed into a training checkpoint.
pub fn training_configs(ck: &Checkpoint) -> Result<(ModelConfig, TrainConfig)> {
    if ck.meta["kind"] != CHECKPOINT_KIND {
        return Err(Error::format("checkpoint", "not a training checkpoint"));
    }
    let model = serde_json::from_value(ck.meta["model"].clone())
        .map_err(|e| Error::format("checkpoint", format!("model config: {e}")))?;
    let train = serde_json::from_value(ck.meta["train"].clone())
        .map_err(|e| Error::format("checkpoint", format!("train config: {e}")))?;
    Ok((model, train))
}

/// Generator and its config from a training checkpoint.
pub fn load_generator(ck: &Checkpoint) -> Result<(ModelConfig, MultiBandGenerator)> {
    let (model, _) = training_configs(ck)?;
    let g = MultiBandGenerator::with_params(model.generator.clone(), ck.group("generator"))?;
    Ok((model, g))
}

/// Where [`run_training`] writes.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub out_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into() }
    }

    pub fn log(&self) -> PathBuf {
        self.out_dir.join("train_log.jsonl")
    }

    pub fn latest(&self) -> PathBuf {
        self.out_dir.join("latest.ckpt")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.out_dir.join("final.ckpt")
    }

    pub fn at_step(&self, step: u64) -> PathBuf {
        self.out_dir.join(format!("step_{step:08}.ckpt"))
    }
}

/// Outcome of [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log: PathBuf,
    pub steps_run: u64,
    pub last: Option<StepMetrics>,
}

/// Drive `trainer` to `total_steps`, logging every step and writing
/// checkpoints every `checkpoint_interval` steps plus at the end.
///
/// `stop_after` ends the loop early (after a checkpoint is written),
/// which is how interruption is simulated in tests.
pub fn run_training(trainer: &mut Trainer, paths: &RunPaths, stop_after: Option<u64>) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&paths.out_dir).map_err(|e| Error::io(&paths.out_dir, e))?;
    let mut log = log::LogWriter::open(&paths.log(), trainer.state.step)?;
    let mut steps_run = 0;
    let mut last = None;
    let interval = trainer.config.checkpoint_interval;
    while !trainer.is_done() {
        let t0 = Instant::now();
        let m = trainer.step()?;
        log.write(&LogRecord::from_metrics(&m, t0.elapsed().as_secs_f64() * 1e3))?;
        steps_run += 1;
        let done = trainer.state.step;
        if interval > 0 && done % interval == 0 {
            let ck = trainer.checkpoint();
            ck.save(&paths.at_step(done))?;
            ck.save(&paths.latest())?;
        }
        last = Some(m);
        if stop_after.is_some_and(|n| steps_run >= n) {
            let ck = trainer.checkpoint();
            ck.save(&paths.latest())?;
            return Ok(TrainOutcome {
                final_checkpoint: paths.latest(),
                log: paths.log(),
                steps_run,
                last,
            });
        }
    }
    let ck = trainer.checkpoint();
    ck.save(&paths.final_checkpoint())?;
    ck.save(&paths.latest())?;
    Ok(TrainOutcome {
        final_checkpoint: paths.final_checkpoint(),
        log: paths.log(),
        steps_run,
        last,
    })
}

/// Resume from `out_dir/latest.ckpt` when it exists, else start fresh.
pub fn resume_or_new(
    paths: &RunPaths,
    model: ModelConfig,
    config: TrainConfig,
    data: Dataset,
    encoder: Option<SpeakerEncoder>,
) -> Result<Trainer> {
    let latest = paths.latest();
    if latest.exists() {
        Trainer::resume(&Checkpoint::load(&latest)?, data, encoder)
    } else {
        Trainer::new(model, config, data, encoder)
    }
}

#[cfg(test)]
mod tests;

//! LSTM d-vector encoder for singer identity.
//!
//! A stack of LSTM layers reads log-mel frames; the top layer's last state is
//! projected and L2-normalised into a 256-dimensional embedding. The
//! per-layer hidden sequences double as the feature space of the singer
//! perceptual loss.

mod cache;
mod ge2e;

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{embedding_cache_build, CacheBuildReport, EmbeddingCache};
pub use ge2e::ge2e_loss;

use crate::autograd::{lstm, Tensor, Var};
use crate::dsp::MelSpectrogram;
use crate::model::{Bound, Checkpoint, Init, ParamSet};
use crate::optim::{RAdam, RAdamConfig};
use crate::{Error, Result};

pub const EMBEDDING_DIM: usize = 256;

/// Marker stored in the metadata of encoder checkpoints.
pub const ENCODER_CHECKPOINT_KIND: &str = "multisinger-encoder";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerEncoderConfig {
    pub lstm_layers: usize,
    pub hidden_size: usize,
    pub projection_size: usize,
    pub n_mels: usize,
    /// Log-mel inputs are shifted and scaled by these before the LSTM.
    pub input_mean: f64,
    pub input_std: f64,
    /// When set, embed overlapping windows of this many frames (half
    /// overlap) and average them instead of reading the whole utterance.
    pub window_frames: Option<usize>,
}

impl Default for SpeakerEncoderConfig {
    fn default() -> Self {
        Self {
            lstm_layers: 3,
            hidden_size: 256,
            projection_size: EMBEDDING_DIM,
            n_mels: 80,
            input_mean: -4.0,
            input_std: 4.0,
            window_frames: None,
        }
    }
}

impl SpeakerEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projection_size != EMBEDDING_DIM {
            return Err(Error::Config(format!(
                "projection_size must be {EMBEDDING_DIM}, got {}",
                self.projection_size
            )));
        }
        if self.lstm_layers == 0 || self.hidden_size == 0 || self.n_mels == 0 || self.input_std <= 0.0 {
            return Err(Error::Config("speaker encoder sizes must be positive".into()));
        }
        if self.window_frames.is_some_and(|w| w < 2) {
            return Err(Error::Config("window_frames must be at least 2".into()));
        }
        Ok(())
    }
}

/// Unit-norm singer identity vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SingerEmbedding {
    vector: Vec<f64>,
    pub singer_id: Option<String>,
}

impl SingerEmbedding {
    /// Accepts any finite nonzero 256-vector and normalises it.
    pub fn new(vector: Vec<f64>, singer_id: Option<String>) -> Result<Self> {
        if vector.len() != EMBEDDING_DIM {
            return Err(Error::Shape(format!(
                "embedding must have {EMBEDDING_DIM} values, got {}",
                vector.len()
            )));
        }
        let n = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::NonFinite("embedding norm".into()));
        }
        Ok(Self {
            vector: vector.into_iter().map(|v| v / n).collect(),
            singer_id,
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

/// Frozen or trainable LSTM speaker encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEncoder {
    config: SpeakerEncoderConfig,
    params: ParamSet,
}

/// Output of one encoder pass over a batch.
pub struct EncoderOutput {
    /// One `[B, frames, hidden]` sequence per LSTM layer.
    pub hidden: Vec<Var>,
    /// `[B, 256]`, unit rows.
    pub embedding: Var,
}

impl SpeakerEncoder {
    pub fn new(config: SpeakerEncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut rng);
        let h = config.hidden_size;
        for l in 0..config.lstm_layers {
            let input = if l == 0 { config.n_mels } else { h };
            init.lstm(&format!("enc.lstm{l}"), input, h);
        }
        init.weight("enc.proj.weight".into(), &[config.projection_size, h]);
        init.zeros("enc.proj.bias".into(), &[config.projection_size]);
        init.value("ge2e.w".into(), 10.0);
        init.value("ge2e.b".into(), -5.0);
        Ok(Self {
            config,
            params: init.params,
        })
    }

    pub fn with_params(config: SpeakerEncoderConfig, params: ParamSet) -> Result<Self> {
        let mut e = Self::new(config, 0)?;
        e.params.check_layout(&params)?;
        e.params = params;
        Ok(e)
    }

    pub fn config(&self) -> &SpeakerEncoderConfig {
        &self.config
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": ENCODER_CHECKPOINT_KIND,
            "encoder": self.config,
        }));
        ck.insert_group("encoder", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta["kind"] != ENCODER_CHECKPOINT_KIND {
            return Err(Error::format("checkpoint", "not a speaker encoder checkpoint"));
        }
        let config = serde_json::from_value(ck.meta["encoder"].clone())
            .map_err(|e| Error::format("checkpoint", format!("encoder config: {e}")))?;
        Self::with_params(config, ck.group("encoder"))
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Differentiable pass over log-mel `[B, frames, n_mels]`.
    pub fn forward(&self, p: &Bound, mel: &Var) -> Result<EncoderOutput> {
        let c = &self.config;
        if mel.value().rank() != 3 || mel.dim(2) != c.n_mels {
            return Err(Error::Shape(format!(
                "encoder input must be [B, frames, {}], got {:?}",
                c.n_mels,
                mel.shape()
            )));
        }
        let (b, frames) = (mel.dim(0), mel.dim(1));
        if frames < 2 {
            return Err(Error::InvalidInput(format!("encoder needs at least 2 frames, got {frames}")));
        }
        let mut h = mel.add_scalar(-c.input_mean).scale(1.0 / c.input_std);
        let mut hidden = Vec::with_capacity(c.lstm_layers);
        for l in 0..c.lstm_layers {
            let name = |s: &str| format!("enc.lstm{l}.{s}");
            h = lstm(&h, p.get(&name("w_ih")), p.get(&name("w_hh")), p.get(&name("bias")));
            hidden.push(h.clone());
        }
        let last = h.narrow(1, frames - 1, 1).reshape(&[b, c.hidden_size]);
        let embedding = last
            .linear(p.get("enc.proj.weight"), Some(p.get("enc.proj.bias")))
            .l2_normalize_rows();
        Ok(EncoderOutput { hidden, embedding })
    }

    fn single(mel: &MelSpectrogram) -> Var {
        Var::constant(Tensor::new(vec![1, mel.frames, mel.n_mels], mel.values.clone()))
    }

    /// Per-layer hidden sequences, each `[frames, hidden]`.
    pub fn hidden_states(&self, mel: &MelSpectrogram) -> Result<Vec<Tensor>> {
        let out = self.forward(&self.params.bind(false), &Self::single(mel))?;
        Ok(out
            .hidden
            .iter()
            .map(|h| h.value().reshape(&[mel.frames, self.config.hidden_size]))
            .collect())
    }

    /// Embedding of a whole utterance, or the average over windows when
    /// `window_frames` is configured.
    pub fn encode(&self, mel: &MelSpectrogram) -> Result<SingerEmbedding> {
        let p = self.params.bind(false);
        let one = |m: &MelSpectrogram| -> Result<Vec<f64>> {
            Ok(self.forward(&p, &Self::single(m))?.embedding.value().data().to_vec())
        };
        let vector = match self.config.window_frames {
            Some(w) if mel.frames > w => {
                let mut acc = vec![0.0; EMBEDDING_DIM];
                let mut count = 0;
                let mut start = 0;
                while start + w <= mel.frames {
                    for (a, v) in acc.iter_mut().zip(one(&mel.slice(start, w)?)?) {
                        *a += v;
                    }
                    count += 1;
                    start += w / 2;
                }
                acc.into_iter().map(|v| v / count as f64).collect()
            }
            _ => one(mel)?,
        };
        SingerEmbedding::new(vector, None)
    }
}

/// Desk-scale GE2E schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ge2eTrainConfig {
    pub steps: usize,
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    /// Random crop length in frames.
    pub frames: usize,
    pub optimizer: RAdamConfig,
    pub seed: u64,
}

impl Default for Ge2eTrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            speakers_per_batch: 4,
            utterances_per_speaker: 4,
            frames: 40,
            optimizer: RAdamConfig {
                clip_norm: Some(3.0),
                ..RAdamConfig::with_lr(1e-3)
            },
            seed: 0,
        }
    }
}

/// Train `encoder` in place on `(speaker, mel)` pairs; returns the loss of
/// every step.
pub fn train_ge2e(
    encoder: &mut SpeakerEncoder,
    corpus: &[(String, MelSpectrogram)],
    cfg: &Ge2eTrainConfig,
) -> Result<Vec<f64>> {
    let mut by_speaker: BTreeMap<&str, Vec<&MelSpectrogram>> = BTreeMap::new();
    for (spk, mel) in corpus {
        if mel.frames >= cfg.frames {
            by_speaker.entry(spk.as_str()).or_default().push(mel);
        }
    }
    let speakers: Vec<&str> = by_speaker.keys().copied().collect();
    let n = cfg.speakers_per_batch.min(speakers.len());
    let m = cfg.utterances_per_speaker;
    if n < 2 || m < 2 || cfg.frames < 2 {
        return Err(Error::InvalidInput(format!(
            "GE2E needs at least 2 speakers with clips of {} frames and 2 utterances per speaker",
            cfg.frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = RAdam::new(cfg.optimizer.clone(), &encoder.params)?;
    let n_mels = encoder.config.n_mels;
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let chosen: Vec<&str> = speakers.choose_multiple(&mut rng, n).copied().collect();
        let mut batch = Vec::with_capacity(n * m * cfg.frames * n_mels);
        for spk in &chosen {
            let clips = &by_speaker[spk];
            for _ in 0..m {
                let clip = clips[rng.random_range(0..clips.len())];
                let start = rng.random_range(0..=clip.frames - cfg.frames);
                batch.extend_from_slice(&clip.values[start * n_mels..(start + cfg.frames) * n_mels]);
            }
        }
        let p = encoder.params.bind(true);
        let mel = Var::constant(Tensor::new(vec![n * m, cfg.frames, n_mels], batch));
        let emb = encoder.forward(&p, &mel)?.embedding.reshape(&[n, m, EMBEDDING_DIM]);
        let loss = ge2e_loss(&emb, p.get("ge2e.w"), p.get("ge2e.b"))?;
        let value = loss.value().item();
        if !value.is_finite() {
            return Err(Error::NonFinite("GE2E loss".into()));
        }
        let grads = p.grads(&loss.backward());
        opt.step(&mut encoder.params, &grads)?;
        let w = encoder.params.get_mut("ge2e.w").expect("scale parameter");
        let clamped = w.item().max(1e-6);
        w.data_mut()[0] = clamped;
        losses.push(value);
    }
    Ok(losses)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::{Bound, Init, ParamSet};
use super::wavenet::{SubGenerator, SubGeneratorConfig};
use crate::autograd::{concat, Tensor, Var};
use crate::dsp::{AudioSignal, MelSpectrogram, PqmfBank, PqmfConfig, NUM_BANDS, SAMPLE_RATE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Emits sub-bands 0 and 1.
    pub low: SubGeneratorConfig,
    /// Emits sub-bands 2 and 3.
    pub high: SubGeneratorConfig,
    #[serde(default = "default_hop")]
    pub hop_size: usize,
    #[serde(default)]
    pub pqmf: PqmfConfig,
    #[serde(default)]
    pub mel_norm: MelNorm,
}

/// Affine map applied to log-mel frames before conditioning, keeping the
/// gate pre-activations out of saturation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for MelNorm {
    fn default() -> Self {
        Self { mean: -4.0, std: 4.0 }
    }
}

fn default_hop() -> usize {
    128
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            low: SubGeneratorConfig::low_band(),
            high: SubGeneratorConfig::high_band(),
            hop_size: default_hop(),
            pqmf: PqmfConfig::default(),
            mel_norm: MelNorm::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.high.validate()?;
        if self.hop_size == 0 || self.hop_size % NUM_BANDS != 0 {
            return Err(Error::Config(format!(
                "hop_size {} must be a positive multiple of {NUM_BANDS}",
                self.hop_size
            )));
        }
        if !(self.mel_norm.std > 0.0 && self.mel_norm.mean.is_finite()) {
            return Err(Error::Config("mel_norm needs a finite mean and positive std".into()));
        }
        if self.low.conditioning_channels != self.high.conditioning_channels {
            return Err(Error::Config("sub-generators disagree on conditioning channels".into()));
        }
        Ok(())
    }
}

/// Anything that turns a mel-spectrogram plus Gaussian noise into audio.
pub trait Vocoder {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn hop_size(&self) -> usize;
    /// Noise samples needed for `frames` mel frames.
    fn noise_len(&self, frames: usize) -> usize;
    /// Noise `[B, 1, noise_len]` and mel `[B, F, C]` to waveform `[B, F·hop]`.
    fn forward(&self, p: &Bound, noise: &Var, mel: &Tensor) -> Result<Var>;

    /// Seeded inference on one utterance.
    fn synthesize(&self, mel: &MelSpectrogram, seed: u64) -> Result<AudioSignal> {
        let noise = gaussian_noise(&mut ChaCha8Rng::seed_from_u64(seed), 1, self.noise_len(mel.frames));
        let mel_t = Tensor::new(vec![1, mel.frames, mel.n_mels], mel.values.clone());
        let y = self.forward(&self.params().bind(false), &Var::constant(noise), &mel_t)?;
        let y = y.value().data().to_vec();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator output".into()));
        }
        AudioSignal::new(y, SAMPLE_RATE)
    }
}

/// Standard normal draws shaped `[batch, 1, len]`.
pub fn gaussian_noise<R: rand::Rng>(rng: &mut R, batch: usize, len: usize) -> Tensor {
    let data = (0..batch * len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v
        })
        .collect();
    Tensor::new(vec![batch, 1, len], data)
}

/// `[B, F, C]` mel to a `[B, C, F]` constant.
fn frames_channels_first(mel: &Tensor, channels: usize, norm: MelNorm) -> Result<Var> {
    if mel.rank() != 3 || mel.dim(2) != channels {
        return Err(Error::Shape(format!(
            "mel must be [B, frames, {channels}], got {:?}",
            mel.shape()
        )));
    }
    let scaled = mel.map(|v| (v - norm.mean) / norm.std);
    Ok(Var::constant(scaled).transpose_last())
}

/// Two frequency-adapted WaveNet stacks feeding a PQMF synthesis bank.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBandGenerator {
    config: GeneratorConfig,
    low: SubGenerator,
    high: SubGenerator,
    pqmf: PqmfBank,
    params: ParamSet,
}

impl MultiBandGenerator {
    /// Fresh generator with deterministic random weights.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        let mut g = Self::skeleton(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut rng);
        g.low.init(&mut init);
        g.high.init(&mut init);
        g.params = init.params;
        Ok(g)
    }

    /// Generator with externally supplied weights, e.g. from a checkpoint.
    pub fn with_params(config: GeneratorConfig, params: ParamSet) -> Result<Self> {
        let mut g = Self::new(config, 0)?;
        g.params.check_layout(&params)?;
        g.params = params;
        Ok(g)
    }

    fn skeleton(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            low: SubGenerator::new("low", config.low.clone(), 2)?,
            high: SubGenerator::new("high", config.high.clone(), 2)?,
            pqmf: PqmfBank::design(config.pqmf.clone())?,
            config,
            params: ParamSet::new(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn low(&self) -> &SubGenerator {
        &self.low
    }

    pub fn high(&self) -> &SubGenerator {
        &self.high
    }

    pub fn pqmf(&self) -> &PqmfBank {
        &self.pqmf
    }

    /// Quarter-rate sub-bands `[B, 4, T/4]` before synthesis.
    pub fn subbands(&self, p: &Bound, noise: &Var, mel: &Tensor) -> Result<Var> {
        let frames = frames_channels_first(mel, self.config.low.conditioning_channels, self.config.mel_norm)?;
        let up = self.config.hop_size / NUM_BANDS;
        if noise.value().rank() != 3 || noise.dim(1) != 1 || noise.dim(0) != mel.dim(0) {
            return Err(Error::Shape(format!("noise must be [B, 1, T], got {:?}", noise.shape())));
        }
        let low = self.low.forward(p, noise, &frames, up)?;
        let high = self.high.forward(p, noise, &frames, up)?;
        Ok(concat(&[low, high], 1))
    }
}

impl Vocoder for MultiBandGenerator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn hop_size(&self) -> usize {
        self.config.hop_size
    }

    fn noise_len(&self, frames: usize) -> usize {
        frames * self.config.hop_size / NUM_BANDS
    }

    fn forward(&self, p: &Bound, noise: &Var, mel: &Tensor) -> Result<Var> {
        let bands = self.subbands(p, noise, mel)?;
        let y = self.pqmf.synthesis_var(&bands)?;
        let (b, t) = (y.dim(0), y.dim(2));
        Ok(y.reshape(&[b, t]).clamp(-1.0, 1.0))
    }
}

/// Single full-rate WaveNet stack, the reference point for the speed
/// comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct FullBandGenerator {
    stack: SubGenerator,
    hop_size: usize,
    mel_norm: MelNorm,
    params: ParamSet,
}

impl FullBandGenerator {
    pub fn new(config: SubGeneratorConfig, hop_size: usize, seed: u64) -> Result<Self> {
        if hop_size == 0 {
            return Err(Error::Config("hop_size must be positive".into()));
        }
        let stack = SubGenerator::new("full", config, 1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut rng);
        stack.init(&mut init);
        Ok(Self {
            stack,
            hop_size,
            mel_norm: MelNorm::default(),
            params: init.params,
        })
    }

    /// The same block budget as `g`, laid out as one full-rate stack.
    pub fn matching(g: &MultiBandGenerator, seed: u64) -> Result<Self> {
        let c = g.config();
        let mut cfg = c.low.clone();
        cfg.dilation_cycle.extend_from_slice(&c.high.dilation_cycle);
        cfg.num_blocks = cfg.dilation_cycle.len();
        let mut full = Self::new(cfg, c.hop_size, seed)?;
        full.mel_norm = c.mel_norm;
        Ok(full)
    }

    pub fn stack(&self) -> &SubGenerator {
        &self.stack
    }
}

impl Vocoder for FullBandGenerator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn hop_size(&self) -> usize {
        self.hop_size
    }

    fn noise_len(&self, frames: usize) -> usize {
        frames * self.hop_size
    }

    fn forward(&self, p: &Bound, noise: &Var, mel: &Tensor) -> Result<Var> {
        let frames = frames_channels_first(mel, self.stack.config().conditioning_channels, self.mel_norm)?;
        let y = self.stack.forward(p, noise, &frames, self.hop_size)?;
        let (b, t) = (y.dim(0), y.dim(2));
        Ok(y.reshape(&[b, t]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            low: SubGeneratorConfig::doubling(4, 4, 8, 8, 16),
            high: SubGeneratorConfig::doubling(2, 2, 8, 8, 16),
            ..GeneratorConfig::default()
        }
    }

    fn mel(frames: usize, seed: u64) -> MelSpectrogram {
        let t = gaussian_noise(&mut ChaCha8Rng::seed_from_u64(seed), 1, frames * 80);
        MelSpectrogram::new(t.data().iter().map(|v| v - 4.0).collect(), frames, 80).unwrap()
    }

    #[test]
    fn output_length_follows_hop() {
        let g = MultiBandGenerator::new(small_config(), 1).unwrap();
        for frames in [1, 3, 8] {
            let y = g.synthesize(&mel(frames, 2), 3).unwrap();
            assert_eq!(y.len(), frames * 128);
            assert_eq!(g.noise_len(frames), frames * 32);
            assert!(y.samples().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        }
    }

    #[test]
    fn seeded_synthesis_is_bit_identical() {
        let g = MultiBandGenerator::new(small_config(), 4).unwrap();
        let m = mel(6, 5);
        let a = g.synthesize(&m, 11).unwrap();
        let b = g.synthesize(&m, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, g.synthesize(&m, 12).unwrap());
        // weights are a pure function of the seed too
        assert_eq!(g, MultiBandGenerator::new(small_config(), 4).unwrap());
    }

    #[test]
    fn each_stack_emits_two_bands() {
        let g = MultiBandGenerator::new(small_config(), 6).unwrap();
        assert_eq!(g.low().out_channels(), 2);
        assert_eq!(g.high().out_channels(), 2);
        let m = mel(2, 7);
        let noise = gaussian_noise(&mut ChaCha8Rng::seed_from_u64(8), 1, 64);
        let mel_t = Tensor::new(vec![1, 2, 80], m.values);
        let bands = g.subbands(&g.params().bind(false), &Var::constant(noise), &mel_t).unwrap();
        assert_eq!(bands.shape(), &[1, 4, 64]);
        assert!(bands.value().data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn mismatched_shapes_are_errors() {
        let g = MultiBandGenerator::new(small_config(), 9).unwrap();
        let p = g.params().bind(false);
        let noise = Var::constant(Tensor::zeros(&[1, 1, 65]));
        assert!(g.forward(&p, &noise, &Tensor::zeros(&[1, 2, 80])).is_err());
        let noise = Var::constant(Tensor::zeros(&[1, 1, 64]));
        assert!(g.forward(&p, &noise, &Tensor::zeros(&[1, 2, 79])).is_err());
        assert!(g.forward(&p, &noise, &Tensor::zeros(&[2, 2, 80])).is_err());
    }

    #[test]
    fn checkpointed_weights_must_match_layout() {
        let g = MultiBandGenerator::new(small_config(), 10).unwrap();
        let again = MultiBandGenerator::with_params(small_config(), g.params().clone()).unwrap();
        assert_eq!(g, again);
        let mut bad = g.params().clone();
        bad.insert("low.extra", Tensor::zeros(&[1]));
        assert!(MultiBandGenerator::with_params(small_config(), bad).is_err());
    }

    #[test]
    fn full_band_reference_matches_block_budget() {
        let g = MultiBandGenerator::new(small_config(), 11).unwrap();
        let f = FullBandGenerator::matching(&g, 12).unwrap();
        assert_eq!(f.stack().blocks().len(), 6);
        let block_values = |p: &ParamSet| -> usize {
            p.iter().filter(|(k, _)| k.contains(".block")).map(|(_, t)| t.numel()).sum()
        };
        assert_eq!(block_values(f.params()), block_values(g.params()));
        let y = f.synthesize(&mel(2, 13), 14).unwrap();
        assert_eq!(y.len(), 256);
    }
}

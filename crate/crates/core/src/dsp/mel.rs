use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stft_magnitude_var, AudioSignal, Stft, StftParams};
use crate::autograd::{Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_size: usize,
    pub window_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper band edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: super::SAMPLE_RATE,
            fft_size: 512,
            hop_size: 128,
            window_size: 512,
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn stft_params(&self) -> StftParams {
        StftParams::new(self.fft_size, self.hop_size, self.window_size)
    }

    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, `n_mels × (fft_size/2 + 1)`,
/// each with unit peak.
pub fn mel_filterbank(cfg: &MelConfig) -> Tensor {
    let bins = cfg.fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax()));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut w = vec![0.0; cfg.n_mels * bins];
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            w[m * bins + k] = up.min(down).max(0.0);
        }
    }
    Tensor::new(vec![cfg.n_mels, bins], w)
}

/// Log-mel energies, `frames × n_mels`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub n_mels: usize,
}

const MEL_MAGIC: &[u8; 4] = b"MSML";
const MEL_VERSION: u32 = 1;

impl MelSpectrogram {
    pub fn new(values: Vec<f64>, frames: usize, n_mels: usize) -> Result<Self> {
        if values.len() != frames * n_mels {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames × {n_mels} bands",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mel spectrogram".into()));
        }
        Ok(Self {
            values,
            frames,
            n_mels,
        })
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_mels..(frame + 1) * self.n_mels]
    }

    /// Frames `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::Shape(format!(
                "frames {start}..{} out of {}",
                start + len,
                self.frames
            )));
        }
        Ok(Self {
            values: self.values[start * self.n_mels..(start + len) * self.n_mels].to_vec(),
            frames: len,
            n_mels: self.n_mels,
        })
    }

    /// Binary container: 4-byte magic, then little-endian `u32` version,
    /// frames and bands, then row-major little-endian `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(MEL_MAGIC);
        out.extend_from_slice(&MEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("mel", d);
        if bytes.len() < 16 || &bytes[..4] != MEL_MAGIC {
            return Err(bad("missing magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if word(4) != MEL_VERSION {
            return Err(bad(&format!("unsupported version {}", word(4))));
        }
        let (frames, bands) = (word(8) as usize, word(12) as usize);
        let body = &bytes[16..];
        if body.len() != frames * bands * 4 {
            return Err(bad(&format!(
                "{} body bytes for {frames} × {bands} values",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(values, frames, bands)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Log-mel front end shared by data preparation, the generator conditioning
/// and the speaker encoder.
#[derive(Clone, Debug)]
pub struct MelExtractor {
    cfg: MelConfig,
    stft: Stft,
    filterbank: Tensor,
}

impl MelExtractor {
    pub fn new(cfg: MelConfig) -> Result<Self> {
        if cfg.n_mels == 0 || cfg.log_floor <= 0.0 {
            return Err(Error::Config("mel: n_mels and log_floor must be positive".into()));
        }
        if !(cfg.fmin >= 0.0 && cfg.fmin < cfg.fmax() && cfg.fmax() <= cfg.sample_rate as f64 / 2.0) {
            return Err(Error::Config(format!(
                "mel: band edges {}..{} invalid",
                cfg.fmin,
                cfg.fmax()
            )));
        }
        let stft = Stft::new(cfg.stft_params())?;
        let filterbank = mel_filterbank(&cfg);
        Ok(Self {
            cfg,
            stft,
            filterbank,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &Tensor {
        &self.filterbank
    }

    pub fn compute(&self, signal: &AudioSignal) -> Result<MelSpectrogram> {
        if signal.sample_rate() != self.cfg.sample_rate {
            return Err(Error::InvalidInput(format!(
                "mel extractor expects {} Hz, got {} Hz",
                self.cfg.sample_rate,
                signal.sample_rate()
            )));
        }
        self.compute_samples(signal.samples())
    }

    pub fn compute_samples(&self, x: &[f64]) -> Result<MelSpectrogram> {
        let mag = self.stft.magnitude(x)?;
        let (bins, n_mels) = (mag.bins(), self.cfg.n_mels);
        let fb = self.filterbank.data();
        let mut values = Vec::with_capacity(mag.frames * n_mels);
        for f in 0..mag.frames {
            let col = &mag.values[f * bins..(f + 1) * bins];
            for m in 0..n_mels {
                let e: f64 = fb[m * bins..(m + 1) * bins].iter().zip(col).map(|(a, b)| a * b).sum();
                values.push(e.max(self.cfg.log_floor).ln());
            }
        }
        MelSpectrogram::new(values, mag.frames, n_mels)
    }

    /// Differentiable log-mel of a `[B, T]` batch, giving `[B, frames, n_mels]`.
    pub fn forward_var(&self, x: &Var) -> Result<Var> {
        let mag = stft_magnitude_var(x, &self.stft)?;
        let fb = Var::constant(self.filterbank.clone());
        Ok(mag.linear(&fb, None).clamp_min(self.cfg.log_floor).ln())
    }
}

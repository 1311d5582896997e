//! Signal-processing primitives: STFT, log-mel features and the 4-band
//! pseudo-QMF filter bank.
//!
//! Everything here is a pure function of its inputs. The STFT, mel and PQMF
//! synthesis paths also exist as graph operations so losses can
//! differentiate through them.

mod mel;
mod pqmf;
mod stft;

pub use mel::{mel_filterbank, MelConfig, MelExtractor, MelSpectrogram};
pub use pqmf::{PqmfBank, PqmfConfig, SubbandSignals, NUM_BANDS};
pub use stft::{stft_magnitude, stft_magnitude_var, MagnitudeSpectrogram, Stft, StftParams};

use crate::{Error, Result};

/// Default corpus sample rate in Hz.
pub const SAMPLE_RATE: u32 = 24_000;

/// Mono waveform with its sample rate. Nominal amplitude range is `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Signal-to-noise ratio of `estimate` against `reference` in dB.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    assert_eq!(reference.len(), estimate.len());
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    10.0 * (signal / noise.max(f64::MIN_POSITIVE)).log10()
}

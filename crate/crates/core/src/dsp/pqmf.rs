use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::autograd::{conv1d, upsample_zeros, Tensor, Var};
use crate::{Error, Result};

pub const NUM_BANDS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PqmfConfig {
    /// Filter length; must be even.
    pub taps: usize,
    pub cutoff_ratio: f64,
    pub kaiser_beta: f64,
}

impl Default for PqmfConfig {
    fn default() -> Self {
        Self {
            taps: 62,
            cutoff_ratio: 0.142,
            kaiser_beta: 9.0,
        }
    }
}

/// Four parallel quarter-rate signals in frequency order.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSignals {
    pub bands: Vec<Vec<f64>>,
    /// Zeros appended to the full-rate input to reach a multiple of 4.
    pub padded: usize,
}

impl SubbandSignals {
    pub fn band_len(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    let denom = bessel_i0(beta);
    let span = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / span - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn prototype(taps: usize, cutoff_ratio: f64, beta: f64) -> Vec<f64> {
    let centre = (taps - 1) as f64 / 2.0;
    let window = kaiser(taps, beta);
    let mut p: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - centre;
            let ideal = if m == 0.0 {
                cutoff_ratio
            } else {
                (PI * cutoff_ratio * m).sin() / (PI * m)
            };
            ideal * window[n]
        })
        .collect();
    // mirror so the symmetry holds bit-exactly
    for n in 0..taps / 2 {
        p[taps - 1 - n] = p[n];
    }
    p
}

/// Cosine-modulated pseudo-QMF bank with a Kaiser-windowed lowpass prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct PqmfBank {
    config: PqmfConfig,
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
}

impl PqmfBank {
    pub fn design(config: PqmfConfig) -> Result<Self> {
        let PqmfConfig {
            taps,
            cutoff_ratio,
            kaiser_beta,
        } = config;
        if taps < 2 || taps % 2 != 0 {
            return Err(Error::InvalidInput(format!("pqmf taps must be even, got {taps}")));
        }
        if !(cutoff_ratio > 0.0 && cutoff_ratio < 0.5) {
            return Err(Error::InvalidInput(format!(
                "pqmf cutoff ratio {cutoff_ratio} outside (0, 0.5)"
            )));
        }
        let prototype = prototype(taps, cutoff_ratio, kaiser_beta);
        let centre = (taps - 1) as f64 / 2.0;
        let modulate = |k: usize, sign: f64| -> Vec<f64> {
            let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
            prototype
                .iter()
                .enumerate()
                .map(|(n, p)| {
                    let arg = (2 * k + 1) as f64 * PI / (2 * NUM_BANDS) as f64 * (n as f64 - centre);
                    2.0 * p * (arg + sign * phase).cos()
                })
                .collect()
        };
        Ok(Self {
            analysis: (0..NUM_BANDS).map(|k| modulate(k, 1.0)).collect(),
            synthesis: (0..NUM_BANDS).map(|k| modulate(k, -1.0)).collect(),
            prototype,
            config,
        })
    }

    /// Cutoff in `[lo, hi]` minimising the prototype's autocorrelation at
    /// nonzero multiples of `2·NUM_BANDS`, the usual near-perfect
    /// reconstruction criterion.
    pub fn search_cutoff(taps: usize, kaiser_beta: f64, lo: f64, hi: f64) -> f64 {
        let objective = |c: f64| {
            let p = prototype(taps, c, kaiser_beta);
            let step = 2 * NUM_BANDS;
            (1..)
                .map(|i| i * step)
                .take_while(|&lag| lag < taps)
                .map(|lag| p.iter().zip(&p[lag..]).map(|(a, b)| a * b).sum::<f64>().abs())
                .fold(0.0, f64::max)
        };
        let steps = 1000;
        (0..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap()
    }

    pub fn config(&self) -> &PqmfConfig {
        &self.config
    }

    pub fn taps(&self) -> usize {
        self.config.taps
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis_filters(&self) -> &[Vec<f64>] {
        &self.analysis
    }

    pub fn synthesis_filters(&self) -> &[Vec<f64>] {
        &self.synthesis
    }

    /// Delay of the analysis/synthesis cascade, `taps − 1` samples. The
    /// analysis and synthesis routines advance their outputs by
    /// `taps/2` and `taps/2 − 1` samples so the round trip is aligned.
    pub fn round_trip_delay(&self) -> usize {
        self.taps() - 1
    }

    fn analysis_advance(&self) -> usize {
        self.taps() / 2
    }

    fn synthesis_advance(&self) -> usize {
        self.round_trip_delay() - self.analysis_advance()
    }

    /// Filter each band and decimate by 4. Input is zero-padded to a
    /// multiple of 4.
    pub fn analysis(&self, signal: &AudioSignal) -> SubbandSignals {
        let mut x = signal.samples().to_vec();
        let padded = (NUM_BANDS - x.len() % NUM_BANDS) % NUM_BANDS;
        x.resize(x.len() + padded, 0.0);
        let len = x.len() / NUM_BANDS;
        let adv = self.analysis_advance() as isize;
        let bands = self
            .analysis
            .iter()
            .map(|h| {
                (0..len)
                    .map(|j| {
                        let t0 = (j * NUM_BANDS) as isize + adv;
                        h.iter()
                            .enumerate()
                            .filter_map(|(n, c)| {
                                let i = t0 - n as isize;
                                (i >= 0 && (i as usize) < x.len()).then(|| c * x[i as usize])
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        SubbandSignals { bands, padded }
    }

    /// Zero-insertion upsampling by 4, filtering and summation.
    pub fn synthesis(&self, subbands: &SubbandSignals, sample_rate: u32) -> Result<AudioSignal> {
        self.check_bands(&subbands.bands)?;
        let len = subbands.band_len();
        let out_len = len * NUM_BANDS;
        let adv = self.synthesis_advance() as isize;
        let mut y = vec![0.0; out_len];
        for (g, band) in self.synthesis.iter().zip(&subbands.bands) {
            for (t, out) in y.iter_mut().enumerate() {
                let base = t as isize + adv;
                let mut acc = 0.0;
                // only taps landing on the upsampled grid contribute
                let first = base.rem_euclid(NUM_BANDS as isize) as usize;
                for n in (first..g.len()).step_by(NUM_BANDS) {
                    let i = base - n as isize;
                    if i < 0 {
                        break;
                    }
                    let j = i as usize / NUM_BANDS;
                    if j < len {
                        acc += g[n] * band[j];
                    }
                }
                *out += NUM_BANDS as f64 * acc;
            }
        }
        AudioSignal::new(y, sample_rate)
    }

    fn check_bands(&self, bands: &[Vec<f64>]) -> Result<()> {
        if bands.len() != NUM_BANDS {
            return Err(Error::Shape(format!("expected {NUM_BANDS} sub-bands, got {}", bands.len())));
        }
        let len = bands[0].len();
        if bands.iter().any(|b| b.len() != len) {
            return Err(Error::Shape("sub-bands have unequal lengths".into()));
        }
        Ok(())
    }

    /// Synthesis weights as a `[1, 4, taps]` correlation kernel for
    /// [`conv1d`], gain included.
    pub fn synthesis_kernel(&self) -> Tensor {
        let taps = self.taps();
        let mut w = Vec::with_capacity(NUM_BANDS * taps);
        for g in &self.synthesis {
            w.extend(g.iter().rev().map(|v| v * NUM_BANDS as f64));
        }
        Tensor::new(vec![1, NUM_BANDS, taps], w)
    }

    /// Differentiable synthesis of `[B, 4, T]` sub-bands into `[B, 1, 4T]`.
    pub fn synthesis_var(&self, subbands: &Var) -> Result<Var> {
        if subbands.value().rank() != 3 || subbands.dim(1) != NUM_BANDS {
            return Err(Error::Shape(format!(
                "sub-band tensor must be [B, {NUM_BANDS}, T], got {:?}",
                subbands.shape()
            )));
        }
        let up = upsample_zeros(subbands, NUM_BANDS);
        let kernel = Var::constant(self.synthesis_kernel());
        let pad_left = self.taps() - 1 - self.synthesis_advance();
        Ok(conv1d(&up, &kernel, None, 1, pad_left))
    }
}

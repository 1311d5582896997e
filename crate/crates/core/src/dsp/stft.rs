use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::autograd::{Tensor, Var};
use crate::{Error, Result};

/// Analysis parameters of one STFT resolution, in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window_size: usize,
}

impl StftParams {
    pub const fn new(fft_size: usize, hop_size: usize, window_size: usize) -> Self {
        Self {
            fft_size,
            hop_size,
            window_size,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Centre-padded framing yields `⌊len / hop⌋ + 1` frames.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.hop_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_size == 0 || self.window_size == 0 {
            return Err(Error::InvalidInput(format!("{self:?}: hop and window must be positive")));
        }
        if self.window_size > self.fft_size {
            return Err(Error::InvalidInput(format!("{self:?}: window exceeds fft size")));
        }
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::InvalidInput(format!("{self:?}: fft size must be even")));
        }
        Ok(())
    }
}

/// STFT magnitudes, `frames × bins`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub params: StftParams,
}

impl MagnitudeSpectrogram {
    pub fn bins(&self) -> usize {
        self.params.bins()
    }

    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins() + bin]
    }
}

/// A planned STFT: periodic Hann window centred in the FFT frame,
/// reflect padding of `fft_size / 2` on both sides.
#[derive(Clone)]
pub struct Stft {
    params: StftParams,
    window: Arc<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("params", &self.params).finish()
    }
}

impl Stft {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let n = params.fft_size;
        let w = params.window_size;
        let offset = (n - w) / 2;
        let mut window = vec![0.0; n];
        for i in 0..w {
            window[offset + i] = 0.5 - 0.5 * (2.0 * PI * i as f64 / w as f64).cos();
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            params,
            window: Arc::new(window),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    /// The zero-padded analysis window, `fft_size` long.
    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn pad(&self) -> usize {
        self.params.fft_size / 2
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(Error::InvalidInput("stft of an empty signal".into()));
        }
        if x.len() <= self.pad() {
            return Err(Error::InvalidInput(format!(
                "signal of {} samples too short for reflect padding of {}",
                x.len(),
                self.pad()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stft input sample {i}")));
        }
        Ok(())
    }

    fn reflect_index(&self, i: usize, len: usize) -> usize {
        let j = i as isize - self.pad() as isize;
        if j < 0 {
            (-j) as usize
        } else if j as usize >= len {
            2 * (len - 1) - j as usize
        } else {
            j as usize
        }
    }

    /// Complex spectra for every frame, `frames × bins`.
    pub fn complex(&self, x: &[f64]) -> Result<Vec<Complex<f64>>> {
        self.check_input(x)?;
        let n = self.params.fft_size;
        let bins = self.params.bins();
        let frames = self.params.num_frames(x.len());
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for f in 0..frames {
            let start = f * self.params.hop_size;
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = x[self.reflect_index(start + i, x.len())];
                *slot = Complex::new(v * self.window[i], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out.extend_from_slice(&buf[..bins]);
        }
        Ok(out)
    }

    pub fn magnitude(&self, x: &[f64]) -> Result<MagnitudeSpectrogram> {
        let spec = self.complex(x)?;
        Ok(MagnitudeSpectrogram {
            values: spec.iter().map(|c| c.norm()).collect(),
            frames: self.params.num_frames(x.len()),
            params: self.params,
        })
    }

    /// Gradient of a loss with respect to the input signal, given the
    /// gradient with respect to the magnitudes and the forward spectra.
    fn magnitude_backward(&self, len: usize, spec: &[Complex<f64>], grad: &[f64]) -> Vec<f64> {
        let n = self.params.fft_size;
        let bins = self.params.bins();
        let frames = self.params.num_frames(len);
        let hop = self.params.hop_size;
        let mut padded = vec![0.0; (frames - 1) * hop + n];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for f in 0..frames {
            buf.fill(Complex::new(0.0, 0.0));
            for k in 0..bins {
                let c = spec[f * bins + k];
                let mag = c.norm();
                if mag > 0.0 {
                    buf[k] = c * (grad[f * bins + k] / mag);
                }
            }
            // Re Σ_k (∂L/∂Re + i ∂L/∂Im) e^{+2πikn/N} is ∂L/∂(windowed frame)[n].
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = f * hop;
            for i in 0..n {
                padded[start + i] += buf[i].re * self.window[i];
            }
        }
        let mut dx = vec![0.0; len];
        for (i, g) in padded.iter().enumerate() {
            dx[self.reflect_index(i, len)] += g;
        }
        dx
    }
}

/// Magnitude STFT of a signal.
pub fn stft_magnitude(
    signal: &AudioSignal,
    fft_size: usize,
    hop_size: usize,
    window_size: usize,
) -> Result<MagnitudeSpectrogram> {
    Stft::new(StftParams::new(fft_size, hop_size, window_size))?.magnitude(signal.samples())
}

/// Differentiable magnitude STFT of a `[B, T]` batch, giving `[B, frames, bins]`.
pub fn stft_magnitude_var(x: &Var, stft: &Stft) -> Result<Var> {
    let [b, t] = x.shape().try_into().map_err(|_| {
        Error::Shape(format!("stft input must be [batch, time], got {:?}", x.shape()))
    })?;
    let params = stft.params();
    let bins = params.bins();
    let frames = params.num_frames(t);
    let data = x.value().data();
    let mut spectra = Vec::with_capacity(b);
    let mut mags = Vec::with_capacity(b * frames * bins);
    for bi in 0..b {
        let spec = stft.complex(&data[bi * t..(bi + 1) * t])?;
        mags.extend(spec.iter().map(|c| c.norm()));
        spectra.push(spec);
    }
    let plan = stft.clone();
    Ok(Var::from_op(
        Tensor::new(vec![b, frames, bins], mags),
        vec![x.clone()],
        move |g, _| {
            let gd = g.data();
            let mut dx = Vec::with_capacity(b * t);
            for (bi, spec) in spectra.iter().enumerate() {
                let gb = &gd[bi * frames * bins..(bi + 1) * frames * bins];
                dx.extend(plan.magnitude_backward(t, spec, gb));
            }
            vec![Some(Tensor::new(vec![b, t], dx))]
        },
    ))
}

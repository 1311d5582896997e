use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchConfig {
    pub fmin: f64,
    pub fmax: f64,
    pub hop_ms: f64,
    /// Minimum normalised autocorrelation peak for a voiced frame.
    pub clarity_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            fmin: 50.0,
            fmax: 1100.0,
            hop_ms: 10.0,
            clarity_threshold: 0.3,
        }
    }
}

/// Frame-wise F0 in Hz; zero marks an unvoiced frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub hop_ms: f64,
}

impl PitchTrack {
    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0.iter().copied().filter(|&f| f > 0.0)
    }

    pub fn median_voiced(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.voiced().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
    }
}

/// Normalised cross-correlation between `x[..w]` and `x[lag..lag + w]`.
fn ncc(x: &[f64], w: usize, lag: usize) -> f64 {
    let (a, b) = (&x[..w], &x[lag..lag + w]);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        ab += p * q;
        aa += p * p;
        bb += q * q;
    }
    let d = (aa * bb).sqrt();
    if d > 0.0 { ab / d } else { 0.0 }
}

/// Autocorrelation pitch tracker with parabolic peak refinement.
///
/// Each frame correlates one longest-period window with its lagged copy.
/// The chosen lag is the first local maximum reaching 90 % of the best
/// correlation, which avoids octave-down errors on periodic input.
pub fn extract_f0(signal: &AudioSignal, cfg: &PitchConfig) -> PitchTrack {
    let sr = signal.sample_rate() as f64;
    let x = signal.samples();
    let min_lag = (sr / cfg.fmax).floor().max(2.0) as usize;
    let max_lag = (sr / cfg.fmin).ceil() as usize;
    let w = max_lag;
    let hop = ((cfg.hop_ms * sr / 1000.0).round() as usize).max(1);
    let need = w + max_lag + 1;
    let frames = if x.len() >= need { (x.len() - need) / hop + 1 } else { 0 };

    let mut f0 = Vec::with_capacity(frames);
    let mut r = vec![0.0; max_lag + 2];
    for k in 0..frames {
        let seg = &x[k * hop..k * hop + need];
        for lag in min_lag - 1..=max_lag + 1 {
            r[lag] = ncc(seg, w, lag);
        }
        let best = r[min_lag..=max_lag].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best < cfg.clarity_threshold {
            f0.push(0.0);
            continue;
        }
        let lag = (min_lag..=max_lag)
            .find(|&l| r[l] >= 0.9 * best && r[l] >= r[l - 1] && r[l] >= r[l + 1])
            .unwrap_or(min_lag);
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let hz = sr / (lag as f64 + shift);
        f0.push(if (cfg.fmin..=cfg.fmax).contains(&hz) { hz } else { 0.0 });
    }
    PitchTrack { f0, hop_ms: cfg.hop_ms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use std::f64::consts::PI;

    fn sr() -> f64 {
        SAMPLE_RATE as f64
    }

    #[test]
    fn sine_220() {
        let x = (0..24_000).map(|i| 0.5 * (2.0 * PI * 220.0 * i as f64 / sr()).sin()).collect();
        let track = extract_f0(&AudioSignal::new(x, SAMPLE_RATE).unwrap(), &PitchConfig::default());
        assert!(track.f0.len() > 80);
        assert!(track.f0.iter().all(|&f| f > 0.0));
        let med = track.median_voiced().unwrap();
        assert!((med - 220.0).abs() < 1.0, "{med}");
    }

    #[test]
    fn rich_harmonic_tone_avoids_octave_errors() {
        let x = (0..24_000)
            .map(|i| {
                let t = i as f64 / sr();
                (1..8).map(|h| (2.0 * PI * 150.0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.2
            })
            .collect();
        let track = extract_f0(&AudioSignal::new(x, SAMPLE_RATE).unwrap(), &PitchConfig::default());
        assert!(track.voiced().all(|f| (f - 150.0).abs() < 1.0));
    }

    #[test]
    fn silence_is_unvoiced() {
        let track = extract_f0(&AudioSignal::zeros(24_000, SAMPLE_RATE), &PitchConfig::default());
        assert!(!track.f0.is_empty());
        assert!(track.f0.iter().all(|&f| f == 0.0));
        assert_eq!(track.median_voiced(), None);
    }

    #[test]
    fn chirp_is_nondecreasing() {
        // instantaneous frequency 200 -> 400 Hz over 2 s
        let dur = 2.0;
        let x = (0..(dur * sr()) as usize)
            .map(|i| {
                let t = i as f64 / sr();
                0.5 * (2.0 * PI * (200.0 * t + 50.0 * t * t)).sin()
            })
            .collect();
        let track = extract_f0(&AudioSignal::new(x, SAMPLE_RATE).unwrap(), &PitchConfig::default());
        let v: Vec<f64> = track.voiced().collect();
        assert!(v.len() > 150);
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 2.0));
        assert!(v[0] < 215.0 && *v.last().unwrap() > 385.0);
    }

    #[test]
    fn short_input_has_no_frames() {
        let track = extract_f0(&AudioSignal::zeros(100, SAMPLE_RATE), &PitchConfig::default());
        assert!(track.f0.is_empty());
    }
}

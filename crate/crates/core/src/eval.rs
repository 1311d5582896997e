//! Objective evaluation: embedding cosine similarity, spectral distance
//! as a quality proxy, and real-time-factor benchmarks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::data::load_wav;
use crate::dsp::{AudioSignal, MelExtractor, MelSpectrogram};
use crate::losses::{multi_res_stft_loss, StftLossConfig};
use crate::model::Vocoder;
use crate::speaker_encoder::{SingerEmbedding, SpeakerEncoder};
use crate::{Error, Result};

/// `a·b / (‖a‖‖b‖)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn embedding_similarity(a: &SingerEmbedding, b: &SingerEmbedding) -> Result<f64> {
    cosine_similarity(a.vector(), b.vector())
}

/// Multi-resolution STFT distance over the common prefix of two signals.
pub fn spectral_distance(reference: &AudioSignal, synthetic: &AudioSignal, cfg: &StftLossConfig) -> Result<f64> {
    let n = reference.len().min(synthetic.len());
    let cut = |s: &AudioSignal| AudioSignal::new(s.samples()[..n].to_vec(), s.sample_rate());
    multi_res_stft_loss(&cut(reference)?, &cut(synthetic)?, cfg)
}

/// Read `reference<TAB>synthetic` path pairs; relative paths resolve
/// against the list's directory. Blank lines and `#` comments are skipped.
pub fn load_pairs(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split('\t');
        match (f.next(), f.next(), f.next()) {
            (Some(r), Some(s), None) if !r.is_empty() && !s.is_empty() => {
                out.push((base.join(r), base.join(s)));
            }
            _ => {
                return Err(Error::format(
                    "pair list",
                    format!("line {}: expected `reference<TAB>synthetic`", i + 1),
                ))
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub mean: f64,
    pub per_pair: Vec<f64>,
    /// `(pair index, error)`
    pub failures: Vec<(usize, String)>,
}

impl SimilarityReport {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cosine similarity over {} pairs: {:.6}", self.per_pair.len(), self.mean);
        for (i, e) in &self.failures {
            let _ = writeln!(s, "failed pair {i}: {e}");
        }
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "pairs={}", self.per_pair.len());
        let _ = writeln!(s, "failures={}", self.failures.len());
        let _ = writeln!(s, "similarity={:.6}", self.mean);
        s
    }
}

/// Mean cosine similarity between embeddings of reference and synthetic
/// recordings. Unreadable pairs are recorded and skipped.
pub fn eval_similarity(
    pairs: &[(PathBuf, PathBuf)],
    encoder: &SpeakerEncoder,
    mel: &MelExtractor,
) -> Result<SimilarityReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no evaluation pairs".into()));
    }
    let embed = |p: &Path| load_wav(p).and_then(|s| mel.compute(&s)).and_then(|m| encoder.encode(&m));
    let mut report = SimilarityReport::default();
    for (i, (r, s)) in pairs.iter().enumerate() {
        match embed(r).and_then(|a| embedding_similarity(&a, &embed(s)?)) {
            Ok(v) => report.per_pair.push(v),
            Err(e) => report.failures.push((i, e.to_string())),
        }
    }
    if report.per_pair.is_empty() {
        return Err(Error::InvalidInput(format!("all {} pairs failed", pairs.len())));
    }
    report.mean = report.per_pair.iter().sum::<f64>() / report.per_pair.len() as f64;
    Ok(report)
}

/// Timing of repeated synthesis over a fixed set of mel inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RtfReport {
    /// Median wall-clock seconds of one trial.
    pub synthesis_seconds: f64,
    /// Seconds of audio produced per trial.
    pub audio_seconds: f64,
    pub rtf: f64,
    pub device: String,
    pub warmup: usize,
    pub trials: usize,
    pub trial_seconds: Vec<f64>,
}

impl RtfReport {
    /// Build from raw trial timings; the median trial is reported.
    pub fn from_trials(trial_seconds: Vec<f64>, audio_seconds: f64, warmup: usize, device: String) -> Result<Self> {
        if trial_seconds.len() < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 trials, got {}", trial_seconds.len())));
        }
        if !(audio_seconds > 0.0) {
            return Err(Error::InvalidInput("no audio was synthesized".into()));
        }
        let mut sorted = trial_seconds.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        // a timer can legitimately read 0 for tiny inputs
        let synthesis_seconds = median.max(1e-9);
        Ok(Self {
            synthesis_seconds,
            audio_seconds,
            rtf: synthesis_seconds / audio_seconds,
            device,
            warmup,
            trials: trial_seconds.len(),
            trial_seconds,
        })
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rtf {:.6} ({:.4} s for {:.3} s of audio, median of {} trials after {} warmup) on {}",
            self.rtf, self.synthesis_seconds, self.audio_seconds, self.trials, self.warmup, self.device
        );
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "rtf={:.6}", self.rtf);
        let _ = writeln!(s, "synthesis_seconds={:.6}", self.synthesis_seconds);
        let _ = writeln!(s, "audio_seconds={:.6}", self.audio_seconds);
        let _ = writeln!(s, "trials={}", self.trials);
        let _ = writeln!(s, "warmup={}", self.warmup);
        let _ = writeln!(s, "device={}", self.device);
        s
    }
}

/// CPU model (when the OS exposes it), architecture and thread count.
pub fn device_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown-cpu".to_string());
    format!("cpu[{model}; {}-{}; threads=1]", std::env::consts::ARCH, std::env::consts::OS)
}

/// Time `trials` synthesis passes over `mels` after `warmup` untimed ones.
/// Everything runs on the calling thread.
pub fn benchmark_rtf(
    vocoder: &dyn Vocoder,
    mels: &[MelSpectrogram],
    warmup: usize,
    trials: usize,
    seed: u64,
) -> Result<RtfReport> {
    if mels.is_empty() {
        return Err(Error::InvalidInput("no mel inputs to benchmark".into()));
    }
    if trials < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 trials, got {trials}")));
    }
    let run = || -> Result<f64> {
        let mut samples = 0;
        for m in mels {
            samples += vocoder.synthesize(m, seed)?.len();
        }
        Ok(samples as f64)
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut times = Vec::with_capacity(trials);
    let mut produced = 0.0;
    for _ in 0..trials {
        let t0 = Instant::now();
        produced = run()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    RtfReport::from_trials(times, produced / crate::dsp::SAMPLE_RATE as f64, warmup, device_descriptor())
}

/// Multi-band versus full-band timing on the same inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupReport {
    pub multi_band: RtfReport,
    pub full_band: RtfReport,
    /// Full-band RTF over multi-band RTF.
    pub speedup: f64,
}

pub fn compare_rtf(
    multi_band: &dyn Vocoder,
    full_band: &dyn Vocoder,
    mels: &[MelSpectrogram],
    warmup: usize,
    trials: usize,
    seed: u64,
) -> Result<SpeedupReport> {
    let multi_band = benchmark_rtf(multi_band, mels, warmup, trials, seed)?;
    let full_band = benchmark_rtf(full_band, mels, warmup, trials, seed)?;
    Ok(SpeedupReport {
        speedup: full_band.rtf / multi_band.rtf,
        multi_band,
        full_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{save_wav, synth_voice, VoiceProfile};
    use crate::dsp::{MelConfig, SAMPLE_RATE};
    use crate::model::{FullBandGenerator, GeneratorConfig, MultiBandGenerator, SubGeneratorConfig};
    use crate::speaker_encoder::SpeakerEncoderConfig;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let mut a = vec![0.0; 256];
        a[0] = 1.0;
        let mut b = a.clone();
        b[1] = 1.0;
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        let mut c = vec![0.0; 256];
        c[2] = 3.0;
        assert_eq!(cosine_similarity(&a, &c).unwrap(), 0.0);
        assert!(cosine_similarity(&a, &[0.0; 256]).is_err());
        assert!(cosine_similarity(&a, &[1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_scale_invariant(
            a in prop::collection::vec(-1.0f64..1.0, 8),
            b in prop::collection::vec(-1.0f64..1.0, 8),
            k in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert!((ab - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let ka: Vec<f64> = a.iter().map(|v| v * k).collect();
            prop_assert!((ab - cosine_similarity(&ka, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn rtf_arithmetic_uses_the_median() {
        let r = RtfReport::from_trials(vec![1.0, 5.0, 0.9], 10.0, 1, "x".into()).unwrap();
        assert!((r.rtf - 0.1).abs() < 1e-12);
        assert_eq!(r.synthesis_seconds, 1.0);
        assert!(r.report().contains("rtf=0.100000"));
        assert!(RtfReport::from_trials(vec![1.0, 1.0], 10.0, 0, "x".into()).is_err());
    }

    #[test]
    fn benchmark_checks_inputs_and_reports_device() {
        let cfg = GeneratorConfig {
            low: SubGeneratorConfig::doubling(2, 2, 4, 4, 8),
            high: SubGeneratorConfig::doubling(2, 2, 4, 4, 8),
            ..GeneratorConfig::default()
        };
        let g = MultiBandGenerator::new(cfg, 1).unwrap();
        let m = MelSpectrogram::new(vec![-4.0; 10 * 80], 10, 80).unwrap();
        assert!(benchmark_rtf(&g, &[], 0, 3, 0).is_err());
        assert!(benchmark_rtf(&g, &[m.clone()], 0, 2, 0).is_err());
        let r = benchmark_rtf(&g, &[m.clone()], 1, 3, 0).unwrap();
        assert!(r.rtf > 0.0);
        assert!((r.audio_seconds - 1280.0 / 24_000.0).abs() < 1e-12);
        assert!(r.device.contains("threads=1"));
        let full = FullBandGenerator::matching(&g, 2).unwrap();
        let c = compare_rtf(&g, &full, &[m], 0, 3, 0).unwrap();
        assert!(c.speedup > 0.0);
    }

    #[test]
    fn similarity_of_identical_and_distinct_voices() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (k, p) in [0, 0, 2].into_iter().enumerate() {
            let path = dir.path().join(format!("c{k}.wav"));
            save_wav(&path, &synth_voice(&VoiceProfile::preset(p), 0.5, k as u64)).unwrap();
            paths.push(path);
        }
        let enc = SpeakerEncoder::new(
            SpeakerEncoderConfig {
                lstm_layers: 1,
                hidden_size: 16,
                ..SpeakerEncoderConfig::default()
            },
            3,
        )
        .unwrap();
        let mel = MelExtractor::new(MelConfig::default()).unwrap();
        let same = vec![(paths[0].clone(), paths[0].clone()), (paths[2].clone(), paths[2].clone())];
        let r = eval_similarity(&same, &enc, &mel).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-9);
        assert!(r.report().contains("similarity=1.000000"));

        let mixed = vec![(paths[0].clone(), paths[2].clone()), (paths[0].clone(), dir.path().join("gone.wav"))];
        let r = eval_similarity(&mixed, &enc, &mel).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert!(r.mean < 1.0);
        assert!(eval_similarity(&[], &enc, &mel).is_err());

        let list = dir.path().join("pairs.tsv");
        std::fs::write(&list, "# ref\tsyn\nc0.wav\tc2.wav\n\n").unwrap();
        assert_eq!(load_pairs(&list).unwrap(), vec![(paths[0].clone(), paths[2].clone())]);
        std::fs::write(&list, "c0.wav\n").unwrap();
        assert!(load_pairs(&list).is_err());
    }

    #[test]
    fn spectral_distance_is_zero_on_self() {
        let x = synth_voice(&VoiceProfile::preset(1), 0.3, 4);
        let longer = AudioSignal::new([x.samples(), &[0.0; 100]].concat(), SAMPLE_RATE).unwrap();
        let d = spectral_distance(&x, &longer, &StftLossConfig::default()).unwrap();
        assert!(d.abs() < 1e-9);
    }
}

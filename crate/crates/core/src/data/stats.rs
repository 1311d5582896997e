use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::manifest::Manifest;
use super::pitch::{extract_f0, PitchConfig};
use super::wav::load_wav;

/// Running mean and spread of voiced F0 values.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PitchSummary {
    pub utterances: usize,
    pub voiced_frames: usize,
    sum: f64,
    sum_sq: f64,
}

impl PitchSummary {
    fn add(&mut self, f: f64) {
        self.voiced_frames += 1;
        self.sum += f;
        self.sum_sq += f * f;
    }

    fn merge(&mut self, other: &PitchSummary) {
        self.utterances += other.utterances;
        self.voiced_frames += other.voiced_frames;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.voiced_frames == 0 { 0.0 } else { self.sum / self.voiced_frames as f64 }
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.voiced_frames == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.voiced_frames as f64 - m * m).max(0.0).sqrt()
    }
}

/// Pitch and duration statistics over a manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: PitchSummary,
    pub per_singer: BTreeMap<String, PitchSummary>,
    pub total_seconds: f64,
    /// Utterance counts per whole-second duration bucket.
    pub duration_histogram: BTreeMap<u64, usize>,
    /// `(utterance id, error)` for files that could not be analysed.
    pub failures: Vec<(String, String)>,
}

pub fn corpus_stats(manifest: &Manifest, cfg: &PitchConfig) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for e in manifest.entries() {
        let signal = match load_wav(&e.path) {
            Ok(s) => s,
            Err(err) => {
                stats.failures.push((e.utterance_id.clone(), err.to_string()));
                continue;
            }
        };
        let mut one = PitchSummary {
            utterances: 1,
            ..PitchSummary::default()
        };
        for f in extract_f0(&signal, cfg).voiced() {
            one.add(f);
        }
        stats.total.merge(&one);
        stats.per_singer.entry(e.singer_id.clone()).or_default().merge(&one);
        let secs = signal.duration_secs();
        stats.total_seconds += secs;
        *stats.duration_histogram.entry(secs.floor() as u64).or_default() += 1;
    }
    stats
}

impl CorpusStats {
    /// Human-readable summary followed by a `key=value` block.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "utterances: {} ({:.2} s)", self.total.utterances, self.total_seconds);
        let _ = writeln!(
            s,
            "pitch: mean {:.2} Hz, std {:.2} Hz over {} voiced frames",
            self.total.mean(),
            self.total.std(),
            self.total.voiced_frames
        );
        for (singer, p) in &self.per_singer {
            let _ = writeln!(
                s,
                "  {singer}: {} utterances, mean {:.2} Hz, std {:.2} Hz",
                p.utterances,
                p.mean(),
                p.std()
            );
        }
        let _ = writeln!(s, "durations:");
        for (sec, n) in &self.duration_histogram {
            let _ = writeln!(s, "  [{sec}, {}) s: {n}", sec + 1);
        }
        for (id, err) in &self.failures {
            let _ = writeln!(s, "failed {id}: {err}");
        }
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "utterances={}", self.total.utterances);
        let _ = writeln!(s, "failures={}", self.failures.len());
        let _ = writeln!(s, "total_seconds={:.6}", self.total_seconds);
        let _ = writeln!(s, "voiced_frames={}", self.total.voiced_frames);
        let _ = writeln!(s, "pitch_mean_hz={:.6}", self.total.mean());
        let _ = writeln!(s, "pitch_std_hz={:.6}", self.total.std());
        for (singer, p) in &self.per_singer {
            let _ = writeln!(s, "singer.{singer}.pitch_mean_hz={:.6}", p.mean());
            let _ = writeln!(s, "singer.{singer}.pitch_std_hz={:.6}", p.std());
        }
        s
    }
}

use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;

/// Half-open sample range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VadConfig {
    pub frame_ms: f64,
    /// Frames quieter than this, relative to the 95th-percentile frame
    /// energy, count as silence.
    pub threshold_db: f64,
    pub min_segment_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 100.0,
            threshold_db: -40.0,
            min_segment_ms: 200.0,
        }
    }
}

fn frame_len(signal: &AudioSignal, ms: f64) -> usize {
    ((ms * signal.sample_rate() as f64 / 1000.0).round() as usize).max(1)
}

/// Mean-square energy of consecutive frames; the last may be partial.
fn frame_energies(x: &[f64], frame: usize) -> Vec<f64> {
    x.chunks(frame)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64)
        .collect()
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Voiced regions found by frame energy.
///
/// Segments are ordered, disjoint and lie within the signal; runs shorter
/// than `min_segment_ms` are dropped.
pub fn vad_trim(signal: &AudioSignal, cfg: &VadConfig) -> Vec<Span> {
    let x = signal.samples();
    if x.is_empty() {
        return Vec::new();
    }
    let frame = frame_len(signal, cfg.frame_ms);
    let energies = frame_energies(x, frame);
    let reference = percentile(&energies, 0.95);
    if reference <= 0.0 {
        return Vec::new();
    }
    let floor = reference * 10f64.powf(cfg.threshold_db / 10.0);
    let min_len = frame_len(signal, cfg.min_segment_ms);

    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &e) in energies.iter().chain(std::iter::once(&0.0)).enumerate() {
        let voiced = i < energies.len() && e > floor;
        match (open, voiced) {
            (None, true) => open = Some(i * frame),
            (Some(start), false) => {
                let span = Span {
                    start,
                    end: (i * frame).min(x.len()),
                };
                if span.len() >= min_len {
                    spans.push(span);
                }
                open = None;
            }
            _ => {}
        }
    }
    spans
}

/// Split `span` of `x` into pieces no longer than `max_len`, cutting out the
/// quietest `frame`-long window in the second half of each oversized piece.
pub fn segment_spans(x: &[f64], span: Span, max_len: usize, frame: usize) -> Vec<Span> {
    let mut out = Vec::new();
    let mut rest = span;
    while rest.len() > max_len {
        let lo = rest.start + max_len / 2;
        let hi = rest.start + max_len - frame.min(max_len / 2);
        let energy = |s: usize| -> f64 { x[s..(s + frame).min(rest.end)].iter().map(|v| v * v).sum() };
        let cut = (lo..=hi)
            .step_by(frame.max(1))
            .min_by(|&a, &b| energy(a).total_cmp(&energy(b)))
            .unwrap_or(hi);
        out.push(Span {
            start: rest.start,
            end: cut,
        });
        rest.start = (cut + frame).min(rest.end);
    }
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Clips of at most `max_seconds`, split at low-energy frames.
pub fn segment(signal: &AudioSignal, max_seconds: f64, frame_ms: f64) -> Vec<AudioSignal> {
    let max_len = (max_seconds * signal.sample_rate() as f64).floor() as usize;
    let frame = frame_len(signal, frame_ms);
    let whole = Span {
        start: 0,
        end: signal.len(),
    };
    segment_spans(signal.samples(), whole, max_len.max(2 * frame), frame)
        .into_iter()
        .map(|s| {
            AudioSignal::new(signal.samples()[s.start..s.end].to_vec(), signal.sample_rate())
                .expect("slices of a valid signal are valid")
        })
        .collect()
}

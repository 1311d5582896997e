use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::manifest::{Manifest, ManifestEntry};
use super::wav::save_wav;
use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::{Error, Result};

/// A toy "singer": a pitch range plus a fixed spectral envelope.
///
/// Clips of one profile share their resonances and differ in notes,
/// vibrato phase and noise, which is enough identity for desk-scale tests.
#[derive(Clone, Debug, PartialEq)]
pub struct VoiceProfile {
    pub name: String,
    pub base_f0: f64,
    /// `(centre Hz, bandwidth Hz, gain)` resonances.
    pub formants: Vec<(f64, f64, f64)>,
    pub breathiness: f64,
    pub vibrato_hz: f64,
}

impl VoiceProfile {
    /// Four hand-picked profiles, then seeded random ones.
    pub fn preset(index: usize) -> Self {
        let fixed: [(f64, [(f64, f64, f64); 3]); 4] = [
            (110.0, [(500.0, 120.0, 1.0), (1500.0, 200.0, 0.5), (2500.0, 300.0, 0.3)]),
            (220.0, [(800.0, 150.0, 1.0), (1200.0, 200.0, 0.7), (2800.0, 300.0, 0.2)]),
            (330.0, [(350.0, 100.0, 1.0), (2300.0, 250.0, 0.8), (3200.0, 300.0, 0.4)]),
            (165.0, [(650.0, 150.0, 1.0), (1000.0, 150.0, 0.9), (3500.0, 400.0, 0.5)]),
        ];
        let name = format!("voice{index}");
        if let Some((f0, formants)) = fixed.get(index) {
            return Self {
                name,
                base_f0: *f0,
                formants: formants.to_vec(),
                breathiness: 0.02 + 0.01 * index as f64,
                vibrato_hz: 5.0 + 0.3 * index as f64,
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(index as u64);
        Self {
            name,
            base_f0: rng.random_range(100.0..350.0),
            formants: (0..3)
                .map(|k| {
                    let lo = [300.0, 900.0, 2200.0][k];
                    (rng.random_range(lo..lo * 1.6), rng.random_range(100.0..300.0), rng.random_range(0.2..1.0))
                })
                .collect(),
            breathiness: rng.random_range(0.01..0.05),
            vibrato_hz: rng.random_range(4.5..6.5),
        }
    }

    fn envelope(&self, hz: f64) -> f64 {
        let peaks: f64 = self
            .formants
            .iter()
            .map(|&(c, bw, g)| g * (-0.5 * ((hz - c) / bw).powi(2)).exp())
            .sum();
        peaks + 0.01
    }
}

/// Render `seconds` of a short melody in `profile`'s voice at 24 kHz.
pub fn synth_voice(profile: &VoiceProfile, seconds: f64, seed: u64) -> AudioSignal {
    let sr = SAMPLE_RATE as f64;
    let n = (seconds * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let notes = rng.random_range(2..=4);
    let steps = [0.0, 2.0, 4.0, 5.0, 7.0];
    let pitches: Vec<f64> = (0..notes)
        .map(|_| profile.base_f0 * 2f64.powf(steps[rng.random_range(0..steps.len())] / 12.0))
        .collect();
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let fade = (0.02 * sr) as usize;
    let note_len = n.div_ceil(notes);

    let max_h = 48;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let note = (i / note_len).min(notes - 1);
        let f0 = pitches[note] * (1.0 + 0.01 * (2.0 * PI * profile.vibrato_hz * t + vib_phase).sin());
        phase += 2.0 * PI * f0 / sr;
        let mut v = 0.0;
        for h in 1..=max_h {
            let hz = f0 * h as f64;
            if hz > 0.45 * sr {
                break;
            }
            v += profile.envelope(hz) * (h as f64 * phase).sin();
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        v += profile.breathiness * noise;
        // fade in and out at note boundaries
        let pos = i % note_len;
        let gain = (pos.min(note_len - 1 - pos) as f64 / fade as f64).min(1.0);
        out.push(v * gain);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    AudioSignal::new(out, SAMPLE_RATE).expect("finite synthesis")
}

/// Write `per_profile` clips for each profile plus `manifest.tsv` into `dir`.
pub fn write_synthetic_corpus(
    dir: &Path,
    profiles: &[VoiceProfile],
    per_profile: usize,
    seconds: f64,
    seed: u64,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (p, profile) in profiles.iter().enumerate() {
        for k in 0..per_profile {
            let id = format!("{}_{k:02}", profile.name);
            let file = format!("{id}.wav");
            let clip_seed = seed.wrapping_mul(1_000_003).wrapping_add((p * 1000 + k) as u64);
            save_wav(&dir.join(&file), &synth_voice(profile, seconds, clip_seed))?;
            entries.push(ManifestEntry {
                utterance_id: id,
                path: file.into(),
                singer_id: profile.name.clone(),
                transcript: None,
            });
        }
    }
    let manifest = Manifest::new(entries)?;
    manifest.save(&dir.join("manifest.tsv"))?;
    Manifest::load(&dir.join("manifest.tsv"))
}

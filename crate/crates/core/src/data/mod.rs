//! Corpus plumbing: WAV files, manifests, silence trimming, segmentation,
//! pitch statistics and a synthetic multi-voice corpus for experiments.

mod manifest;
mod pitch;
mod stats;
mod synth;
mod vad;
mod wav;

pub use manifest::{Manifest, ManifestEntry};
pub use pitch::{extract_f0, PitchConfig, PitchTrack};
pub use stats::{corpus_stats, CorpusStats, PitchSummary};
pub use synth::{synth_voice, write_synthetic_corpus, VoiceProfile};
pub use vad::{segment, segment_spans, vad_trim, Span, VadConfig};
pub use wav::{decode_wav, encode_wav, load_wav, save_wav};

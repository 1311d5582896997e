//! Render a mel-spectrogram to audio with a generator checkpoint, or with
//! fresh weights when none is given. Same seed, same samples.
//!
//! `cargo run --release --example synthesize -- [checkpoint] [out.wav]`

use multisinger::data::{save_wav, synth_voice, VoiceProfile};
use multisinger::dsp::{MelConfig, MelExtractor};
use multisinger::model::{Checkpoint, GeneratorConfig, MultiBandGenerator, Vocoder};
use multisinger::training::load_generator;

fn main() -> multisinger::Result<()> {
    let mut args = std::env::args().skip(1);
    let generator = match args.next() {
        Some(path) => load_generator(&Checkpoint::load(path.as_ref())?)?.1,
        None => MultiBandGenerator::new(GeneratorConfig::default(), 0)?,
    };
    let mel = MelExtractor::new(MelConfig::default())?.compute(&synth_voice(&VoiceProfile::preset(2), 0.5, 4))?;
    let a = generator.synthesize(&mel, 42)?;
    let b = generator.synthesize(&mel, 42)?;
    let c = generator.synthesize(&mel, 43)?;
    println!("{} frames -> {} samples", mel.frames, a.len());
    println!("seed 42 twice identical: {}", a.samples() == b.samples());
    println!("seed 43 differs: {}", a.samples() != c.samples());
    if let Some(out) = args.next() {
        save_wav(out.as_ref(), &a)?;
        println!("wrote {out}");
    }
    Ok(())
}

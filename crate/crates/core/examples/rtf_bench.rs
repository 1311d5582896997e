//! Real-time factor of the multi-band generator against a full-band stack
//! with the same blocks.
//!
//! `cargo run --release --example rtf_bench -- [seconds]`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::{MelConfig, MelExtractor};
use multisinger::eval::compare_rtf;
use multisinger::model::{FullBandGenerator, GeneratorConfig, MultiBandGenerator};

fn main() -> multisinger::Result<()> {
    let seconds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let multi = MultiBandGenerator::new(GeneratorConfig::default(), 0)?;
    let full = FullBandGenerator::matching(&multi, 1)?;
    let mel = MelExtractor::new(MelConfig::default())?.compute(&synth_voice(&VoiceProfile::preset(0), seconds, 2))?;
    let r = compare_rtf(&multi, &full, &[mel], 1, 3, 0)?;
    println!("multi-band:\n{}", r.multi_band.report());
    println!("full-band:\n{}", r.full_band.report());
    println!("speedup {:.2}x", r.speedup);
    Ok(())
}

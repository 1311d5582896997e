//! Log-mel features of a synthetic voice, written to a mel container.
//!
//! `cargo run --release --example mel_features -- [out.mel]`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::{MelConfig, MelExtractor, MelSpectrogram};

fn main() -> multisinger::Result<()> {
    let mel = MelExtractor::new(MelConfig::default())?;
    let voice = synth_voice(&VoiceProfile::preset(3), 2.0, 0);
    let m = mel.compute(&voice)?;
    println!("{} samples -> {} frames x {} bands", voice.len(), m.frames, m.n_mels);

    // loudest band per half second
    for f in (0..m.frames).step_by(m.frames / 4) {
        let row = m.row(f);
        let (band, value) = row.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        println!("  frame {f:>3}: peak band {band:>2} at {value:.2}");
    }

    if let Some(path) = std::env::args().nth(1) {
        m.save(path.as_ref())?;
        let back = MelSpectrogram::load(path.as_ref())?;
        println!("wrote {path} ({} frames)", back.frames);
    }
    Ok(())
}

//! Multi-resolution STFT loss between a voice and distorted copies of it.
//!
//! `cargo run --release --example stft_loss`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::AudioSignal;
use multisinger::losses::{multi_res_stft_loss, StftLossConfig};

fn main() -> multisinger::Result<()> {
    let cfg = StftLossConfig::default();
    let x = synth_voice(&VoiceProfile::preset(0), 1.0, 1);
    let sr = x.sample_rate();
    let scaled = AudioSignal::new(x.samples().iter().map(|v| 2.0 * v).collect(), sr)?;
    let other = synth_voice(&VoiceProfile::preset(2), 1.0, 1);
    let delayed = AudioSignal::new([vec![0.0; 48], x.samples()[..x.len() - 48].to_vec()].concat(), sr)?;

    for (name, y) in [("identical", &x), ("doubled", &scaled), ("2 ms late", &delayed), ("other voice", &other)] {
        println!("{name:>12}: {:.4}", multi_res_stft_loss(&x, y, &cfg)?);
    }
    println!("doubling should give 1 + ln 2 = {:.4}", 1.0 + 2f64.ln());
    Ok(())
}

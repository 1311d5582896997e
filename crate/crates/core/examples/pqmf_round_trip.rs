//! Split a voice into four sub-bands and put it back together.
//!
//! `cargo run --release --example pqmf_round_trip`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::{snr_db, PqmfBank, PqmfConfig};

fn main() -> multisinger::Result<()> {
    let bank = PqmfBank::design(PqmfConfig::default())?;
    let voice = synth_voice(&VoiceProfile::preset(1), 1.0, 3);
    let sub = bank.analysis(&voice);
    println!("{} taps, {} bands of {} samples", bank.taps(), sub.bands.len(), sub.band_len());
    for (k, band) in sub.bands.iter().enumerate() {
        let rms = (band.iter().map(|v| v * v).sum::<f64>() / band.len() as f64).sqrt();
        println!("  band {k}: rms {rms:.4}");
    }
    let back = bank.synthesis(&sub, voice.sample_rate())?;
    let edge = bank.taps();
    let n = voice.len();
    let snr = snr_db(&voice.samples()[edge..n - edge], &back.samples()[edge..n - edge]);
    println!("reconstruction snr {snr:.1} dB");
    Ok(())
}

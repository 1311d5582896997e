//! Pretrain the generator on a single one-second clip and report the
//! whole-clip STFT loss before and after.
//!
//! `cargo run --release --example overfit_clip -- [steps] [lr]`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::{AudioSignal, MelExtractor};
use multisinger::losses::multi_res_stft_loss;
use multisinger::model::Vocoder;
use multisinger::speaker_encoder::SpeakerEncoder;
use multisinger::training::{Dataset, ModelConfig, OptimizerConfig, TrainConfig, Trainer};

fn main() -> multisinger::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let model = ModelConfig::default();
    let mel = MelExtractor::new(model.mel.clone())?;
    let clip = synth_voice(&VoiceProfile::preset(0), 1.0, 7);
    let config = TrainConfig {
        pretrain_steps: steps,
        total_steps: steps,
        batch_size: 1,
        segment_length: 4096,
        checkpoint_interval: 0,
        optimizer: OptimizerConfig { lr_g: lr, ..Default::default() },
        ..TrainConfig::default()
    };
    let data = Dataset::from_signals(vec![("clip".into(), "voice0".into(), clip.clone())], &mel, 4096, None)?;
    let encoder = SpeakerEncoder::new(model.encoder.clone(), 3)?;
    let mut trainer = Trainer::new(model, config.clone(), data, Some(encoder))?;

    let hop = mel.config().hop_size;
    let frames = clip.len() / hop;
    let features = mel.compute(&clip)?.slice(0, frames)?;
    let reference = AudioSignal::new(clip.samples()[..frames * hop].to_vec(), clip.sample_rate())?;
    let eval = |t: &Trainer| -> multisinger::Result<f64> {
        multi_res_stft_loss(&reference, &t.state().generator.synthesize(&features, 1)?, &config.stft_loss)
    };

    let before = eval(&trainer)?;
    while !trainer.is_done() {
        let m = trainer.step()?;
        if m.step % 50 == 0 {
            println!("step {:>4}: l_stft {:.4} l_spl {:.4}", m.step, m.l_stft, m.l_spl);
        }
    }
    let after = eval(&trainer)?;
    println!("whole clip l_stft {before:.4} -> {after:.4} ({:.1}%)", 100.0 * after / before);
    Ok(())
}

//! Train a speaker encoder with GE2E on four synthetic voices and compare
//! the embeddings it produces.
//!
//! `cargo run --release --example speaker_embeddings -- [steps]`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::{MelConfig, MelExtractor};
use multisinger::eval::cosine_similarity;
use multisinger::speaker_encoder::{train_ge2e, Ge2eTrainConfig, SpeakerEncoder, SpeakerEncoderConfig};

fn main() -> multisinger::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mel = MelExtractor::new(MelConfig::default())?;
    let mut corpus = Vec::new();
    for p in 0..4 {
        for take in 0..4 {
            let voice = synth_voice(&VoiceProfile::preset(p), 1.0, (10 * p + take) as u64);
            corpus.push((format!("voice{p}"), mel.compute(&voice)?));
        }
    }
    let config = SpeakerEncoderConfig {
        hidden_size: 64,
        ..SpeakerEncoderConfig::default()
    };
    let mut encoder = SpeakerEncoder::new(config, 0)?;
    let losses = train_ge2e(&mut encoder, &corpus, &Ge2eTrainConfig { steps, ..Default::default() })?;
    println!("ge2e loss {:.3} -> {:.3}", losses[0], losses[losses.len() - 1]);

    let e: Vec<_> = corpus.iter().map(|(_, m)| encoder.encode(m)).collect::<Result<_, _>>()?;
    print!("      ");
    (0..4).for_each(|j| print!(" voice{j}"));
    println!();
    for i in 0..4 {
        print!("voice{i}");
        for j in 0..4 {
            print!(" {:>6.3}", cosine_similarity(e[4 * i].vector(), e[4 * j + 1].vector())?);
        }
        println!();
    }
    Ok(())
}

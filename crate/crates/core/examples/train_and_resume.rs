//! A short two-phase training run on a tiny multi-singer corpus, stopped
//! half way and resumed from its checkpoint.
//!
//! `cargo run --release --example train_and_resume -- [out_dir]`

use multisinger::data::{synth_voice, VoiceProfile};
use multisinger::dsp::MelExtractor;
use multisinger::model::SubGeneratorConfig;
use multisinger::speaker_encoder::{EmbeddingCache, SpeakerEncoder};
use multisinger::training::{read_log, resume_or_new, run_training, Dataset, ModelConfig, RunPaths, TrainConfig, Trainer};

fn small_model() -> ModelConfig {
    let mut m = ModelConfig::default();
    m.generator.low = SubGeneratorConfig::doubling(6, 6, 16, 16, 32);
    m.generator.high = SubGeneratorConfig::doubling(3, 3, 16, 16, 32);
    m.uncond_disc.channels = 16;
    m.encoder.hidden_size = 32;
    m
}

fn main() -> multisinger::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/train_and_resume".into());
    let _ = std::fs::remove_dir_all(&out);
    let paths = RunPaths::new(&out);
    let model = small_model();
    let mel = MelExtractor::new(model.mel.clone())?;
    let encoder = SpeakerEncoder::new(model.encoder.clone(), 1)?;

    let clips: Vec<_> = (0..4)
        .map(|i| (format!("u{i}"), format!("voice{}", i % 2), synth_voice(&VoiceProfile::preset(i % 2), 1.0, i as u64)))
        .collect();
    let mut cache = EmbeddingCache::default();
    for (id, _, audio) in &clips {
        cache.insert(id.clone(), &encoder.encode(&mel.compute(audio)?)?);
    }
    let config = TrainConfig {
        pretrain_steps: 10,
        total_steps: 20,
        batch_size: 2,
        segment_length: 4096,
        checkpoint_interval: 5,
        ..TrainConfig::default()
    };
    let segment_length = config.segment_length;
    let data = || Dataset::from_signals(clips.clone(), &mel, segment_length, Some(&cache));

    let mut trainer = Trainer::new(model.clone(), config.clone(), data()?, Some(encoder.clone()))?;
    let first = run_training(&mut trainer, &paths, Some(12))?;
    println!("stopped after {} steps", first.steps_run);

    let mut trainer = resume_or_new(&paths, model, config, data()?, Some(encoder))?;
    println!("resuming at step {}", trainer.state().step);
    let done = run_training(&mut trainer, &paths, None)?;
    for r in read_log(&done.log)?.iter().step_by(4) {
        println!("step {:>3} {:?}: l_stft {:.3} l_adv_g {:?}", r.step, r.phase, r.l_stft, r.l_adv_g);
    }
    println!("final checkpoint {}", done.final_checkpoint.display());
    Ok(())
}

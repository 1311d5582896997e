//! Write a synthetic corpus to disk, trim and segment one long take, and
//! print pitch statistics for the corpus.
//!
//! `cargo run --release --example corpus_pipeline -- [dir]`

use multisinger::data::{
    corpus_stats, segment, synth_voice, vad_trim, write_synthetic_corpus, PitchConfig, VadConfig, VoiceProfile,
};
use multisinger::dsp::AudioSignal;

fn main() -> multisinger::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/corpus_pipeline".into());
    let profiles: Vec<_> = (0..3).map(VoiceProfile::preset).collect();
    let manifest = write_synthetic_corpus(dir.as_ref(), &profiles, 2, 1.5, 0)?;
    println!("{} utterances in {dir}/manifest.tsv", manifest.len());

    // a take with a second of silence in the middle and a long tail
    let voice = synth_voice(&profiles[0], 14.0, 1);
    let mut x = voice.samples().to_vec();
    x[24_000..48_000].iter_mut().for_each(|v| *v = 0.0);
    let take = AudioSignal::new(x, voice.sample_rate())?;
    for s in vad_trim(&take, &VadConfig::default()) {
        let region = AudioSignal::new(take.samples()[s.start..s.end].to_vec(), take.sample_rate())?;
        let clips = segment(&region, 11.0, 100.0);
        let lens: Vec<String> = clips.iter().map(|c| format!("{:.2}", c.duration_secs())).collect();
        println!("voiced {}..{} -> clips of [{}] s", s.start, s.end, lens.join(", "));
    }

    print!("{}", corpus_stats(&manifest, &PitchConfig::default()).report());
    Ok(())
}

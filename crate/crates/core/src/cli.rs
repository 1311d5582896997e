//! Command suite behind the `multisinger` binary. Every command returns a
//! text report ending in a `[values]` block of `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{corpus_stats, load_wav, save_wav, segment, synth_voice, vad_trim, Manifest, ManifestEntry, VoiceProfile};
use crate::dsp::{AudioSignal, MelExtractor, MelSpectrogram};
use crate::eval::{compare_rtf, benchmark_rtf, eval_similarity, load_pairs, spectral_distance};
use crate::model::{Checkpoint, FullBandGenerator, MultiBandGenerator, Vocoder};
use crate::speaker_encoder::{embedding_cache_build, train_ge2e, EmbeddingCache, SpeakerEncoder};
use crate::training::{load_generator, resume_or_new, run_training, Dataset, RunPaths, Trainer};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "multisinger", version, about = "Multi-band singing voice vocoder")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trim, segment and featurise a corpus, then cache singer embeddings.
    Preprocess(PreprocessArgs),
    /// Pretrain, then jointly train, the vocoder.
    Train(TrainArgs),
    /// Render a mel-spectrogram to a WAV file.
    Synth(SynthArgs),
    /// Measure the real-time factor.
    Bench(BenchArgs),
    /// Singer similarity between reference and synthetic recordings.
    Eval(EvalArgs),
    /// Pitch and duration statistics of a corpus.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pretrained speaker encoder; trained on the corpus when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Preprocessed manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory for checkpoints and the log.
    #[arg(long)]
    pub out: PathBuf,
    /// Training checkpoint to resume from (default: `<out>/latest.ckpt` if present).
    #[arg(long, alias = "resume")]
    pub checkpoint: Option<PathBuf>,
    /// Embedding cache (default: `embeddings.bin` next to the manifest).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Speaker encoder (default: `encoder.ckpt` next to the manifest).
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub pretrain_steps: Option<u64>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub segment_length: Option<usize>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub checkpoint_interval: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Training checkpoint holding the generator.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Mel container (`frames × bands` little-endian f32).
    #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
    pub mel: Option<PathBuf>,
    /// Compute the mel from this recording instead.
    #[arg(long)]
    pub wav: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Training checkpoint; untrained weights from the config when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Mel input; a synthetic clip of `bench.seconds` when absent.
    #[arg(long)]
    pub mel: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Also time a full-band stack with the same blocks.
    #[arg(long)]
    pub compare_full_band: bool,
    /// Write the report here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pair list: `reference<TAB>synthetic` per line.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Speaker encoder checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(&cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Bench(a) => cmd_bench(&cfg, a, seed),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Stats(a) => cmd_stats(&cfg, a),
    }
}

/// One-line, machine-parsable rendering of an error.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} message={:?}", e.kind(), msg)
}

fn write_report(out: Option<&Path>, report: String) -> Result<String> {
    if let Some(p) = out {
        std::fs::write(p, &report).map_err(|e| Error::io(p, e))?;
    }
    Ok(report)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Outputs of [`cmd_preprocess`] inside the output directory.
pub struct PreprocessLayout {
    pub root: PathBuf,
}

impl PreprocessLayout {
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.tsv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.bin")
    }
    pub fn encoder(&self) -> PathBuf {
        self.root.join("encoder.ckpt")
    }
    pub fn wav(&self, id: &str) -> PathBuf {
        self.root.join("wavs").join(format!("{id}.wav"))
    }
    pub fn mel(&self, id: &str) -> PathBuf {
        self.root.join("mels").join(format!("{id}.mel"))
    }
}

pub fn cmd_preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> Result<String> {
    let input = Manifest::load(&a.manifest)?;
    let out = PreprocessLayout { root: a.out.clone() };
    mkdir(&out.root.join("wavs"))?;
    mkdir(&out.root.join("mels"))?;
    let mel = MelExtractor::new(cfg.model.mel.clone())?;
    let pp = &cfg.preprocess;

    let mut entries = Vec::new();
    let mut corpus = Vec::new();
    let mut failures = Vec::new();
    let mut longest: f64 = 0.0;
    for e in input.entries() {
        let clips = load_wav(&e.path).map(|signal| {
            vad_trim(&signal, &pp.vad)
                .into_iter()
                .flat_map(|span| {
                    let part = AudioSignal::new(signal.samples()[span.start..span.end].to_vec(), signal.sample_rate())
                        .expect("slice of a valid signal");
                    segment(&part, pp.max_seconds, pp.vad.frame_ms)
                })
                .collect::<Vec<_>>()
        });
        let clips = match clips {
            Ok(c) => c,
            Err(err) => {
                eprintln!("skip utterance={} {}", e.utterance_id, error_line(&err));
                failures.push((e.utterance_id.clone(), err.to_string()));
                continue;
            }
        };
        for (k, clip) in clips.iter().enumerate() {
            let id = format!("{}_{k:03}", e.utterance_id);
            save_wav(&out.wav(&id), clip)?;
            let m = mel.compute(clip)?;
            m.save(&out.mel(&id))?;
            longest = longest.max(clip.duration_secs());
            corpus.push((e.singer_id.clone(), m));
            entries.push(ManifestEntry {
                utterance_id: id.clone(),
                path: PathBuf::from("wavs").join(format!("{id}.wav")),
                singer_id: e.singer_id.clone(),
                transcript: e.transcript.clone(),
            });
        }
    }
    if !input.is_empty() && failures.len() == input.len() {
        return Err(Error::InvalidInput(format!("all {} input files failed", input.len())));
    }
    let processed = Manifest::new(entries)?;
    processed.save(&out.manifest())?;
    let processed = Manifest::load(&out.manifest())?;

    let (encoder, ge2e_note) = match &a.checkpoint {
        Some(p) => (SpeakerEncoder::from_checkpoint(&Checkpoint::load(p)?)?, "loaded".to_string()),
        None => {
            let mut enc = SpeakerEncoder::new(cfg.model.encoder.clone(), pp.ge2e.seed)?;
            match train_ge2e(&mut enc, &corpus, &pp.ge2e) {
                Ok(losses) => {
                    let last = losses.last().copied().unwrap_or(f64::NAN);
                    (enc, format!("trained {} steps, final loss {last:.4}", losses.len()))
                }
                Err(Error::InvalidInput(why)) => (enc, format!("untrained ({why})")),
                Err(e) => return Err(e),
            }
        }
    };
    encoder.to_checkpoint().save(&out.encoder())?;
    let built = embedding_cache_build(&processed, &encoder, &mel);
    built.cache.save(&out.embeddings())?;

    let mut s = String::new();
    let _ = writeln!(s, "processed {} inputs into {} clips (longest {longest:.2} s)", input.len(), processed.len());
    let _ = writeln!(s, "speaker encoder: {ge2e_note}");
    for (id, err) in failures.iter().chain(&built.failures) {
        let _ = writeln!(s, "failed {id}: {err}");
    }
    let _ = writeln!(s, "[values]");
    let _ = writeln!(s, "inputs={}", input.len());
    let _ = writeln!(s, "clips={}", processed.len());
    let _ = writeln!(s, "failures={}", failures.len());
    let _ = writeln!(s, "embeddings={}", built.cache.len());
    let _ = writeln!(s, "longest_seconds={longest:.6}");
    let _ = writeln!(s, "manifest={}", out.manifest().display());
    Ok(s)
}

pub fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<String> {
    let t = &mut cfg.train;
    let set = |dst: &mut u64, v: Option<u64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut t.pretrain_steps, a.pretrain_steps);
    set(&mut t.total_steps, a.total_steps);
    set(&mut t.checkpoint_interval, a.checkpoint_interval);
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.segment_length {
        t.segment_length = v;
    }
    if let Some(v) = a.lr_g {
        t.optimizer.lr_g = v;
    }
    if let Some(v) = a.lr_d {
        t.optimizer.lr_d = v;
    }
    cfg.validate()?;

    let manifest = Manifest::load(&a.manifest)?;
    if manifest.is_empty() {
        return Err(Error::InvalidInput(format!("manifest {} is empty", a.manifest.display())));
    }
    let beside = |name: &str| a.manifest.parent().unwrap_or(Path::new(".")).join(name);
    let cache_path = a
        .embeddings
        .clone()
        .or(cfg.paths.embedding_cache.clone())
        .unwrap_or_else(|| beside("embeddings.bin"));
    if !cache_path.exists() {
        return Err(Error::InvalidInput(format!(
            "embedding cache {} not found; run preprocess first",
            cache_path.display()
        )));
    }
    let cache = EmbeddingCache::load(&cache_path)?;
    let encoder = if cfg.train.perceptual_loss {
        let p = a
            .encoder
            .clone()
            .or(cfg.paths.encoder_checkpoint.clone())
            .unwrap_or_else(|| beside("encoder.ckpt"));
        Some(SpeakerEncoder::from_checkpoint(&Checkpoint::load(&p)?)?)
    } else {
        None
    };

    let paths = RunPaths::new(&a.out);
    mkdir(&paths.out_dir)?;
    let mut trainer = match &a.checkpoint {
        Some(ck) => {
            let ck = Checkpoint::load(ck)?;
            let (_, train) = crate::training::training_configs(&ck)?;
            let mel = MelExtractor::new(cfg.model.mel.clone())?;
            let data = Dataset::from_manifest(&manifest, &mel, train.segment_length, Some(&cache))?;
            Trainer::resume(&ck, data, encoder)?
        }
        None => {
            let mel = MelExtractor::new(cfg.model.mel.clone())?;
            let data = Dataset::from_manifest(&manifest, &mel, cfg.train.segment_length, Some(&cache))?;
            resume_or_new(&paths, cfg.model.clone(), cfg.train.clone(), data, encoder)?
        }
    };
    // a resumed run keeps its checkpointed settings except the schedule length
    if let Some(total) = a.total_steps {
        trainer.set_total_steps(total)?;
    }
    // echo the effective configuration next to the checkpoints
    let effective = RunConfig {
        model: trainer.model_config().clone(),
        train: trainer.config().clone(),
        ..cfg
    };
    let cfg_path = paths.out_dir.join("config.toml");
    std::fs::write(&cfg_path, effective.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;

    let start = trainer.state().step;
    let outcome = run_training(&mut trainer, &paths, None)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "trained steps {start}..{} ({} this run), checkpoint {}",
        trainer.state().step,
        outcome.steps_run,
        outcome.final_checkpoint.display()
    );
    let _ = writeln!(s, "[values]");
    let _ = writeln!(s, "start_step={start}");
    let _ = writeln!(s, "final_step={}", trainer.state().step);
    if let Some(m) = &outcome.last {
        let _ = writeln!(s, "l_stft={:.6}", m.l_stft);
        let _ = writeln!(s, "l_spl={:.6}", m.l_spl);
        if let (Some(g), Some(d)) = (m.l_adv_g, m.l_adv_d) {
            let _ = writeln!(s, "l_adv_g={g:.6}");
            let _ = writeln!(s, "l_adv_d={d:.6}");
        }
    }
    let _ = writeln!(s, "checkpoint={}", outcome.final_checkpoint.display());
    let _ = writeln!(s, "log={}", outcome.log.display());
    Ok(s)
}

pub fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<String> {
    let (model, g) = load_generator(&Checkpoint::load(&a.checkpoint)?)?;
    let mel = match (&a.mel, &a.wav) {
        (Some(p), _) => MelSpectrogram::load(p)?,
        (None, Some(w)) => MelExtractor::new(model.mel.clone())?.compute(&load_wav(w)?)?,
        (None, None) => return Err(Error::InvalidInput("give --mel or --wav".into())),
    };
    if mel.n_mels != model.mel.n_mels {
        return Err(Error::Shape(format!(
            "mel has {} bands, the checkpoint expects {}",
            mel.n_mels, model.mel.n_mels
        )));
    }
    let y = g.synthesize(&mel, seed)?;
    save_wav(&a.out, &y)?;
    let mut s = String::new();
    let _ = writeln!(s, "wrote {} ({} frames -> {} samples)", a.out.display(), mel.frames, y.len());
    let _ = writeln!(s, "[values]");
    let _ = writeln!(s, "frames={}", mel.frames);
    let _ = writeln!(s, "samples={}", y.len());
    let _ = writeln!(s, "seed={seed}");
    Ok(s)
}

pub fn cmd_bench(cfg: &RunConfig, a: &BenchArgs, seed: u64) -> Result<String> {
    let (model, g) = match &a.checkpoint {
        Some(p) => load_generator(&Checkpoint::load(p)?)?,
        None => (cfg.model.clone(), MultiBandGenerator::new(cfg.model.generator.clone(), seed)?),
    };
    let mel = match &a.mel {
        Some(p) => MelSpectrogram::load(p)?,
        None => {
            let clip = synth_voice(&VoiceProfile::preset(0), cfg.bench.seconds, seed);
            MelExtractor::new(model.mel.clone())?.compute(&clip)?
        }
    };
    let trials = a.trials.unwrap_or(cfg.bench.trials);
    let warmup = a.warmup.unwrap_or(cfg.bench.warmup);
    let mels = [mel];
    let report = if a.compare_full_band {
        let full = FullBandGenerator::matching(&g, seed)?;
        let c = compare_rtf(&g, &full, &mels, warmup, trials, seed)?;
        let mut s = String::new();
        let _ = writeln!(s, "multi-band rtf {:.6}, full-band rtf {:.6}, speedup {:.3}x on {}",
            c.multi_band.rtf, c.full_band.rtf, c.speedup, c.multi_band.device);
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "rtf={:.6}", c.multi_band.rtf);
        let _ = writeln!(s, "full_band_rtf={:.6}", c.full_band.rtf);
        let _ = writeln!(s, "speedup={:.6}", c.speedup);
        let _ = writeln!(s, "trials={trials}");
        let _ = writeln!(s, "device={}", c.multi_band.device);
        s
    } else {
        benchmark_rtf(&g, &mels, warmup, trials, seed)?.report()
    };
    write_report(a.out.as_deref(), report)
}

pub fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> Result<String> {
    let enc_path = a
        .checkpoint
        .clone()
        .or(cfg.paths.encoder_checkpoint.clone())
        .ok_or_else(|| Error::InvalidInput("eval needs a speaker encoder (--checkpoint)".into()))?;
    let encoder = SpeakerEncoder::from_checkpoint(&Checkpoint::load(&enc_path)?)?;
    let mel = MelExtractor::new(cfg.model.mel.clone())?;
    let pairs = load_pairs(&a.manifest)?;
    let sim = eval_similarity(&pairs, &encoder, &mel)?;
    let mut distances = Vec::new();
    for (r, s) in &pairs {
        if let Ok(d) = load_wav(r).and_then(|r| spectral_distance(&r, &load_wav(s)?, &cfg.train.stft_loss)) {
            distances.push(d);
        }
    }
    let mut report = sim.report();
    if !distances.is_empty() {
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        let _ = writeln!(report, "spectral_distance={mean:.6}");
    }
    write_report(a.out.as_deref(), report)
}

pub fn cmd_stats(cfg: &RunConfig, a: &StatsArgs) -> Result<String> {
    let manifest = Manifest::load(&a.manifest)?;
    write_report(a.out.as_deref(), corpus_stats(&manifest, &cfg.pitch).report())
}

/// `key=value` pairs from a report's `[values]` block.
pub fn parse_values(report: &str) -> BTreeMap<String, String> {
    report
        .lines()
        .skip_while(|l| l.trim() != "[values]")
        .skip(1)
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_flags() {
        let cli = Cli::try_parse_from([
            "multisinger", "train", "--config", "c.toml", "--seed", "3", "--manifest", "m.tsv", "--out", "run",
            "--pretrain-steps", "10", "--total-steps", "10",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(3));
        match cli.command {
            Command::Train(t) => assert_eq!((t.pretrain_steps, t.total_steps), (Some(10), Some(10))),
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["multisinger", "train", "--manifest", "m", "--out", "o", "--resume", "x.ckpt"]).unwrap();
        match cli.command {
            Command::Train(t) => assert_eq!(t.checkpoint, Some(PathBuf::from("x.ckpt"))),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["multisinger", "synth", "--checkpoint", "c", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from(["multisinger", "frobnicate"]).is_err());
    }

    #[test]
    fn errors_render_on_one_line() {
        let e = Error::Config("bad\nthing".into());
        let line = error_line(&e);
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error kind=config message="));
    }

    #[test]
    fn values_block_parsing() {
        let v = parse_values("hello\n[values]\na=1\nb=x=y\n");
        assert_eq!(v["a"], "1");
        assert_eq!(v["b"], "x=y");
    }
}

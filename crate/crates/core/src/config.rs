//! One declarative TOML file for every setting the command suite uses.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PitchConfig, VadConfig};
use crate::speaker_encoder::Ge2eTrainConfig;
use crate::training::{ModelConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub vad: VadConfig,
    /// Longest clip kept after segmentation.
    pub max_seconds: f64,
    /// Speaker-encoder training run before embeddings are cached.
    pub ge2e: Ge2eTrainConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            vad: VadConfig::default(),
            max_seconds: 11.0,
            ge2e: Ge2eTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub warmup: usize,
    pub trials: usize,
    /// Length of the generated benchmark input when no mel file is given.
    pub seconds: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 1,
            trials: 5,
            seconds: 2.0,
        }
    }
}

/// Optional file locations; relative entries resolve against the config
/// file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub embedding_cache: Option<PathBuf>,
    pub encoder_checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub pitch: PitchConfig,
    pub bench: BenchConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.embedding_cache, &mut cfg.paths.encoder_checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.preprocess.max_seconds > 0.0) {
            return Err(Error::Config("preprocess.max_seconds must be positive".into()));
        }
        if self.bench.trials < 3 {
            return Err(Error::Config("bench.trials must be at least 3".into()));
        }
        Ok(())
    }

    /// Route one seed to every random consumer.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.preprocess.ge2e.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_at_any_depth() {
        for text in [
            "colour = 1",
            "[train]\nsteps = 3",
            "[model.generator]\nhop = 3",
            "[model.mel]\nn_mel = 3",
            "[train.optimizer]\nlr = 1.0",
        ] {
            match RunConfig::from_toml(text) {
                Err(Error::Config(msg)) => assert!(!msg.contains('\n'), "{msg}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_and_invariants() {
        let cfg = RunConfig::from_toml("[train]\npretrain_steps = 10\ntotal_steps = 10\nsegment_length = 4096").unwrap();
        assert_eq!(cfg.train.total_steps, 10);
        assert_eq!(cfg.train.segment_length, 4096);
        assert!(RunConfig::from_toml("[train]\npretrain_steps = 11\ntotal_steps = 10").is_err());
        assert!(RunConfig::from_toml("[bench]\ntrials = 2").is_err());
        let cfg = RunConfig::default().with_seed(7);
        assert_eq!((cfg.train.seed, cfg.preprocess.ge2e.seed), (7, 7));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\nembedding_cache = \"emb.bin\"").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.embedding_cache, Some(dir.path().join("emb.bin")));
    }
}

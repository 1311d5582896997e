use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Phase, StepMetrics};
use crate::{Error, Result};

/// One line of the training log. Adversarial fields are absent during
/// pretraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub phase: Phase,
    pub l_stft: f64,
    pub l_spl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_adv_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_adv_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_real: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_fake: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds_real: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds_fake: Option<f64>,
    pub wall_ms: f64,
}

impl LogRecord {
    pub fn from_metrics(m: &StepMetrics, wall_ms: f64) -> Self {
        Self {
            step: m.step,
            phase: m.phase,
            l_stft: m.l_stft,
            l_spl: m.l_spl,
            l_adv_g: m.l_adv_g,
            l_adv_d: m.l_adv_d,
            d_real: m.d_real,
            d_fake: m.d_fake,
            ds_real: m.ds_real,
            ds_fake: m.ds_fake,
            wall_ms,
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::format("training log", format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub(super) struct LogWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl LogWriter {
    /// Open for appending after `resume_step` completed steps. Records
    /// from beyond that point (written before an interruption) are dropped
    /// so the finished log has one record per step.
    pub(super) fn open(path: &Path, resume_step: u64) -> Result<Self> {
        let kept = if resume_step > 0 && path.exists() {
            read_log(path)?.into_iter().filter(|r| r.step < resume_step).collect()
        } else {
            Vec::new()
        };
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        };
        for r in &kept {
            w.write(r)?;
        }
        Ok(w)
    }

    pub(super) fn write(&mut self, r: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| Error::format("training log", e.to_string()))?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub path: PathBuf,
    pub singer_id: String,
    pub transcript: Option<String>,
}

/// Tab-separated list of utterances: `id, path, singer[, transcript]`.
///
/// Blank lines and lines starting with `#` are ignored. Relative paths are
/// resolved against the manifest's directory on load.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.utterance_id.is_empty() || e.singer_id.is_empty() {
                return Err(Error::format("manifest", format!("empty id in {e:?}")));
            }
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(Error::format("manifest", format!("duplicate utterance id `{}`", e.utterance_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::format(
                    "manifest",
                    format!("line {}: expected 3 or 4 tab-separated fields, got {}", n + 1, fields.len()),
                ));
            }
            let path = Path::new(fields[1]);
            entries.push(ManifestEntry {
                utterance_id: fields[0].to_string(),
                path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
                singer_id: fields[2].to_string(),
                transcript: fields.get(3).map(|s| s.to_string()),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Serialise with paths written as stored.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}", e.utterance_id, e.path.display(), e.singer_id));
            if let Some(t) = &e.transcript {
                out.push('\t');
                out.push_str(t);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.utterance_id == utterance_id)
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use super::{SingerEmbedding, SpeakerEncoder, EMBEDDING_DIM};
use crate::data::{load_wav, Manifest};
use crate::dsp::MelExtractor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MSEMBED\0";
const VERSION: u32 = 1;

/// Per-utterance embeddings keyed by utterance id.
///
/// File layout: 8-byte magic, `u32` version, `u32` record count, then per
/// record a `u32` id length, the UTF-8 id and 256 little-endian `f32`
/// values. Records are sorted by id, so equal caches give equal files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingCache {
    pub fn insert(&mut self, utterance_id: impl Into<String>, e: &SingerEmbedding) {
        self.entries
            .insert(utterance_id.into(), e.vector().iter().map(|&v| v as f32).collect());
    }

    pub fn get(&self, utterance_id: &str) -> Result<SingerEmbedding> {
        let v = self
            .entries
            .get(utterance_id)
            .ok_or_else(|| Error::MissingEmbedding(utterance_id.to_string()))?;
        SingerEmbedding::new(v.iter().map(|&x| x as f64).collect(), None)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (id, v) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("embedding cache", d);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic".into()));
        }
        let u32_at = |i: usize| -> Option<u32> { Some(u32::from_le_bytes(bytes.get(i..i + 4)?.try_into().ok()?)) };
        let version = u32_at(8).unwrap();
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = u32_at(12).unwrap();
        let mut pos = 16;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = u32_at(pos).ok_or_else(|| bad("truncated record".into()))? as usize;
            pos += 4;
            let id = bytes
                .get(pos..pos + len)
                .ok_or_else(|| bad("truncated id".into()))
                .and_then(|b| std::str::from_utf8(b).map_err(|e| bad(e.to_string())))?
                .to_string();
            pos += len;
            let raw = bytes
                .get(pos..pos + 4 * EMBEDDING_DIM)
                .ok_or_else(|| bad(format!("truncated vector for `{id}`")))?;
            pos += 4 * EMBEDDING_DIM;
            let v = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            entries.insert(id, v);
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Result of embedding a manifest; failures do not stop the build.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CacheBuildReport {
    pub cache: EmbeddingCache,
    pub failures: Vec<(String, String)>,
}

pub fn embedding_cache_build(manifest: &Manifest, encoder: &SpeakerEncoder, mel: &MelExtractor) -> CacheBuildReport {
    let mut report = CacheBuildReport::default();
    for e in manifest.entries() {
        let embedded = load_wav(&e.path)
            .and_then(|s| mel.compute(&s))
            .and_then(|m| encoder.encode(&m));
        match embedded {
            Ok(v) => report.cache.insert(e.utterance_id.clone(), &v),
            Err(err) => report.failures.push((e.utterance_id.clone(), err.to_string())),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_synthetic_corpus, VoiceProfile};
    use crate::dsp::MelConfig;
    use crate::speaker_encoder::SpeakerEncoderConfig;

    fn small_encoder() -> SpeakerEncoder {
        let cfg = SpeakerEncoderConfig {
            lstm_layers: 1,
            hidden_size: 8,
            ..SpeakerEncoderConfig::default()
        };
        SpeakerEncoder::new(cfg, 1).unwrap()
    }

    #[test]
    fn empty_manifest_gives_empty_cache() {
        let mel = MelExtractor::new(MelConfig::default()).unwrap();
        let r = embedding_cache_build(&Manifest::default(), &small_encoder(), &mel);
        assert!(r.cache.is_empty() && r.failures.is_empty());
        assert_eq!(r.cache.to_bytes().len(), 16);
    }

    #[test]
    fn build_is_repeatable_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let profiles = [VoiceProfile::preset(0), VoiceProfile::preset(1)];
        let mut m = write_synthetic_corpus(dir.path(), &profiles, 2, 0.2, 3).unwrap();
        let mut entries = m.entries().to_vec();
        entries.push(crate::data::ManifestEntry {
            utterance_id: "gone".into(),
            path: dir.path().join("gone.wav"),
            singer_id: "x".into(),
            transcript: None,
        });
        m = Manifest::new(entries).unwrap();
        let mel = MelExtractor::new(MelConfig::default()).unwrap();
        let enc = small_encoder();
        let a = embedding_cache_build(&m, &enc, &mel);
        let b = embedding_cache_build(&m, &enc, &mel);
        assert_eq!(a.cache.len(), 4);
        assert_eq!(a.failures.len(), 1);
        assert_eq!(a.cache.to_bytes(), b.cache.to_bytes());

        let path = dir.path().join("emb.bin");
        a.cache.save(&path).unwrap();
        let back = EmbeddingCache::load(&path).unwrap();
        assert_eq!(back, a.cache);
        let e = back.get("voice1_01").unwrap();
        let norm = e.vector().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        match back.get("nope") {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let mut c = EmbeddingCache::default();
        c.insert("a", &SingerEmbedding::new(vec![1.0; 256], None).unwrap());
        let b = c.to_bytes();
        assert!(EmbeddingCache::from_bytes(&b[..b.len() - 2]).is_err());
        assert!(EmbeddingCache::from_bytes(&[b.as_slice(), &[0]].concat()).is_err());
        assert!(EmbeddingCache::from_bytes(b"NOTMAGIC\x01\0\0\0\0\0\0\0").is_err());
    }
}

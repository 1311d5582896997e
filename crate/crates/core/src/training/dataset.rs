use rand::Rng;

use crate::autograd::Tensor;
use crate::data::{load_wav, Manifest};
use crate::dsp::{AudioSignal, MelExtractor, MelSpectrogram};
use crate::model::gaussian_noise;
use crate::speaker_encoder::{EmbeddingCache, EMBEDDING_DIM};
use crate::{Error, Result};

/// One training utterance with its features.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub singer: String,
    pub audio: Vec<f64>,
    pub mel: MelSpectrogram,
    pub embedding: Option<Vec<f64>>,
}

/// In-memory corpus that cuts aligned waveform/mel excerpts.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    items: Vec<Utterance>,
    segment_length: usize,
    hop: usize,
}

/// A batch of aligned excerpts.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `[B, segment]`
    pub audio: Tensor,
    /// `[B, segment/hop, n_mels]`
    pub mel: Tensor,
    /// `[B, 1, noise_len]`
    pub noise: Tensor,
    /// `[B, 256]` when every utterance has an embedding.
    pub embeddings: Option<Tensor>,
}

impl Dataset {
    /// Audio shorter than one segment is zero-padded before the mel is
    /// computed, so every utterance yields at least one excerpt.
    pub fn from_signals(
        signals: impl IntoIterator<Item = (String, String, AudioSignal)>,
        mel: &MelExtractor,
        segment_length: usize,
        cache: Option<&EmbeddingCache>,
    ) -> Result<Self> {
        let hop = mel.config().hop_size;
        if segment_length == 0 || segment_length % hop != 0 {
            return Err(Error::Config(format!(
                "segment_length {segment_length} must be a positive multiple of the hop {hop}"
            )));
        }
        let mut items = Vec::new();
        for (id, singer, signal) in signals {
            let mut audio = signal.into_samples();
            if audio.len() < segment_length {
                audio.resize(segment_length, 0.0);
            }
            let m = mel.compute_samples(&audio)?;
            let embedding = match cache {
                Some(c) => c.get(&id).ok().map(|e| e.vector().to_vec()),
                None => None,
            };
            items.push(Utterance {
                id,
                singer,
                audio,
                mel: m,
                embedding,
            });
        }
        if items.is_empty() {
            return Err(Error::InvalidInput("training corpus is empty".into()));
        }
        Ok(Self {
            items,
            segment_length,
            hop,
        })
    }

    pub fn from_manifest(
        manifest: &Manifest,
        mel: &MelExtractor,
        segment_length: usize,
        cache: Option<&EmbeddingCache>,
    ) -> Result<Self> {
        let signals = manifest
            .entries()
            .iter()
            .map(|e| Ok((e.utterance_id.clone(), e.singer_id.clone(), load_wav(&e.path)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_signals(signals, mel, segment_length, cache)
    }

    pub fn items(&self) -> &[Utterance] {
        &self.items
    }

    pub fn segment_length(&self) -> usize {
        self.segment_length
    }

    /// Draw `batch` random excerpts plus generator noise of `noise_len`.
    pub fn sample<R: Rng>(&self, rng: &mut R, batch: usize, noise_len: usize) -> Batch {
        let frames = self.segment_length / self.hop;
        let n_mels = self.items[0].mel.n_mels;
        let mut ids = Vec::with_capacity(batch);
        let mut audio = Vec::with_capacity(batch * self.segment_length);
        let mut mel = Vec::with_capacity(batch * frames * n_mels);
        let mut emb = Some(Vec::with_capacity(batch * EMBEDDING_DIM));
        for _ in 0..batch {
            let u = &self.items[rng.random_range(0..self.items.len())];
            let last = (u.audio.len() - self.segment_length) / self.hop;
            let start = rng.random_range(0..=last);
            audio.extend_from_slice(&u.audio[start * self.hop..start * self.hop + self.segment_length]);
            mel.extend_from_slice(&u.mel.values[start * n_mels..(start + frames) * n_mels]);
            match (&mut emb, &u.embedding) {
                (Some(acc), Some(e)) => acc.extend_from_slice(e),
                _ => emb = None,
            }
            ids.push(u.id.clone());
        }
        let noise = gaussian_noise(rng, batch, noise_len);
        Batch {
            ids,
            audio: Tensor::new(vec![batch, self.segment_length], audio),
            mel: Tensor::new(vec![batch, frames, n_mels], mel),
            noise,
            embeddings: emb.map(|e| Tensor::new(vec![batch, EMBEDDING_DIM], e)),
        }
    }
}

impl Batch {
    /// Embeddings, or an error naming the first utterance without one.
    pub fn require_embeddings(&self, data: &Dataset) -> Result<&Tensor> {
        self.embeddings.as_ref().ok_or_else(|| {
            let missing = self
                .ids
                .iter()
                .find(|id| data.items.iter().any(|u| &u.id == *id && u.embedding.is_none()))
                .cloned()
                .unwrap_or_default();
            Error::MissingEmbedding(missing)
        })
    }
}

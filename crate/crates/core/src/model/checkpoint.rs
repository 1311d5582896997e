use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::autograd::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MSCK";
const VERSION: u32 = 1;

/// Named tensors plus free-form JSON metadata, stored losslessly.
///
/// Layout: magic `MSCK`, `u32` version, `u64` header length, a JSON header
/// listing metadata and tensor names/shapes, then each tensor's values as
/// little-endian `f64` in header order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: ParamSet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: ParamSet::new(),
        }
    }

    /// Store every tensor of `set` under `group/`.
    pub fn insert_group(&mut self, group: &str, set: &ParamSet) {
        for (k, t) in set.iter() {
            self.tensors.insert(format!("{group}/{k}"), t.clone());
        }
    }

    /// Tensors stored under `group/`, with the prefix removed.
    pub fn group(&self, group: &str) -> ParamSet {
        let prefix = format!("{group}/");
        let mut out = ParamSet::new();
        for (k, t) in self.tensors.iter() {
            if let Some(rest) = k.strip_prefix(&prefix) {
                out.insert(rest, t.clone());
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| Entry {
                    name: k.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.tensors.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.tensors.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("checkpoint", d.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut data = &body[hlen..];
        let mut tensors = ParamSet::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if data.len() < 8 * n {
                return Err(bad(&format!("tensor `{}` truncated", e.name)));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[8 * n..];
            tensors.insert(e.name, Tensor::new(e.shape, values));
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_lossless(values in prop::collection::vec(any::<f64>(), 1..40), step in any::<u64>()) {
            let mut set = ParamSet::new();
            set.insert("a.weight", Tensor::new(vec![values.len()], values.clone()));
            set.insert("b", Tensor::new(vec![1, 1], vec![values[0]]));
            let mut ck = Checkpoint::new(serde_json::json!({ "step": step }));
            ck.insert_group("g", &set);
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back.meta["step"].as_u64(), Some(step));
            let g = back.group("g");
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(g.get("a.weight").unwrap()), bits(set.get("a.weight").unwrap()));
            prop_assert_eq!(g.get("b").unwrap().shape(), &[1, 1]);
        }
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut ck = Checkpoint::new(serde_json::json!({}));
        ck.tensors.insert("x", Tensor::new(vec![2], vec![1.0, 2.0]));
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut ck = Checkpoint::new(serde_json::json!({ "k": "v" }));
        ck.tensors.insert("t", Tensor::new(vec![3], vec![0.1, -0.0, f64::MIN_POSITIVE]));
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(Checkpoint::load(&dir.path().join("missing")).is_err());
    }
}

//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes  "DENCKPT\0"
//! version   u32 LE
//! json_len  u64 LE
//! manifest  json_len bytes of UTF-8 JSON
//! blob      little-endian f64 values
//! ```
//!
//! The manifest lists every tensor as `{name, group, shape, offset}` where
//! `offset` is the byte offset into the blob, plus a free-form `meta` value.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{AutodiffError, Matrix, ParamGroup, ParamStore};

pub const MAGIC: &[u8; 8] = b"DENCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: [usize; 2],
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    pub blob_len: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

pub fn encode_checkpoint(store: &ParamStore, meta: serde_json::Value) -> Vec<u8> {
    let mut tensors = Vec::with_capacity(store.len());
    let mut blob = Vec::with_capacity(store.num_scalars() * 8);
    for (_, p) in store.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            group: p.group,
            shape: [p.value.rows(), p.value.cols()],
            offset: blob.len() as u64,
        });
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        tensors,
        blob_len: blob.len() as u64,
        meta,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(20 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParamStore, Manifest), AutodiffError> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json_end = 20usize
        .checked_add(json_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[20..json_end])
        .map_err(|e| bad(format!("manifest: {e}")))?;
    let blob = &bytes[json_end..];
    if blob.len() as u64 != manifest.blob_len {
        return Err(bad(format!(
            "blob is {} bytes, manifest says {}",
            blob.len(),
            manifest.blob_len
        )));
    }
    let mut store = ParamStore::new();
    for t in &manifest.tensors {
        let n = t.shape[0] * t.shape[1];
        let start = t.offset as usize;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(bad(format!("tensor {} runs past the blob", t.name)));
        }
        let data = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Matrix::from_vec(t.shape[0], t.shape[1], data)?;
        store.insert(t.name.clone(), t.group, value)?;
    }
    Ok((store, manifest))
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    meta: serde_json::Value,
) -> Result<(), AutodiffError> {
    std::fs::write(path, encode_checkpoint(store, meta))
        .map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Manifest), AutodiffError> {
    let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_values_bitwise() {
        let mut store = ParamStore::new();
        store
            .insert(
                "a",
                ParamGroup::Other,
                Matrix::from_rows(&[vec![1.0, -0.0], vec![f64::MIN_POSITIVE, 3.5]]),
            )
            .unwrap();
        store
            .insert("enc.b", ParamGroup::Encoder, Matrix::row_vector(&[0.1; 3]))
            .unwrap();
        let bytes = encode_checkpoint(&store, serde_json::json!({"seed": 1}));
        let (back, manifest) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(manifest.tensors[1].offset, 32);
        assert_eq!(manifest.meta["seed"], 1);
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.group, b.group);
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(encode_checkpoint(&back, manifest.meta.clone()), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let mut store = ParamStore::new();
        store
            .insert("a", ParamGroup::Other, Matrix::zeros(2, 2))
            .unwrap();
        let mut bytes = encode_checkpoint(&store, serde_json::Value::Null);
        bytes.pop();
        assert!(decode_checkpoint(&bytes).is_err());
        assert!(decode_checkpoint(b"not a checkpoint at all").is_err());
    }
}

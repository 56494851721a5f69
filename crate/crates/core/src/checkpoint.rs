//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! | offset     | size | content                                          |
//! |------------|------|--------------------------------------------------|
//! | 0          | 8    | magic `ADRVCKPT`                                 |
//! | 8          | 4    | format version, `u32` (currently 1)              |
//! | 12         | 8    | manifest length `L` in bytes, `u64`              |
//! | 20         | L    | UTF-8 JSON manifest                              |
//! | 20 + L     | ...  | tensor payloads, `f64` LE, in manifest order     |
//!
//! The manifest is `{"config": <model config>, "tensors": [{"name", "shape"}]}`.
//! Each payload holds `product(shape)` values in row-major order and the file
//! ends right after the last payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ADRVCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn encode(config: &serde_json::Value, params: &ParamSet) -> Result<Vec<u8>> {
    let manifest = Manifest {
        config: config.clone(),
        tensors: params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(20 + json.len() + params.count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(serde_json::Value, ParamSet)> {
    let schema = |msg: &str| Error::Schema(format!("checkpoint: {msg}"));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(schema("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(schema(&format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + len).ok_or_else(|| schema("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body)?;
    let mut offset = 20 + len;
    let mut params = ParamSet::new();
    for entry in manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 8 * n)
            .ok_or_else(|| schema("truncated payload"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(&entry.name, Tensor::new(entry.shape, data)?);
        offset += 8 * n;
    }
    if offset != bytes.len() {
        return Err(schema("trailing bytes"));
    }
    Ok((manifest.config, params))
}

pub fn save(path: &Path, config: &serde_json::Value, params: &ParamSet) -> Result<()> {
    fs::write(path, encode(config, params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(serde_json::Value, ParamSet)> {
    decode(&fs::read(path)?)
}

/// Hex SHA-256 of a byte buffer.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_lossless(values in prop::collection::vec(-1e6f64..1e6, 1..40), split in 0usize..40) {
            let split = split.min(values.len());
            let mut params = ParamSet::new();
            params.insert("a", Tensor::vector(values[..split].to_vec()));
            params.insert("b.weight", Tensor::vector(values[split..].to_vec()));
            let cfg = serde_json::json!({"n_states": 3});
            let bytes = encode(&cfg, &params).unwrap();
            let (cfg2, params2) = decode(&bytes).unwrap();
            prop_assert_eq!(cfg2, cfg);
            prop_assert_eq!(params2, params);
        }
    }

    #[test]
    fn header_is_stable() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![1.0]));
        let bytes = encode(&serde_json::json!({}), &params).unwrap();
        assert_eq!(&bytes[..8], b"ADRVCKPT");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[bytes.len() - 8..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_schema_errors() {
        assert!(matches!(decode(b"not a checkpoint at all"), Err(Error::Schema(_))));
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode(&serde_json::json!({}), &params).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Schema(_))));
    }
}

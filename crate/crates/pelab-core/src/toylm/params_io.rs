//! Binary model-parameter files.
//!
//! Layout (all integers little-endian):
//!   magic `PELM` | version u32 | tensor count u32
//!   per tensor: name_len u32 | name bytes | rank u32 | dims u32... | f32 data
//!   trailer: FNV-1a 64 checksum u64 over everything before it
//!
//! Values are stored as 32-bit floats; loading widens back to f64, so a
//! round trip equals `ModelParams::quantize_to_storage`.

use std::path::Path;

use crate::numerics::Tensor;

use super::model::ModelParams;
use super::ToylmError;

const MAGIC: &[u8; 4] = b"PELM";
const VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<(), ToylmError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for (name, tensor) in &params.tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf.extend_from_slice(&fnv1a64(&buf).to_le_bytes());
    std::fs::write(path, buf)
        .map_err(|e| ToylmError::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_params(path: &Path) -> Result<ModelParams, ToylmError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ToylmError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let corrupt = |what: &str| ToylmError::Corrupt {
        path: path.to_path_buf(),
        what: what.to_string(),
    };

    if bytes.len() < MAGIC.len() + 8 + 8 {
        return Err(corrupt("file shorter than header and checksum"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    if fnv1a64(body) != stored {
        return Err(corrupt("checksum mismatch (truncated or corrupted file)"));
    }

    let mut cur = 0usize;
    let mut take = |n: usize| -> Result<&[u8], ToylmError> {
        if cur + n > body.len() {
            return Err(ToylmError::Corrupt {
                path: path.to_path_buf(),
                what: "unexpected end of data".to_string(),
            });
        }
        let s = &body[cur..cur + n];
        cur += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let rank = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(numel * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| corrupt(&format!("tensor {name}: {e}")))?;
        tensors.push((name, tensor));
    }
    if cur != body.len() {
        return Err(corrupt("trailing bytes after the last tensor"));
    }
    Ok(ModelParams { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::EncodingConfig;
    use crate::toylm::model::{build_model, ModelConfig};

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            layers: 1,
            n_heads: 2,
            head_dim: 4,
            ffn_dim: 8,
            vocab_size: 16,
            train_len: 16,
            tied_embeddings: false,
            encoder: EncodingConfig::hope(4),
        };
        build_model(&cfg, 9).unwrap()
    }

    #[test]
    fn round_trip_equals_storage_quantization() {
        let p = params();
        let dir = std::env::temp_dir().join("pelab_params_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.pelm");
        save_params(&p, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back, p.quantize_to_storage());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = params();
        let dir = std::env::temp_dir().join("pelab_params_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.pelm");
        save_params(&p, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_params(&path), Err(ToylmError::Corrupt { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn flipped_byte_fails_the_checksum() {
        let p = params();
        let dir = std::env::temp_dir().join("pelab_params_flip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.pelm");
        save_params(&p, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        let err = load_params(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}

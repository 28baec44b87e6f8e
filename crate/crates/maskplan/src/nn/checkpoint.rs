//! Checkpoint format shared by every trainable network in the crate.
//!
//! A checkpoint is a directory holding two files:
//! - `header.json`: an architecture fingerprint, the ordered tensor table
//!   (name, shape, byte offset), and an `extra` JSON blob for
//!   network-specific configuration;
//! - `weights.bin`: every tensor's values as raw little-endian `f32`,
//!   concatenated in header order.
//!
//! Loading verifies the fingerprint, the ordered tensor table against the
//! receiving network, and the exact byte length of the weight file before a
//! single value is copied.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PTensor, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub fingerprint: String,
    pub tensors: Vec<TensorMeta>,
    pub extra: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("checkpoint header error at {path}: {message}")]
    Header { path: String, message: String },
    #[error("checkpoint fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },
    #[error("checkpoint tensor {index} mismatch: expected {expected}, found {found}")]
    TensorMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("checkpoint weights length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: u64, found: u64 },
}

fn io_err(path: &Path, source: io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn describe(name: &str, shape: &[usize]) -> String {
    format!("{name} {shape:?}")
}

/// Write `tensors` to `dir` in order. Values are stored as `f32` regardless
/// of the in-memory scalar type.
pub fn save_checkpoint<S: Scalar>(
    dir: &Path,
    fingerprint: &str,
    tensors: &[&PTensor<S>],
    extra: serde_json::Value,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut metas = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    let mut blob: Vec<u8> = Vec::new();
    for t in tensors {
        metas.push(TensorMeta {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        for &v in &t.data {
            blob.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
        offset += 4 * t.numel() as u64;
    }
    let header = CheckpointHeader {
        fingerprint: fingerprint.to_string(),
        tensors: metas,
        extra,
    };
    let header_path = dir.join("header.json");
    let mut text = serde_json::to_string_pretty(&header).map_err(|e| CheckpointError::Header {
        path: header_path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| io_err(&header_path, e))?;
    let weights_path = dir.join("weights.bin");
    fs::write(&weights_path, blob).map_err(|e| io_err(&weights_path, e))?;
    Ok(())
}

/// Parse `header.json` from a checkpoint directory without touching weights.
pub fn read_header(dir: &Path) -> Result<CheckpointHeader, CheckpointError> {
    let path = dir.join("header.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::Header {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Load a checkpoint into `tensors`, which must list the receiving network's
/// parameters in the same order they were saved. Returns the `extra` blob.
pub fn load_checkpoint<S: Scalar>(
    dir: &Path,
    fingerprint: &str,
    tensors: &mut [&mut PTensor<S>],
) -> Result<serde_json::Value, CheckpointError> {
    let header = read_header(dir)?;
    if header.fingerprint != fingerprint {
        return Err(CheckpointError::Fingerprint {
            expected: fingerprint.to_string(),
            found: header.fingerprint,
        });
    }
    if header.tensors.len() != tensors.len() {
        return Err(CheckpointError::TensorMismatch {
            index: header.tensors.len().min(tensors.len()),
            expected: format!("{} tensors", tensors.len()),
            found: format!("{} tensors", header.tensors.len()),
        });
    }
    let mut offset = 0u64;
    for (i, (meta, t)) in header.tensors.iter().zip(tensors.iter()).enumerate() {
        if meta.name != t.name || meta.shape != t.shape || meta.offset != offset {
            return Err(CheckpointError::TensorMismatch {
                index: i,
                expected: format!("{} at offset {offset}", describe(&t.name, &t.shape)),
                found: format!(
                    "{} at offset {}",
                    describe(&meta.name, &meta.shape),
                    meta.offset
                ),
            });
        }
        offset += 4 * t.numel() as u64;
    }
    let weights_path = dir.join("weights.bin");
    let blob = fs::read(&weights_path).map_err(|e| io_err(&weights_path, e))?;
    if blob.len() as u64 != offset {
        return Err(CheckpointError::Length {
            expected: offset,
            found: blob.len() as u64,
        });
    }
    let mut cursor = 0usize;
    for t in tensors.iter_mut() {
        for v in t.data.iter_mut() {
            let bytes: [u8; 4] = blob[cursor..cursor + 4].try_into().unwrap();
            *v = S::from_f64(f32::from_le_bytes(bytes) as f64);
            cursor += 4;
        }
    }
    Ok(header.extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn sample_tensors() -> (PTensor<f32>, PTensor<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = PTensor::he("conv/w", &[2, 1, 3, 3], 9, &mut rng);
        let b = PTensor::he("conv/b", &[2], 2, &mut rng);
        (w, b)
    }

    #[test]
    fn round_trips_values_and_extra() {
        let dir = tempfile::tempdir().unwrap();
        let (w, b) = sample_tensors();
        let extra = json!({"schedule": {"t": 100}, "note": "x"});
        save_checkpoint(dir.path(), "net-v1", &[&w, &b], extra.clone()).unwrap();

        let (mut w2, mut b2) = sample_tensors();
        w2.data.fill(0.0);
        b2.data.fill(0.0);
        let got = load_checkpoint(dir.path(), "net-v1", &mut [&mut w2, &mut b2]).unwrap();
        assert_eq!(got, extra);
        assert_eq!(w2.data, w.data);
        assert_eq!(b2.data, b.data);

        let header = read_header(dir.path()).unwrap();
        assert_eq!(header.tensors[0].name, "conv/w");
        assert_eq!(header.tensors[0].offset, 0);
        assert_eq!(header.tensors[1].offset, 4 * 18);
    }

    #[test]
    fn rejects_wrong_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let (w, b) = sample_tensors();
        save_checkpoint(dir.path(), "net-v1", &[&w, &b], json!({})).unwrap();
        let (mut w2, mut b2) = sample_tensors();
        let err = load_checkpoint(dir.path(), "net-v2", &mut [&mut w2, &mut b2]).unwrap_err();
        assert!(matches!(err, CheckpointError::Fingerprint { .. }), "{err}");
    }

    #[test]
    fn rejects_mismatched_shape() {
        let dir = tempfile::tempdir().unwrap();
        let (w, b) = sample_tensors();
        save_checkpoint(dir.path(), "net-v1", &[&w, &b], json!({})).unwrap();
        let mut w2: PTensor<f32> = PTensor::zeros("conv/w", &[2, 1, 3, 3]);
        let mut wrong: PTensor<f32> = PTensor::zeros("conv/b", &[3]);
        let err = load_checkpoint(dir.path(), "net-v1", &mut [&mut w2, &mut wrong]).unwrap_err();
        assert!(matches!(err, CheckpointError::TensorMismatch { index: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_truncated_weights() {
        let dir = tempfile::tempdir().unwrap();
        let (w, b) = sample_tensors();
        save_checkpoint(dir.path(), "net-v1", &[&w, &b], json!({})).unwrap();
        let weights = dir.path().join("weights.bin");
        let blob = std::fs::read(&weights).unwrap();
        std::fs::write(&weights, &blob[..blob.len() - 4]).unwrap();
        let (mut w2, mut b2) = sample_tensors();
        let err = load_checkpoint(dir.path(), "net-v1", &mut [&mut w2, &mut b2]).unwrap_err();
        assert!(matches!(err, CheckpointError::Length { .. }), "{err}");
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        let (w, b) = sample_tensors();
        let extra = json!({"k": 1});
        save_checkpoint(da.path(), "net-v1", &[&w, &b], extra.clone()).unwrap();
        save_checkpoint(db.path(), "net-v1", &[&w, &b], extra).unwrap();
        for f in ["header.json", "weights.bin"] {
            let a = std::fs::read(da.path().join(f)).unwrap();
            let bb = std::fs::read(db.path().join(f)).unwrap();
            assert_eq!(a, bb, "{f} differs");
        }
    }

    #[test]
    fn f64_net_round_trips_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let mut w: PTensor<f64> = PTensor::zeros("w", &[3]);
        w.data = vec![0.1, -2.5, 1.0 / 3.0];
        save_checkpoint(dir.path(), "n", &[&w], json!({})).unwrap();
        let mut w2: PTensor<f64> = PTensor::zeros("w", &[3]);
        load_checkpoint(dir.path(), "n", &mut [&mut w2]).unwrap();
        for (a, b) in w.data.iter().zip(&w2.data) {
            assert!((a - b).abs() < 1e-7);
            assert_eq!(*b, (*a as f32) as f64);
        }
    }
}

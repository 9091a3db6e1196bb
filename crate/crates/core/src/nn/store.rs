//! Flat binary weight container.
//!
//! ```text
//! magic   8 bytes  "PLTWGHT\0"
//! version u32 LE
//! count   u32 LE   number of tensors
//! per tensor:
//!   name_len u32 LE, name (UTF-8)
//!   ndim u32 LE, dims u64 LE × ndim
//!   dtype u8 (0 = f64)
//! payload: every tensor's values, f64 LE, in manifest order
//! ```
//!
//! Hyperparameters and seed travel in a JSON sidecar next to the container.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};

use super::NnError;

pub const MAGIC: &[u8; 8] = b"PLTWGHT\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        Self { name: name.into(), shape, values }
    }
}

pub fn encode_weights(tensors: &[NamedTensor]) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "tensor `{}`: shape {:?} vs {} values",
                t.name,
                t.shape,
                t.values.len()
            )));
        }
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        out.push(DTYPE_F64);
    }
    for t in tensors {
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            NnError::Format(format!("truncated container at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(buf: &[u8]) -> Result<Vec<NamedTensor>, NnError> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut manifest = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| NnError::Format(e.to_string()))?
            .to_owned();
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let dtype = cur.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(NnError::Format(format!("tensor `{name}`: unsupported dtype {dtype}")));
        }
        manifest.push((name, shape));
    }
    let mut out = Vec::with_capacity(manifest.len());
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let bytes = cur.take(n.checked_mul(8).ok_or_else(|| NnError::Format("overflow".into()))?)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, shape, values });
    }
    if cur.pos != buf.len() {
        return Err(NnError::Format("trailing bytes after payload".into()));
    }
    Ok(out)
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut p = weights.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes `path` plus its JSON sidecar.
pub fn save_weights<M: Serialize>(
    path: &Path,
    tensors: &[NamedTensor],
    metadata: &M,
) -> Result<(), NnError> {
    let bytes = encode_weights(tensors)?;
    let io = |e: std::io::Error| NnError::Io(format!("{}: {e}", path.display()));
    std::fs::File::create(path).and_then(|mut f| f.write_all(&bytes)).map_err(io)?;
    let json = serde_json::to_string_pretty(metadata).map_err(|e| NnError::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n").map_err(io)?;
    Ok(())
}

pub fn load_weights<M: DeserializeOwned>(path: &Path) -> Result<(Vec<NamedTensor>, M), NnError> {
    let io = |e: std::io::Error, p: &Path| NnError::Io(format!("{}: {e}", p.display()));
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io(e, path))?;
    let tensors = decode_weights(&bytes)?;
    let side = sidecar_path(path);
    let json = std::fs::read_to_string(&side).map_err(|e| io(e, &side))?;
    let meta = serde_json::from_str(&json).map_err(|e| NnError::Format(e.to_string()))?;
    Ok((tensors, meta))
}

/// SHA-256 over names, shapes and the exact bit patterns of every value.
pub fn checksum<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut h = Sha256::new();
    for (name, values) in tensors {
        h.update(name.as_bytes());
        h.update((values.len() as u64).to_le_bytes());
        for v in values {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn container_round_trips(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
            name in "[a-z_.0-9]{1,12}",
        ) {
            let n = values.len();
            let tensors = vec![
                NamedTensor::new(name, vec![1, n], values),
                NamedTensor::new("bias", vec![2], vec![0.5, -0.25]),
            ];
            let bytes = encode_weights(&tensors).unwrap();
            prop_assert_eq!(decode_weights(&bytes).unwrap(), tensors);
        }
    }

    #[test]
    fn corrupt_containers_rejected() {
        let t = vec![NamedTensor::new("w", vec![2], vec![1.0, 2.0])];
        let bytes = encode_weights(&t).unwrap();
        assert!(decode_weights(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_weights(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_weights(&long).is_err());
    }

    #[test]
    fn checksum_sees_single_bit_changes() {
        let a = [1.0, 2.0];
        let b = [1.0, f64::from_bits(2.0f64.to_bits() + 1)];
        assert_ne!(checksum([("w", &a[..])]), checksum([("w", &b[..])]));
        assert_eq!(checksum([("w", &a[..])]), checksum([("w", &a[..])]));
    }
}

//! Binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"QGNT"
//! u32    format version
//! u64    tensor count
//! per tensor:
//!   u32      name length, then UTF-8 name bytes
//!   u8       dtype (1 = f32, 2 = f64)
//!   u32      ndim, then u64 dims
//!   f32/f64  row-major values
//! ```
//!
//! Values round-trip bit-exactly at the stored precision: f64 entries are
//! written verbatim; f32 entries narrow on write and widen on read, so a
//! re-save reproduces the same bytes.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::Tensor;

pub const TENSOR_STORE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"QGNT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, StoreError> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(StoreError::Corrupt(format!("unknown dtype tag {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub dtype: Dtype,
    pub tensor: Tensor,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a tensor store (bad magic)")]
    BadMagic,
    #[error("unsupported tensor store version {0} (expected {TENSOR_STORE_VERSION})")]
    Version(u32),
    #[error("corrupt tensor store: {0}")]
    Corrupt(String),
}

pub fn write_tensors<W: Write>(w: &mut W, tensors: &[NamedTensor]) -> Result<(), StoreError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(TENSOR_STORE_VERSION)?;
    w.write_u64::<LittleEndian>(tensors.len() as u64)?;
    for t in tensors {
        w.write_u32::<LittleEndian>(t.name.len() as u32)?;
        w.write_all(t.name.as_bytes())?;
        w.write_u8(t.dtype.tag())?;
        w.write_u32::<LittleEndian>(t.tensor.shape.len() as u32)?;
        for &d in &t.tensor.shape {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        match t.dtype {
            Dtype::F32 => {
                for &v in &t.tensor.values {
                    w.write_f32::<LittleEndian>(v as f32)?;
                }
            }
            Dtype::F64 => {
                for &v in &t.tensor.values {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>, StoreError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != TENSOR_STORE_VERSION {
        return Err(StoreError::Version(version));
    }
    let count = r.read_u64::<LittleEndian>()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| StoreError::Corrupt(format!("tensor name not UTF-8: {e}")))?;
        let dtype = Dtype::from_tag(r.read_u8()?)?;
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        match dtype {
            Dtype::F32 => {
                for _ in 0..numel {
                    values.push(r.read_f32::<LittleEndian>()? as f64);
                }
            }
            Dtype::F64 => {
                for _ in 0..numel {
                    values.push(r.read_f64::<LittleEndian>()?);
                }
            }
        }
        out.push(NamedTensor { name, dtype, tensor: Tensor::new(shape, values) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let tensors = vec![
            NamedTensor {
                name: "encoder.w".into(),
                dtype: Dtype::F64,
                tensor: Tensor::new(vec![2, 3], vec![1.5, -2.25, 1e-300, 0.1 + 0.2, 7.0, -0.0]),
            },
            NamedTensor {
                name: "bias".into(),
                dtype: Dtype::F32,
                tensor: Tensor::new(vec![1, 2], vec![0.5f32 as f64, (-3.75f32) as f64]),
            },
        ];
        let mut buf = Vec::new();
        write_tensors(&mut buf, &tensors).unwrap();
        let back = read_tensors(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in tensors.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor.shape, b.tensor.shape);
            for (x, y) in a.tensor.values.iter().zip(&b.tensor.values) {
                assert_eq!(x.to_bits(), y.to_bits(), "values must round-trip bit-exactly");
            }
        }
        // a second save of the read-back data reproduces the same bytes
        let mut buf2 = Vec::new();
        write_tensors(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn f32_storage_narrows_once() {
        let t = NamedTensor {
            name: "w".into(),
            dtype: Dtype::F32,
            tensor: Tensor::new(vec![1, 1], vec![std::f64::consts::PI]),
        };
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[t]).unwrap();
        let back = read_tensors(&mut buf.as_slice()).unwrap();
        assert_eq!(back[0].tensor.values[0], std::f64::consts::PI as f32 as f64);
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read_tensors(&mut &b"NOPE00000000"[..]).unwrap_err();
        assert!(matches!(err, StoreError::BadMagic));
    }
}

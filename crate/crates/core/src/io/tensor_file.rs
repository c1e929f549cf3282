//! Binary tensor files: `DILOTNSR`, version byte, dtype byte (1 = f32,
//! 2 = f64), ndim byte, `ndim` little-endian u64 dims, then the row-major
//! little-endian payload.

use std::path::Path;

use super::write_atomic;
use crate::error::{Error, FormatError, Result};
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 8] = b"DILOTNSR";
pub const VERSION: u8 = 1;

fn dtype_tag(d: DType) -> u8 {
    match d {
        DType::F32 => 1,
        DType::F64 => 2,
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(t.ndim()).map_err(|_| Error::invalid(format!("rank {} exceeds 255", t.ndim())))?;
    let mut out = Vec::with_capacity(11 + 8 * t.ndim() + t.len() * t.dtype().size_of());
    out.extend_from_slice(MAGIC);
    out.extend([VERSION, dtype_tag(t.dtype()), ndim]);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match t.dtype() {
        DType::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

fn need(bytes: &[u8], expected: usize) -> std::result::Result<(), FormatError> {
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    decode(bytes).map_err(Error::Format)
}

fn decode(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    need(bytes, 11)?;
    if &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes[8] != VERSION {
        return Err(FormatError::BadVersion(bytes[8]));
    }
    let dtype = match bytes[9] {
        1 => DType::F32,
        2 => DType::F64,
        other => return Err(FormatError::BadDtype(other)),
    };
    let ndim = bytes[10] as usize;
    let header = 11 + 8 * ndim;
    need(bytes, header)?;
    let shape: Vec<usize> = bytes[11..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(FormatError::Truncated {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    let width = dtype.size_of();
    let total = count
        .checked_mul(width)
        .and_then(|p| p.checked_add(header))
        .ok_or(FormatError::Truncated {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(FormatError::TrailingBytes(bytes.len() - total));
    }
    let payload = &bytes[header..total];
    let data: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(Tensor::new(shape, data).expect("length checked").to_dtype(dtype))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new([2, 3], vec![1.0; 6]).unwrap();
        let b = encode_tensor(&t).unwrap();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(&b[8..11], &[1, 2, 2]);
        assert_eq!(u64::from_le_bytes(b[11..19].try_into().unwrap()), 2);
        assert_eq!(b.len(), 11 + 16 + 48);
    }

    #[test]
    fn distinct_error_kinds() {
        let t = Tensor::from_vec(vec![0.5, -2.0]);
        let good = encode_tensor(&t).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad), Err(Error::Format(FormatError::BadMagic))));
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(decode_tensor(&bad), Err(Error::Format(FormatError::BadVersion(9)))));
        let mut bad = good.clone();
        bad[9] = 7;
        assert!(matches!(decode_tensor(&bad), Err(Error::Format(FormatError::BadDtype(7)))));
        assert!(matches!(
            decode_tensor(&good[..good.len() - 3]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_tensor(&long), Err(Error::Format(FormatError::TrailingBytes(1)))));
    }

    #[test]
    fn scalar_has_no_dims() {
        let t = Tensor::scalar(3.25);
        let b = encode_tensor(&t).unwrap();
        assert_eq!(b.len(), 11 + 8);
        assert_eq!(decode_tensor(&b).unwrap(), t);
    }
}

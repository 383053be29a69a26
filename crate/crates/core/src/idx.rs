//! IDX container reader (the MNIST distribution format).
//!
//! Layout: two zero bytes, a type byte (0x08 = unsigned byte), the number
//! of dimensions, one big-endian `u32` per dimension, then the raw data.
//! Gzip-compressed files are detected by their `1f 8b` magic and inflated
//! first; byte offsets in errors then refer to the inflated stream.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses an unsigned-byte IDX array whose magic must equal `magic`.
pub fn parse(bytes: &[u8], magic: u32, path: &Path) -> Result<IdxArray> {
    let fail = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    let read_u32 = |offset: usize| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| fail(offset, "truncated header".into()))
    };
    let found = read_u32(0)?;
    if found != magic {
        return Err(fail(
            0,
            format!("magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for k in 0..ndims {
        let d = read_u32(4 + 4 * k)? as usize;
        if d == 0 {
            return Err(fail(4 + 4 * k, format!("dimension {k} is zero")));
        }
        dims.push(d);
    }
    let start = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let available = bytes.len() - start;
    if available < len {
        return Err(fail(
            bytes.len(),
            format!("data truncated: {available} of {len} bytes present"),
        ));
    }
    if available > len {
        return Err(fail(
            start + len,
            format!("{} trailing bytes after data", available - len),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..].to_vec(),
    })
}

/// Serializes an unsigned-byte IDX array (used for fixtures and exports).
pub fn encode(magic: u32, dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

//! IDX containers (the MNIST distribution format): big-endian, `u8` payloads.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels scaled to `[0, 1]`.
    pub images: Vec<DVector<f64>>,
}

fn truncated(offset: usize, need: usize, have: usize) -> Error {
    Error::Idx {
        offset,
        message: format!("truncated: need {need} bytes, file has {have}"),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| truncated(offset, offset + 4, bytes.len()))?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

/// Header dimensions and the payload offset.
fn header(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, usize)> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Idx {
            offset: 0,
            message: format!("magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|k| read_u32(bytes, 4 + 4 * k).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx {
            offset: 4,
            message: "dimension product overflows".into(),
        })?;
    let need = start + payload;
    if bytes.len() < need {
        return Err(truncated(bytes.len(), need, bytes.len()));
    }
    if bytes.len() > need {
        return Err(Error::Idx {
            offset: need,
            message: format!("{} trailing bytes after payload", bytes.len() - need),
        });
    }
    Ok((dims, start))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let (dims, start) = header(bytes, IMAGES_MAGIC)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let size = rows * cols;
    let images = (0..n)
        .map(|i| {
            let px = &bytes[start + i * size..start + (i + 1) * size];
            DVector::from_iterator(size, px.iter().map(|&b| f64::from(b) / 255.0))
        })
        .collect();
    Ok(IdxImages { rows, cols, images })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, start) = header(bytes, LABELS_MAGIC)?;
    Ok(bytes[start..].to_vec())
}

pub fn load_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_images(&std::fs::read(path)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_labels(&std::fs::read(path)?)
}

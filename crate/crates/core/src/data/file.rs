//! Binary dataset files.
//!
//! ```text
//! "FTDS" | n: u32 | dim: u32 | num_classes: u32
//! n * dim f32 inputs (row-major) | n u16 labels
//! ```
//! All fields little-endian.

use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"FTDS";

pub fn encode_dataset(ds: &LabeledDataset) -> Result<Vec<u8>> {
    if ds.num_classes() > u16::MAX as usize + 1 {
        return Err(Error::Config(format!(
            "{} classes do not fit u16 labels",
            ds.num_classes()
        )));
    }
    let mut out = Vec::with_capacity(16 + ds.inputs().len() * 4 + ds.len() * 2);
    out.extend_from_slice(DATASET_MAGIC);
    for v in [ds.len(), ds.dim(), ds.num_classes()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in ds.inputs() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &y in ds.labels() {
        out.extend_from_slice(&(y as u16).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() < 16 || &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Decode("missing FTDS header".into()));
    }
    let word =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n, dim, classes) = (word(0), word(1), word(2));
    let expected = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(16 + 2 * n))
        .ok_or_else(|| Error::Decode("header sizes overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Decode(format!(
            "expected {expected} bytes for n={n} dim={dim}, got {}",
            bytes.len()
        )));
    }
    let body = &bytes[16..];
    let inputs = body[..n * dim * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = body[n * dim * 4..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    LabeledDataset::new(inputs, labels, dim, classes)
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;

    #[test]
    fn layout_is_bit_exact() {
        let ds = LabeledDataset::new(vec![1.0, -2.5], vec![1], 2, 3).unwrap();
        let bytes = encode_dataset(&ds).unwrap();
        let mut expected = b"FTDS".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        expected.extend_from_slice(&[1, 0]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn file_round_trip() {
        let ds = make_blobs(3, 4, 7, 2.0, 0.5, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.ftds");
        write_dataset(&path, &ds).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = make_blobs(2, 2, 2, 1.0, 0.5, 1).unwrap();
        let bytes = encode_dataset(&ds).unwrap();
        assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_dataset(b"FTD").is_err());
    }
}

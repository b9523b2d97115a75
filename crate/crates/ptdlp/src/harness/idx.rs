//! IDX image ingestion (the ubyte format used by the MNIST family):
//! big-endian magic 0x00000803, three big-endian u32 dimensions, then
//! row-major uint8 pixels. Images are flattened, scaled to [0, 1], and
//! binarized at a threshold.

use crate::error::{Error, Result};
use crate::space::{DiscreteSpace, StateVector};
use std::path::Path;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Parses IDX bytes into binary state vectors. A pixel becomes 1 when its
/// [0, 1]-scaled value strictly exceeds the threshold.
pub fn parse_idx_images(bytes: &[u8], binarize_threshold: f64) -> Result<Vec<StateVector>> {
    let need = |expected: usize, found: usize| -> Error { Error::TruncatedIdx { expected, found } };
    if bytes.len() < 16 {
        return Err(need(16, bytes.len()));
    }
    let read_u32 = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
    let magic = read_u32(0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadIdxMagic(magic));
    }
    let count = read_u32(4) as usize;
    let rows = read_u32(8) as usize;
    let cols = read_u32(12) as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::invalid("idx", "zero image dimensions"));
    }
    let expected = 16 + count * dim;
    if bytes.len() < expected {
        return Err(need(expected, bytes.len()));
    }
    let space = DiscreteSpace::binary(dim)?;
    let mut out = Vec::with_capacity(count);
    for img in 0..count {
        let start = 16 + img * dim;
        let values: Vec<u32> = bytes[start..start + dim]
            .iter()
            .map(|&px| u32::from(px as f64 / 255.0 > binarize_threshold))
            .collect();
        out.push(StateVector::new(values, space)?);
    }
    Ok(out)
}

pub fn load_idx_dataset(path: &Path, binarize_threshold: f64) -> Result<Vec<StateVector>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_idx_images(&bytes, binarize_threshold)
}

/// Serializes binary states back to IDX bytes (tests and fixtures).
pub fn write_idx_images(images: &[(usize, usize, Vec<u8>)]) -> Vec<u8> {
    let (rows, cols) = images.first().map(|(r, c, _)| (*r, *c)).unwrap_or((0, 0));
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for (_, _, pixels) in images {
        bytes.extend_from_slice(pixels);
    }
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_constructed_file_parses_exactly() {
        let bytes =
            write_idx_images(&[(2, 2, vec![0, 255, 128, 10]), (2, 2, vec![255, 255, 0, 0])]);
        let images = parse_idx_images(&bytes, 0.5).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].values(), &[0, 1, 1, 0]); // 128/255 ≈ 0.502 > 0.5
        assert_eq!(images[1].values(), &[1, 1, 0, 0]);
    }

    #[test]
    fn threshold_zero_marks_any_nonzero_pixel() {
        let bytes = write_idx_images(&[(1, 3, vec![0, 1, 200])]);
        let images = parse_idx_images(&bytes, 0.0).unwrap();
        assert_eq!(images[0].values(), &[0, 1, 1]);
    }

    #[test]
    fn threshold_one_zeroes_everything() {
        let bytes = write_idx_images(&[(1, 3, vec![255, 254, 1])]);
        let images = parse_idx_images(&bytes, 1.0).unwrap();
        assert_eq!(images[0].values(), &[0, 0, 0]);
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = write_idx_images(&[(1, 1, vec![9])]);
        bytes[3] = 0x01; // labels magic instead of images
        match parse_idx_images(&bytes, 0.5) {
            Err(Error::BadIdxMagic(m)) => assert_eq!(m, 0x0000_0801),
            other => panic!("expected BadIdxMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_reported() {
        let mut bytes = write_idx_images(&[(2, 2, vec![1, 2, 3, 4])]);
        bytes.truncate(18);
        assert!(matches!(
            parse_idx_images(&bytes, 0.5),
            Err(Error::TruncatedIdx { .. })
        ));
    }
}

//! IDX (MNIST) ingestion. Headers are big-endian: magic `0x00000803` with
//! count, rows and columns for images; `0x00000801` with count for labels.

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::codec::ByteReader;
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Pixels become `byte / 255` in row-major vectors. The class count is 10,
/// or one more than the largest label if that is bigger.
pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(images);
    let magic = r.u32_be("image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("image file magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = r.u32_be("image count")? as usize;
    let rows = r.u32_be("image rows")? as usize;
    let cols = r.u32_be("image cols")? as usize;
    let width = rows * cols;
    let pixels = r.take(count * width, "pixels")?;

    let mut l = ByteReader::new(labels);
    let magic = l.u32_be("label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("label file magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let n_labels = l.u32_be("label count")? as usize;
    if n_labels != count {
        return Err(Error::Format {
            offset: 4,
            msg: format!("{count} images but {n_labels} labels"),
        });
    }
    let ys: Vec<usize> = l.take(count, "labels")?.iter().map(|&b| b as usize).collect();
    let n_classes = ys.iter().max().map_or(10, |&m| (m + 1).max(10));
    let features = Array2::from_shape_vec(
        (count, width),
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("sized above");
    Dataset::new(features, ys, n_classes)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    decode_idx(&std::fs::read(images)?, &std::fs::read(labels)?)
}

/// Writes images as an IDX3 blob; `pixels` holds `count · rows · cols` bytes.
pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let mut px = vec![0u8; 2 * 28 * 28];
        px[0] = 255;
        px[784 + 5] = 51;
        let d = decode_idx(&encode_idx_images(&px, 2, 28, 28), &encode_idx_labels(&[3, 9])).unwrap();
        assert_eq!(d.features().dim(), (2, 784));
        assert_eq!(d.features()[[0, 0]], 1.0);
        assert_eq!(d.features()[[0, 1]], 0.0);
        assert_eq!(d.features()[[1, 5]], 0.2);
        assert_eq!(d.n_classes(), 10);
    }

    #[test]
    fn count_mismatch_and_magic() {
        let px = vec![0u8; 3 * 4];
        let img = encode_idx_images(&px, 3, 2, 2);
        assert!(matches!(
            decode_idx(&img, &encode_idx_labels(&[1, 2])),
            Err(Error::Format { .. })
        ));
        assert!(decode_idx(&encode_idx_labels(&[1]), &encode_idx_labels(&[1])).is_err());
        assert!(decode_idx(&img[..img.len() - 1], &encode_idx_labels(&[1, 2, 3])).is_err());
    }
}

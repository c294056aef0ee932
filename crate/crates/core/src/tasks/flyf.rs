//! FLYF feature container.
//!
//! Little-endian: magic `FLYF`, version `u16`, rows `u32`, cols `u32`,
//! classes `u32`, then `rows × cols` `f32` features row-major and `rows`
//! `u32` labels. Features are widened to `f64` on load, so a file written
//! from loaded data round-trips bit-exactly.

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::codec::{write_atomic, ByteReader};
use crate::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FLYF";
const VERSION: u16 = 1;

/// Encodes `dataset`, narrowing features to `f32`.
pub fn encode_features(dataset: &Dataset) -> Result<Vec<u8>> {
    let (rows, cols) = dataset.features().dim();
    let dims = [rows, cols, dataset.n_classes()];
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::Config("dataset too large for a FLYF file".into()));
    }
    let mut out = Vec::with_capacity(18 + rows * cols * 4 + rows * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in dataset.features().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in dataset.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    r.expect_tag(FEATURE_MAGIC)?;
    let version = r.u16_le("version")?;
    if version != VERSION {
        return r.fail(format!("unsupported FLYF version {version}"));
    }
    let rows = r.u32_le("row count")? as usize;
    let cols = r.u32_le("column count")? as usize;
    let n_classes = r.u32_le("class count")? as usize;
    let n = rows
        .checked_mul(cols)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::Format {
            offset: r.offset(),
            msg: "feature matrix size overflows".into(),
        })?;
    let raw = r.take(n * 4, "features")?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let at = r.offset();
        let y = r.u32_le("label")? as usize;
        if y >= n_classes {
            return Err(Error::Format {
                offset: at,
                msg: format!("label {y} out of range for {n_classes} classes"),
            });
        }
        labels.push(y);
    }
    if r.remaining() != 0 {
        return r.fail(format!("{} trailing bytes", r.remaining()));
    }
    let features = Array2::from_shape_vec((rows, cols), values).expect("sized above");
    Dataset::new(features, labels, n_classes)
}

pub fn load_feature_file(path: &Path) -> Result<Dataset> {
    decode_features(&std::fs::read(path)?)
}

pub fn write_feature_file(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, &encode_features(dataset)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> Dataset {
        Dataset::new(array![[0.5, -1.25, 3.0], [1e-3, 0.0, 7.5]], vec![1, 0], 3).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = decode_features(&encode_features(&sample()).unwrap()).unwrap();
        let again = decode_features(&encode_features(&d).unwrap()).unwrap();
        assert_eq!(d, again);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn truncation_and_bad_label() {
        let bytes = encode_features(&sample()).unwrap();
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            assert!(matches!(decode_features(&bytes[..cut]), Err(Error::Format { .. })));
        }
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&9u32.to_le_bytes());
        match decode_features(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, n - 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wide_rows() {
        let x = Array2::from_shape_fn((2, 768), |(i, j)| (i + j) as f64 * 0.25);
        let d = Dataset::new(x, vec![0, 1], 2).unwrap();
        let back = decode_features(&encode_features(&d).unwrap()).unwrap();
        assert_eq!(back.dim(), 768);
        assert_eq!(back, d);
    }
}

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;

use crate::error::{shape, Stage};
use crate::rng::Rng;
use crate::{Error, Result};

/// The frozen PN→KC connectivity: a 0/1 matrix stored as per-row index lists.
///
/// Row `i` lists, in ascending order, the `degree` inputs that KC `i` sums.
/// Rows are drawn independently, so two KCs may share the same input set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinaryProjection {
    n_in: usize,
    n_out: usize,
    degree: usize,
    seed: u64,
    indices: Vec<u32>,
}

impl SparseBinaryProjection {
    pub fn build(n_in: usize, n_out: usize, degree: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidShape {
                stage: Stage::Expansion,
                expected: 1,
                got: 0,
            });
        }
        if degree == 0 || degree > n_in {
            return Err(Error::InvalidDegree { degree, n_in });
        }
        if n_in > u32::MAX as usize {
            return Err(Error::InvalidShape {
                stage: Stage::Expansion,
                expected: u32::MAX as usize,
                got: n_in,
            });
        }
        let mut rng = Rng::seed_from_u64(seed);
        let mut indices = Vec::with_capacity(n_out * degree);
        let mut row = Vec::with_capacity(degree);
        for _ in 0..n_out {
            row.clear();
            row.extend(index::sample(&mut rng, n_in, degree).into_iter().map(|j| j as u32));
            row.sort_unstable();
            indices.extend_from_slice(&row);
        }
        Ok(Self {
            n_in,
            n_out,
            degree,
            seed,
            indices,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.degree..(i + 1) * self.degree]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.chunks_exact(self.degree)
    }

    /// Number of KCs each input feeds (column sums of the 0/1 matrix).
    pub fn fan_out(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_in];
        for &j in &self.indices {
            counts[j as usize] += 1;
        }
        counts
    }

    /// Dense 0/1 form, mostly for tests and small diagnostics.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_out, self.n_in));
        for (i, row) in self.rows().enumerate() {
            for &j in row {
                m[[i, j as usize]] = 1.0;
            }
        }
        m
    }

    /// `h = W x`: each KC sums its connected inputs.
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        shape(Stage::Expansion, self.n_in, x.len())?;
        Ok(self
            .rows()
            .map(|row| row.iter().map(|&j| x[j as usize]).sum())
            .collect())
    }

    /// Batched expansion. Returns the KC drive transposed, `n_out × batch`,
    /// so each row is one KC across the batch.
    pub(crate) fn expand_batch_t(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        shape(Stage::Expansion, self.n_in, x.ncols())?;
        let batch = x.nrows();
        let xt = x.t().as_standard_layout().into_owned();
        let xt = xt.as_slice().expect("standard layout");
        let mut out = Array2::zeros((self.n_out, batch));
        let out_s = out.as_slice_mut().expect("standard layout");
        for (row, acc) in self.rows().zip(out_s.chunks_exact_mut(batch.max(1))) {
            for &j in row {
                let src = &xt[j as usize * batch..(j as usize + 1) * batch];
                for (a, s) in acc.iter_mut().zip(src) {
                    *a += s;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_degree_connects_everything() {
        let p = SparseBinaryProjection::build(4, 3, 4, 99).unwrap();
        for row in p.rows() {
            assert_eq!(row, &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = SparseBinaryProjection::build(50, 2000, 6, 11).unwrap();
        let b = SparseBinaryProjection::build(50, 2000, 6, 11).unwrap();
        let c = SparseBinaryProjection::build(50, 2000, 6, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rows_sorted_distinct_in_range() {
        let p = SparseBinaryProjection::build(50, 500, 6, 3).unwrap();
        for row in p.rows() {
            assert_eq!(row.len(), 6);
            assert!(row.windows(2).all(|w| w[0] < w[1]));
            assert!(row.iter().all(|&j| (j as usize) < 50));
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            SparseBinaryProjection::build(4, 3, 5, 0),
            Err(Error::InvalidDegree { degree: 5, n_in: 4 })
        ));
        assert!(matches!(
            SparseBinaryProjection::build(4, 3, 0, 0),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(matches!(
            SparseBinaryProjection::build(0, 3, 1, 0),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            SparseBinaryProjection::build(4, 0, 1, 0),
            Err(Error::InvalidShape { .. })
        ));
    }

    #[test]
    fn expand_sums_row_inputs() {
        let mut p = SparseBinaryProjection::build(4, 1, 2, 0).unwrap();
        p.indices = vec![0, 2];
        assert_eq!(p.expand(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![4.0]);
        assert_eq!(p.expand(&[0.0; 4]).unwrap(), vec![0.0]);
        assert!(p.expand(&[1.0; 3]).is_err());
    }

    #[test]
    fn batched_expansion_matches_single() {
        let p = SparseBinaryProjection::build(7, 40, 3, 5).unwrap();
        let x = Array2::from_shape_fn((5, 7), |(b, j)| (b as f64 + 1.0) * (j as f64 - 2.5));
        let ht = p.expand_batch_t(x.view()).unwrap();
        for b in 0..5 {
            let single = p.expand(x.row(b).as_slice().unwrap()).unwrap();
            for i in 0..40 {
                assert_eq!(ht[[i, b]], single[i]);
            }
        }
    }
}

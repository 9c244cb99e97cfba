use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CoreError, Result};

/// Square complex sparse matrix in compressed-row form.
///
/// Row access has to be fast: matrix-vector products dominate both the
/// Krylov iteration and the residual checks. Columns within each row are kept
/// sorted and duplicates merged at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r},{c}) out of bounds for dim {dim}");
            if prev == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1; // per-row count for now
                prev = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut out = Self { dim, row_ptr, col_idx, values };
        out.prune_zeros();
        out
    }

    fn prune_zeros(&mut self) {
        let mut new_col = Vec::with_capacity(self.col_idx.len());
        let mut new_val = Vec::with_capacity(self.values.len());
        let mut new_ptr = vec![0usize; self.dim + 1];
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.values[k];
                if v != Complex64::default() {
                    new_col.push(self.col_idx[k]);
                    new_val.push(v);
                }
            }
            new_ptr[r + 1] = new_col.len();
        }
        self.col_idx = new_col;
        self.values = new_val;
        self.row_ptr = new_ptr;
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as (column, value) pairs.
    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// y = A·x.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(CoreError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if y.len() != self.dim {
            return Err(CoreError::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        // Parallel over row chunks; each row writes one output slot, so there
        // is no shared mutable state.
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = Complex64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        });
        Ok(())
    }

    pub fn matvec_alloc(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut y = vec![Complex64::default(); self.dim];
        self.matvec(x, &mut y)?;
        Ok(y)
    }

    /// Frobenius norm √Σ|a_ij|².
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sum of the diagonal entries.
    pub fn trace(&self) -> Complex64 {
        let mut t = Complex64::default();
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                if c == r {
                    t += v;
                }
            }
        }
        t
    }

    /// Largest |col − row| over stored entries — the bandwidth the banded
    /// factorization must accommodate.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for r in 0..self.dim {
            for (c, _) in self.row(r) {
                b = b.max(r.abs_diff(c));
            }
        }
        b
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut m = Array2::default((self.dim, self.dim));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn triplets_merge_and_sort() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![
                (2, 0, c(1.0, 0.0)),
                (0, 1, c(2.0, 0.0)),
                (0, 1, c(0.5, -1.0)), // duplicate: merged
                (1, 1, c(0.0, 0.0)), // explicit zero: dropped
                (0, 0, c(3.0, 0.0)),
            ],
        );
        assert_eq!(m.nnz(), 3);
        let row0: Vec<_> = m.row(0).collect();
        assert_eq!(row0, vec![(0, c(3.0, 0.0)), (1, c(2.5, -1.0))]);
        let row1: Vec<_> = m.row(1).collect();
        assert!(row1.is_empty());
        let row2: Vec<_> = m.row(2).collect();
        assert_eq!(row2, vec![(0, c(1.0, 0.0))]);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = CsrMatrix::from_triplets(
            4,
            vec![
                (0, 0, c(1.0, 1.0)),
                (0, 3, c(-2.0, 0.5)),
                (1, 2, c(0.0, 1.0)),
                (2, 1, c(4.0, 0.0)),
                (3, 3, c(0.5, -0.5)),
            ],
        );
        let x: Vec<_> = (0..4).map(|i| c(i as f64 + 0.5, -(i as f64))).collect();
        let y = m.matvec_alloc(&x).unwrap();
        let dense = m.to_dense();
        for i in 0..4 {
            let mut acc = Complex64::default();
            for j in 0..4 {
                acc += dense[(i, j)] * x[j];
            }
            assert!((acc - y[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn norms_and_bandwidth() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, c(3.0, 4.0)), (1, 2, c(0.0, 2.0)), (2, 0, c(1.0, 0.0))],
        );
        assert!((m.frobenius_norm() - (25.0f64 + 4.0 + 1.0).sqrt()).abs() < 1e-14);
        assert_eq!(m.bandwidth(), 2);
        assert_eq!(m.trace(), c(3.0, 4.0));
    }

    #[test]
    fn dimension_checks() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, c(1.0, 0.0))]);
        assert!(m.matvec_alloc(&[c(1.0, 0.0)]).is_err());
    }
}

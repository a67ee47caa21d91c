// SPDX-License-Identifier: Apache-2.0

//! Orthonormal DCT-II and its inverse (DCT-III), in one and two dimensions.
//!
//! Matrices here are small (100 x 200 at most), so the transforms use a
//! precomputed cosine table instead of an FFT factorization.

use std::f64::consts::PI;

/// `n x n` orthonormal DCT-II basis: `table[k][i] = s_k cos(pi (2i + 1) k / 2n)`.
#[derive(Debug, Clone)]
pub struct DctTable {
    n: usize,
    basis: Vec<f64>,
}

impl DctTable {
    pub fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        let s0 = (1.0 / n as f64).sqrt();
        let s = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let scale = if k == 0 { s0 } else { s };
            for i in 0..n {
                basis[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Self { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// First `keep` coefficients of the forward transform.
    pub fn forward_prefix(&self, x: &[f64], keep: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..keep.min(self.n))
            .map(|k| {
                self.basis[k * self.n..(k + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(b, v)| b * v)
                    .sum()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_prefix(x, self.n)
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|k| self.basis[k * self.n + i] * coeffs[k]).sum())
            .collect()
    }
}

/// Full 2D DCT-II of a row-major `rows x cols` matrix: along columns
/// (index 0) then along rows (index 1).
pub fn dct2(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    dct2_prefix(m, rows, cols)
}

/// Top-left `keep_rows x keep_cols` corner of the 2D DCT-II.
pub fn dct2_prefix(m: &[Vec<f64>], keep_rows: usize, keep_cols: usize) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let tr = DctTable::new(rows);
    let tc = DctTable::new(cols);
    // Along the first axis, for each column.
    let mut partial = vec![vec![0.0; cols]; keep_rows.min(rows)];
    let mut column = vec![0.0; rows];
    for j in 0..cols {
        for (slot, row) in column.iter_mut().zip(m) {
            *slot = row[j];
        }
        for (k, v) in tr.forward_prefix(&column, keep_rows).into_iter().enumerate() {
            partial[k][j] = v;
        }
    }
    partial.iter().map(|row| tc.forward_prefix(row, keep_cols)).collect()
}

pub fn idct2(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = c.len();
    let cols = c.first().map_or(0, Vec::len);
    let tr = DctTable::new(rows);
    let tc = DctTable::new(cols);
    let partial: Vec<Vec<f64>> = c.iter().map(|row| tc.inverse(row)).collect();
    let mut out = vec![vec![0.0; cols]; rows];
    let mut column = vec![0.0; rows];
    for j in 0..cols {
        for (slot, row) in column.iter_mut().zip(&partial) {
            *slot = row[j];
        }
        for (i, v) in tr.inverse(&column).into_iter().enumerate() {
            out[i][j] = v;
        }
    }
    out
}

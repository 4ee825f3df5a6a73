//! Lower-triangular Cholesky factor stored as packed rows.
//!
//! Row `i` holds `i + 1` entries, so appending a point only appends a row.
//! This is what lets the incremental updates in [`crate::schur`] grow a
//! factorization in `O(m^2)` without copying or refactoring it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cholesky {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators; the compiler vectorizes this well.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

fn check_pivot(index: usize, value: f64, diag: f64) -> Result<f64> {
    if !value.is_finite() || value <= diag.abs() * f64::EPSILON {
        return Err(Error::IllConditioned { pivot: index, value });
    }
    Ok(value.sqrt())
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { n: 0, data: Vec::new() }
    }

    /// Factors the symmetric matrix whose lower triangle is given by `entry(i, j)`, `j <= i`.
    pub fn from_fn(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; row_start(n)];
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let s = dot(&data[ri..ri + j], &data[rj..rj + j]);
                let a = entry(i, j);
                if i == j {
                    data[ri + i] = check_pivot(i, a - s, a)?;
                } else {
                    data[ri + j] = (a - s) / data[rj + j];
                }
            }
        }
        Ok(Cholesky { n, data })
    }

    pub fn factor(matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid(format!(
                "cannot factor a {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Self::from_fn(matrix.nrows(), |i, j| matrix[(i, j)])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entries `0..=i` of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let r = row_start(i);
        &self.data[r..r + i + 1]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[row_start(i) + i]
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward_solve_in_place(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n);
        for j in (0..self.n).rev() {
            let row = self.row(j);
            let xj = y[j] / row[j];
            y[j] = xj;
            for (yi, lji) in y[..j].iter_mut().zip(&row[..j]) {
                *yi -= lji * xj;
            }
        }
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x);
        self.backward_solve_in_place(&mut x);
        x
    }

    /// Appends one row and column to the factored matrix.
    ///
    /// `column` holds the new off-diagonal entries against the existing rows and
    /// `corner` the new diagonal entry. Returns `l = L^{-1} column` and the scalar
    /// Schur complement `corner - l^T l`.
    pub fn append(&mut self, column: &[f64], corner: f64) -> Result<(Vec<f64>, f64)> {
        if column.len() != self.n {
            return Err(Error::invalid(format!(
                "appended column has length {}, expected {}",
                column.len(),
                self.n
            )));
        }
        let mut l = column.to_vec();
        self.forward_solve_in_place(&mut l);
        let schur = corner - dot(&l, &l);
        let d = check_pivot(self.n, schur, corner)?;
        self.data.extend_from_slice(&l);
        self.data.push(d);
        self.n += 1;
        Ok((l, schur))
    }

    /// Appends `k` rows at once: row `r` of the new block is `[coupling[r], tail.row(r)]`.
    ///
    /// With `coupling = (L^{-1} B)^T` and `tail` the factor of the Schur complement
    /// `D - B^T A^{-1} B`, the result factors `[[A, B], [B^T, D]]`.
    pub(crate) fn extend_block(&mut self, coupling: &[Vec<f64>], tail: &Cholesky) {
        debug_assert_eq!(coupling.len(), tail.dim());
        for (r, c) in coupling.iter().enumerate() {
            debug_assert_eq!(c.len(), self.n);
            self.data.extend_from_slice(c);
            self.data.extend_from_slice(tail.row(r));
        }
        // Row starts stay consistent: the rows above were all complete before.
        self.n += tail.dim();
        debug_assert_eq!(self.data.len(), row_start(self.n));
    }

    pub fn to_lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.row(i)[j] } else { 0.0 })
    }

    /// Explicit inverse of the factored matrix. Only used for materializing small blocks.
    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = DMatrix::zeros(self.n, self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

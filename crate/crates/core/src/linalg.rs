//! Dense row-major matrices and the few factorizations the learners need.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::argument("matrix data length does not match shape"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::argument("columns have unequal lengths"));
        }
        let mut m = Matrix::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m.data[i * cols + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::argument("rows have unequal lengths"));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single column of ones.
    pub fn ones(rows: usize) -> Self {
        Matrix {
            rows,
            cols: 1,
            data: vec![1.0; rows],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self * beta`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    /// `selfᵀ v`.
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }

    /// Weighted Gram matrix `Xᵀ diag(w) X` as a full symmetric matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for i in 0..self.rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let r = self.row(i);
            for a in 0..p {
                let ra = r[a] * wi;
                if ra == 0.0 {
                    continue;
                }
                let ga = &mut g.data[a * p..(a + 1) * p];
                for b in a..p {
                    ga[b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[a * p + b] = g.data[b * p + a];
            }
        }
        g
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
/// Returns `None` when the factorization fails or the system is too
/// ill-conditioned to trust.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let chol = a.to_nalgebra().cholesky()?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    // Diagonal ratio of the factor bounds the square root of the condition number.
    if !(lo > 0.0) || hi / lo > 1e7 {
        return None;
    }
    let x = chol.solve(&DVector::from_column_slice(b));
    let out: Vec<f64> = x.iter().copied().collect();
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Solves an SPD system, adding a small ridge to the diagonal if needed.
/// The returned flag reports whether regularization was required.
pub fn solve_spd_ridged(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, bool)> {
    if let Some(x) = solve_spd(a, b) {
        return Ok((x, false));
    }
    let n = a.nrows();
    let scale = (a.trace() / n.max(1) as f64).abs().max(1e-300);
    let mut ridge = 1e-10 * scale;
    for _ in 0..8 {
        let mut r = a.clone();
        for i in 0..n {
            let v = r.get(i, i) + ridge;
            r.set(i, i, v);
        }
        if let Some(x) = solve_spd(&r, b) {
            return Ok((x, true));
        }
        ridge *= 100.0;
    }
    Err(Error::numerical("linear system is singular beyond ridge rescue"))
}

/// Least-squares solution of `a x ≈ b` via Householder QR (full column rank required).
pub fn least_squares_qr(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    if n == 0 {
        return Some(Vec::new());
    }
    if m < n {
        return None;
    }
    let qr = a.to_nalgebra().qr();
    let r = qr.r();
    let scale = (0..n).fold(0.0_f64, |s, i| s.max(r[(i, i)].abs()));
    if (0..n).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(1e-300)) {
        return None;
    }
    let qtb = qr.q().transpose() * DVector::from_column_slice(b);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matches_naive_product() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 4.0]]).unwrap();
        let w = [1.0, 2.0, 0.5];
        let g = x.weighted_gram(&w);
        for a in 0..2 {
            for b in 0..2 {
                let naive: f64 = (0..3).map(|i| w[i] * x.get(i, a) * x.get(i, b)).sum();
                assert!((g.get(a, b) - naive).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn spd_solve_and_singular_detection() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(solve_spd(&s, &[1.0, 1.0]).is_none());
        let (_, ridged) = solve_spd_ridged(&s, &[1.0, 1.0]).unwrap();
        assert!(ridged);
    }

    #[test]
    fn qr_least_squares_fits_line() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = least_squares_qr(&a, &[1.0, 3.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-13 && (x[1] - 2.0).abs() < 1e-13);
    }
}

//! Lawson–Hanson active-set non-negative least squares.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{least_squares_qr, Matrix};

/// Minimizes `‖A w − b‖²` subject to `w ≥ 0`.
pub fn nnls(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, q) = (a.nrows(), a.ncols());
    if m == 0 || q == 0 {
        return Err(Error::argument("nnls needs at least one row and one column"));
    }
    if b.len() != m {
        return Err(Error::argument("nnls right-hand side has wrong length"));
    }
    let scale = a.as_slice().iter().fold(0.0_f64, |s, v| s.max(v.abs()))
        * b.iter().fold(1.0_f64, |s, v| s.max(v.abs()))
        * m as f64;
    let tol = (1e-14 * scale).min(1e-10);

    let mut x = vec![0.0; q];
    let mut passive = vec![false; q];
    let mut blocked = vec![false; q];
    let max_outer = 3 * q + 30;

    for _ in 0..max_outer {
        let grad = neg_gradient(a, b, &x);
        let pick = (0..q)
            .filter(|&j| !passive[j] && !blocked[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = pick else { break };
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            let cols: Vec<usize> = (0..q).filter(|&k| passive[k]).collect();
            let z = match solve_on(a, b, &cols) {
                Some(z) => z,
                None => {
                    // Column is (numerically) dependent on the passive set.
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            };
            if z.iter().all(|v| *v > 0.0) || inner > 3 * q + 10 {
                for k in 0..q {
                    x[k] = 0.0;
                }
                for (c, v) in cols.iter().zip(&z) {
                    x[*c] = v.max(0.0);
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, v) in cols.iter().zip(&z) {
                if *v <= 0.0 {
                    let denom = x[*c] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(x[*c] / denom);
                    } else {
                        alpha = alpha.min(0.0);
                    }
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            for (c, v) in cols.iter().zip(&z) {
                x[*c] += alpha * (v - x[*c]);
            }
            for &c in &cols {
                if x[c] <= 1e-15 * (1.0 + x.iter().fold(0.0_f64, |s, v| s.max(*v))) {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
    }
    Ok(x)
}

fn solve_on(a: &Matrix, b: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let m = a.nrows();
    let mut sub = Matrix::zeros(m, cols.len());
    for i in 0..m {
        for (k, &c) in cols.iter().enumerate() {
            sub.set(i, k, a.get(i, c));
        }
    }
    let mut z = least_squares_qr(&sub, b)?;
    // One step of iterative refinement keeps the KKT residual at rounding level.
    let r: Vec<f64> = sub.mul_vec(&z).iter().zip(b).map(|(p, y)| y - p).collect();
    if let Some(dz) = least_squares_qr(&sub, &r) {
        for (zi, d) in z.iter_mut().zip(dz) {
            *zi += d;
        }
    }
    Some(z)
}

/// `Aᵀ (b − A x)`.
fn neg_gradient(a: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(p, y)| y - p).collect();
    a.tmul_vec(&r)
}

/// Objective `‖A w − b‖²`.
pub fn nnls_objective(a: &Matrix, b: &[f64], w: &[f64]) -> f64 {
    a.mul_vec(w)
        .iter()
        .zip(b)
        .map(|(p, y)| (p - y) * (p - y))
        .sum()
}

/// Largest KKT violation: stationarity on the support, dual feasibility off it.
pub fn kkt_residual(a: &Matrix, b: &[f64], w: &[f64]) -> f64 {
    let g: Vec<f64> = neg_gradient(a, b, w).iter().map(|v| -v).collect();
    w.iter().zip(&g).fold(0.0_f64, |worst, (wj, gj)| {
        let v = if *wj > 0.0 { gj.abs() } else { (-gj).max(0.0) };
        worst.max(v)
    })
}

//! Generalized linear models fitted by iteratively reweighted least squares.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learners::Family;
use crate::linalg::{solve_spd_ridged, Matrix};
use crate::math::{clamp_prob, expit, logit, max_abs};

/// Relative deviance change that ends the iterations.
pub const DEVIANCE_TOL: f64 = 1e-10;
/// Iteration cap.
pub const MAX_ITER: usize = 50;
/// Score tolerance factor: `‖score‖∞ ≤ SCORE_TOL · (1 + ‖y‖∞)`.
pub const SCORE_TOL: f64 = 1e-8;

/// Training diagnostics of an IRLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// A tiny ridge was added because the weighted Gram matrix was singular.
    pub rank_deficient: bool,
    /// Penalty strength for ridge fits.
    pub lambda: Option<f64>,
}

impl FitDiagnostics {
    pub(crate) fn closed_form(deviance: f64) -> Self {
        FitDiagnostics {
            converged: true,
            iterations: 0,
            deviance,
            rank_deficient: false,
            lambda: None,
        }
    }
}

pub(crate) struct IrlsFit {
    pub coef: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Deviance contribution, with `0 log 0 = 0` for fractional binomial responses.
pub(crate) fn unit_deviance(family: Family, y: f64, mu: f64) -> f64 {
    match family {
        Family::Gaussian => (y - mu) * (y - mu),
        Family::Binomial => {
            let mu = mu.clamp(1e-300, 1.0 - 1e-16);
            let a = if y > 0.0 { y * libm::log(y / mu) } else { 0.0 };
            let b = if y < 1.0 {
                (1.0 - y) * libm::log((1.0 - y) / (1.0 - mu))
            } else {
                0.0
            };
            2.0 * (a + b)
        }
    }
}

fn inverse_link(family: Family, eta: f64) -> f64 {
    match family {
        Family::Gaussian => eta,
        Family::Binomial => expit(eta),
    }
}

/// Validates GLM inputs shared by every fitting entry point.
pub(crate) fn check_inputs(
    x: &Matrix,
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Result<()> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::argument("cannot fit a model on zero rows"));
    }
    if y.len() != n {
        return Err(Error::argument("response length does not match design rows"));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::argument("design or response contains non-finite values"));
    }
    if family == Family::Binomial && y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::argument("binomial response must lie in [0, 1]"));
    }
    if let Some(w) = weights {
        if w.len() != n || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::argument("weights must be finite, nonnegative and length n"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::argument("all weights are zero"));
        }
    }
    if let Some(o) = offset {
        if o.len() != n || o.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("offset must be finite and length n"));
        }
    }
    Ok(())
}

/// Penalized IRLS. `penalty` is the diagonal added to `Xᵀ W X`; the score
/// is `Xᵀ w (y − μ) − diag(penalty) β`.
pub(crate) fn irls(
    x: &Matrix,
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
    penalty: Option<&[f64]>,
) -> Result<IrlsFit> {
    check_inputs(x, y, family, weights, offset)?;
    let (n, p) = (x.nrows(), x.ncols());
    let ones = vec![1.0; n];
    let zeros = vec![0.0; n];
    let w = weights.unwrap_or(&ones);
    let off = offset.unwrap_or(&zeros);
    let y_scale = 1.0 + max_abs(y);
    let mut rank_deficient = false;

    let penalized_dev = |beta: &[f64], eta: &[f64]| -> f64 {
        let dev: f64 = (0..n)
            .map(|i| w[i] * unit_deviance(family, y[i], inverse_link(family, eta[i])))
            .sum();
        let pen: f64 = penalty.map_or(0.0, |pd| {
            pd.iter().zip(beta).map(|(l, b)| l * b * b).sum()
        });
        dev + pen
    };

    // Newton system at working weights `ww` and working response.
    let step = |ww: &[f64], rhs: Vec<f64>, rank_deficient: &mut bool| -> Result<Vec<f64>> {
        let mut g = x.weighted_gram(ww);
        if let Some(pd) = penalty {
            for j in 0..p {
                let v = g.get(j, j) + pd[j];
                g.set(j, j, v);
            }
        }
        let (beta, ridged) = solve_spd_ridged(&g, &rhs)?;
        *rank_deficient |= ridged;
        Ok(beta)
    };

    // Starting values.
    let mut beta = match family {
        Family::Gaussian => {
            let z: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - off[i])).collect();
            step(w, x.tmul_vec(&z), &mut rank_deficient)?
        }
        Family::Binomial => {
            let mu0: Vec<f64> = y.iter().map(|v| (v + 0.5) / 2.0).collect();
            let ww: Vec<f64> = (0..n).map(|i| w[i] * mu0[i] * (1.0 - mu0[i])).collect();
            let z: Vec<f64> = (0..n).map(|i| ww[i] * (logit(mu0[i]) - off[i])).collect();
            step(&ww, x.tmul_vec(&z), &mut rank_deficient)?
        }
    };

    let eta_of = |beta: &[f64]| -> Vec<f64> {
        x.mul_vec(beta).iter().zip(off).map(|(a, b)| a + b).collect()
    };
    let mut eta = eta_of(&beta);
    let mut dev = penalized_dev(&beta, &eta);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=MAX_ITER {
        iterations = it;
        let mu: Vec<f64> = eta.iter().map(|e| inverse_link(family, *e)).collect();
        let resid: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - mu[i])).collect();
        let mut score = x.tmul_vec(&resid);
        if let Some(pd) = penalty {
            for j in 0..p {
                score[j] -= pd[j] * beta[j];
            }
        }
        let score_ok = max_abs(&score) <= SCORE_TOL * y_scale;
        if family == Family::Gaussian && score_ok {
            converged = true;
            break;
        }

        let ww: Vec<f64> = match family {
            Family::Gaussian => w.to_vec(),
            Family::Binomial => (0..n)
                .map(|i| w[i] * (mu[i] * (1.0 - mu[i])).max(1e-300))
                .collect(),
        };
        // Xᵀ W (η − offset) + Xᵀ w (y − μ), avoiding division by the variance.
        let lin: Vec<f64> = (0..n).map(|i| ww[i] * (eta[i] - off[i])).collect();
        let rhs: Vec<f64> = x
            .tmul_vec(&lin)
            .iter()
            .zip(x.tmul_vec(&resid))
            .map(|(a, b)| a + b)
            .collect();
        let mut candidate = step(&ww, rhs, &mut rank_deficient)?;
        let mut cand_eta = eta_of(&candidate);
        let mut cand_dev = penalized_dev(&candidate, &cand_eta);
        let mut halvings = 0;
        while !(cand_dev <= dev * (1.0 + 1e-12) + 1e-300) && halvings < 30 {
            for (c, b) in candidate.iter_mut().zip(&beta) {
                *c = 0.5 * (*c + b);
            }
            cand_eta = eta_of(&candidate);
            cand_dev = penalized_dev(&candidate, &cand_eta);
            halvings += 1;
        }
        let rel_change = (dev - cand_dev).abs() / (cand_dev.abs() + 0.1);
        beta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        if rel_change < DEVIANCE_TOL {
            let mu: Vec<f64> = eta.iter().map(|e| inverse_link(family, *e)).collect();
            let resid: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - mu[i])).collect();
            let mut score = x.tmul_vec(&resid);
            if let Some(pd) = penalty {
                for j in 0..p {
                    score[j] -= pd[j] * beta[j];
                }
            }
            if max_abs(&score) <= SCORE_TOL * y_scale {
                converged = true;
                break;
            }
        }
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::numerical("IRLS produced non-finite coefficients"));
    }
    Ok(IrlsFit {
        coef: beta,
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            deviance: dev,
            rank_deficient,
            lambda: None,
        },
    })
}

/// Response-scale prediction for a linear predictor, clamped for binomial.
pub(crate) fn response(family: Family, eta: f64) -> f64 {
    match family {
        Family::Gaussian => eta,
        Family::Binomial => clamp_prob(expit(eta)),
    }
}

/// Weighted score `Xᵀ w (y − μ)` at `coef` (unpenalized), used by the checks.
pub fn weighted_score(
    x: &Matrix,
    y: &[f64],
    family: Family,
    coef: &[f64],
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Vec<f64> {
    let n = x.nrows();
    let eta = x.mul_vec(coef);
    let r: Vec<f64> = (0..n)
        .map(|i| {
            let e = eta[i] + offset.map_or(0.0, |o| o[i]);
            weights.map_or(1.0, |w| w[i]) * (y[i] - inverse_link(family, e))
        })
        .collect();
    x.tmul_vec(&r)
}

/// Total deviance at `coef` (unpenalized).
pub fn deviance(
    x: &Matrix,
    y: &[f64],
    family: Family,
    coef: &[f64],
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> f64 {
    let eta = x.mul_vec(coef);
    (0..x.nrows())
        .map(|i| {
            let e = eta[i] + offset.map_or(0.0, |o| o[i]);
            weights.map_or(1.0, |w| w[i]) * unit_deviance(family, y[i], inverse_link(family, e))
        })
        .sum()
}

/// One-coefficient offset regression `link(μ) = offset + ε·x` without an
/// intercept, solved by safeguarded Newton iterations from `ε = 0`.
pub fn fit_offset_1d(
    x: &[f64],
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: &[f64],
) -> Result<(f64, FitDiagnostics)> {
    let n = x.len();
    if y.len() != n || offset.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::argument("fluctuation inputs differ in length"));
    }
    if x.iter().chain(y).chain(offset).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite fluctuation input"));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let dev = |eps: f64| -> f64 {
        (0..n)
            .map(|i| w(i) * unit_deviance(family, y[i], response(family, offset[i] + eps * x[i])))
            .sum()
    };
    let score_info = |eps: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut h = 0.0;
        for i in 0..n {
            let mu = response(family, offset[i] + eps * x[i]);
            let v = match family {
                Family::Gaussian => 1.0,
                Family::Binomial => mu * (1.0 - mu),
            };
            s += w(i) * x[i] * (y[i] - mu);
            h += w(i) * x[i] * x[i] * v;
        }
        (s, h)
    };
    let scale: f64 = (0..n).map(|i| libm::fabs(w(i) * x[i])).sum::<f64>().max(1e-300);
    let mut eps = 0.0;
    let mut current = dev(eps);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (s, h) = score_info(eps);
        if libm::fabs(s) <= 1e-13 * scale {
            converged = true;
            break;
        }
        if h <= 0.0 || !h.is_finite() {
            break;
        }
        let mut step = s / h;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = eps + step;
            let d = dev(cand);
            if d.is_finite() && d <= current * (1.0 + 1e-15) + 1e-300 {
                let change = libm::fabs(current - d) / (libm::fabs(d) + 0.1);
                eps = cand;
                current = d;
                accepted = true;
                if change < DEVIANCE_TOL * 1e-4 && libm::fabs(step) <= 1e-14 * (1.0 + libm::fabs(eps)) {
                    converged = true;
                }
                break;
            }
            step /= 2.0;
        }
        if !accepted || converged {
            converged = converged || libm::fabs(score_info(eps).0) <= SCORE_TOL * scale;
            break;
        }
    }
    if !converged {
        converged = libm::fabs(score_info(eps).0) <= SCORE_TOL * scale;
    }
    Ok((
        eps,
        FitDiagnostics {
            converged,
            iterations,
            deviance: current,
            rank_deficient: false,
            lambda: None,
        },
    ))
}

//! Cross-validated stacking with a non-negative least squares metalearner.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Family, FittedLearner, LearnerSpec};
use crate::data::FoldAssignment;
use crate::error::{Error, Result};
use crate::learners::nnls::nnls;
use crate::linalg::Matrix;
use crate::math::clamp_prob;

/// Stacked ensemble. Candidates are refit on all rows; the ensemble predicts
/// `Σ_j w_j f_j(x)` on the response scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperLearner {
    pub family: Family,
    candidates: Vec<(LearnerSpec, FittedLearner)>,
    weights: Vec<f64>,
    cv_risks: Vec<f64>,
    cv_criteria: Vec<f64>,
    ensemble_criterion: f64,
    warnings: Vec<String>,
}

impl SuperLearner {
    pub fn candidates(&self) -> &[(LearnerSpec, FittedLearner)] {
        &self.candidates
    }

    /// Non-negative metalearner weights, one per surviving candidate.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cross-validated family loss (squared error or negative log-likelihood).
    pub fn cv_risks(&self) -> &[f64] {
        &self.cv_risks
    }

    /// Metalearner criterion (weighted mean squared error of the out-of-fold
    /// predictions) for each single candidate.
    pub fn cv_criteria(&self) -> &[f64] {
        &self.cv_criteria
    }

    /// Metalearner criterion at the fitted weights.
    pub fn ensemble_criterion(&self) -> f64 {
        self.ensemble_criterion
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_with_offset(x, None)
    }

    pub fn predict_with_offset(&self, x: &Matrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.nrows()];
        for ((_, learner), w) in self.candidates.iter().zip(&self.weights) {
            if *w == 0.0 {
                continue;
            }
            let p = learner.predict_with_offset(x, offset)?;
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        if self.family == Family::Binomial {
            out.iter_mut().for_each(|v| *v = clamp_prob(*v));
        }
        Ok(out)
    }
}

fn take(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Fits every candidate on each training split, stacks the out-of-fold
/// predictions and solves the NNLS metalearning problem.
pub fn fit_super_learner(
    library: &[LearnerSpec],
    x: &Matrix,
    y: &[f64],
    family: Family,
    folds: &FoldAssignment,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Result<SuperLearner> {
    if library.is_empty() {
        return Err(Error::argument("super learner library is empty"));
    }
    let n = x.nrows();
    if folds.n() != n || y.len() != n {
        return Err(Error::argument("fold assignment does not match the data"));
    }
    let q = library.len();
    let mut cv_pred = vec![vec![0.0; n]; q];
    let mut alive = vec![true; q];
    let mut warnings = Vec::new();

    for f in 0..folds.k() {
        let (train, valid) = folds.split(f);
        if valid.is_empty() {
            continue;
        }
        let xt = x.select_rows(&train);
        let yt = take(y, &train);
        let wt = weights.map(|w| take(w, &train));
        let ot = offset.map(|o| take(o, &train));
        let xv = x.select_rows(&valid);
        let ov = offset.map(|o| take(o, &valid));
        for (j, spec) in library.iter().enumerate() {
            if !alive[j] {
                continue;
            }
            let seed = folds.seed() ^ ((f as u64 + 1) << 32) ^ j as u64;
            match spec
                .fit(&xt, &yt, family, wt.as_deref(), ot.as_deref(), seed)
                .and_then(|m| m.predict_with_offset(&xv, ov.as_deref()))
            {
                Ok(pred) => {
                    for (&i, p) in valid.iter().zip(pred) {
                        cv_pred[j][i] = p;
                    }
                }
                Err(e) => {
                    alive[j] = false;
                    warnings.push(format!("candidate `{}` dropped on fold {f}: {e}", spec.name()));
                }
            }
        }
    }

    let kept: Vec<usize> = (0..q).filter(|&j| alive[j]).collect();
    if kept.is_empty() {
        return Err(Error::numerical("every super learner candidate failed"));
    }

    // Metalearning problem with rows scaled by sqrt(weight).
    let sw: Vec<f64> = (0..n)
        .map(|i| libm::sqrt(weights.map_or(1.0, |w| w[i])))
        .collect();
    let mut z = Matrix::zeros(n, kept.len());
    for i in 0..n {
        for (k, &j) in kept.iter().enumerate() {
            z.set(i, k, sw[i] * cv_pred[j][i]);
        }
    }
    let target: Vec<f64> = (0..n).map(|i| sw[i] * y[i]).collect();
    let meta = nnls(&z, &target)?;

    let wsum: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let criterion = |pred: &dyn Fn(usize) -> f64| -> f64 {
        (0..n)
            .map(|i| {
                let r = pred(i) - y[i];
                weights.map_or(1.0, |w| w[i]) * r * r
            })
            .sum::<f64>()
            / wsum
    };
    let cv_criteria: Vec<f64> = kept.iter().map(|&j| criterion(&|i| cv_pred[j][i])).collect();
    let ensemble_criterion = criterion(&|i| {
        kept.iter()
            .zip(&meta)
            .map(|(&j, w)| w * cv_pred[j][i])
            .sum::<f64>()
    });
    let cv_risks: Vec<f64> = kept
        .iter()
        .map(|&j| {
            (0..n)
                .map(|i| weights.map_or(1.0, |w| w[i]) * family.loss(y[i], cv_pred[j][i]))
                .sum::<f64>()
                / wsum
        })
        .collect();

    let mut candidates = Vec::with_capacity(kept.len());
    let mut final_weights = Vec::with_capacity(kept.len());
    for (k, &j) in kept.iter().enumerate() {
        let seed = folds.seed() ^ 0xa11_da7a ^ j as u64;
        match library[j].fit(x, y, family, weights, offset, seed) {
            Ok(m) => {
                candidates.push((library[j], m));
                final_weights.push(meta[k]);
            }
            Err(e) => {
                warnings.push(format!("candidate `{}` failed on the full data: {e}", library[j].name()));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::numerical("every super learner candidate failed on the full data"));
    }
    Ok(SuperLearner {
        family,
        candidates,
        weights: final_weights,
        cv_risks,
        cv_criteria,
        ensemble_criterion,
        warnings,
    })
}

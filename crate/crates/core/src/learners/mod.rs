//! Nuisance regression stack.
//!
//! Every learner works on a raw covariate matrix and expands it through a
//! [`Basis`]. Binomial fits accept fractional responses in `[0, 1]`
//! (quasi-binomial), which is what the fluctuation regressions need.

mod glm;
mod nnls;
mod super_learner;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub(crate) use glm::response;
pub use glm::{deviance, fit_offset_1d, weighted_score, FitDiagnostics, DEVIANCE_TOL, MAX_ITER, SCORE_TOL};
pub use nnls::{kkt_residual, nnls, nnls_objective};
pub use super_learner::{fit_super_learner, SuperLearner};

use crate::data::{assign_folds_n, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{clamp_prob, logit, mean};

/// Exponential family with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link.
    Gaussian,
    /// Logit link.
    Binomial,
}

impl Family {
    /// Per-observation loss used for cross-validated risk.
    pub fn loss(&self, y: f64, pred: f64) -> f64 {
        match self {
            Family::Gaussian => (y - pred) * (y - pred),
            Family::Binomial => {
                let p = clamp_prob(pred);
                -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
            }
        }
    }
}

/// Feature map applied to raw covariates before the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Columns used as given.
    Identity,
    /// Intercept only.
    Intercept,
    /// Intercept plus main terms.
    Main,
    /// Intercept, main terms and all pairwise products.
    Interactions,
}

impl Basis {
    pub fn expand(&self, x: &Matrix) -> Matrix {
        let (n, p) = (x.nrows(), x.ncols());
        match self {
            Basis::Identity => x.clone(),
            Basis::Intercept => Matrix::ones(n),
            Basis::Main | Basis::Interactions => {
                let pairs = if *self == Basis::Interactions {
                    p * p.saturating_sub(1) / 2
                } else {
                    0
                };
                let q = 1 + p + pairs;
                let mut data = Vec::with_capacity(n * q);
                for i in 0..n {
                    let r = x.row(i);
                    data.push(1.0);
                    data.extend_from_slice(r);
                    if pairs > 0 {
                        for a in 0..p {
                            for b in a + 1..p {
                                data.push(r[a] * r[b]);
                            }
                        }
                    }
                }
                Matrix::from_row_major(n, q, data).expect("consistent expansion")
            }
        }
    }

    /// Whether column 0 of the expansion is an intercept.
    pub fn has_intercept(&self) -> bool {
        !matches!(self, Basis::Identity)
    }
}

/// Candidate learner in a library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerSpec {
    Constant,
    Glm,
    GlmInteractions,
    Ridge,
}

impl LearnerSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LearnerSpec::Constant),
            "glm" => Ok(LearnerSpec::Glm),
            "glm_interactions" => Ok(LearnerSpec::GlmInteractions),
            "ridge" => Ok(LearnerSpec::Ridge),
            _ => Err(Error::argument(format!("unknown learner `{s}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Constant => "constant",
            LearnerSpec::Glm => "glm",
            LearnerSpec::GlmInteractions => "glm_interactions",
            LearnerSpec::Ridge => "ridge",
        }
    }

    pub fn fit(
        &self,
        x: &Matrix,
        y: &[f64],
        family: Family,
        weights: Option<&[f64]>,
        offset: Option<&[f64]>,
        seed: u64,
    ) -> Result<FittedLearner> {
        let mut fit = match self {
            LearnerSpec::Constant => {
                if offset.is_none() {
                    fit_weighted_constant(y, family, weights)
                } else {
                    fit_basis(x, Basis::Intercept, y, family, weights, offset)
                }
            }
            LearnerSpec::Glm => fit_basis(x, Basis::Main, y, family, weights, offset),
            LearnerSpec::GlmInteractions => {
                fit_basis(x, Basis::Interactions, y, family, weights, offset)
            }
            LearnerSpec::Ridge => fit_ridge_cv(x, y, family, weights, offset, seed),
        }?;
        fit.n_features = Some(x.ncols());
        Ok(fit)
    }
}

/// Standardization applied to expanded columns before a ridge penalty.
#[derive(Debug, Clone, PartialEq)]
struct Standardization {
    center: Vec<f64>,
    scale: Vec<f64>,
}

/// A fitted GLM-type learner. Prediction is a pure function of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLearner {
    pub family: Family,
    pub basis: Basis,
    pub coef: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    n_features: Option<usize>,
    standardization: Option<Standardization>,
}

impl FittedLearner {
    /// A learner with given coefficients on the raw (unstandardized) basis.
    pub fn from_coefficients(
        family: Family,
        basis: Basis,
        coef: Vec<f64>,
        n_features: Option<usize>,
    ) -> Self {
        FittedLearner {
            family,
            basis,
            coef,
            diagnostics: FitDiagnostics::closed_form(0.0),
            n_features,
            standardization: None,
        }
    }

    fn design(&self, x: &Matrix) -> Result<Matrix> {
        if let Some(p) = self.n_features {
            if x.ncols() != p {
                return Err(Error::argument(format!(
                    "feature dimension {} does not match training dimension {p}",
                    x.ncols()
                )));
            }
        }
        let mut d = self.basis.expand(x);
        if let Some(s) = &self.standardization {
            for i in 0..d.nrows() {
                for j in 1..d.ncols() {
                    let v = (d.get(i, j) - s.center[j]) / s.scale[j];
                    d.set(i, j, v);
                }
            }
        }
        if d.ncols() != self.coef.len() {
            return Err(Error::argument("design does not match coefficient count"));
        }
        Ok(d)
    }

    /// Linear predictor (without offset).
    pub fn linear_predictor(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.design(x)?.mul_vec(&self.coef))
    }

    /// Response-scale predictions; binomial predictions are clamped to `[δ, 1 − δ]`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_with_offset(x, None)
    }

    pub fn predict_with_offset(&self, x: &Matrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(x)?;
        if let Some(o) = offset {
            if o.len() != eta.len() {
                return Err(Error::argument("offset length does not match rows"));
            }
        }
        Ok(eta
            .iter()
            .enumerate()
            .map(|(i, e)| glm::response(self.family, e + offset.map_or(0.0, |o| o[i])))
            .collect())
    }
}

/// Fits a GLM on an explicit design matrix (no basis expansion, no intercept
/// added). The offset enters on the link scale.
pub fn fit_glm(
    features: &Matrix,
    response: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Result<FittedLearner> {
    let mut fit = fit_basis(features, Basis::Identity, response, family, weights, offset)?;
    fit.n_features = Some(features.ncols());
    Ok(fit)
}

fn fit_basis(
    x: &Matrix,
    basis: Basis,
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Result<FittedLearner> {
    let design = basis.expand(x);
    let fit = glm::irls(&design, y, family, weights, offset, None)?;
    Ok(FittedLearner {
        family,
        basis,
        coef: fit.coef,
        diagnostics: fit.diagnostics,
        n_features: Some(x.ncols()),
        standardization: None,
    })
}

fn fit_weighted_constant(y: &[f64], family: Family, weights: Option<&[f64]>) -> Result<FittedLearner> {
    if y.is_empty() {
        return Err(Error::argument("cannot fit a constant on an empty response"));
    }
    let m = match weights {
        None => mean(y),
        Some(w) => {
            if w.len() != y.len() {
                return Err(Error::argument("weights must have the response length"));
            }
            let sw: f64 = w.iter().sum();
            if !(sw > 0.0) {
                return Err(Error::argument("weights must have positive sum"));
            }
            y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
        }
    };
    if !m.is_finite() {
        return Err(Error::argument("response contains non-finite values"));
    }
    let coef = match family {
        Family::Gaussian => m,
        Family::Binomial => {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::argument("binomial response must lie in [0, 1]"));
            }
            logit(clamp_prob(m))
        }
    };
    let dev = y
        .iter()
        .map(|v| glm::unit_deviance(family, *v, glm::response(family, coef)))
        .sum();
    Ok(FittedLearner {
        family,
        basis: Basis::Intercept,
        coef: vec![coef],
        diagnostics: FitDiagnostics::closed_form(dev),
        n_features: None,
        standardization: None,
    })
}

/// Learner predicting the sample mean everywhere (clamped for binomial).
pub fn fit_constant_mean(response: &[f64], family: Family) -> Result<FittedLearner> {
    fit_weighted_constant(response, family, None)
}

/// Penalty grid (per-observation scale) searched by the ridge learner.
pub const RIDGE_GRID: [f64; 8] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
const RIDGE_INNER_FOLDS: usize = 3;

/// Ridge-penalized GLM on the standardized interaction basis at a fixed penalty.
pub fn fit_ridge(
    x: &Matrix,
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
    lambda: f64,
) -> Result<FittedLearner> {
    let raw = Basis::Interactions.expand(x);
    let (n, q) = (raw.nrows(), raw.ncols());
    let mut center = vec![0.0; q];
    let mut scale = vec![1.0; q];
    for j in 1..q {
        let col = raw.column(j);
        let m = mean(&col);
        let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n as f64;
        center[j] = m;
        scale[j] = if v > 1e-24 { libm::sqrt(v) } else { 1.0 };
    }
    let mut design = raw;
    for i in 0..n {
        for j in 1..q {
            let v = (design.get(i, j) - center[j]) / scale[j];
            design.set(i, j, v);
        }
    }
    let wsum: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let mut penalty = vec![lambda * wsum; q];
    penalty[0] = 0.0;
    let fit = glm::irls(&design, y, family, weights, offset, Some(&penalty))?;
    let mut diagnostics = fit.diagnostics;
    diagnostics.lambda = Some(lambda);
    Ok(FittedLearner {
        family,
        basis: Basis::Interactions,
        coef: fit.coef,
        diagnostics,
        n_features: Some(x.ncols()),
        standardization: Some(Standardization { center, scale }),
    })
}

fn fit_ridge_cv(
    x: &Matrix,
    y: &[f64],
    family: Family,
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
    seed: u64,
) -> Result<FittedLearner> {
    let n = x.nrows();
    let best = if n >= 2 * RIDGE_INNER_FOLDS {
        let folds = assign_folds_n(n, RIDGE_INNER_FOLDS, seed ^ 0x5eed_71d6e)?;
        let mut risks = [0.0_f64; RIDGE_GRID.len()];
        for f in 0..RIDGE_INNER_FOLDS {
            let (train, valid) = folds.split(f);
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let wt: Option<Vec<f64>> = weights.map(|w| train.iter().map(|&i| w[i]).collect());
            let ot: Option<Vec<f64>> = offset.map(|o| train.iter().map(|&i| o[i]).collect());
            let xv = x.select_rows(&valid);
            let ov: Option<Vec<f64>> = offset.map(|o| valid.iter().map(|&i| o[i]).collect());
            for (k, lambda) in RIDGE_GRID.iter().enumerate() {
                let risk = match fit_ridge(&xt, &yt, family, wt.as_deref(), ot.as_deref(), *lambda)
                    .and_then(|m| m.predict_with_offset(&xv, ov.as_deref()))
                {
                    Ok(pred) => valid
                        .iter()
                        .zip(&pred)
                        .map(|(&i, p)| weights.map_or(1.0, |w| w[i]) * family.loss(y[i], *p))
                        .sum::<f64>(),
                    Err(_) => f64::INFINITY,
                };
                risks[k] += risk;
            }
        }
        let mut best = 0;
        for k in 1..RIDGE_GRID.len() {
            if risks[k] < risks[best] {
                best = k;
            }
        }
        RIDGE_GRID[best]
    } else {
        1.0
    };
    fit_ridge(x, y, family, weights, offset, best)
}

/// Either a single fitted learner or a super learner ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Single(FittedLearner),
    Ensemble(SuperLearner),
}

impl Regressor {
    pub fn family(&self) -> Family {
        match self {
            Regressor::Single(l) => l.family,
            Regressor::Ensemble(s) => s.family,
        }
    }

    pub fn predict(&self, x: &Matrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Regressor::Single(l) => l.predict_with_offset(x, offset),
            Regressor::Ensemble(s) => s.predict_with_offset(x, offset),
        }
    }

    /// Whether every underlying IRLS fit converged.
    pub fn converged(&self) -> bool {
        match self {
            Regressor::Single(l) => l.diagnostics.converged,
            Regressor::Ensemble(s) => s.candidates().iter().all(|(_, l)| l.diagnostics.converged),
        }
    }
}

/// Library plus cross-validation settings for a nuisance regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub library: Vec<LearnerSpec>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            library: default_library(),
            cv_folds: 10,
            seed: 1,
        }
    }
}

/// `{constant, glm, glm_interactions, ridge}`.
pub fn default_library() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::Constant,
        LearnerSpec::Glm,
        LearnerSpec::GlmInteractions,
        LearnerSpec::Ridge,
    ]
}

impl LearnerConfig {
    pub fn single(spec: LearnerSpec) -> Self {
        LearnerConfig {
            library: vec![spec],
            ..LearnerConfig::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        LearnerConfig {
            seed,
            ..self.clone()
        }
    }

    /// Fits the configured regression. A one-candidate library is fitted
    /// directly; larger libraries go through the super learner.
    pub fn fit(
        &self,
        x: &Matrix,
        y: &[f64],
        family: Family,
        weights: Option<&[f64]>,
        offset: Option<&[f64]>,
    ) -> Result<Regressor> {
        match self.library.as_slice() {
            [] => Err(Error::argument("learner library is empty")),
            [only] => Ok(Regressor::Single(only.fit(x, y, family, weights, offset, self.seed)?)),
            lib => {
                let k = self.cv_folds.min(x.nrows());
                let folds = assign_folds_n(x.nrows(), k, self.seed)?;
                Ok(Regressor::Ensemble(fit_super_learner(
                    lib, x, y, family, &folds, weights, offset,
                )?))
            }
        }
    }
}

/// A regression bound to named dataset columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRegressor {
    pub covariates: Vec<String>,
    pub regressor: Regressor,
}

impl ColumnRegressor {
    /// Fits on the rows listed in `rows` (all rows when `None`).
    pub fn fit(
        config: &LearnerConfig,
        data: &Dataset,
        covariates: &[String],
        response: &[f64],
        family: Family,
        rows: Option<&[usize]>,
        weights: Option<&[f64]>,
        offset: Option<&[f64]>,
    ) -> Result<Self> {
        let (x, y, w, o) = match rows {
            None => (
                data.design(covariates)?,
                response.to_vec(),
                weights.map(|w| w.to_vec()),
                offset.map(|o| o.to_vec()),
            ),
            Some(r) => {
                let sub = data.subset(r)?;
                (
                    sub.design(covariates)?,
                    r.iter().map(|&i| response[i]).collect(),
                    weights.map(|w| r.iter().map(|&i| w[i]).collect()),
                    offset.map(|o| r.iter().map(|&i| o[i]).collect()),
                )
            }
        };
        let regressor = config.fit(&x, &y, family, w.as_deref(), o.as_deref())?;
        Ok(ColumnRegressor {
            covariates: covariates.to_vec(),
            regressor,
        })
    }

    pub fn predict(&self, data: &Dataset, offset: Option<&[f64]>) -> Result<Vec<f64>> {
        let x = data.design(&self.covariates)?;
        self.regressor.predict(&x, offset)
    }

    /// Predictions on a row subset (rows whose covariates are all observed).
    pub fn predict_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        let sub = data.subset(rows)?;
        self.predict(&sub, None)
    }
}

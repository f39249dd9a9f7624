//! Riesz representers: plug-in forms and loss-minimizing Riesz regression.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimands::{require_binary, HTransform};
use crate::func::RowFunction;
use crate::learners::{Basis, ColumnRegressor};
use crate::linalg::{solve_spd_ridged, Matrix};

/// Default lower bound applied to every plug-in denominator.
pub const DEFAULT_TRUNCATION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Plugin,
    RieszRegression,
}

/// Model for the phase-two sampling probability `π = P(Δ = 1 | V)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingModel {
    /// Everybody is sampled: `π ≡ 1`.
    Certain,
    /// `π` regressed on phase-one variables.
    Fitted(ColumnRegressor),
    /// Case-control design: `π = 1` when `Y = 1`, otherwise the model fitted
    /// among controls.
    CaseControl {
        outcome: String,
        controls: ColumnRegressor,
    },
}

impl SamplingModel {
    /// Predicted sampling probabilities.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            SamplingModel::Certain => Ok(vec![1.0; data.n()]),
            SamplingModel::Fitted(m) => m.predict(data, None),
            SamplingModel::CaseControl { outcome, controls } => {
                let y = data.values(outcome)?;
                let p = controls.predict(data, None)?;
                Ok(y.iter().zip(p).map(|(&y, p)| if y == 1.0 { 1.0 } else { p }).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepresenterKind {
    /// `1(A = a)/max(g_a, truncation)`; `propensity` predicts `P(A = 1 | ·)`.
    Indicator {
        treatment: String,
        a: f64,
        propensity: ColumnRegressor,
    },
    /// `1(Δ = 1)/max(π, truncation)`.
    TwoPhase {
        indicator: String,
        sampling: SamplingModel,
    },
    /// `p(M | A = a_ref, L)/max(p(M | A, L), truncation)`; `model` predicts
    /// `P(M = 1 | A, L)`.
    MediationRatio {
        mediator: String,
        treatment: String,
        a_ref: f64,
        model: ColumnRegressor,
    },
    /// `b(x)ᵀβ` for a fitted basis expansion.
    Regression {
        columns: Vec<String>,
        basis: Basis,
        coef: Vec<f64>,
    },
    Constant(f64),
}

/// A fitted Riesz representer `α_t`, evaluable on any dataset carrying the
/// columns it depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Representer {
    pub time: usize,
    pub provenance: Provenance,
    pub truncation: f64,
    pub kind: RepresenterKind,
}

impl Representer {
    pub fn constant(time: usize, value: f64) -> Self {
        Representer {
            time,
            provenance: Provenance::Plugin,
            truncation: DEFAULT_TRUNCATION,
            kind: RepresenterKind::Constant(value),
        }
    }

    /// Row values together with the number of truncated denominators.
    pub fn evaluate(&self, data: &Dataset) -> Result<(Vec<f64>, usize)> {
        let trunc = self.truncation;
        let mut truncated = 0;
        let mut guard = |d: f64| {
            if d < trunc {
                truncated += 1;
                trunc
            } else {
                d
            }
        };
        let values = match &self.kind {
            RepresenterKind::Constant(c) => vec![*c; data.n()],
            RepresenterKind::Indicator {
                treatment,
                a,
                propensity,
            } => {
                let obs = data.values(treatment)?;
                let p1 = propensity.predict(data, None)?;
                obs.iter()
                    .zip(p1)
                    .map(|(&ai, p)| {
                        let g = if *a == 1.0 { p } else { 1.0 - p };
                        let g = guard(g);
                        if ai == *a {
                            1.0 / g
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            RepresenterKind::TwoPhase {
                indicator,
                sampling,
            } => {
                let delta = data.values(indicator)?;
                let pi = sampling.predict(data)?;
                delta
                    .iter()
                    .zip(pi)
                    .map(|(&d, p)| {
                        let p = guard(p);
                        if d == 1.0 {
                            1.0 / p
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            RepresenterKind::MediationRatio {
                mediator,
                treatment,
                a_ref,
                model,
            } => {
                require_binary(data, mediator)?;
                let m = data.values(mediator)?;
                let p_obs = model.predict(data, None)?;
                let reference = data.with_overrides(&[(treatment.clone(), *a_ref)])?;
                let p_ref = model.predict(&reference, None)?;
                let dens = |m: f64, p: f64| m * p + (1.0 - m) * (1.0 - p);
                (0..data.n())
                    .map(|i| dens(m[i], p_ref[i]) / guard(dens(m[i], p_obs[i])))
                    .collect()
            }
            RepresenterKind::Regression {
                columns,
                basis,
                coef,
            } => basis.expand(&data.design(columns)?).mul_vec(coef),
        };
        Ok((values, truncated))
    }
}

impl RowFunction for Representer {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.evaluate(data)?.0)
    }
}

/// Plug-in indicator representer `1(A = a)/max(g_a, truncation)`.
pub fn plugin_indicator(
    propensity: ColumnRegressor,
    treatment: &str,
    a: f64,
    time: usize,
    truncation: f64,
) -> Representer {
    Representer {
        time,
        provenance: Provenance::Plugin,
        truncation,
        kind: RepresenterKind::Indicator {
            treatment: treatment.into(),
            a,
            propensity,
        },
    }
}

/// Plug-in two-phase representer `1(Δ = 1)/max(π, truncation)`.
pub fn plugin_two_phase(sampling: SamplingModel, indicator: &str, truncation: f64) -> Representer {
    Representer {
        time: 1,
        provenance: Provenance::Plugin,
        truncation,
        kind: RepresenterKind::TwoPhase {
            indicator: indicator.into(),
            sampling,
        },
    }
}

/// Plug-in binary-mediator density ratio.
pub fn plugin_mediation_ratio(
    model: ColumnRegressor,
    mediator: &str,
    treatment: &str,
    a_ref: f64,
    time: usize,
    truncation: f64,
) -> Representer {
    Representer {
        time,
        provenance: Provenance::Plugin,
        truncation,
        kind: RepresenterKind::MediationRatio {
            mediator: mediator.into(),
            treatment: treatment.into(),
            a_ref,
            model,
        },
    }
}

/// Empirical Riesz loss `P_n[α² − 2 h(·; α)]` of `α = bᵀβ`.
pub fn riesz_loss(b: &Matrix, hb: &Matrix, beta: &[f64]) -> f64 {
    let n = b.nrows() as f64;
    let a = b.mul_vec(beta);
    let h = hb.mul_vec(beta);
    a.iter().zip(&h).map(|(a, h)| a * a - 2.0 * h).sum::<f64>() / n
}

/// Minimizer of the empirical Riesz loss given the basis `b` and its image
/// `hb` under the functional: `β = G⁻¹v`, `G = P_n[bbᵀ]`, `v = P_n[h(·; b)]`.
/// Returns the coefficients and whether a ridge was needed.
pub fn riesz_coefficients(b: &Matrix, hb: &Matrix) -> Result<(Vec<f64>, bool)> {
    if b.nrows() != hb.nrows() || b.ncols() != hb.ncols() {
        return Err(Error::argument("basis and transformed basis differ in shape"));
    }
    let n = b.nrows() as f64;
    let ones = vec![1.0 / n; b.nrows()];
    let g = b.weighted_gram(&ones);
    let v: Vec<f64> = hb.tmul_vec(&ones);
    solve_spd_ridged(&g, &v)
}

/// Riesz regression over `basis(columns)` for the functional whose action on
/// a function is the transform `h`.
pub fn riesz_regression(
    data: &Dataset,
    columns: &[String],
    basis: Basis,
    h: &HTransform,
    time: usize,
) -> Result<Representer> {
    let b = basis.expand(&data.design(columns)?);
    let hb = basis.expand(&h.view(data)?.design(columns)?);
    riesz_regression_with_image(b, &hb, columns, basis, time)
}

/// Riesz regression when the image of each basis function under the
/// functional has been computed elsewhere (`hb[i, j] = h(O_i; b_j)`).
pub fn riesz_regression_with_image(
    b: Matrix,
    hb: &Matrix,
    columns: &[String],
    basis: Basis,
    time: usize,
) -> Result<Representer> {
    let (coef, _) = riesz_coefficients(&b, hb)?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::numerical("Riesz regression produced non-finite coefficients"));
    }
    Ok(Representer {
        time,
        provenance: Provenance::RieszRegression,
        truncation: DEFAULT_TRUNCATION,
        kind: RepresenterKind::Regression {
            columns: columns.to_vec(),
            basis,
            coef,
        },
    })
}

/// Row-wise running products `ω_t = Π_{k ≤ t} α_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeWeights {
    pub omega: Vec<Vec<f64>>,
}

pub fn cumulative_weights(alphas: &[Vec<f64>]) -> CumulativeWeights {
    let mut omega: Vec<Vec<f64>> = Vec::with_capacity(alphas.len());
    for a in alphas {
        let next = match omega.last() {
            None => a.clone(),
            Some(prev) => prev.iter().zip(a).map(|(p, a)| p * a).collect(),
        };
        omega.push(next);
    }
    CumulativeWeights { omega }
}

/// `ω_t` as a function: the product of its representer factors.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    pub factors: Vec<Arc<Representer>>,
}

impl WeightFunction {
    /// Values and total truncation count.
    pub fn evaluate(&self, data: &Dataset) -> Result<(Vec<f64>, usize)> {
        let mut out = vec![1.0; data.n()];
        let mut truncated = 0;
        for f in &self.factors {
            let (v, k) = f.evaluate(data)?;
            truncated += k;
            out.iter_mut().zip(v).for_each(|(o, v)| *o *= v);
        }
        Ok((out, truncated))
    }
}

impl RowFunction for WeightFunction {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.evaluate(data)?.0)
    }
}

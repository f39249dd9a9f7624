//! Two-phase sampling TMLE.
//!
//! The complete-data influence function is computed on the phase-two rows
//! (nuisances fitted with inverse sampling weights), regressed on the
//! phase-one variables, and the regression is fluctuated along the sampling
//! representer `1(Δ = 1)/π` with a linear link.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{fit_initial_bundle, EstimationOptions, NuisanceCache};
use crate::data::Dataset;
use crate::eif::{eif_two_phase_values, wald_with, Diagnostics, EstimateReport};
use crate::error::{Error, Result};
use crate::estimands::{ContrastKind, Estimand};
use crate::func::RowFunction;
use crate::learners::{fit_offset_1d, ColumnRegressor, Family};
use crate::math::mean;
use crate::riesz::{plugin_two_phase, SamplingModel};

/// How the sampling probabilities are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingDesign {
    /// Every case (`Y = 1`) is sampled; `P(Δ = 1 | V)` is fitted among controls.
    CaseControl,
    /// `P(Δ = 1 | V)` is fitted on all rows.
    Estimated,
}

/// Result of the two-phase TMLE.
pub struct TwoPhaseFit {
    pub report: EstimateReport,
    pub epsilon: f64,
    pub sampling: SamplingModel,
    /// Uncentered complete-data influence function, aligned with the rows
    /// (zero where `Δ = 0`).
    pub complete_uncentered: Vec<f64>,
    /// Observed-data regression before fluctuation, on every row.
    pub obs_regression: Vec<f64>,
}

struct Uncentered {
    values: Vec<f64>,
    psi: f64,
    diagnostics: Diagnostics,
}

fn weighted_mean(v: &[f64], w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    v.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / s
}

fn complete_data_eif(
    sub: &Dataset,
    estimand: &Estimand,
    opts: &EstimationOptions,
    w: &[f64],
    cache: &mut NuisanceCache,
) -> Result<Uncentered> {
    match estimand {
        Estimand::Single(spec) => {
            let bundle = fit_initial_bundle(sub, spec, opts, Some(w), cache)?;
            let (h1, terms) = bundle.terms(sub, false)?;
            let values: Vec<f64> = (0..sub.n())
                .map(|i| h1[i] + terms.iter().map(|t| t.omega[i] * (t.pseudo[i] - t.qbar[i])).sum::<f64>())
                .collect();
            let psi = weighted_mean(&values, w);
            Ok(Uncentered {
                values,
                psi,
                diagnostics: Diagnostics {
                    truncation_count: bundle.truncation_count,
                    learners_converged: bundle.learners_converged,
                    ..Diagnostics::default()
                },
            })
        }
        Estimand::Contrast { kind, first, second } => {
            let a = complete_data_eif(sub, first, opts, w, cache)?;
            let b = complete_data_eif(sub, second, opts, w, cache)?;
            let (values, psi) = match kind {
                ContrastKind::Difference => (
                    a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
                    a.psi - b.psi,
                ),
                ContrastKind::Ratio => {
                    if libm::fabs(b.psi) < 1e-12 {
                        return Err(Error::numerical("ratio contrast with a zero denominator"));
                    }
                    let (p1, p2) = (a.psi, b.psi);
                    (
                        a.values
                            .iter()
                            .zip(&b.values)
                            .map(|(x, y)| p1 / p2 + (x - p1) / p2 - p1 * (y - p2) / (p2 * p2))
                            .collect(),
                        p1 / p2,
                    )
                }
            };
            Ok(Uncentered {
                values,
                psi,
                diagnostics: Diagnostics {
                    truncation_count: a.diagnostics.truncation_count + b.diagnostics.truncation_count,
                    learners_converged: a.diagnostics.learners_converged && b.diagnostics.learners_converged,
                    ..Diagnostics::default()
                },
            })
        }
    }
}

/// Fits `P(Δ = 1 | V)` according to the design.
pub fn fit_sampling_model(
    data: &Dataset,
    phase_one: &[String],
    design: SamplingDesign,
    opts: &EstimationOptions,
) -> Result<SamplingModel> {
    let name = data
        .schema()
        .sampling_indicator()
        .ok_or_else(|| Error::argument("two-phase estimation needs a sampling indicator column"))?;
    let delta = data.values(name)?;
    if delta.iter().all(|d| *d == 1.0) {
        return Ok(SamplingModel::Certain);
    }
    let config = &opts.learners.propensity;
    match design {
        SamplingDesign::Estimated => Ok(SamplingModel::Fitted(ColumnRegressor::fit(
            config,
            data,
            phase_one,
            delta,
            Family::Binomial,
            None,
            None,
            None,
        )?)),
        SamplingDesign::CaseControl => {
            let outcome = data.outcome_name();
            let y = data.outcome();
            if y.iter().zip(delta).any(|(y, d)| *y == 1.0 && *d == 0.0) {
                return Err(Error::argument(
                    "case-control design requires every row with Y = 1 to be sampled",
                ));
            }
            let controls: Vec<usize> = (0..data.n()).filter(|&i| y[i] != 1.0).collect();
            let covariates: Vec<String> = phase_one.iter().filter(|c| *c != outcome).cloned().collect();
            let model = ColumnRegressor::fit(
                config,
                data,
                &covariates,
                delta,
                Family::Binomial,
                Some(&controls),
                None,
                None,
            )?;
            Ok(SamplingModel::CaseControl {
                outcome: outcome.into(),
                controls: model,
            })
        }
    }
}

/// Two-phase sampling TMLE of a complete-data estimand.
pub fn two_phase_tmle(data: &Dataset, estimand: &Estimand, opts: &EstimationOptions) -> Result<TwoPhaseFit> {
    let name = data
        .schema()
        .sampling_indicator()
        .ok_or_else(|| Error::argument("two-phase estimation needs a sampling indicator column"))?
        .to_string();
    let delta = data.values(&name)?.to_vec();
    let cases: Vec<usize> = (0..data.n()).filter(|&i| delta[i] == 1.0).collect();
    if cases.is_empty() {
        return Err(Error::argument("no phase-two rows (Δ = 1)"));
    }
    // Phase-one variables: fully observed columns other than Δ.
    let phase_one: Vec<String> = data
        .columns()
        .iter()
        .filter(|c| c.name != name && !c.is_phase_two())
        .map(|c| c.name.clone())
        .collect();
    let sampling = fit_sampling_model(data, &phase_one, opts.sampling, opts)?;
    let alpha = plugin_two_phase(sampling.clone(), &name, opts.riesz.truncation);
    let (alpha_obs, truncated) = alpha.evaluate(data)?;
    let sampled = data.with_overrides(&[(name.clone(), 1.0)])?;
    let alpha_sampled = alpha.eval(&sampled)?;

    let sub = data.subset(&cases)?;
    let ipw: Vec<f64> = cases.iter().map(|&i| alpha_obs[i]).collect();
    let mut cache = NuisanceCache::default();
    let complete = complete_data_eif(&sub, estimand, opts, &ipw, &mut cache)?;
    let mut phi_uc = vec![0.0; data.n()];
    for (k, &i) in cases.iter().enumerate() {
        phi_uc[i] = complete.values[k];
    }

    let q_obs = ColumnRegressor::fit(
        &opts.learners.outcome,
        data,
        &phase_one,
        &phi_uc,
        Family::Gaussian,
        Some(&cases),
        None,
        None,
    )?;
    let q = q_obs.predict(data, None)?;
    let x: Vec<f64> = cases.iter().map(|&i| alpha_obs[i]).collect();
    let off: Vec<f64> = cases.iter().map(|&i| q[i]).collect();
    let (epsilon, diag) = fit_offset_1d(&x, &complete.values, Family::Gaussian, None, &off)?;
    let q_star: Vec<f64> = (0..data.n()).map(|i| q[i] + epsilon * alpha_sampled[i]).collect();
    let psi = mean(&q_star);
    let eif = eif_two_phase_values(&delta, &phi_uc, &q_star, &alpha_obs, psi);
    let mut diagnostics = complete.diagnostics;
    diagnostics.epsilons = vec![epsilon];
    diagnostics.truncation_count += truncated;
    diagnostics.learners_converged &= diag.converged && q_obs.regressor.converged();
    diagnostics.passes = 1;
    if cases.len() == data.n() {
        diagnostics
            .warnings
            .push(format!("no rows with {name} = 0; the estimate reduces to the complete-data one"));
    }
    let _ = complete.psi;
    let report = wald_with(eif, psi, opts.level, diagnostics)?;
    Ok(TwoPhaseFit {
        report,
        epsilon,
        sampling,
        complete_uncentered: phi_uc,
        obs_regression: q,
    })
}

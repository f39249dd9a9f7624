//! Sequentially doubly robust Riesz TMLE.
//!
//! For each level `t = T, …, 1` the pseudo-outcome is first regressed on the
//! level's history (`s = t`, empty weight product). For `s = t − 1, …, 1` the
//! current fit is used as a link-scale offset in a regression on the history
//! of level `s`, weighted by `Π_{u=s+1}^t α_u`; each fitted function is a
//! fluctuation `ε_t^s(H_s)`. A final one-dimensional fluctuation along `ω_t`
//! solves the level's score equation exactly, so a single level reproduces
//! the Riesz TMLE.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::fluctuation::{family_of, link_offset, regression_response, FluctuatedLevel, InitialLevel, OffsetUpdatedLevel};
use super::{
    fit_epsilon, fit_level, fit_weights, outcome_scaling, targeted_report, EstimationOptions, FitBundle, LevelFit,
    NuisanceCache,
};
use crate::data::Dataset;
use crate::eif::EstimateReport;
use crate::error::{Error, Result};
use crate::estimands::EstimandSpec;
use crate::func::RowFunction;
use crate::learners::ColumnRegressor;

/// Sequentially doubly robust Riesz TMLE of a treatment-regime functional.
pub fn sdr_riesz_tmle(data: &Dataset, spec: &EstimandSpec, opts: &EstimationOptions) -> Result<EstimateReport> {
    sdr_with_cache(data, spec, opts, &mut NuisanceCache::default())
}

pub(crate) fn sdr_with_cache(
    data: &Dataset,
    spec: &EstimandSpec,
    opts: &EstimationOptions,
    cache: &mut NuisanceCache,
) -> Result<EstimateReport> {
    let bundle = sdr_fit(data, spec, opts, cache)?;
    targeted_report(&bundle, data, opts.level)
}

pub(crate) fn sdr_fit(
    data: &Dataset,
    spec: &EstimandSpec,
    opts: &EstimationOptions,
    cache: &mut NuisanceCache,
) -> Result<FitBundle> {
    spec.validate(data)?;
    let horizon = spec.horizon();
    if horizon > 1 && !spec.is_product_structured() {
        return Err(Error::argument(
            "the sequentially doubly robust TMLE needs one representer factor per level",
        ));
    }
    if horizon > 1 && opts.riesz.mode != super::RieszMode::Plugin {
        return Err(Error::argument(
            "the sequentially doubly robust TMLE needs plug-in representers for each level",
        ));
    }
    let (representers, weights, truncation_count) = fit_weights(data, spec, opts, None, cache)?;
    // Per-level factors α_u, evaluated once on the observed rows.
    let alphas: Vec<Vec<f64>> = if horizon > 1 {
        representers.iter().map(|r| r.eval(data)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut levels: Vec<Option<LevelFit>> = vec![None; horizon];
    let mut pseudo = data.outcome().to_vec();
    let mut converged = true;
    let mut warnings = Vec::new();
    for idx in (0..horizon).rev() {
        let level = &spec.levels[idx];
        let (scaling, link) = outcome_scaling(data, spec, idx);
        let config = opts.learners.outcome_for(idx + 1);
        let reg = fit_level(data, config, &level.covariates, &pseudo, scaling, link, None)?;
        converged &= reg.regressor.converged();
        let initial: Arc<dyn RowFunction> = Arc::new(InitialLevel {
            regressor: reg,
            scaling,
            link,
        });
        let mut current = initial.clone();
        let y: Vec<f64> = pseudo.iter().map(|&v| regression_response(v, scaling, link)).collect();
        for s in (0..idx).rev() {
            // Π_{u=s+1}^{t} α_u with levels counted from zero.
            let mut w = vec![1.0; data.n()];
            for a in &alphas[s + 1..=idx] {
                w.iter_mut().zip(a).for_each(|(w, a)| *w *= a);
            }
            if w.iter().all(|v| *v == 0.0) {
                warnings.push(format!("level {}: zero weights at step {}", idx + 1, s + 1));
                continue;
            }
            let off: Vec<f64> = current
                .eval(data)?
                .iter()
                .map(|&q| link_offset(q, scaling, link))
                .collect();
            let fluct = ColumnRegressor::fit(
                opts.learners.fluctuation(),
                data,
                &spec.levels[s].covariates,
                &y,
                family_of(link),
                None,
                Some(&w),
                Some(&off),
            )?;
            converged &= fluct.regressor.converged();
            current = Arc::new(OffsetUpdatedLevel {
                base: current,
                regressor: fluct,
                scaling,
                link,
            });
        }
        let q = current.eval(data)?;
        let omega = weights[idx].eval(data)?;
        let (eps, diag) = fit_epsilon(&pseudo, &q, &omega, scaling, link, None)?;
        current = Arc::new(FluctuatedLevel {
            base: current,
            covariate: weights[idx].clone(),
            epsilon: eps,
            scaling,
            link,
        });
        pseudo = level.transform.apply(current.as_ref(), data)?;
        levels[idx] = Some(LevelFit {
            initial,
            current,
            scaling,
            link,
            epsilons: vec![eps],
            converged: diag.converged,
        });
    }
    Ok(FitBundle {
        spec: spec.clone(),
        levels: levels.into_iter().map(|l| l.expect("filled")).collect(),
        representers,
        weights,
        truncation_count,
        learners_converged: converged,
        passes: 1,
        warnings,
    })
}

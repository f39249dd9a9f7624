//! Estimator drivers: plug-in, one-step, Riesz TMLE, sequentially doubly
//! robust Riesz TMLE and two-phase sampling TMLE.

mod fluctuation;
mod sdr;
mod two_phase;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

pub use fluctuation::{fit_epsilon, FluctuatedLevel, InitialLevel, OffsetUpdatedLevel, Scaling};
pub use sdr::sdr_riesz_tmle;
pub use two_phase::{two_phase_tmle, SamplingDesign, TwoPhaseFit};

use crate::data::Dataset;
use crate::eif::{contrast, eif_sequential_values, wald_with, Diagnostics, EifVector, EstimateReport, LevelTerm};
use crate::error::{Error, Result};
use crate::estimands::{Estimand, EstimandSpec, FluctuationLink, RepresenterRecipe};
use crate::func::RowFunction;
use crate::learners::{Basis, ColumnRegressor, Family, LearnerConfig, LearnerSpec};
use crate::linalg::{solve_spd_ridged, Matrix};
use crate::math::mean;
use crate::riesz::{
    plugin_indicator, plugin_mediation_ratio, riesz_regression_with_image, Representer, WeightFunction,
    DEFAULT_TRUNCATION,
};

use fluctuation::{family_of, regression_response};

/// How representers are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RieszMode {
    /// Plug-in forms; `ω_t` as explicit products.
    Plugin,
    /// Loss-minimizing Riesz regression estimating each `ω_t` directly.
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszSettings {
    pub mode: RieszMode,
    pub truncation: f64,
    /// Basis of the Riesz regression.
    pub basis: Basis,
}

impl Default for RieszSettings {
    fn default() -> Self {
        RieszSettings {
            mode: RieszMode::Plugin,
            truncation: DEFAULT_TRUNCATION,
            basis: Basis::Interactions,
        }
    }
}

/// Learners for each nuisance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearnerSettings {
    /// Outcome regressions `Q̄_t`.
    pub outcome: LearnerConfig,
    /// Propensity, mediator and sampling models.
    pub propensity: LearnerConfig,
    /// Learner for the functional fluctuations of the sequentially doubly
    /// robust TMLE; defaults to the outcome learner.
    pub fluctuation: Option<LearnerConfig>,
    /// Per-level outcome learner overrides `(t, learner)`, `t` counted from 1.
    pub outcome_overrides: Vec<(usize, LearnerConfig)>,
}

impl LearnerSettings {
    pub fn outcome_for(&self, t: usize) -> &LearnerConfig {
        self.outcome_overrides
            .iter()
            .find(|(k, _)| *k == t)
            .map_or(&self.outcome, |(_, c)| c)
    }

    pub fn fluctuation(&self) -> &LearnerConfig {
        self.fluctuation.as_ref().unwrap_or(&self.outcome)
    }

    /// Same settings with every learner seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        LearnerSettings {
            outcome: self.outcome.with_seed(seed),
            propensity: self.propensity.with_seed(seed),
            fluctuation: self.fluctuation.as_ref().map(|c| c.with_seed(seed)),
            outcome_overrides: self
                .outcome_overrides
                .iter()
                .map(|(t, c)| (*t, c.with_seed(seed)))
                .collect(),
        }
    }

    /// Constant-mean learner in place of `library`.
    pub fn constant() -> LearnerConfig {
        LearnerConfig::single(LearnerSpec::Constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetingSettings {
    /// Repeat targeting passes until the score criterion holds.
    pub iterate: bool,
    pub max_passes: usize,
}

impl Default for TargetingSettings {
    fn default() -> Self {
        TargetingSettings {
            iterate: false,
            max_passes: 10,
        }
    }
}

/// Everything an estimator run needs besides the data and the estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptions {
    pub learners: LearnerSettings,
    pub riesz: RieszSettings,
    pub targeting: TargetingSettings,
    pub sampling: SamplingDesign,
    /// Confidence level of the Wald interval.
    pub level: f64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            learners: LearnerSettings::default(),
            riesz: RieszSettings::default(),
            targeting: TargetingSettings::default(),
            sampling: SamplingDesign::CaseControl,
            level: 0.95,
        }
    }
}

/// Score criterion `|P_n φ| ≤ 1e-6 · max(sd(φ), 1e-12)`.
pub fn score_solved(eif: &EifVector) -> bool {
    libm::fabs(eif.mean()) <= 1e-6 * eif.sd().max(1e-12)
}

/// Estimator selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorKind {
    Plugin,
    OneStep,
    Tmle,
    SdrTmle,
    TwoPhaseTmle,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "plugin" => EstimatorKind::Plugin,
            "onestep" => EstimatorKind::OneStep,
            "tmle" => EstimatorKind::Tmle,
            "sdr_tmle" => EstimatorKind::SdrTmle,
            "two_phase_tmle" => EstimatorKind::TwoPhaseTmle,
            _ => return Err(Error::argument(format!("unknown estimator `{s}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Plugin => "plugin",
            EstimatorKind::OneStep => "onestep",
            EstimatorKind::Tmle => "tmle",
            EstimatorKind::SdrTmle => "sdr_tmle",
            EstimatorKind::TwoPhaseTmle => "two_phase_tmle",
        }
    }
}

/// A fitted level `Q̄_t`.
#[derive(Clone)]
pub struct LevelFit {
    pub initial: Arc<dyn RowFunction>,
    /// Targeted function (equal to `initial` before targeting).
    pub current: Arc<dyn RowFunction>,
    pub scaling: Scaling,
    pub link: FluctuationLink,
    /// One coefficient per targeting pass.
    pub epsilons: Vec<f64>,
    pub converged: bool,
}

/// Fitted nuisances of one estimand: regressions, representers, weights.
#[derive(Clone)]
pub struct FitBundle {
    pub spec: EstimandSpec,
    /// Levels, outermost first.
    pub levels: Vec<LevelFit>,
    pub representers: Vec<Arc<Representer>>,
    /// `ω_t` per level, outermost first.
    pub weights: Vec<Arc<WeightFunction>>,
    pub truncation_count: usize,
    pub learners_converged: bool,
    pub passes: usize,
    pub warnings: Vec<String>,
}

impl FitBundle {
    /// `h_1(Q̄_1)` and the per-level residual terms, using the initial or the
    /// targeted regressions.
    pub fn terms(&self, data: &Dataset, targeted: bool) -> Result<(Vec<f64>, Vec<LevelTerm>)> {
        let horizon = self.levels.len();
        if horizon != self.spec.horizon() || self.weights.len() != horizon {
            return Err(Error::argument("bundle and estimand disagree on the number of levels"));
        }
        let mut pseudo = data.outcome().to_vec();
        let mut terms = vec![None; horizon];
        for idx in (0..horizon).rev() {
            let f = if targeted {
                &self.levels[idx].current
            } else {
                &self.levels[idx].initial
            };
            let qbar = f.eval(data)?;
            let omega = self.weights[idx].eval(data)?;
            let next = self.spec.levels[idx].transform.apply(f.as_ref(), data)?;
            terms[idx] = Some(LevelTerm {
                omega,
                pseudo: core::mem::replace(&mut pseudo, next),
                qbar,
            });
        }
        Ok((pseudo, terms.into_iter().map(|t| t.expect("filled")).collect()))
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            score_residual: 0.0,
            epsilons: self.levels.iter().flat_map(|l| l.epsilons.iter().copied()).collect(),
            truncation_count: self.truncation_count,
            learners_converged: self.learners_converged && self.levels.iter().all(|l| l.converged),
            passes: self.passes,
            degenerate: false,
            warnings: self.warnings.clone(),
        }
    }
}

/// Fitted nuisances shared between the estimands of one run (for example
/// the propensity score of both arms of an ATE).
#[derive(Default)]
pub struct NuisanceCache {
    regressors: BTreeMap<String, ColumnRegressor>,
}

impl NuisanceCache {
    fn get_or_fit(
        &mut self,
        key: String,
        fit: impl FnOnce() -> Result<ColumnRegressor>,
    ) -> Result<ColumnRegressor> {
        if let Some(r) = self.regressors.get(&key) {
            return Ok(r.clone());
        }
        let r = fit()?;
        self.regressors.insert(key, r.clone());
        Ok(r)
    }
}

/// Fits the representer factors and the weight function of every level.
pub(crate) fn fit_weights(
    data: &Dataset,
    spec: &EstimandSpec,
    opts: &EstimationOptions,
    row_weights: Option<&[f64]>,
    cache: &mut NuisanceCache,
) -> Result<(Vec<Arc<Representer>>, Vec<Arc<WeightFunction>>, usize)> {
    let trunc = opts.riesz.truncation;
    if !(trunc > 0.0 && trunc < 0.5) {
        return Err(Error::argument("riesz truncation must lie in (0, 0.5)"));
    }
    let prop = &opts.learners.propensity;
    let mut reps = Vec::with_capacity(spec.representers.len());
    if opts.riesz.mode == RieszMode::Plugin {
        for recipe in &spec.representers {
            let rep = match recipe {
                RepresenterRecipe::Indicator {
                    time,
                    treatment,
                    a,
                    history,
                } => {
                    let key = format!("prop|{treatment}|{history:?}|{prop:?}");
                    let model = cache.get_or_fit(key, || {
                        ColumnRegressor::fit(
                            prop,
                            data,
                            history,
                            data.values(treatment)?,
                            Family::Binomial,
                            None,
                            row_weights,
                            None,
                        )
                    })?;
                    plugin_indicator(model, treatment, *a, *time, trunc)
                }
                RepresenterRecipe::MediationRatio {
                    time,
                    mediator,
                    treatment,
                    a_ref,
                    covariates,
                } => {
                    let key = format!("med|{mediator}|{covariates:?}|{prop:?}");
                    let model = cache.get_or_fit(key, || {
                        ColumnRegressor::fit(
                            prop,
                            data,
                            covariates,
                            data.values(mediator)?,
                            Family::Binomial,
                            None,
                            row_weights,
                            None,
                        )
                    })?;
                    plugin_mediation_ratio(model, mediator, treatment, *a_ref, *time, trunc)
                }
            };
            reps.push(Arc::new(rep));
        }
    }
    let mut truncated = 0;
    let mut weights = Vec::with_capacity(spec.horizon());
    for (idx, level) in spec.levels.iter().enumerate() {
        let w = match opts.riesz.mode {
            RieszMode::Plugin => WeightFunction {
                factors: level.weight_factors.iter().map(|&k| reps[k].clone()).collect(),
            },
            RieszMode::Regression => {
                let rep = direct_weight(data, spec, idx, opts.riesz.basis, row_weights)?;
                WeightFunction {
                    factors: vec![Arc::new(rep)],
                }
            }
        };
        truncated += w.evaluate(data)?.1;
        weights.push(Arc::new(w));
    }
    Ok((reps, weights, truncated))
}

/// Riesz regression for `ω_t` directly: the image of each basis function
/// under the functional is computed by pushing it through `h_t` and the
/// least-squares projections onto the earlier conditioning sets.
fn direct_weight(
    data: &Dataset,
    spec: &EstimandSpec,
    idx: usize,
    basis: Basis,
    row_weights: Option<&[f64]>,
) -> Result<Representer> {
    let level = &spec.levels[idx];
    let b = basis.expand(&data.design(&level.covariates)?);
    let mut image = basis.expand(&level.transform.view(data)?.design(&level.covariates)?);
    let w = row_weights.map_or_else(|| vec![1.0; data.n()], |w| w.to_vec());
    for s in (0..idx).rev() {
        let cov = &spec.levels[s].covariates;
        let x = basis.expand(&data.design(cov)?);
        let xh = basis.expand(&spec.levels[s].transform.view(data)?.design(cov)?);
        let gram = x.weighted_gram(&w);
        let mut next = Matrix::zeros(data.n(), image.ncols());
        for j in 0..image.ncols() {
            let col: Vec<f64> = (0..data.n()).map(|i| w[i] * image.get(i, j)).collect();
            let (coef, _) = solve_spd_ridged(&gram, &x.tmul_vec(&col))?;
            let proj = xh.mul_vec(&coef);
            for i in 0..data.n() {
                next.set(i, j, proj[i]);
            }
        }
        image = next;
    }
    if let Some(w) = row_weights {
        // Weighted empirical measure: G = P_n[w b bᵀ], v = P_n[w h(b)].
        let mut bw = b.clone();
        let mut iw = image.clone();
        for i in 0..data.n() {
            let r = libm::sqrt(w[i]);
            for j in 0..b.ncols() {
                bw.set(i, j, b.get(i, j) * r);
                iw.set(i, j, image.get(i, j) * w[i]);
            }
        }
        return riesz_regression_with_image(bw, &iw, &level.covariates, basis, idx + 1);
    }
    riesz_regression_with_image(b, &image, &level.covariates, basis, idx + 1)
}

/// Scaling bounds and link shared by every level of a spec.
pub(crate) fn outcome_scaling(data: &Dataset, spec: &EstimandSpec, idx: usize) -> (Scaling, FluctuationLink) {
    let s = Scaling::from_values(data.outcome());
    match spec.levels[idx].link {
        FluctuationLink::Logit if !s.is_degenerate() => (s, FluctuationLink::Logit),
        _ => (Scaling::UNIT, FluctuationLink::Identity),
    }
}

/// Fits one initial regression of `pseudo` on the level's covariates.
pub(crate) fn fit_level(
    data: &Dataset,
    config: &LearnerConfig,
    covariates: &[String],
    pseudo: &[f64],
    scaling: Scaling,
    link: FluctuationLink,
    row_weights: Option<&[f64]>,
) -> Result<ColumnRegressor> {
    let y: Vec<f64> = pseudo.iter().map(|&v| regression_response(v, scaling, link)).collect();
    ColumnRegressor::fit(config, data, covariates, &y, family_of(link), None, row_weights, None)
}

/// Fits every nuisance of `spec`: the sequential regressions `Q̄_T, …, Q̄_1`
/// (each on the untargeted pseudo-outcome of the level above) and the
/// representers.
pub fn fit_initial_bundle(
    data: &Dataset,
    spec: &EstimandSpec,
    opts: &EstimationOptions,
    row_weights: Option<&[f64]>,
    cache: &mut NuisanceCache,
) -> Result<FitBundle> {
    spec.validate(data)?;
    let (representers, weights, truncation_count) = fit_weights(data, spec, opts, row_weights, cache)?;
    let horizon = spec.horizon();
    let mut levels: Vec<Option<LevelFit>> = vec![None; horizon];
    let mut pseudo = data.outcome().to_vec();
    let mut converged = true;
    for idx in (0..horizon).rev() {
        let level = &spec.levels[idx];
        let (scaling, link) = outcome_scaling(data, spec, idx);
        let config = opts.learners.outcome_for(idx + 1);
        let below: Vec<_> = spec.levels[idx + 1..]
            .iter()
            .map(|l| (&l.covariates, &l.transform))
            .collect();
        let key = format!("outcome|{:?}|{below:?}|{config:?}|{link:?}", level.covariates);
        let reg = cache.get_or_fit(key, || {
            fit_level(data, config, &level.covariates, &pseudo, scaling, link, row_weights)
        })?;
        converged &= reg.regressor.converged();
        let f: Arc<dyn RowFunction> = Arc::new(InitialLevel {
            regressor: reg,
            scaling,
            link,
        });
        pseudo = level.transform.apply(f.as_ref(), data)?;
        levels[idx] = Some(LevelFit {
            initial: f.clone(),
            current: f,
            scaling,
            link,
            epsilons: Vec::new(),
            converged: true,
        });
    }
    Ok(FitBundle {
        spec: spec.clone(),
        levels: levels.into_iter().map(|l| l.expect("filled")).collect(),
        representers,
        weights,
        truncation_count,
        learners_converged: converged,
        passes: 0,
        warnings: Vec::new(),
    })
}

/// Substitution estimate `P_n[h_1(·; Q̄_1)]` from the initial regression.
pub fn plugin_estimate(bundle: &FitBundle, data: &Dataset) -> Result<f64> {
    let q1 = &bundle.levels.first().ok_or_else(|| Error::argument("empty bundle"))?.initial;
    Ok(mean(&bundle.spec.levels[0].transform.apply(q1.as_ref(), data)?))
}

fn residual_correction(terms: &[LevelTerm]) -> f64 {
    terms
        .iter()
        .map(|t| mean(&t.omega.iter().zip(&t.pseudo).zip(&t.qbar).map(|((w, p), q)| w * (p - q)).collect::<Vec<_>>()))
        .sum()
}

/// Plug-in estimate reported with the influence function of the initial fit.
pub fn plugin_report(bundle: &FitBundle, data: &Dataset, level: f64) -> Result<EstimateReport> {
    let (h1, terms) = bundle.terms(data, false)?;
    let psi = mean(&h1);
    let eif = eif_sequential_values(&h1, &terms, psi);
    wald_with(eif, psi, level, bundle.diagnostics())
}

/// One-step estimator: plug-in plus the mean of the residual terms.
pub fn one_step(bundle: &FitBundle, data: &Dataset, level: f64) -> Result<EstimateReport> {
    let (h1, terms) = bundle.terms(data, false)?;
    let psi = mean(&h1) + residual_correction(&terms);
    let eif = eif_sequential_values(&h1, &terms, psi);
    wald_with(eif, psi, level, bundle.diagnostics())
}

/// Targets every level `t = T, …, 1` of the bundle with a one-dimensional
/// fluctuation whose clever covariate is `ω_t`. Optionally repeats passes
/// until the score criterion holds.
pub fn target_bundle(
    bundle: &mut FitBundle,
    data: &Dataset,
    targeting: &TargetingSettings,
    row_weights: Option<&[f64]>,
) -> Result<()> {
    let passes = if targeting.iterate {
        targeting.max_passes.clamp(1, 10)
    } else {
        1
    };
    for _ in 0..passes {
        let mut pseudo = data.outcome().to_vec();
        for idx in (0..bundle.levels.len()).rev() {
            let weight = bundle.weights[idx].clone();
            let lvl = &mut bundle.levels[idx];
            let q = lvl.current.eval(data)?;
            let omega = weight.eval(data)?;
            let (eps, diag) = fit_epsilon(&pseudo, &q, &omega, lvl.scaling, lvl.link, row_weights)?;
            lvl.converged &= diag.converged;
            lvl.epsilons.push(eps);
            lvl.current = Arc::new(FluctuatedLevel {
                base: lvl.current.clone(),
                covariate: weight,
                epsilon: eps,
                scaling: lvl.scaling,
                link: lvl.link,
            });
            pseudo = bundle.spec.levels[idx].transform.apply(lvl.current.as_ref(), data)?;
        }
        bundle.passes += 1;
        let (h1, terms) = bundle.terms(data, true)?;
        let eif = eif_sequential_values(&h1, &terms, mean(&h1));
        if score_solved(&eif) {
            return Ok(());
        }
    }
    if targeting.iterate {
        bundle
            .warnings
            .push(format!("score equation not solved after {} passes", bundle.passes));
    }
    Ok(())
}

/// Report of a targeted bundle: `ψ = P_n[h_1(Q̄*_1)]`.
pub fn targeted_report(bundle: &FitBundle, data: &Dataset, level: f64) -> Result<EstimateReport> {
    let (h1, terms) = bundle.terms(data, true)?;
    let psi = mean(&h1);
    let eif = eif_sequential_values(&h1, &terms, psi);
    wald_with(eif, psi, level, bundle.diagnostics())
}

/// Riesz TMLE, returning the targeted bundle as well.
pub fn riesz_tmle_fit(
    data: &Dataset,
    spec: &EstimandSpec,
    opts: &EstimationOptions,
) -> Result<(EstimateReport, FitBundle)> {
    let mut cache = NuisanceCache::default();
    let mut bundle = fit_initial_bundle(data, spec, opts, None, &mut cache)?;
    target_bundle(&mut bundle, data, &opts.targeting, None)?;
    Ok((targeted_report(&bundle, data, opts.level)?, bundle))
}

/// Riesz TMLE of a single nested functional.
pub fn riesz_tmle(data: &Dataset, spec: &EstimandSpec, opts: &EstimationOptions) -> Result<EstimateReport> {
    Ok(riesz_tmle_fit(data, spec, opts)?.0)
}

fn estimate_single(
    data: &Dataset,
    spec: &EstimandSpec,
    kind: EstimatorKind,
    opts: &EstimationOptions,
    cache: &mut NuisanceCache,
) -> Result<EstimateReport> {
    match kind {
        EstimatorKind::SdrTmle => sdr::sdr_with_cache(data, spec, opts, cache),
        EstimatorKind::TwoPhaseTmle => two_phase_tmle(data, &Estimand::Single(spec.clone()), opts).map(|f| f.report),
        _ => {
            let mut bundle = fit_initial_bundle(data, spec, opts, None, cache)?;
            match kind {
                EstimatorKind::Plugin => plugin_report(&bundle, data, opts.level),
                EstimatorKind::OneStep => one_step(&bundle, data, opts.level),
                _ => {
                    target_bundle(&mut bundle, data, &opts.targeting, None)?;
                    targeted_report(&bundle, data, opts.level)
                }
            }
        }
    }
}

fn estimate_cached(
    data: &Dataset,
    estimand: &Estimand,
    kind: EstimatorKind,
    opts: &EstimationOptions,
    cache: &mut NuisanceCache,
) -> Result<EstimateReport> {
    match estimand {
        Estimand::Single(spec) => estimate_single(data, spec, kind, opts, cache),
        Estimand::Contrast { kind: ck, first, second } => {
            let a = estimate_cached(data, first, kind, opts, cache)?;
            let b = estimate_cached(data, second, kind, opts, cache)?;
            contrast(&a, &b, *ck)
        }
    }
}

/// Runs one estimator on an estimand (contrasts are combined by the delta
/// method, sharing nuisance fits between their parts).
pub fn estimate(
    data: &Dataset,
    estimand: &Estimand,
    kind: EstimatorKind,
    opts: &EstimationOptions,
) -> Result<EstimateReport> {
    if kind == EstimatorKind::TwoPhaseTmle {
        return two_phase_tmle(data, estimand, opts).map(|f| f.report);
    }
    estimate_cached(data, estimand, kind, opts, &mut NuisanceCache::default())
}

/// Runs several estimators on the same data, sharing nuisance fits.
pub fn estimate_many(
    data: &Dataset,
    estimand: &Estimand,
    kinds: &[EstimatorKind],
    opts: &EstimationOptions,
) -> Vec<Result<EstimateReport>> {
    let mut cache = NuisanceCache::default();
    kinds
        .iter()
        .map(|&k| {
            if k == EstimatorKind::TwoPhaseTmle {
                two_phase_tmle(data, estimand, opts).map(|f| f.report)
            } else {
                estimate_cached(data, estimand, k, opts, &mut cache)
            }
        })
        .collect()
}

//! Monte Carlo replications and their summary metrics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::DgpSpec;
use crate::data::Schema;
use crate::error::{Error, Result};
use crate::estimands::{ate, longitudinal_spec, nde, tsm_spec, Estimand};
use crate::math::{mean, sd};
use crate::tmle::{estimate_many, EstimationOptions, EstimatorKind, LearnerSettings};

/// Nuisance specification of a simulation arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Correct,
    /// Every outcome regression replaced by the constant mean.
    OutcomeMisspecified,
    /// Every propensity replaced by the constant mean.
    PropensityMisspecified,
    /// Only the last-level outcome regression replaced by the constant mean.
    FinalOutcomeMisspecified,
}

impl Arm {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "correct" => Arm::Correct,
            "outcome_misspecified" => Arm::OutcomeMisspecified,
            "propensity_misspecified" => Arm::PropensityMisspecified,
            "final_outcome_misspecified" => Arm::FinalOutcomeMisspecified,
            _ => return Err(Error::argument(format!("unknown arm `{s}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arm::Correct => "correct",
            Arm::OutcomeMisspecified => "outcome_misspecified",
            Arm::PropensityMisspecified => "propensity_misspecified",
            Arm::FinalOutcomeMisspecified => "final_outcome_misspecified",
        }
    }

    /// Options for this arm. Fluctuation learners keep the correct library.
    pub fn apply(&self, opts: &EstimationOptions, horizon: usize) -> EstimationOptions {
        let mut out = opts.clone();
        let l = &mut out.learners;
        match self {
            Arm::Correct => {}
            Arm::OutcomeMisspecified => {
                l.fluctuation.get_or_insert_with(|| opts.learners.outcome.clone());
                l.outcome = LearnerSettings::constant();
                l.outcome_overrides.clear();
            }
            Arm::PropensityMisspecified => l.propensity = LearnerSettings::constant(),
            Arm::FinalOutcomeMisspecified => {
                l.fluctuation.get_or_insert_with(|| opts.learners.outcome.clone());
                l.outcome_overrides.retain(|(t, _)| *t != horizon);
                l.outcome_overrides.push((horizon, LearnerSettings::constant()));
            }
        }
        out
    }
}

/// Named estimand of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimandChoice {
    Tsm(f64),
    Ate,
    Regime(Vec<f64>),
    Nde,
}

impl EstimandChoice {
    pub fn build(&self, schema: &Schema) -> Result<Estimand> {
        Ok(match self {
            EstimandChoice::Tsm(a) => Estimand::Single(tsm_spec(schema, *a)?),
            EstimandChoice::Ate => ate(schema)?,
            EstimandChoice::Regime(r) => Estimand::Single(longitudinal_spec(schema, r)?),
            EstimandChoice::Nde => nde(schema)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dgp: DgpSpec,
    pub estimand: EstimandChoice,
    pub estimators: Vec<EstimatorKind>,
    pub arms: Vec<Arm>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub options: EstimationOptions,
    /// Oracle truth.
    pub psi0: f64,
    /// Oracle efficiency bound; relative efficiency is NaN without it.
    pub bound: Option<f64>,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::argument("reps must be at least 1"));
        }
        if self.n_grid.is_empty() || self.estimators.is_empty() || self.arms.is_empty() {
            return Err(Error::argument("n grid, estimators and arms must be nonempty"));
        }
        Ok(())
    }

    /// Every `(n, rep)` pair of the run, in table order.
    pub fn tasks(&self) -> Vec<(usize, usize)> {
        self.n_grid
            .iter()
            .flat_map(|&n| (0..self.reps).map(move |r| (n, r)))
            .collect()
    }
}

/// One estimator on one replication; `Err` holds the failure message.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub n: usize,
    pub rep: usize,
    pub arm: Arm,
    pub estimator: EstimatorKind,
    pub outcome: core::result::Result<(f64, f64, f64), String>,
}

/// Draws replication `rep` at sample size `n` (seed `base_seed + rep`) and
/// runs every arm and estimator on it.
pub fn run_replication(cfg: &SimConfig, n: usize, rep: usize) -> Result<Vec<ReplicationResult>> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let data = cfg.dgp.draw(n, seed)?;
    let estimand = cfg.estimand.build(data.schema())?;
    let horizon = estimand.specs().iter().map(|s| s.horizon()).max().unwrap_or(1);
    let mut out = Vec::with_capacity(cfg.arms.len() * cfg.estimators.len());
    for &arm in &cfg.arms {
        let mut opts = arm.apply(&cfg.options, horizon);
        opts.learners = opts.learners.with_seed(seed);
        let reports = estimate_many(&data, &estimand, &cfg.estimators, &opts);
        for (&estimator, r) in cfg.estimators.iter().zip(reports) {
            out.push(ReplicationResult {
                n,
                rep,
                arm,
                estimator,
                outcome: r
                    .and_then(|r| {
                        if r.psi.is_finite() && r.se.is_finite() {
                            Ok((r.psi, r.ci.0, r.ci.1))
                        } else {
                            Err(Error::numerical("non-finite estimate"))
                        }
                    })
                    .map_err(|e| e.to_string()),
            });
        }
    }
    Ok(out)
}

/// Serial replication loop.
pub fn run_replications(cfg: &SimConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let mut all = Vec::new();
    for (n, rep) in cfg.tasks() {
        all.extend(run_replication(cfg, n, rep)?);
    }
    aggregate(cfg, all)
}

/// One metric of one `(n, estimator, arm)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    pub estimator: String,
    pub arm: String,
    pub metric: String,
    pub value: f64,
    pub mc_se: f64,
    /// Successful replications in the cell.
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
    pub psi0: f64,
    pub bound: Option<f64>,
    pub attempts: usize,
    pub failures: usize,
    /// More than 1% of replications failed.
    pub flagged: bool,
    pub failure_messages: Vec<String>,
}

impl MetricsTable {
    pub fn get(&self, n: usize, estimator: &str, arm: &str, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.estimator == estimator && r.arm == arm && r.metric == metric)
    }
}

fn se_of_mean(x: &[f64]) -> f64 {
    if x.len() < 2 {
        0.0
    } else {
        sd(x) / (x.len() as f64).sqrt()
    }
}

/// Summarises replication results into bias, coverage, MSE and
/// `n · MSE / bound`, each with its Monte Carlo standard error. Results are
/// put into `(n, rep)` order first, so the table does not depend on the
/// order in which replications finished.
pub fn aggregate(cfg: &SimConfig, mut results: Vec<ReplicationResult>) -> Result<MetricsTable> {
    cfg.validate()?;
    let n_pos = |n: usize| cfg.n_grid.iter().position(|&m| m == n).unwrap_or(usize::MAX);
    results.sort_by_key(|r| (n_pos(r.n), r.rep));
    let attempts = results.len();
    let mut failure_messages = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        for &estimator in &cfg.estimators {
            for &arm in &cfg.arms {
                let mut psis = Vec::new();
                let mut covers = Vec::new();
                for r in results.iter().filter(|r| r.n == n && r.estimator == estimator && r.arm == arm) {
                    match &r.outcome {
                        Ok((psi, lo, hi)) => {
                            psis.push(*psi);
                            covers.push(if *lo <= cfg.psi0 && cfg.psi0 <= *hi { 1.0 } else { 0.0 });
                        }
                        Err(e) => failure_messages.push(format!(
                            "n={n} rep={} {} {}: {e}",
                            r.rep,
                            estimator.name(),
                            arm.name()
                        )),
                    }
                }
                let k = psis.len();
                let err: Vec<f64> = psis.iter().map(|p| p - cfg.psi0).collect();
                let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
                let (bias, mse, cov) = if k == 0 {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    (mean(&err), mean(&sq), mean(&covers))
                };
                let cov_se = if k == 0 { f64::NAN } else { (cov * (1.0 - cov) / k as f64).sqrt() };
                let mse_se = se_of_mean(&sq);
                let (rel, rel_se) = match cfg.bound {
                    Some(b) if b > 0.0 => (n as f64 * mse / b, n as f64 * mse_se / b),
                    _ => (f64::NAN, f64::NAN),
                };
                for (metric, value, mc_se) in [
                    ("bias", bias, se_of_mean(&err)),
                    ("coverage", cov, cov_se),
                    ("mse", mse, mse_se),
                    ("rel_efficiency", rel, rel_se),
                ] {
                    rows.push(MetricRow {
                        n,
                        estimator: estimator.name().to_string(),
                        arm: arm.name().to_string(),
                        metric: metric.to_string(),
                        value,
                        mc_se,
                        reps: k,
                    });
                }
            }
        }
    }
    let failures = failure_messages.len();
    Ok(MetricsTable {
        rows,
        psi0: cfg.psi0,
        bound: cfg.bound,
        attempts,
        failures,
        flagged: failures * 100 > attempts,
        failure_messages,
    })
}

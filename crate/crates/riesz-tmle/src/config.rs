//! The JSON run configuration.
//!
//! Every section and key is optional; unknown keys are rejected with their
//! full path. [`KEYS`] lists every key with its default and feeds the
//! command-line help.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use riesz_core::learners::{Basis, LearnerConfig, LearnerSpec};
use riesz_core::sim::{Arm, DgpKind, DgpSpec, EstimandChoice, PiSpec};
use riesz_core::tmle::{
    EstimationOptions, EstimatorKind, LearnerSettings, RieszMode, RieszSettings, SamplingDesign, TargetingSettings,
};
use riesz_core::ColumnRole;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// `(key, default, meaning)` for every configuration key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data.path", "none (required by `estimate`)", "CSV file to estimate from"),
    ("data.schema", "{} (required by `estimate`)", "ordered map column -> role: baseline, time_varying:<t>, treatment[:<t>], mediator, outcome, sampling"),
    ("estimand.kind", "\"ate\"", "tsm | ate | longitudinal | nde"),
    ("estimand.a", "1", "treatment value of `tsm`"),
    ("estimand.regime", "[]", "static regime of `longitudinal`, one value per time point"),
    ("estimator.name", "\"tmle\"", "plugin | onestep | tmle | sdr_tmle | two_phase_tmle"),
    ("estimator.iterate", "false", "repeat targeting passes until the score equation is solved"),
    ("estimator.max_passes", "10", "pass limit of the iterated targeting (1..10)"),
    ("estimator.level", "0.95", "confidence level of the Wald interval"),
    ("estimator.sampling", "\"case_control\"", "two-phase sampling model: case_control | estimated"),
    ("learners.outcome", "[\"constant\", \"glm\", \"glm_interactions\", \"ridge\"]", "outcome regression library"),
    ("learners.propensity", "[\"constant\", \"glm\", \"glm_interactions\", \"ridge\"]", "propensity, mediator and sampling model library"),
    ("learners.fluctuation", "null (outcome library)", "library of the functional fluctuations of sdr_tmle"),
    ("learners.cv_folds", "10", "super learner cross-validation folds"),
    ("learners.seed", "1", "fold assignment seed"),
    ("riesz.mode", "\"plugin\"", "plugin | regression"),
    ("riesz.truncation", "0.01", "lower bound applied to every representer denominator"),
    ("riesz.basis", "\"interactions\"", "Riesz regression basis: main | interactions"),
    ("sim.dgp", "\"single_timepoint\"", "single_timepoint | longitudinal_t2 | two_phase | mediation"),
    ("sim.n_grid", "[250, 1000, 4000]", "sample sizes"),
    ("sim.reps", "500", "replications per sample size"),
    ("sim.seed", "1", "base seed; replication r uses seed + r"),
    ("sim.arms", "[\"correct\"]", "correct | outcome_misspecified | propensity_misspecified | final_outcome_misspecified"),
    ("sim.estimators", "[] (estimator.name)", "estimators compared by `simulate`"),
    ("sim.threads", "null (all cores)", "worker threads of `simulate`"),
    ("sim.truth_draws", "2000000", "Monte Carlo draws of the truth and bound oracles"),
    ("sim.psi0", "null (oracle)", "truth used by `simulate`"),
    ("sim.bound", "null (oracle)", "efficiency bound used by `simulate`"),
    ("sim.pi", "null (expit(-0.5 + 0.8 L4 - 0.6 L5))", "constant control sampling probability of the two_phase design"),
    ("sim.coefficients", "{} (reference values)", "coefficient overrides by name: treatment[5], outcome[6] (single_timepoint, two_phase); a1[2], l1[2], a2[3], y[4] (longitudinal_t2); a[2], m[3], y[4] (mediation)"),
    ("output.path", "null (stdout)", "report file; `simulate` writes <path>.csv and <path>.json"),
    ("output.format", "\"json\"", "`simulate`: csv | json | both"),
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub estimand: EstimandSection,
    pub estimator: EstimatorSection,
    pub learners: LearnersSection,
    pub riesz: RieszSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub schema: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimandSection {
    pub kind: String,
    pub a: f64,
    pub regime: Vec<f64>,
}

impl Default for EstimandSection {
    fn default() -> Self {
        EstimandSection {
            kind: "ate".into(),
            a: 1.0,
            regime: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub name: String,
    pub iterate: bool,
    pub max_passes: usize,
    pub level: f64,
    pub sampling: String,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            name: "tmle".into(),
            iterate: false,
            max_passes: 10,
            level: 0.95,
            sampling: "case_control".into(),
        }
    }
}

fn default_library() -> Vec<String> {
    riesz_core::learners::default_library()
        .iter()
        .map(|s| s.name().to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnersSection {
    pub outcome: Vec<String>,
    pub propensity: Vec<String>,
    pub fluctuation: Option<Vec<String>>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for LearnersSection {
    fn default() -> Self {
        LearnersSection {
            outcome: default_library(),
            propensity: default_library(),
            fluctuation: None,
            cv_folds: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RieszSection {
    pub mode: String,
    pub truncation: f64,
    pub basis: String,
}

impl Default for RieszSection {
    fn default() -> Self {
        RieszSection {
            mode: "plugin".into(),
            truncation: riesz_core::riesz::DEFAULT_TRUNCATION,
            basis: "interactions".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dgp: String,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub arms: Vec<String>,
    pub estimators: Vec<String>,
    pub threads: Option<usize>,
    pub truth_draws: usize,
    pub psi0: Option<f64>,
    pub bound: Option<f64>,
    pub pi: Option<f64>,
    pub coefficients: IndexMap<String, Vec<f64>>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dgp: "single_timepoint".into(),
            n_grid: vec![250, 1000, 4000],
            reps: 500,
            seed: 1,
            arms: vec!["correct".into()],
            estimators: Vec::new(),
            threads: None,
            truth_draws: 2_000_000,
            psi0: None,
            bound: None,
            pi: None,
            coefficients: IndexMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            path: None,
            format: "json".into(),
        }
    }
}

/// Output formats of `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

fn library(names: &[String], key: &str) -> Result<Vec<LearnerSpec>> {
    if names.is_empty() {
        return Err(CliError::config(format!("{key} must list at least one learner")));
    }
    names
        .iter()
        .map(|n| LearnerSpec::parse(n).map_err(|e| CliError::config(format!("{key}: {e}"))))
        .collect()
}

fn keyed<T>(key: &str, r: riesz_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::config(format!("{key}: {e}")))
}

impl RunConfig {
    /// Parses a configuration document, naming the path of any offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let unknown = inner.to_string();
            // The path of an unknown-field error may or may not end with the key.
            let key = unknown
                .strip_prefix("unknown field `")
                .and_then(|s| s.split('`').next())
                .map(|k| {
                    if path == "." || path.is_empty() {
                        k.to_string()
                    } else if path == k || path.ends_with(&format!(".{k}")) {
                        path.clone()
                    } else {
                        format!("{path}.{k}")
                    }
                });
            match key {
                Some(k) => CliError::config(format!("unknown key `{k}`")),
                None => CliError::config(format!("`{path}`: {inner}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        // Relative data paths are resolved against the config file.
        if let (Some(dir), Some(p)) = (path.parent(), cfg.data.path.as_mut()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks every enumerated key without touching data files.
    pub fn validate(&self) -> Result<()> {
        self.schema()?;
        self.estimator_kind()?;
        self.options()?;
        self.sim_estimators()?;
        self.arms()?;
        self.dgp()?;
        self.formats()?;
        match self.estimand.kind.as_str() {
            "tsm" | "ate" | "longitudinal" | "nde" => {}
            k => return Err(CliError::config(format!("estimand.kind: unknown estimand `{k}`"))),
        }
        if self.estimand.kind == "longitudinal" && self.estimand.regime.is_empty() {
            return Err(CliError::config("estimand.regime must be nonempty for `longitudinal`"));
        }
        if !(self.estimator.level > 0.0 && self.estimator.level < 1.0) {
            return Err(CliError::config("estimator.level must lie in (0, 1)"));
        }
        if !(1..=10).contains(&self.estimator.max_passes) {
            return Err(CliError::config("estimator.max_passes must lie in 1..=10"));
        }
        if self.learners.cv_folds < 2 {
            return Err(CliError::config("learners.cv_folds must be at least 2"));
        }
        if !(self.riesz.truncation > 0.0 && self.riesz.truncation < 0.5) {
            return Err(CliError::config("riesz.truncation must lie in (0, 0.5)"));
        }
        if self.sim.reps == 0 || self.sim.n_grid.is_empty() || self.sim.n_grid.contains(&0) {
            return Err(CliError::config("sim.reps and sim.n_grid must be positive"));
        }
        if self.sim.threads == Some(0) {
            return Err(CliError::config("sim.threads must be positive"));
        }
        if self.sim.truth_draws < 2 {
            return Err(CliError::config("sim.truth_draws must be at least 2"));
        }
        if let Some(p) = self.sim.pi {
            if !(0.05..=1.0).contains(&p) {
                return Err(CliError::config("sim.pi must lie in [0.05, 1]"));
            }
        }
        Ok(())
    }

    /// Applies a `--seed` override to every seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.learners.seed = s;
            self.sim.seed = s;
        }
        self
    }

    pub fn schema(&self) -> Result<Vec<(String, ColumnRole)>> {
        self.data
            .schema
            .iter()
            .map(|(name, role)| {
                ColumnRole::parse(role)
                    .map(|r| (name.clone(), r))
                    .map_err(|e| CliError::config(format!("data.schema.{name}: {e}")))
            })
            .collect()
    }

    pub fn estimator_kind(&self) -> Result<EstimatorKind> {
        keyed("estimator.name", EstimatorKind::parse(&self.estimator.name))
    }

    pub fn options(&self) -> Result<EstimationOptions> {
        let l = &self.learners;
        let config = |lib: Vec<LearnerSpec>| LearnerConfig {
            library: lib,
            cv_folds: l.cv_folds,
            seed: l.seed,
        };
        let fluctuation = match &l.fluctuation {
            Some(f) => Some(config(library(f, "learners.fluctuation")?)),
            None => None,
        };
        Ok(EstimationOptions {
            learners: LearnerSettings {
                outcome: config(library(&l.outcome, "learners.outcome")?),
                propensity: config(library(&l.propensity, "learners.propensity")?),
                fluctuation,
                outcome_overrides: Vec::new(),
            },
            riesz: RieszSettings {
                mode: match self.riesz.mode.as_str() {
                    "plugin" => RieszMode::Plugin,
                    "regression" => RieszMode::Regression,
                    m => return Err(CliError::config(format!("riesz.mode: unknown mode `{m}`"))),
                },
                truncation: self.riesz.truncation,
                basis: match self.riesz.basis.as_str() {
                    "main" => Basis::Main,
                    "interactions" => Basis::Interactions,
                    b => return Err(CliError::config(format!("riesz.basis: unknown basis `{b}`"))),
                },
            },
            targeting: TargetingSettings {
                iterate: self.estimator.iterate,
                max_passes: self.estimator.max_passes,
            },
            sampling: match self.estimator.sampling.as_str() {
                "case_control" => SamplingDesign::CaseControl,
                "estimated" => SamplingDesign::Estimated,
                s => return Err(CliError::config(format!("estimator.sampling: unknown design `{s}`"))),
            },
            level: self.estimator.level,
        })
    }

    pub fn estimand_choice(&self) -> Result<EstimandChoice> {
        Ok(match self.estimand.kind.as_str() {
            "tsm" => EstimandChoice::Tsm(self.estimand.a),
            "ate" => EstimandChoice::Ate,
            "longitudinal" => EstimandChoice::Regime(self.estimand.regime.clone()),
            "nde" => EstimandChoice::Nde,
            k => return Err(CliError::config(format!("estimand.kind: unknown estimand `{k}`"))),
        })
    }

    pub fn sim_estimators(&self) -> Result<Vec<EstimatorKind>> {
        if self.sim.estimators.is_empty() {
            return Ok(vec![self.estimator_kind()?]);
        }
        self.sim
            .estimators
            .iter()
            .map(|e| keyed("sim.estimators", EstimatorKind::parse(e)))
            .collect()
    }

    pub fn arms(&self) -> Result<Vec<Arm>> {
        if self.sim.arms.is_empty() {
            return Err(CliError::config("sim.arms must be nonempty"));
        }
        self.sim.arms.iter().map(|a| keyed("sim.arms", Arm::parse(a))).collect()
    }

    pub fn dgp(&self) -> Result<DgpSpec> {
        let mut d = DgpSpec::new(keyed("sim.dgp", DgpKind::parse(&self.sim.dgp))?);
        if let Some(p) = self.sim.pi {
            d.pi = PiSpec::Constant(p);
        }
        for (name, values) in &self.sim.coefficients {
            let target: Option<&mut [f64]> = match (d.kind, name.as_str()) {
                (DgpKind::SingleTimepoint | DgpKind::TwoPhase, "treatment") => Some(&mut d.single.treatment),
                (DgpKind::SingleTimepoint | DgpKind::TwoPhase, "outcome") => Some(&mut d.single.outcome),
                (DgpKind::LongitudinalT2, "a1") => Some(&mut d.longitudinal.a1),
                (DgpKind::LongitudinalT2, "l1") => Some(&mut d.longitudinal.l1),
                (DgpKind::LongitudinalT2, "a2") => Some(&mut d.longitudinal.a2),
                (DgpKind::LongitudinalT2, "y") => Some(&mut d.longitudinal.y),
                (DgpKind::Mediation, "a") => Some(&mut d.mediation.a),
                (DgpKind::Mediation, "m") => Some(&mut d.mediation.m),
                (DgpKind::Mediation, "y") => Some(&mut d.mediation.y),
                _ => None,
            };
            let target = target.ok_or_else(|| {
                CliError::config(format!("sim.coefficients.{name}: not a coefficient of `{}`", d.kind.name()))
            })?;
            if target.len() != values.len() {
                return Err(CliError::config(format!(
                    "sim.coefficients.{name}: expected {} values, got {}",
                    target.len(),
                    values.len()
                )));
            }
            target.copy_from_slice(values);
        }
        Ok(d)
    }

    pub fn formats(&self) -> Result<Formats> {
        Ok(match self.output.format.as_str() {
            "csv" => Formats { csv: true, json: false },
            "json" => Formats { csv: false, json: true },
            "both" => Formats { csv: true, json: true },
            f => return Err(CliError::config(format!("output.format: unknown format `{f}`"))),
        })
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (JSON document; every key is optional):\n");
    for (k, d, m) in KEYS {
        s.push_str(&format!("  {k:width$}  default {d}\n  {:width$}  {m}\n", ""));
    }
    s
}

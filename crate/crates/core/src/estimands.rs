//! Declarative nested-regression estimands.
//!
//! An [`EstimandSpec`] lists the regression levels `Q̄_1, …, Q̄_T` (outermost
//! first). Level `t` regresses a pseudo-outcome on its conditioning set; the
//! pseudo-outcome of level `T` is the outcome column and that of level `t < T`
//! is `h_{t+1}(Q̄_{t+1})`. The estimand is `E[h_1(Q̄_1)]`.

use alloc::borrow::Cow;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::func::RowFunction;

/// Action of the functional on a regression function.
#[derive(Debug, Clone, PartialEq)]
pub enum HTransform {
    /// `h(x; f) = f(x)`.
    Identity,
    /// `h(x; f) = f(x with the listed columns set to constants)`.
    EvaluateAt(Vec<(String, f64)>),
}

impl HTransform {
    /// The dataset on which `f` is evaluated to obtain `h(·; f)`.
    pub fn view<'a>(&self, data: &'a Dataset) -> Result<Cow<'a, Dataset>> {
        match self {
            HTransform::Identity => Ok(Cow::Borrowed(data)),
            HTransform::EvaluateAt(ov) => Ok(Cow::Owned(data.with_overrides(ov)?)),
        }
    }

    /// Row-wise `h(O_i; f)`.
    pub fn apply(&self, f: &dyn RowFunction, data: &Dataset) -> Result<Vec<f64>> {
        f.eval(self.view(data)?.as_ref())
    }
}

/// Recipe for a plug-in representer factor.
#[derive(Debug, Clone, PartialEq)]
pub enum RepresenterRecipe {
    /// `1(A_t = a) / P(A_t = a | history)`.
    Indicator {
        time: usize,
        treatment: String,
        a: f64,
        history: Vec<String>,
    },
    /// `p(M | A = a_ref, L) / p(M | A, L)` for a binary mediator.
    MediationRatio {
        time: usize,
        mediator: String,
        treatment: String,
        a_ref: f64,
        covariates: Vec<String>,
    },
}

impl RepresenterRecipe {
    pub fn time(&self) -> usize {
        match self {
            RepresenterRecipe::Indicator { time, .. } | RepresenterRecipe::MediationRatio { time, .. } => *time,
        }
    }
}

/// Link used by the fluctuation of a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluctuationLink {
    /// Logistic fluctuation after min-max scaling of the pseudo-outcome.
    Logit,
    /// Linear fluctuation on the original scale.
    Identity,
}

/// One nested regression level.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Conditioning set of `Q̄_t`.
    pub covariates: Vec<String>,
    /// `h_t`, applied to the fitted `Q̄_t`.
    pub transform: HTransform,
    /// Indices into [`EstimandSpec::representers`] whose product is `ω_t`.
    pub weight_factors: Vec<usize>,
    pub link: FluctuationLink,
}

/// A (possibly nested) linear functional.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandSpec {
    pub name: String,
    /// Levels, outermost (`t = 1`) first.
    pub levels: Vec<Level>,
    pub representers: Vec<RepresenterRecipe>,
}

/// How two estimands are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastKind {
    Difference,
    Ratio,
}

/// A single functional or a contrast of two.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimand {
    Single(EstimandSpec),
    Contrast {
        kind: ContrastKind,
        first: Box<Estimand>,
        second: Box<Estimand>,
    },
}

impl Estimand {
    pub fn contrast(first: Estimand, second: Estimand, kind: ContrastKind) -> Self {
        Estimand::Contrast {
            kind,
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    /// Every single spec, in evaluation order.
    pub fn specs(&self) -> Vec<&EstimandSpec> {
        match self {
            Estimand::Single(s) => vec![s],
            Estimand::Contrast { first, second, .. } => {
                let mut v = first.specs();
                v.extend(second.specs());
                v
            }
        }
    }
}

impl From<EstimandSpec> for Estimand {
    fn from(s: EstimandSpec) -> Self {
        Estimand::Single(s)
    }
}

impl EstimandSpec {
    /// Number of nested levels `T`.
    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    /// True when `ω_t = ω_{t−1}·α_t` with one new factor per level, as for
    /// treatment regimes.
    pub fn is_product_structured(&self) -> bool {
        self.levels
            .iter()
            .enumerate()
            .all(|(t, l)| l.weight_factors == (0..=t).collect::<Vec<_>>())
    }

    /// Checks the spec against a dataset: columns exist, treatments and
    /// mediators are binary, intervention values are attainable.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::argument("estimand has no levels"));
        }
        for level in &self.levels {
            for c in &level.covariates {
                data.column(c)?;
            }
            if let HTransform::EvaluateAt(ov) = &level.transform {
                for (c, _) in ov {
                    data.column(c)?;
                }
            }
            for &k in &level.weight_factors {
                if k >= self.representers.len() {
                    return Err(Error::argument("weight factor index out of range"));
                }
            }
        }
        for r in &self.representers {
            match r {
                RepresenterRecipe::Indicator { treatment, a, .. } => {
                    require_binary(data, treatment)?;
                    if *a != 0.0 && *a != 1.0 {
                        return Err(Error::argument(format!(
                            "treatment value {a} is not in {{0, 1}} for binary `{treatment}`"
                        )));
                    }
                }
                RepresenterRecipe::MediationRatio {
                    mediator,
                    treatment,
                    a_ref,
                    ..
                } => {
                    require_binary(data, mediator)?;
                    require_binary(data, treatment)?;
                    if *a_ref != 0.0 && *a_ref != 1.0 {
                        return Err(Error::argument("reference arm must be 0 or 1"));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn require_binary(data: &Dataset, name: &str) -> Result<()> {
    let col = data.column(name)?;
    let ok = col
        .values
        .iter()
        .enumerate()
        .all(|(i, &v)| !col.is_valid(i) || v == 0.0 || v == 1.0);
    if ok {
        Ok(())
    } else {
        Err(Error::argument(format!("column `{name}` must be binary")))
    }
}

/// Treatment-specific mean `E[E(Y | A = a, L)]`.
pub fn tsm_spec(schema: &Schema, a: f64) -> Result<EstimandSpec> {
    let mut spec = longitudinal_spec(schema, &[a])?;
    spec.name = format!("tsm({a})");
    Ok(spec)
}

/// Average treatment effect `tsm(1) − tsm(0)`.
pub fn ate(schema: &Schema) -> Result<Estimand> {
    Ok(Estimand::contrast(
        tsm_spec(schema, 1.0)?.into(),
        tsm_spec(schema, 0.0)?.into(),
        ContrastKind::Difference,
    ))
}

/// Counterfactual mean under the static regime `ā`.
pub fn longitudinal_spec(schema: &Schema, regime: &[f64]) -> Result<EstimandSpec> {
    let horizon = schema.horizon();
    if horizon == 0 {
        return Err(Error::schema("no treatment column in schema"));
    }
    if regime.len() != horizon {
        return Err(Error::argument(format!(
            "regime has length {} but the data have {horizon} treatment times",
            regime.len()
        )));
    }
    let mut levels = Vec::with_capacity(horizon);
    let mut representers = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let treatment = schema.treatment(t).expect("contiguous treatments").to_string();
        representers.push(RepresenterRecipe::Indicator {
            time: t,
            treatment: treatment.clone(),
            a: regime[t - 1],
            history: schema.history_before_treatment(t),
        });
        levels.push(Level {
            covariates: schema.history_through_treatment(t),
            transform: HTransform::EvaluateAt(vec![(treatment, regime[t - 1])]),
            weight_factors: (0..t).collect(),
            link: FluctuationLink::Logit,
        });
    }
    let name = format!(
        "regime({})",
        regime.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(",")
    );
    Ok(EstimandSpec {
        name,
        levels,
        representers,
    })
}

/// The mediation functional `θ = E(E[E(Y | A = 1, M, L) | A = 0, L])` for a
/// binary mediator.
///
/// The level-1 residual is weighted by `1(A = 0)/P(A = 0 | L)`; the level-2
/// residual by `1(A = 1)/P(A = 1 | L) · p(M | 0, L)/p(M | 1, L)`, so the
/// propensity factor multiplies the innermost residual.
pub fn nde_m_functional_spec(schema: &Schema) -> Result<EstimandSpec> {
    if schema.horizon() != 1 {
        return Err(Error::schema("the mediation functional needs exactly one treatment"));
    }
    let treatment = schema.treatment(1).expect("horizon 1").to_string();
    let mediator = schema
        .mediator()
        .ok_or_else(|| Error::schema("no mediator column in schema"))?
        .to_string();
    let baseline = schema.history_before_treatment(1);
    let mut outer = baseline.clone();
    outer.push(treatment.clone());
    let mut inner = outer.clone();
    inner.push(mediator.clone());
    let representers = vec![
        RepresenterRecipe::Indicator {
            time: 1,
            treatment: treatment.clone(),
            a: 0.0,
            history: baseline.clone(),
        },
        RepresenterRecipe::MediationRatio {
            time: 2,
            mediator,
            treatment: treatment.clone(),
            a_ref: 0.0,
            covariates: outer.clone(),
        },
        RepresenterRecipe::Indicator {
            time: 2,
            treatment: treatment.clone(),
            a: 1.0,
            history: baseline,
        },
    ];
    Ok(EstimandSpec {
        name: "nde_theta".into(),
        levels: vec![
            Level {
                covariates: outer,
                transform: HTransform::EvaluateAt(vec![(treatment.clone(), 0.0)]),
                weight_factors: vec![0],
                link: FluctuationLink::Logit,
            },
            Level {
                covariates: inner,
                transform: HTransform::EvaluateAt(vec![(treatment, 1.0)]),
                weight_factors: vec![1, 2],
                link: FluctuationLink::Logit,
            },
        ],
        representers,
    })
}

/// Natural direct effect `θ − tsm(0)`.
pub fn nde(schema: &Schema) -> Result<Estimand> {
    Ok(Estimand::contrast(
        nde_m_functional_spec(schema)?.into(),
        tsm_spec(schema, 0.0)?.into(),
        ContrastKind::Difference,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnRole;
    use crate::func::FnRow;

    fn schema61() -> Schema {
        let mut s = Schema::new();
        for l in ["L1", "L2", "L3", "L4", "L5"] {
            s.push(l, ColumnRole::Baseline);
        }
        s.with("A", ColumnRole::Treatment(1)).with("Y", ColumnRole::Outcome)
    }

    fn schema_t2() -> Schema {
        Schema::new()
            .with("L0", ColumnRole::Baseline)
            .with("A1", ColumnRole::Treatment(1))
            .with("L1", ColumnRole::TimeVarying(2))
            .with("A2", ColumnRole::Treatment(2))
            .with("L2", ColumnRole::TimeVarying(2))
            .with("Y", ColumnRole::Outcome)
    }

    #[test]
    fn tsm_conditions_on_treatment_and_covariates() {
        let spec = tsm_spec(&schema61(), 1.0).unwrap();
        assert_eq!(spec.horizon(), 1);
        let mut cov = spec.levels[0].covariates.clone();
        cov.sort();
        assert_eq!(cov, ["A", "L1", "L2", "L3", "L4", "L5"]);
        assert_eq!(
            spec.levels[0].transform,
            HTransform::EvaluateAt(vec![("A".into(), 1.0)])
        );
    }

    #[test]
    fn t1_regime_matches_tsm() {
        let s = schema61();
        let l = longitudinal_spec(&s, &[1.0]).unwrap();
        let t = tsm_spec(&s, 1.0).unwrap();
        assert_eq!(l.levels, t.levels);
        assert_eq!(l.representers, t.representers);
    }

    #[test]
    fn t2_regime_levels() {
        let spec = longitudinal_spec(&schema_t2(), &[1.0, 1.0]).unwrap();
        assert_eq!(spec.horizon(), 2);
        let mut cov = spec.levels[1].covariates.clone();
        cov.sort();
        assert_eq!(cov, ["A1", "A2", "L0", "L1", "L2"]);
        assert!(spec.is_product_structured());
        assert!(matches!(
            longitudinal_spec(&schema_t2(), &[1.0, 1.0, 1.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn nde_spec_has_two_levels() {
        let s = Schema::new()
            .with("L", ColumnRole::Baseline)
            .with("A", ColumnRole::Treatment(1))
            .with("M", ColumnRole::Mediator)
            .with("Y", ColumnRole::Outcome);
        let spec = nde_m_functional_spec(&s).unwrap();
        assert_eq!(spec.horizon(), 2);
        assert!(!spec.is_product_structured());
        assert!(nde_m_functional_spec(&schema61()).is_err());
    }

    #[test]
    fn invalid_arm_rejected_downstream() {
        let d = Dataset::from_columns(vec![
            ("L1", ColumnRole::Baseline, vec![0.0, 1.0]),
            ("A", ColumnRole::Treatment(1), vec![0.0, 1.0]),
            ("Y", ColumnRole::Outcome, vec![0.0, 1.0]),
        ])
        .unwrap();
        let spec = tsm_spec(d.schema(), 2.0).unwrap();
        assert!(spec.validate(&d).is_err());
        assert!(tsm_spec(d.schema(), 1.0).unwrap().validate(&d).is_ok());
    }

    #[test]
    fn transforms_are_linear() {
        let d = Dataset::from_columns(vec![
            ("L1", ColumnRole::Baseline, vec![0.3, -1.2, 2.0, 0.7]),
            ("A", ColumnRole::Treatment(1), vec![0.0, 1.0, 1.0, 0.0]),
            ("Y", ColumnRole::Outcome, vec![0.0, 1.0, 0.0, 1.0]),
        ])
        .unwrap();
        let lin = |c: [f64; 3]| {
            FnRow(move |d: &Dataset| {
                let l = d.values("L1")?;
                let a = d.values("A")?;
                Ok(l.iter().zip(a).map(|(l, a)| c[0] + c[1] * l + c[2] * a * l).collect())
            })
        };
        let (cf, cg) = ([0.4, -1.1, 2.5], [1.5, 0.2, -0.7]);
        let sum = lin([cf[0] + cg[0], cf[1] + cg[1], cf[2] + cg[2]]);
        let scaled = lin([3.0 * cf[0], 3.0 * cf[1], 3.0 * cf[2]]);
        let spec = tsm_spec(d.schema(), 1.0).unwrap();
        for h in [&spec.levels[0].transform, &HTransform::Identity] {
            let hf = h.apply(&lin(cf), &d).unwrap();
            let hg = h.apply(&lin(cg), &d).unwrap();
            let hs = h.apply(&sum, &d).unwrap();
            let hc = h.apply(&scaled, &d).unwrap();
            for i in 0..d.n() {
                assert!((hs[i] - hf[i] - hg[i]).abs() <= 1e-12);
                assert!((hc[i] - 3.0 * hf[i]).abs() <= 1e-12);
            }
        }
    }
}

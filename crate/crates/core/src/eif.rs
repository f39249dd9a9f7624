//! Efficient influence functions, Wald intervals and delta-method contrasts.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimands::{ContrastKind, EstimandSpec, HTransform};
use crate::func::RowFunction;
use crate::math::{mean, normal_quantile, sd};
use crate::tmle::FitBundle;

/// Per-row influence function values and the `ψ` used for centering.
#[derive(Debug, Clone, PartialEq)]
pub struct EifVector {
    pub values: Vec<f64>,
    pub psi: f64,
}

impl EifVector {
    /// `P_n φ`.
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn sd(&self) -> f64 {
        sd(&self.values)
    }
}

/// Scalars describing how an estimate was obtained.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `P_n φ` at the final fit.
    pub score_residual: f64,
    /// Fluctuation coefficients per level (outermost first) and pass.
    pub epsilons: Vec<f64>,
    /// Truncated plug-in denominators.
    pub truncation_count: usize,
    /// Convergence of every nuisance and fluctuation fit.
    pub learners_converged: bool,
    /// Number of targeting passes performed.
    pub passes: usize,
    /// Zero-variance influence function.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn merge(a: &Diagnostics, b: &Diagnostics) -> Diagnostics {
        let mut warnings = a.warnings.clone();
        warnings.extend(b.warnings.iter().cloned());
        let mut epsilons = a.epsilons.clone();
        epsilons.extend(&b.epsilons);
        Diagnostics {
            score_residual: 0.0,
            epsilons,
            truncation_count: a.truncation_count + b.truncation_count,
            learners_converged: a.learners_converged && b.learners_converged,
            passes: a.passes.max(b.passes),
            degenerate: false,
            warnings,
        }
    }
}

/// Point estimate with its influence-function based Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub psi: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub n: usize,
    pub eif: EifVector,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

/// `h_i − ψ + α_i (y_i − q_i)`.
pub fn eif_single_values(h: &[f64], alpha: &[f64], y: &[f64], qbar: &[f64], psi: f64) -> EifVector {
    let values = (0..h.len())
        .map(|i| h[i] - psi + alpha[i] * (y[i] - qbar[i]))
        .collect();
    EifVector { values, psi }
}

/// Influence function `h(O; Q̄) − ψ + α(A, L)(Y − Q̄(A, L))`.
pub fn eif_single(
    data: &Dataset,
    qbar: &dyn RowFunction,
    alpha: &dyn RowFunction,
    h: &HTransform,
    psi: f64,
) -> Result<EifVector> {
    let hv = h.apply(qbar, data)?;
    let q = qbar.eval(data)?;
    let a = alpha.eval(data)?;
    Ok(eif_single_values(&hv, &a, data.outcome(), &q, psi))
}

/// One level's contribution `ω_t (pseudo_{t+1} − Q̄_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTerm {
    pub omega: Vec<f64>,
    pub pseudo: Vec<f64>,
    pub qbar: Vec<f64>,
}

/// Sequential influence function `Σ_t ω_t (pseudo_{t+1} − Q̄_t) + h_1 − ψ`.
/// Terms are accumulated from the outermost level inward.
pub fn eif_sequential_values(h1: &[f64], terms: &[LevelTerm], psi: f64) -> EifVector {
    let values = (0..h1.len())
        .map(|i| {
            let mut v = 0.0;
            for t in terms {
                v += t.omega[i] * (t.pseudo[i] - t.qbar[i]);
            }
            v + h1[i] - psi
        })
        .collect();
    EifVector { values, psi }
}

/// Sequential influence function at the targeted regressions of a bundle.
pub fn eif_sequential(data: &Dataset, bundle: &FitBundle, spec: &EstimandSpec, psi: f64) -> Result<EifVector> {
    if bundle.levels.len() != spec.horizon() || bundle.spec.levels != spec.levels {
        return Err(Error::argument("bundle was fitted for a different estimand"));
    }
    let (h1, terms) = bundle.terms(data, true)?;
    Ok(eif_sequential_values(&h1, &terms, psi))
}

/// Two-phase influence function
/// `Q(V) − ψ + α(Δ, V)(φ^uc − Q(V))`, with the residual term zero where `Δ = 0`.
/// `complete_uncentered` is read only on rows with `Δ = 1`.
pub fn eif_two_phase_values(
    delta: &[f64],
    complete_uncentered: &[f64],
    obs_regression: &[f64],
    alpha: &[f64],
    psi: f64,
) -> EifVector {
    let values = (0..delta.len())
        .map(|i| {
            let q = obs_regression[i];
            if delta[i] == 1.0 {
                q - psi + alpha[i] * (complete_uncentered[i] - q)
            } else {
                q - psi
            }
        })
        .collect();
    EifVector { values, psi }
}

/// Dataset form of [`eif_two_phase_values`]; `obs_regression` is evaluated on
/// every row with `Δ` set to 1.
pub fn eif_two_phase(
    data: &Dataset,
    complete_uncentered: &[f64],
    obs_regression: &dyn RowFunction,
    alpha: &dyn RowFunction,
    psi: f64,
) -> Result<EifVector> {
    let name = data
        .schema()
        .sampling_indicator()
        .ok_or_else(|| Error::argument("no sampling indicator column"))?;
    if complete_uncentered.len() != data.n() {
        return Err(Error::argument("complete-data EIF must be aligned with the rows"));
    }
    let delta = data.values(name)?;
    let sampled = data.with_overrides(&[(name.into(), 1.0)])?;
    let q = obs_regression
        .eval(&sampled)
        .map_err(|e| Error::argument(alloc::format!("observed-data regression: {e}")))?;
    let a = alpha.eval(data)?;
    Ok(eif_two_phase_values(delta, complete_uncentered, &q, &a, psi))
}

/// Report with `se = sd(φ)/√n` and `ψ ± z_{(1+level)/2}·se`.
pub fn wald(eif: EifVector, psi: f64, level: f64) -> Result<EstimateReport> {
    let n = eif.values.len();
    if n < 2 {
        return Err(Error::argument("a Wald interval needs at least two rows"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::argument("confidence level must lie in (0, 1)"));
    }
    let se = eif.sd() / libm::sqrt(n as f64);
    if !psi.is_finite() || !se.is_finite() {
        return Err(Error::numerical("non-finite estimate or standard error"));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let diagnostics = Diagnostics {
        score_residual: eif.mean(),
        degenerate: se == 0.0,
        learners_converged: true,
        ..Diagnostics::default()
    };
    Ok(EstimateReport {
        psi,
        se,
        ci: (psi - z * se, psi + z * se),
        level,
        n,
        eif,
        diagnostics,
    })
}

/// Wald report carrying existing diagnostics.
pub fn wald_with(eif: EifVector, psi: f64, level: f64, diagnostics: Diagnostics) -> Result<EstimateReport> {
    let mut r = wald(eif, psi, level)?;
    let degenerate = r.diagnostics.degenerate;
    let residual = r.diagnostics.score_residual;
    r.diagnostics = Diagnostics {
        degenerate,
        score_residual: residual,
        ..diagnostics
    };
    Ok(r)
}

/// Difference or ratio of two estimates on the same rows, with the
/// delta-method influence function.
pub fn contrast(first: &EstimateReport, second: &EstimateReport, kind: ContrastKind) -> Result<EstimateReport> {
    let (e1, e2) = (&first.eif.values, &second.eif.values);
    if e1.len() != e2.len() {
        return Err(Error::argument("contrasted reports have different row counts"));
    }
    let (p1, p2) = (first.psi, second.psi);
    let (psi, values): (f64, Vec<f64>) = match kind {
        ContrastKind::Difference => (p1 - p2, e1.iter().zip(e2).map(|(a, b)| a - b).collect()),
        ContrastKind::Ratio => {
            if libm::fabs(p2) < 1e-12 {
                return Err(Error::numerical("ratio contrast with a zero denominator"));
            }
            (
                p1 / p2,
                e1.iter()
                    .zip(e2)
                    .map(|(a, b)| a / p2 - p1 * b / (p2 * p2))
                    .collect(),
            )
        }
    };
    let diagnostics = Diagnostics::merge(&first.diagnostics, &second.diagnostics);
    wald_with(EifVector { values, psi }, psi, first.level, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_alpha_and_interpolation() {
        let h = [0.2, 0.4, 0.9];
        let y = [1.0, 0.0, 1.0];
        let q = [0.5, 0.5, 0.5];
        let e = eif_single_values(&h, &[0.0; 3], &y, &q, 0.5);
        assert_eq!(e.values, vec![0.2 - 0.5, 0.4 - 0.5, 0.9 - 0.5]);
        let e = eif_single_values(&h, &[3.0, -1.0, 7.0], &y, &y, 0.5);
        assert_eq!(e.values, vec![0.2 - 0.5, 0.4 - 0.5, 0.9 - 0.5]);
    }

    #[test]
    fn two_phase_substitution() {
        let e = eif_two_phase_values(&[1.0, 0.0], &[0.7, f64::NAN], &[0.4, 0.4], &[2.0, 0.0], 0.3);
        assert!((e.values[0] - (0.4 - 0.3 + 2.0 * (0.7 - 0.4))).abs() < 1e-15);
        assert!((e.values[1] - (0.4 - 0.3)).abs() < 1e-15);
        // Full-data reduction.
        let phi = [0.1, 0.9, 0.4];
        let e = eif_two_phase_values(&[1.0; 3], &phi, &[0.3, -2.0, 5.0], &[1.0; 3], 0.5);
        for i in 0..3 {
            assert!((e.values[i] - (phi[i] - 0.5)).abs() <= 1e-14);
        }
    }

    #[test]
    fn wald_cases() {
        let r = wald(EifVector { values: vec![0.0; 4], psi: 0.3 }, 0.3, 0.95).unwrap();
        assert_eq!(r.ci, (0.3, 0.3));
        assert!(r.diagnostics.degenerate);
        let r = wald(EifVector { values: vec![-1.0, 1.0], psi: 0.0 }, 0.0, 0.95).unwrap();
        assert!((r.se - 1.0).abs() < 1e-15);
        assert!((r.ci.1 - 1.959963984540054).abs() < 1e-9);
        let r = wald(EifVector { values: vec![-1.0, 1.0], psi: 0.0 }, 0.0, 0.90).unwrap();
        assert!((r.ci.1 - 1.6449).abs() < 1e-4);
        assert!(wald(EifVector { values: vec![1.0], psi: 0.0 }, 0.0, 0.95).is_err());
    }

    #[test]
    fn contrasts() {
        let a = wald(EifVector { values: vec![0.5, -0.2, -0.3], psi: 0.4 }, 0.4, 0.95).unwrap();
        let d = contrast(&a, &a, ContrastKind::Difference).unwrap();
        assert_eq!(d.psi, 0.0);
        assert!(d.eif.values.iter().all(|v| *v == 0.0));
        let one = wald(EifVector { values: vec![0.0; 3], psi: 1.0 }, 1.0, 0.95).unwrap();
        let r = contrast(&a, &one, ContrastKind::Ratio).unwrap();
        assert_eq!(r.eif.values, a.eif.values);
        let zero = wald(EifVector { values: vec![0.0; 3], psi: 0.0 }, 0.0, 0.95).unwrap();
        assert!(matches!(contrast(&a, &zero, ContrastKind::Ratio), Err(Error::Numerical(_))));
    }
}

//! Monte Carlo truth and efficiency-bound oracles built from the true
//! nuisance formulas of each design.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    normals, single_covariates, uniforms, DgpKind, DgpSpec, LongitudinalCoefs, MediationCoefs, PiSpec,
    SingleTimepointCoefs, Streams,
};
use crate::error::{Error, Result};
use crate::estimands::{ContrastKind, Estimand, EstimandSpec, HTransform, RepresenterRecipe};
use crate::math::{mean, sd};

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and probabilities for `E[f(Z)]`, `Z ~ N(0, 1)`.
fn normal_rule() -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite(40);
    let s = core::f64::consts::PI.sqrt();
    (
        x.iter().map(|v| v * core::f64::consts::SQRT_2).collect(),
        w.iter().map(|v| v / s).collect(),
    )
}

/// A data-generating law with known nuisances, reduced to per-draw
/// contributions: the target's g-formula integrand and its uncentered
/// efficient influence function at the truth.
pub trait TrueModel {
    fn contributions(&self, draws: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEstimate {
    pub psi0: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    pub bound: f64,
    pub mc_se: f64,
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < 2 {
        return Err(Error::argument("at least two Monte Carlo draws are needed"));
    }
    Ok(())
}

pub fn truth_of(model: &dyn TrueModel, draws: usize, seed: u64) -> Result<TruthEstimate> {
    check_draws(draws)?;
    let (t, _) = model.contributions(draws, seed)?;
    Ok(TruthEstimate {
        psi0: mean(&t),
        mc_se: sd(&t) / (draws as f64).sqrt(),
    })
}

pub fn bound_of(model: &dyn TrueModel, draws: usize, seed: u64) -> Result<BoundEstimate> {
    check_draws(draws)?;
    let (_, e) = model.contributions(draws, seed)?;
    let m = mean(&e);
    let sq: Vec<f64> = e.iter().map(|v| (v - m) * (v - m)).collect();
    let nf = draws as f64;
    Ok(BoundEstimate {
        bound: mean(&sq) * nf / (nf - 1.0),
        mc_se: sd(&sq) / nf.sqrt(),
    })
}

/// `ψ₀` of `estimand` under `dgp` by Monte Carlo integration of the
/// g-formula with the true outcome formulas.
pub fn monte_carlo_truth(dgp: &DgpSpec, estimand: &Estimand, draws: usize, seed: u64) -> Result<TruthEstimate> {
    truth_of(&DgpTarget::new(dgp, estimand)?, draws, seed)
}

/// Variance of the true efficient influence function of `estimand` under
/// `dgp` (observed-data form for two-phase designs).
pub fn efficiency_bound(dgp: &DgpSpec, estimand: &Estimand, draws: usize, seed: u64) -> Result<BoundEstimate> {
    bound_of(&DgpTarget::new(dgp, estimand)?, draws, seed)
}

#[derive(Debug, Clone, PartialEq)]
enum Target {
    Regime(Vec<f64>),
    MediationTheta,
    Contrast(ContrastKind, Box<Target>, Box<Target>),
}

fn target_of(estimand: &Estimand) -> Result<Target> {
    match estimand {
        Estimand::Single(spec) => leaf_target(spec),
        Estimand::Contrast { kind, first, second } => Ok(Target::Contrast(
            *kind,
            Box::new(target_of(first)?),
            Box::new(target_of(second)?),
        )),
    }
}

fn leaf_target(spec: &EstimandSpec) -> Result<Target> {
    if spec
        .representers
        .iter()
        .any(|r| matches!(r, RepresenterRecipe::MediationRatio { .. }))
    {
        return Ok(Target::MediationTheta);
    }
    let mut regime = Vec::with_capacity(spec.levels.len());
    for level in &spec.levels {
        match &level.transform {
            HTransform::EvaluateAt(pairs) if pairs.len() == 1 => regime.push(pairs[0].1),
            _ => return Err(Error::argument(format!("no truth oracle for estimand `{}`", spec.name))),
        }
    }
    Ok(Target::Regime(regime))
}

struct DgpTarget {
    dgp: DgpSpec,
    target: Target,
}

impl DgpTarget {
    fn new(dgp: &DgpSpec, estimand: &Estimand) -> Result<Self> {
        let target = target_of(estimand)?;
        check_target(dgp.kind, &target)?;
        Ok(DgpTarget { dgp: *dgp, target })
    }
}

fn check_target(kind: DgpKind, target: &Target) -> Result<()> {
    let ok = match target {
        Target::Contrast(_, a, b) => return check_target(kind, a).and(check_target(kind, b)),
        Target::Regime(r) => match kind {
            DgpKind::LongitudinalT2 => r.len() == 2,
            _ => r.len() == 1,
        },
        Target::MediationTheta => kind == DgpKind::Mediation,
    };
    let leaf_ok = match target {
        Target::Regime(r) => r.iter().all(|a| *a == 0.0 || *a == 1.0),
        _ => true,
    };
    if ok && leaf_ok {
        Ok(())
    } else {
        Err(Error::argument(format!("estimand does not fit the {} design", kind.name())))
    }
}

impl TrueModel for DgpTarget {
    fn contributions(&self, draws: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let sample = Sample::draw(&self.dgp, draws, seed);
        combine(&self.dgp, &sample, &self.target)
    }
}

/// Full (unmasked) draws of a design.
enum Sample {
    Single {
        l: [Vec<f64>; 5],
        a: Vec<f64>,
        y: Vec<f64>,
        delta: Option<Vec<f64>>,
    },
    Longitudinal {
        l0: Vec<f64>,
        a1: Vec<f64>,
        l1: Vec<f64>,
        a2: Vec<f64>,
        y: Vec<f64>,
    },
    Mediation {
        l: Vec<f64>,
        a: Vec<f64>,
        m: Vec<f64>,
        y: Vec<f64>,
    },
}

fn bern(u: f64, p: f64) -> f64 {
    if u < p {
        1.0
    } else {
        0.0
    }
}

impl Sample {
    fn draw(dgp: &DgpSpec, n: usize, seed: u64) -> Sample {
        let s = Streams::new(seed);
        match dgp.kind {
            DgpKind::SingleTimepoint | DgpKind::TwoPhase => {
                let c = &dgp.single;
                let l = single_covariates(&s, n);
                let ua = uniforms(&mut s.stream(6), n);
                let uy = uniforms(&mut s.stream(7), n);
                let mut a = vec![0.0; n];
                let mut y = vec![0.0; n];
                for i in 0..n {
                    let li = row(&l, i);
                    a[i] = bern(ua[i], c.propensity(&li));
                    y[i] = bern(uy[i], c.outcome_mean(a[i], &li));
                }
                let delta = (dgp.kind == DgpKind::TwoPhase).then(|| {
                    let ud = uniforms(&mut s.stream(8), n);
                    (0..n)
                        .map(|i| if y[i] == 1.0 { 1.0 } else { bern(ud[i], dgp.pi.pi(l[3][i], l[4][i])) })
                        .collect()
                });
                Sample::Single { l, a, y, delta }
            }
            DgpKind::LongitudinalT2 => {
                let c = &dgp.longitudinal;
                let l0 = normals(&mut s.stream(1), n);
                let ua1 = uniforms(&mut s.stream(2), n);
                let z1 = normals(&mut s.stream(3), n);
                let ua2 = uniforms(&mut s.stream(4), n);
                let uy = uniforms(&mut s.stream(5), n);
                let (mut a1, mut l1, mut a2, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                for i in 0..n {
                    a1[i] = bern(ua1[i], c.g1(l0[i]));
                    l1[i] = c.l1_mean(l0[i], a1[i]) + z1[i];
                    a2[i] = bern(ua2[i], c.g2(l1[i], a1[i]));
                    y[i] = bern(uy[i], c.outcome_mean(a1[i], a2[i], l1[i]));
                }
                Sample::Longitudinal { l0, a1, l1, a2, y }
            }
            DgpKind::Mediation => {
                let c = &dgp.mediation;
                let l = normals(&mut s.stream(1), n);
                let ua = uniforms(&mut s.stream(2), n);
                let um = uniforms(&mut s.stream(3), n);
                let uy = uniforms(&mut s.stream(4), n);
                let (mut a, mut m, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                for i in 0..n {
                    a[i] = bern(ua[i], c.propensity(l[i]));
                    m[i] = bern(um[i], c.mediator_mean(a[i], l[i]));
                    y[i] = bern(uy[i], c.outcome_mean(a[i], m[i], l[i]));
                }
                Sample::Mediation { l, a, m, y }
            }
        }
    }
}

fn row(l: &[Vec<f64>; 5], i: usize) -> [f64; 5] {
    [l[0][i], l[1][i], l[2][i], l[3][i], l[4][i]]
}

fn combine(dgp: &DgpSpec, sample: &Sample, target: &Target) -> Result<(Vec<f64>, Vec<f64>)> {
    match target {
        Target::Contrast(kind, first, second) => {
            let (t1, e1) = combine(dgp, sample, first)?;
            let (t2, e2) = combine(dgp, sample, second)?;
            Ok(match kind {
                ContrastKind::Difference => (
                    t1.iter().zip(&t2).map(|(a, b)| a - b).collect(),
                    e1.iter().zip(&e2).map(|(a, b)| a - b).collect(),
                ),
                ContrastKind::Ratio => (ratio_linearization(&t1, &t2)?, ratio_linearization(&e1, &e2)?),
            })
        }
        Target::Regime(r) => Ok(match sample {
            Sample::Single { l, a, y, delta } => {
                let c = &dgp.single;
                let truth: Vec<f64> = (0..a.len()).map(|i| c.outcome_mean(r[0], &row(l, i))).collect();
                let uc: Vec<f64> = (0..a.len())
                    .map(|i| single_eif_uc(c, r[0], &row(l, i), a[i], y[i]))
                    .collect();
                let eif = match delta {
                    None => uc,
                    Some(d) => two_phase_observed(c, dgp.pi, r[0], l, a, y, d, &uc),
                };
                (truth, eif)
            }
            Sample::Longitudinal { l0, a1, l1, a2, y } => {
                longitudinal_terms(&dgp.longitudinal, (r[0], r[1]), l0, a1, l1, a2, y)
            }
            Sample::Mediation { l, a, m, y } => mediation_tsm(&dgp.mediation, r[0], l, a, y, m),
        }),
        Target::MediationTheta => match sample {
            Sample::Mediation { l, a, m, y } => Ok(mediation_theta(&dgp.mediation, l, a, m, y)),
            _ => Err(Error::argument("the mediation functional needs a mediator")),
        },
    }
}

/// Per-draw first-order expansion of `ψ₁/ψ₂` around the sample means.
fn ratio_linearization(x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
    let (p1, p2) = (mean(x1), mean(x2));
    if p2.abs() < 1e-12 {
        return Err(Error::numerical("ratio denominator is zero"));
    }
    Ok(x1
        .iter()
        .zip(x2)
        .map(|(a, b)| p1 / p2 + (a - p1) / p2 - p1 * (b - p2) / (p2 * p2))
        .collect())
}

fn single_eif_uc(c: &SingleTimepointCoefs, arm: f64, l: &[f64; 5], a: f64, y: f64) -> f64 {
    let q = c.outcome_mean(arm, l);
    if a != arm {
        return q;
    }
    let g = c.propensity(l);
    let ga = if arm == 1.0 { g } else { 1.0 - g };
    q + (y - q) / ga
}

/// `E[φ^uc | V] + Δ/π (φ^uc − E[φ^uc | V])`, integrating the phase-two
/// covariate `L1` against its conditional law given `V = (L2..L5, A, Y)`.
#[allow(clippy::too_many_arguments)]
fn two_phase_observed(
    c: &SingleTimepointCoefs,
    pi: PiSpec,
    arm: f64,
    l: &[Vec<f64>; 5],
    a: &[f64],
    y: &[f64],
    delta: &[f64],
    uc: &[f64],
) -> Vec<f64> {
    let (nodes, probs) = normal_rule();
    (0..a.len())
        .map(|i| {
            let p = if y[i] == 1.0 { 1.0 } else { pi.pi(l[3][i], l[4][i]) };
            if p >= 1.0 {
                // Always sampled: the projection cancels.
                return uc[i];
            }
            let mut li = row(l, i);
            let (mut num, mut den) = (0.0, 0.0);
            for (x, w) in nodes.iter().zip(&probs) {
                li[0] = *x;
                let g = c.propensity(&li);
                let pa = if a[i] == 1.0 { g } else { 1.0 - g };
                let q = c.outcome_mean(a[i], &li);
                let py = if y[i] == 1.0 { q } else { 1.0 - q };
                let k = w * pa * py;
                num += k * single_eif_uc(c, arm, &li, a[i], y[i]);
                den += k;
            }
            let m = num / den;
            m + delta[i] / p * (uc[i] - m)
        })
        .collect()
}

fn longitudinal_terms(
    c: &LongitudinalCoefs,
    (r1, r2): (f64, f64),
    l0: &[f64],
    a1: &[f64],
    l1: &[f64],
    a2: &[f64],
    y: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (nodes, probs) = normal_rule();
    let q1 = |l0: f64| -> f64 {
        let mu = c.l1_mean(l0, r1);
        nodes
            .iter()
            .zip(&probs)
            .map(|(z, w)| w * c.outcome_mean(r1, r2, mu + z))
            .sum()
    };
    let n = l0.len();
    let mut truth = vec![0.0; n];
    let mut eif = vec![0.0; n];
    for i in 0..n {
        let q1i = q1(l0[i]);
        truth[i] = q1i;
        let mut phi = q1i;
        if a1[i] == r1 {
            let g1 = c.g1(l0[i]);
            let w1 = 1.0 / if r1 == 1.0 { g1 } else { 1.0 - g1 };
            let q2 = c.outcome_mean(r1, r2, l1[i]);
            phi += w1 * (q2 - q1i);
            if a2[i] == r2 {
                let g2 = c.g2(l1[i], a1[i]);
                let w2 = w1 / if r2 == 1.0 { g2 } else { 1.0 - g2 };
                phi += w2 * (y[i] - q2);
            }
        }
        eif[i] = phi;
    }
    (truth, eif)
}

fn density(m: f64, p: f64) -> f64 {
    if m == 1.0 {
        p
    } else {
        1.0 - p
    }
}

fn mediation_tsm(c: &MediationCoefs, arm: f64, l: &[f64], a: &[f64], y: &[f64], _m: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let qbar = |arm: f64, l: f64| {
        let pm = c.mediator_mean(arm, l);
        pm * c.outcome_mean(arm, 1.0, l) + (1.0 - pm) * c.outcome_mean(arm, 0.0, l)
    };
    let truth: Vec<f64> = l.iter().map(|&li| qbar(arm, li)).collect();
    let eif = (0..l.len())
        .map(|i| {
            let q = truth[i];
            if a[i] != arm {
                return q;
            }
            let g = c.propensity(l[i]);
            q + (y[i] - q) / density(arm, g)
        })
        .collect();
    (truth, eif)
}

fn mediation_theta(c: &MediationCoefs, l: &[f64], a: &[f64], m: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = l.len();
    let mut truth = vec![0.0; n];
    let mut eif = vec![0.0; n];
    for i in 0..n {
        let p0 = c.mediator_mean(0.0, l[i]);
        let theta = p0 * c.outcome_mean(1.0, 1.0, l[i]) + (1.0 - p0) * c.outcome_mean(1.0, 0.0, l[i]);
        truth[i] = theta;
        let g = c.propensity(l[i]);
        let q = c.outcome_mean(1.0, m[i], l[i]);
        eif[i] = if a[i] == 0.0 {
            theta + (q - theta) / (1.0 - g)
        } else {
            let p1 = c.mediator_mean(1.0, l[i]);
            theta + density(m[i], p0) / density(m[i], p1) / g * (y[i] - q)
        };
    }
    (truth, eif)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimands::{ate, longitudinal_spec, nde, nde_m_functional_spec, tsm_spec};
    use crate::sim::{draw_longitudinal_t2, draw_mediation, draw_single_timepoint};

    #[test]
    fn hermite_rule_moments() {
        let (x, p) = normal_rule();
        let m0: f64 = p.iter().sum();
        let m2: f64 = x.iter().zip(&p).map(|(x, p)| p * x * x).sum();
        let m4: f64 = x.iter().zip(&p).map(|(x, p)| p * x.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-10);
    }

    /// Binary `L` with `P(L = 1) = 1/2`, known propensity, and `Y` a
    /// deterministic function of `(A, L)`.
    struct TwoCell {
        q: [[f64; 2]; 2],
        g: [f64; 2],
    }

    impl TrueModel for TwoCell {
        fn contributions(&self, draws: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
            let s = Streams::new(seed);
            let ul = uniforms(&mut s.stream(1), draws);
            let ua = uniforms(&mut s.stream(2), draws);
            let mut t = Vec::with_capacity(draws);
            let mut e = Vec::with_capacity(draws);
            for i in 0..draws {
                let l = usize::from(ul[i] < 0.5);
                let a = usize::from(ua[i] < self.g[l]);
                let y = self.q[a][l];
                let q1 = self.q[1][l];
                t.push(q1);
                e.push(q1 + if a == 1 { (y - q1) / self.g[l] } else { 0.0 });
            }
            Ok((t, e))
        }
    }

    #[test]
    fn deterministic_outcome_bound_is_plugin_variance() {
        let m = TwoCell {
            q: [[0.0, 0.0], [0.2, 0.8]],
            g: [0.3, 0.6],
        };
        let b = bound_of(&m, 200_000, 3).unwrap();
        // Var(Q(1, L)) with L ~ Bernoulli(1/2).
        let exact = (0.8f64 - 0.2).powi(2) / 4.0;
        assert!((b.bound - exact).abs() < 4.0 * b.mc_se + 1e-3, "{} vs {exact}", b.bound);
        let t = truth_of(&m, 200_000, 3).unwrap();
        assert!((t.psi0 - 0.5).abs() < 4.0 * t.mc_se);
    }

    #[test]
    fn null_effect_truth_is_zero() {
        let mut dgp = DgpSpec::new(DgpKind::SingleTimepoint);
        dgp.single.outcome[1] = 0.0;
        dgp.single.outcome[4] = 0.0;
        dgp.single.outcome[5] = 0.0;
        let schema = draw_single_timepoint(5, 1).unwrap().schema().clone();
        let t = monte_carlo_truth(&dgp, &ate(&schema).unwrap(), 100_000, 1).unwrap();
        assert!(t.psi0.abs() <= 3.0 * t.mc_se.max(1e-15));
        let b = efficiency_bound(&dgp, &ate(&schema).unwrap(), 100_000, 1).unwrap();
        assert!(b.bound > 0.0);
    }

    #[test]
    fn mc_se_scales_with_draws() {
        let dgp = DgpSpec::new(DgpKind::SingleTimepoint);
        let schema = draw_single_timepoint(5, 1).unwrap().schema().clone();
        let e = ate(&schema).unwrap();
        let a = monte_carlo_truth(&dgp, &e, 100_000, 7).unwrap();
        let b = monte_carlo_truth(&dgp, &e, 200_000, 7).unwrap();
        let r = a.mc_se / b.mc_se;
        assert!((r - core::f64::consts::SQRT_2).abs() < 0.05, "{r}");
    }

    #[test]
    fn regime_invariant_without_treatment_effects() {
        let mut dgp = DgpSpec::new(DgpKind::LongitudinalT2);
        dgp.longitudinal.y[1] = 0.0;
        dgp.longitudinal.y[2] = 0.0;
        dgp.longitudinal.l1[1] = 0.0;
        let schema = draw_longitudinal_t2(5, 1).unwrap().schema().clone();
        let r11 = Estimand::Single(longitudinal_spec(&schema, &[1.0, 1.0]).unwrap());
        let r00 = Estimand::Single(longitudinal_spec(&schema, &[0.0, 0.0]).unwrap());
        let diff = Estimand::contrast(r11, r00, ContrastKind::Difference);
        let t = monte_carlo_truth(&dgp, &diff, 100_000, 2).unwrap();
        assert!(t.psi0.abs() <= 3.0 * t.mc_se.max(1e-15), "{:?}", t);
    }

    #[test]
    fn longitudinal_eif_is_centered() {
        let dgp = DgpSpec::new(DgpKind::LongitudinalT2);
        let schema = draw_longitudinal_t2(5, 1).unwrap().schema().clone();
        let target = DgpTarget::new(&dgp, &Estimand::Single(longitudinal_spec(&schema, &[1.0, 1.0]).unwrap())).unwrap();
        let (t, e) = target.contributions(400_000, 5).unwrap();
        let se = sd(&e) / (e.len() as f64).sqrt();
        assert!((mean(&e) - mean(&t)).abs() < 4.0 * se);
    }

    #[test]
    fn two_phase_bound_exceeds_full_data_bound() {
        let schema = draw_single_timepoint(5, 1).unwrap().schema().clone();
        let e = Estimand::Single(tsm_spec(&schema, 1.0).unwrap());
        let full = efficiency_bound(&DgpSpec::new(DgpKind::SingleTimepoint), &e, 200_000, 4).unwrap();
        let tp = efficiency_bound(&DgpSpec::new(DgpKind::TwoPhase), &e, 200_000, 4).unwrap();
        assert!(tp.bound > full.bound);
        let t_full = monte_carlo_truth(&DgpSpec::new(DgpKind::SingleTimepoint), &e, 200_000, 4).unwrap();
        let t_tp = monte_carlo_truth(&DgpSpec::new(DgpKind::TwoPhase), &e, 200_000, 4).unwrap();
        assert_eq!(t_full, t_tp);
    }

    #[test]
    fn mediation_collapse_and_centering() {
        let mut dgp = DgpSpec::new(DgpKind::Mediation);
        dgp.mediation.m[1] = 0.0;
        dgp.mediation.y[2] = 0.0;
        let schema = draw_mediation(5, 1).unwrap().schema().clone();
        let theta = Estimand::Single(nde_m_functional_spec(&schema).unwrap());
        let tsm1 = Estimand::Single(tsm_spec(&schema, 1.0).unwrap());
        let d = Estimand::contrast(theta.clone(), tsm1, ContrastKind::Difference);
        let t = monte_carlo_truth(&dgp, &d, 50_000, 1).unwrap();
        assert!(t.psi0.abs() < 1e-12);
        let target = DgpTarget::new(&DgpSpec::new(DgpKind::Mediation), &nde(&schema).unwrap()).unwrap();
        let (t, e) = target.contributions(400_000, 9).unwrap();
        let se = sd(&e) / (e.len() as f64).sqrt();
        assert!((mean(&e) - mean(&t)).abs() < 4.0 * se);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let schema = draw_longitudinal_t2(5, 1).unwrap().schema().clone();
        let e = Estimand::Single(longitudinal_spec(&schema, &[1.0, 1.0]).unwrap());
        assert!(monte_carlo_truth(&DgpSpec::new(DgpKind::SingleTimepoint), &e, 100, 1).is_err());
    }
}

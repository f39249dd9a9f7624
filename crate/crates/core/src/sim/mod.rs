//! Simulation designs, truth and efficiency-bound oracles, and the
//! replication harness.
//!
//! Every variable of a design is drawn from its own ChaCha8 stream of the
//! generator seeded with the replication seed, so a dataset depends only on
//! `(design, n, seed)`.

mod harness;
mod truth;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Column, ColumnRole, Dataset};
use crate::error::{Error, Result};
use crate::math::expit;

pub use harness::{
    aggregate, run_replication, run_replications, Arm, EstimandChoice, MetricRow, MetricsTable, ReplicationResult,
    SimConfig,
};
pub use truth::{bound_of, efficiency_bound, gauss_hermite, monte_carlo_truth, truth_of, BoundEstimate, TrueModel, TruthEstimate};

/// Which design to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    SingleTimepoint,
    LongitudinalT2,
    TwoPhase,
    Mediation,
}

impl DgpKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "single_timepoint" => DgpKind::SingleTimepoint,
            "longitudinal_t2" => DgpKind::LongitudinalT2,
            "two_phase" => DgpKind::TwoPhase,
            "mediation" => DgpKind::Mediation,
            _ => return Err(Error::argument(alloc::format!("unknown dgp `{s}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpKind::SingleTimepoint => "single_timepoint",
            DgpKind::LongitudinalT2 => "longitudinal_t2",
            DgpKind::TwoPhase => "two_phase",
            DgpKind::Mediation => "mediation",
        }
    }
}

/// Coefficients of the single time-point design.
///
/// `P(A = 1 | L) = expit(t0 + t1 L2 + t2 L3 + t3 L4 L5 + t4 L1 L2)`,
/// `P(Y = 1 | A = a, L) = expit(o0 + o1 a + o2 L2 + o3 L4 L5 + o4 a L1 + o5 a L2)`,
/// with `L1, L2, L3 ~ N(0, 1)`, `L4 ~ Bernoulli(0.5)`, `L5 ~ U(−1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTimepointCoefs {
    pub treatment: [f64; 5],
    pub outcome: [f64; 6],
}

impl Default for SingleTimepointCoefs {
    fn default() -> Self {
        SingleTimepointCoefs {
            treatment: [-0.4, 0.6, -0.5, 0.5, -0.4],
            outcome: [-0.8, 0.9, 0.6, 0.8, 0.7, -0.6],
        }
    }
}

impl SingleTimepointCoefs {
    /// `l = (L1, …, L5)`.
    pub fn propensity(&self, l: &[f64; 5]) -> f64 {
        let t = &self.treatment;
        expit(t[0] + t[1] * l[1] + t[2] * l[2] + t[3] * l[3] * l[4] + t[4] * l[0] * l[1])
    }

    pub fn outcome_mean(&self, a: f64, l: &[f64; 5]) -> f64 {
        let o = &self.outcome;
        expit(o[0] + o[1] * a + o[2] * l[1] + o[3] * l[3] * l[4] + o[4] * a * l[0] + o[5] * a * l[1])
    }
}

/// Coefficients of the two time-point design:
/// `L0 ~ N(0, 1)`, `A1 ~ Bern(expit(a1₀ + a1₁ L0))`,
/// `L1 ~ N(l1₀ L0 + l1₁ A1, 1)`, `A2 ~ Bern(expit(a2₀ + a2₁ L1 + a2₂ A1))`,
/// `Y ~ Bern(expit(y₀ + y₁ A1 + y₂ A2 + y₃ L1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalCoefs {
    pub a1: [f64; 2],
    pub l1: [f64; 2],
    pub a2: [f64; 3],
    pub y: [f64; 4],
}

impl Default for LongitudinalCoefs {
    fn default() -> Self {
        LongitudinalCoefs {
            a1: [0.0, 0.3],
            l1: [0.5, 0.4],
            a2: [0.0, 0.3, -0.2],
            y: [-0.5, 0.5, 0.5, 0.4],
        }
    }
}

impl LongitudinalCoefs {
    pub fn g1(&self, l0: f64) -> f64 {
        expit(self.a1[0] + self.a1[1] * l0)
    }

    pub fn l1_mean(&self, l0: f64, a1: f64) -> f64 {
        self.l1[0] * l0 + self.l1[1] * a1
    }

    pub fn g2(&self, l1: f64, a1: f64) -> f64 {
        expit(self.a2[0] + self.a2[1] * l1 + self.a2[2] * a1)
    }

    pub fn outcome_mean(&self, a1: f64, a2: f64, l1: f64) -> f64 {
        expit(self.y[0] + self.y[1] * a1 + self.y[2] * a2 + self.y[3] * l1)
    }
}

/// Binary-mediator design: `L ~ N(0, 1)`, `A ~ Bern(expit(a₀ + a₁ L))`,
/// `M ~ Bern(expit(m₀ + m₁ A + m₂ L))`,
/// `Y ~ Bern(expit(y₀ + y₁ A + y₂ M + y₃ L))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediationCoefs {
    pub a: [f64; 2],
    pub m: [f64; 3],
    pub y: [f64; 4],
}

impl Default for MediationCoefs {
    fn default() -> Self {
        MediationCoefs {
            a: [0.0, 0.3],
            m: [-0.3, 0.8, 0.4],
            y: [-0.5, 0.6, 0.7, 0.3],
        }
    }
}

impl MediationCoefs {
    pub fn propensity(&self, l: f64) -> f64 {
        expit(self.a[0] + self.a[1] * l)
    }

    pub fn mediator_mean(&self, a: f64, l: f64) -> f64 {
        expit(self.m[0] + self.m[1] * a + self.m[2] * l)
    }

    pub fn outcome_mean(&self, a: f64, m: f64, l: f64) -> f64 {
        expit(self.y[0] + self.y[1] * a + self.y[2] * m + self.y[3] * l)
    }
}

/// Phase-two sampling probability among controls, a function of the
/// phase-one covariates `L4, L5`, clamped to `[0.05, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PiSpec {
    Constant(f64),
    /// `expit(c₀ + c₁ L4 + c₂ L5)`.
    Logistic([f64; 3]),
}

impl Default for PiSpec {
    fn default() -> Self {
        PiSpec::Logistic([-0.5, 0.8, -0.6])
    }
}

impl PiSpec {
    pub fn pi(&self, l4: f64, l5: f64) -> f64 {
        let p = match self {
            PiSpec::Constant(p) => *p,
            PiSpec::Logistic(c) => expit(c[0] + c[1] * l4 + c[2] * l5),
        };
        p.clamp(0.05, 1.0)
    }
}

/// A simulation design with its coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub single: SingleTimepointCoefs,
    pub longitudinal: LongitudinalCoefs,
    pub mediation: MediationCoefs,
    pub pi: PiSpec,
}

impl DgpSpec {
    pub fn new(kind: DgpKind) -> Self {
        DgpSpec {
            kind,
            single: SingleTimepointCoefs::default(),
            longitudinal: LongitudinalCoefs::default(),
            mediation: MediationCoefs::default(),
            pi: PiSpec::default(),
        }
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self.kind {
            DgpKind::SingleTimepoint => draw_single_with(&self.single, n, seed),
            DgpKind::LongitudinalT2 => draw_longitudinal_with(&self.longitudinal, n, seed),
            DgpKind::TwoPhase => draw_two_phase_with(&self.single, n, seed, self.pi),
            DgpKind::Mediation => draw_mediation_with(&self.mediation, n, seed),
        }
    }
}

/// Independent per-variable streams of one seed.
pub(crate) struct Streams {
    seed: u64,
}

impl Streams {
    pub(crate) fn new(seed: u64) -> Self {
        Streams { seed }
    }

    pub(crate) fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}

pub(crate) fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub(crate) fn uniforms(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn bernoulli(u: f64, p: f64) -> f64 {
    if u < p {
        1.0
    } else {
        0.0
    }
}

/// Baseline covariates `(L1, …, L5)` of the single time-point design.
pub(crate) fn single_covariates(streams: &Streams, n: usize) -> [Vec<f64>; 5] {
    let l1 = normals(&mut streams.stream(1), n);
    let l2 = normals(&mut streams.stream(2), n);
    let l3 = normals(&mut streams.stream(3), n);
    let l4 = uniforms(&mut streams.stream(4), n).into_iter().map(|u| bernoulli(u, 0.5)).collect();
    let l5 = uniforms(&mut streams.stream(5), n).into_iter().map(|u| 2.0 * u - 1.0).collect();
    [l1, l2, l3, l4, l5]
}

fn single_raw(c: &SingleTimepointCoefs, n: usize, streams: &Streams) -> ([Vec<f64>; 5], Vec<f64>, Vec<f64>) {
    let l = single_covariates(streams, n);
    let ua = uniforms(&mut streams.stream(6), n);
    let uy = uniforms(&mut streams.stream(7), n);
    let mut a = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let li = [l[0][i], l[1][i], l[2][i], l[3][i], l[4][i]];
        a[i] = bernoulli(ua[i], c.propensity(&li));
        y[i] = bernoulli(uy[i], c.outcome_mean(a[i], &li));
    }
    (l, a, y)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::argument("sample size must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn draw_single_with(c: &SingleTimepointCoefs, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let ([l1, l2, l3, l4, l5], a, y) = single_raw(c, n, &Streams::new(seed));
    Dataset::from_columns(vec![
        ("L1", ColumnRole::Baseline, l1),
        ("L2", ColumnRole::Baseline, l2),
        ("L3", ColumnRole::Baseline, l3),
        ("L4", ColumnRole::Baseline, l4),
        ("L5", ColumnRole::Baseline, l5),
        ("A", ColumnRole::Treatment(1), a),
        ("Y", ColumnRole::Outcome, y),
    ])
}

/// Single time-point design with columns `L1, …, L5, A, Y`.
pub fn draw_single_timepoint(n: usize, seed: u64) -> Result<Dataset> {
    draw_single_with(&SingleTimepointCoefs::default(), n, seed)
}

pub fn draw_longitudinal_with(c: &LongitudinalCoefs, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let s = Streams::new(seed);
    let l0 = normals(&mut s.stream(1), n);
    let ua1 = uniforms(&mut s.stream(2), n);
    let z1 = normals(&mut s.stream(3), n);
    let ua2 = uniforms(&mut s.stream(4), n);
    let uy = uniforms(&mut s.stream(5), n);
    let (mut a1, mut l1, mut a2, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        a1[i] = bernoulli(ua1[i], c.g1(l0[i]));
        l1[i] = c.l1_mean(l0[i], a1[i]) + z1[i];
        a2[i] = bernoulli(ua2[i], c.g2(l1[i], a1[i]));
        y[i] = bernoulli(uy[i], c.outcome_mean(a1[i], a2[i], l1[i]));
    }
    Dataset::from_columns(vec![
        ("L0", ColumnRole::Baseline, l0),
        ("A1", ColumnRole::Treatment(1), a1),
        ("L1", ColumnRole::TimeVarying(2), l1),
        ("A2", ColumnRole::Treatment(2), a2),
        ("Y", ColumnRole::Outcome, y),
    ])
}

/// Two time-point design with columns `L0, A1, L1, A2, Y`.
pub fn draw_longitudinal_t2(n: usize, seed: u64) -> Result<Dataset> {
    draw_longitudinal_with(&LongitudinalCoefs::default(), n, seed)
}

pub fn draw_two_phase_with(c: &SingleTimepointCoefs, n: usize, seed: u64, pi: PiSpec) -> Result<Dataset> {
    check_n(n)?;
    let s = Streams::new(seed);
    let ([l1, l2, l3, l4, l5], a, y) = single_raw(c, n, &s);
    let ud = uniforms(&mut s.stream(8), n);
    let delta: Vec<f64> = (0..n)
        .map(|i| if y[i] == 1.0 { 1.0 } else { bernoulli(ud[i], pi.pi(l4[i], l5[i])) })
        .collect();
    let l1_cells = l1
        .iter()
        .zip(&delta)
        .map(|(v, d)| if *d == 1.0 { Some(*v) } else { None })
        .collect();
    Dataset::new(vec![
        Column::with_missing("L1", ColumnRole::Baseline, l1_cells),
        Column::new("L2", ColumnRole::Baseline, l2),
        Column::new("L3", ColumnRole::Baseline, l3),
        Column::new("L4", ColumnRole::Baseline, l4),
        Column::new("L5", ColumnRole::Baseline, l5),
        Column::new("A", ColumnRole::Treatment(1), a),
        Column::new("Y", ColumnRole::Outcome, y),
        Column::new("Delta", ColumnRole::SamplingIndicator, delta),
    ])
}

/// Case-control two-phase version of the single time-point design: every
/// `Y = 1` row is sampled, controls with probability `π(L4, L5)`; `L1` is
/// measured only on sampled rows. Columns `L1, …, L5, A, Y, Delta`.
pub fn draw_two_phase(n: usize, seed: u64, pi: PiSpec) -> Result<Dataset> {
    draw_two_phase_with(&SingleTimepointCoefs::default(), n, seed, pi)
}

pub fn draw_mediation_with(c: &MediationCoefs, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let s = Streams::new(seed);
    let l = normals(&mut s.stream(1), n);
    let ua = uniforms(&mut s.stream(2), n);
    let um = uniforms(&mut s.stream(3), n);
    let uy = uniforms(&mut s.stream(4), n);
    let (mut a, mut m, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        a[i] = bernoulli(ua[i], c.propensity(l[i]));
        m[i] = bernoulli(um[i], c.mediator_mean(a[i], l[i]));
        y[i] = bernoulli(uy[i], c.outcome_mean(a[i], m[i], l[i]));
    }
    Dataset::from_columns(vec![
        ("L", ColumnRole::Baseline, l),
        ("A", ColumnRole::Treatment(1), a),
        ("M", ColumnRole::Mediator, m),
        ("Y", ColumnRole::Outcome, y),
    ])
}

/// Binary-mediator design with columns `L, A, M, Y`.
pub fn draw_mediation(n: usize, seed: u64) -> Result<Dataset> {
    draw_mediation_with(&MediationCoefs::default(), n, seed)
}

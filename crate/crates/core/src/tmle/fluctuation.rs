//! Scaling, fluctuated level functions and the one-dimensional fluctuation fit.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::Result;
use crate::estimands::FluctuationLink;
use crate::func::RowFunction;
use crate::learners::{fit_offset_1d, response, ColumnRegressor, Family, FitDiagnostics};
use crate::math::{clamp_prob, logit};

/// Min-max bounds of a pseudo-outcome; predictions live in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub lo: f64,
    pub hi: f64,
}

impl Scaling {
    pub const UNIT: Scaling = Scaling { lo: 0.0, hi: 1.0 };

    pub fn from_values(v: &[f64]) -> Self {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Scaling { lo, hi }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }
}

/// Link-scale offset of a prediction on the original scale.
pub(crate) fn link_offset(q: f64, scaling: Scaling, link: FluctuationLink) -> f64 {
    match link {
        FluctuationLink::Logit => logit(clamp_prob(scaling.to_unit(q))),
        FluctuationLink::Identity => q,
    }
}

/// Response on the regression scale (unit interval for the logit link).
pub(crate) fn regression_response(y: f64, scaling: Scaling, link: FluctuationLink) -> f64 {
    match link {
        FluctuationLink::Logit => scaling.to_unit(y),
        FluctuationLink::Identity => y,
    }
}

pub(crate) fn family_of(link: FluctuationLink) -> Family {
    match link {
        FluctuationLink::Logit => Family::Binomial,
        FluctuationLink::Identity => Family::Gaussian,
    }
}

/// An initial regression `Q̄_t`, mapped back to the pseudo-outcome scale.
pub struct InitialLevel {
    pub regressor: ColumnRegressor,
    pub scaling: Scaling,
    pub link: FluctuationLink,
}

impl RowFunction for InitialLevel {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        let p = self.regressor.predict(data, None)?;
        Ok(match self.link {
            FluctuationLink::Logit => p.into_iter().map(|u| self.scaling.from_unit(u)).collect(),
            FluctuationLink::Identity => p,
        })
    }
}

/// `Q̄*(x) = link⁻¹(link(Q̄(x)) + ε·ω(x))` on the scaled outcome.
pub struct FluctuatedLevel {
    pub base: Arc<dyn RowFunction>,
    pub covariate: Arc<dyn RowFunction>,
    pub epsilon: f64,
    pub scaling: Scaling,
    pub link: FluctuationLink,
}

impl RowFunction for FluctuatedLevel {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        let q = self.base.eval(data)?;
        if self.epsilon == 0.0 {
            return Ok(q);
        }
        let w = self.covariate.eval(data)?;
        Ok(q.iter()
            .zip(&w)
            .map(|(&q, &w)| match self.link {
                FluctuationLink::Logit => {
                    let eta = link_offset(q, self.scaling, self.link) + self.epsilon * w;
                    self.scaling.from_unit(response(Family::Binomial, eta))
                }
                FluctuationLink::Identity => q + self.epsilon * w,
            })
            .collect())
    }
}

/// A level updated by an offset regression: the regressor predicts on the
/// response scale given the base function as a link-scale offset.
pub struct OffsetUpdatedLevel {
    pub base: Arc<dyn RowFunction>,
    pub regressor: ColumnRegressor,
    pub scaling: Scaling,
    pub link: FluctuationLink,
}

impl RowFunction for OffsetUpdatedLevel {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        let q = self.base.eval(data)?;
        let off: Vec<f64> = q.iter().map(|&q| link_offset(q, self.scaling, self.link)).collect();
        let p = self.regressor.predict(data, Some(&off))?;
        Ok(match self.link {
            FluctuationLink::Logit => p.into_iter().map(|u| self.scaling.from_unit(u)).collect(),
            FluctuationLink::Identity => p,
        })
    }
}

/// Fits `link(pseudo) = link(q) + ε·ω` by (quasi-)likelihood without an
/// intercept.
pub fn fit_epsilon(
    pseudo: &[f64],
    q: &[f64],
    omega: &[f64],
    scaling: Scaling,
    link: FluctuationLink,
    weights: Option<&[f64]>,
) -> Result<(f64, FitDiagnostics)> {
    let y: Vec<f64> = pseudo.iter().map(|&v| regression_response(v, scaling, link)).collect();
    let off: Vec<f64> = q.iter().map(|&v| link_offset(v, scaling, link)).collect();
    fit_offset_1d(omega, &y, family_of(link), weights, &off)
}

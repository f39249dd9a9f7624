//! Efficient estimation of linear functionals through Riesz representers.
//!
//! The crate covers the numerical side of the estimation pipeline:
//!
//! - [`data`]: role-annotated columnar datasets and fold assignment,
//! - [`learners`]: IRLS generalized linear models, ridge, constant-mean and a
//!   cross-validated super learner with a non-negative least squares
//!   metalearner,
//! - [`riesz`]: plug-in and loss-minimizing Riesz representers,
//! - [`estimands`]: declarative nested-regression estimands (treatment
//!   specific means, longitudinal regimes, the mediation M-functional),
//! - [`eif`]: efficient influence function evaluation, Wald intervals and
//!   delta-method contrasts,
//! - [`tmle`]: plug-in, one-step, sequential Riesz TMLE, sequentially doubly
//!   robust TMLE and two-phase sampling TMLE drivers,
//! - [`sim`]: data generating processes, truth/efficiency-bound oracles and
//!   the replication harness.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel replication live in the `riesz-tmle` crate.

#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

extern crate alloc;

pub mod data;
pub mod eif;
pub mod error;
pub mod estimands;
pub mod func;
pub mod learners;
pub mod linalg;
pub mod math;
pub mod riesz;
pub mod sim;
pub mod tmle;

pub use data::{ColumnRole, Dataset, FoldAssignment};
pub use eif::{EifVector, EstimateReport};
pub use error::{Error, Result};
pub use estimands::{Estimand, EstimandSpec};
pub use learners::{Family, FittedLearner, SuperLearner};
pub use riesz::Representer;
pub use tmle::FitBundle;

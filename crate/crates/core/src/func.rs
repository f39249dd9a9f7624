//! Functions of a data row, evaluated column-wise over a dataset.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::Result;
use crate::learners::ColumnRegressor;

/// A function `row → ℝ` that can be evaluated on any dataset with the
/// required columns, including counterfactual copies.
pub trait RowFunction: Send + Sync {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>>;
}

impl RowFunction for ColumnRegressor {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict(data, None)
    }
}

impl<T: RowFunction + ?Sized> RowFunction for Arc<T> {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        (**self).eval(data)
    }
}

/// Constant function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFn(pub f64);

impl RowFunction for ConstantFn {
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(vec![self.0; data.n()])
    }
}

/// Adapter turning a closure into a [`RowFunction`].
pub struct FnRow<F>(pub F);

impl<F> RowFunction for FnRow<F>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Send + Sync,
{
    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        (self.0)(data)
    }
}

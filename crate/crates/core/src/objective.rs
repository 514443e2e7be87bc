//! Differentiable objectives over a parameter set.

use crate::error::Result;
use crate::params::ParamSet;
use crate::zoo::{Batch, Model};

/// A loss `g(w)` with its gradient, flattened in parameter-set order.
pub trait Objective: Sync {
    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, Vec<f64>)>;
}

/// Mean batch loss of a model, the calibration objective.
pub struct ModelObjective<'a> {
    pub model: &'a Model,
    pub batch: &'a Batch,
}

impl<'a> ModelObjective<'a> {
    pub fn new(model: &'a Model, batch: &'a Batch) -> Self {
        Self { model, batch }
    }
}

impl Objective for ModelObjective<'_> {
    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.model.loss_and_grad(params, self.batch)?;
        Ok((loss, grad.flatten_like(params)?))
    }
}

//! Plain SGD, used both for toy training and for post-pruning recovery.

use serde::Serialize;

use super::model::{Batch, Model};
use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Debug, Serialize)]
pub struct FinetuneOutcome {
    #[serde(skip)]
    pub params: ParamSet,
    /// Mean loss over the dataset before training, then after each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Set when some epoch ended with a higher dataset loss than the one before.
    pub loss_increased: bool,
}

fn dataset_loss(model: &Model, params: &ParamSet, dataset: &[Batch]) -> Result<f64> {
    let mut total = 0.0;
    for b in dataset {
        total += model.batch_loss(params, b)?;
    }
    Ok(total / dataset.len() as f64)
}

/// One SGD step per batch, `epochs` passes over `dataset` in order.
pub fn recover_finetune(
    model: &Model,
    params: &ParamSet,
    dataset: &[Batch],
    epochs: usize,
    lr: f64,
) -> Result<FinetuneOutcome> {
    if epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be non-negative, got {lr}")));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut current = params.clone();
    let mut losses = vec![dataset_loss(model, &current, dataset)?];
    let mut steps = 0;
    for epoch in 0..epochs {
        for (step, batch) in dataset.iter().enumerate() {
            let (loss, grad) = match model.loss_and_grad(&current, batch) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::TrainingDiverged { epoch, step }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, step });
            }
            let g = grad.flatten_like(&current)?;
            let updated: Vec<f64> = current.flatten().iter().zip(&g).map(|(w, g)| w - lr * g).collect();
            if updated.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, step });
            }
            current = current.with_flat(&updated)?;
            steps += 1;
        }
        let loss = match dataset_loss(model, &current, dataset) {
            Ok(l) => l,
            Err(Error::NonFinite { .. }) => return Err(Error::TrainingDiverged { epoch, step: dataset.len() }),
            Err(e) => return Err(e),
        };
        losses.push(loss);
    }
    let loss_increased = losses.windows(2).skip(1).any(|w| w[1] > w[0]);
    if loss_increased {
        log::warn!("training loss increased between epochs: {losses:?}");
    }
    Ok(FinetuneOutcome { params: current, epoch_losses: losses, steps, loss_increased })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::build_mlp_with_context;

    fn toy() -> (Model, ParamSet, Vec<Batch>) {
        let (m, p, _) = build_mlp_with_context(&[8, 6, 4], 2, 3).unwrap();
        let seqs: Vec<Vec<usize>> = (0..6).map(|i| (0..12).map(|j| (i + j * j) % 4).collect()).collect();
        let data = seqs.chunks(2).map(|c| Batch::Sequences(c.to_vec())).collect();
        (m, p, data)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (m, p, data) = toy();
        let out = recover_finetune(&m, &p, &data, 2, 0.0).unwrap();
        assert_eq!(out.params, p);
    }

    #[test]
    fn one_step_per_batch_per_epoch() {
        let (m, p, data) = toy();
        let out = recover_finetune(&m, &p, &data[..1], 1, 0.1).unwrap();
        assert_eq!(out.steps, 1);
        let out = recover_finetune(&m, &p, &data, 3, 0.1).unwrap();
        assert_eq!(out.steps, 9);
        assert_eq!(out.epoch_losses.len(), 4);
    }

    #[test]
    fn training_reduces_loss() {
        let (m, p, data) = toy();
        let out = recover_finetune(&m, &p, &data, 2, 0.5).unwrap();
        assert!(out.epoch_losses.last().unwrap() <= &out.epoch_losses[0], "{:?}", out.epoch_losses);
    }

    #[test]
    fn divergence_reports_position() {
        let (m, p, data) = toy();
        let err = recover_finetune(&m, &p, &data, 3, 1e300).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
    }

    #[test]
    fn invalid_arguments() {
        let (m, p, data) = toy();
        assert!(recover_finetune(&m, &p, &data, 0, 0.1).is_err());
        assert!(recover_finetune(&m, &p, &data, 1, -0.1).is_err());
    }
}

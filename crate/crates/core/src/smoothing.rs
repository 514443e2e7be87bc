//! Gaussian smoothing of the loss in weight space.
//!
//! The Monte Carlo smoothed gradient is `(1/m) Σ_i ∇g(w + z_i)`. Each draw
//! `z_i` comes from its own ChaCha stream keyed by `(seed, round, draw)`,
//! so a draw is reproducible on its own and independent of evaluation order.
//! Draws may be evaluated in parallel; the mean is always accumulated in
//! ascending draw order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::GradMap;
use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::objective::Objective;
use crate::params::ParamSet;

/// Draws per gradient for the standalone smoothed-gradient criterion.
pub const SMOOTHGRAD_SAMPLES: usize = 100;
/// Relative noise intensity, `σ = 0.05 |w|` per element.
pub const DEFAULT_RELATIVE_SCALE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum NoiseScale {
    /// Per-element std `s · |w_k|` of the reference weights.
    Relative(f64),
    /// The same std for every element.
    Absolute(f64),
}

impl NoiseScale {
    pub fn is_zero(self) -> bool {
        matches!(self, NoiseScale::Relative(s) | NoiseScale::Absolute(s) if s == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub scale: NoiseScale,
    pub samples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl NoiseSpec {
    pub fn relative(scale: f64, samples: usize, seed: u64) -> Self {
        Self { scale: NoiseScale::Relative(scale), samples, seed, parallelism: Parallelism::Auto }
    }

    pub fn absolute(sigma: f64, samples: usize, seed: u64) -> Self {
        Self { scale: NoiseScale::Absolute(sigma), samples, seed, parallelism: Parallelism::Auto }
    }

    /// No noise, one sample: the plain gradient.
    pub fn exact() -> Self {
        Self::relative(0.0, 1, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = match self.scale {
            NoiseScale::Relative(s) | NoiseScale::Absolute(s) => s,
        };
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("noise scale must be non-negative, got {s}")));
        }
        if self.samples == 0 {
            return Err(Error::Config("noise samples must be at least 1".into()));
        }
        Ok(())
    }
}

fn draw_rng(seed: u64, round: u64, draw: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&round.to_le_bytes());
    key[16..24].copy_from_slice(&(draw as u64).to_le_bytes());
    key[24..].copy_from_slice(b"smoothng");
    ChaCha8Rng::from_seed(key)
}

/// Flat noise vector for one draw. `round` separates successive optimizer
/// steps that each need fresh noise.
pub fn noise_flat(reference: &[f64], spec: &NoiseSpec, round: u64, draw: usize) -> Vec<f64> {
    let mut rng = draw_rng(spec.seed, round, draw);
    reference
        .iter()
        .map(|&w| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let std = match spec.scale {
                NoiseScale::Relative(s) => s * w.abs(),
                NoiseScale::Absolute(s) => s,
            };
            if std == 0.0 {
                0.0
            } else {
                std * z
            }
        })
        .collect()
}

/// ParamSet-shaped noise for draw `draw` of `spec`.
pub fn sample_noise(params: &ParamSet, spec: &NoiseSpec, draw: usize) -> Result<ParamSet> {
    if draw >= spec.samples {
        return Err(Error::Config(format!("draw index {draw} outside {} samples", spec.samples)));
    }
    params.with_flat(&noise_flat(&params.flatten(), spec, 0, draw))
}

/// Mean loss and mean gradient of `objective` over the draws of `spec`,
/// evaluated at `point` with noise scaled from `reference`.
pub fn smoothed_grad_flat(
    objective: &dyn Objective,
    point: &ParamSet,
    reference: &[f64],
    spec: &NoiseSpec,
    round: u64,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    let base = point.flatten();
    let draws = exec::try_map_indexed(spec.parallelism, spec.samples, |draw| {
        let noise = noise_flat(reference, spec, round, draw);
        let shifted: Vec<f64> = base.iter().zip(&noise).map(|(&w, &z)| if z == 0.0 { w } else { w + z }).collect();
        let (loss, grad) = match objective.loss_and_grad(&point.with_flat(&shifted)?) {
            Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteGradient { draw }),
            other => other?,
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { draw });
        }
        Ok((loss, grad))
    })?;

    let m = spec.samples as f64;
    let mut draws = draws.into_iter();
    let (mut loss, mut grad) = draws.next().expect("at least one draw");
    for (l, g) in draws {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    for a in &mut grad {
        *a /= m;
    }
    Ok((loss / m, grad))
}

/// Monte Carlo estimate of `∇E[g(w + z)]` at `params`.
pub fn smoothed_grad(objective: &dyn Objective, params: &ParamSet, spec: &NoiseSpec) -> Result<GradMap> {
    let (_, g) = smoothed_grad_flat(objective, params, &params.flatten(), spec, 0)?;
    Ok(GradMap::from_params(params.with_flat(&g)?))
}

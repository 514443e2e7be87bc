//! Proximal-gradient estimation of the (group-sparse) Moreau envelope gradient.
//!
//! Starting from `w⁽⁰⁾ = w`, each step draws fresh noise, averages the noisy
//! gradients into `g_t`, and applies
//!
//! ```text
//! w⁽ᵗ⁺¹⁾ = (1 − γ/ρ) w⁽ᵗ⁾ − γ (g_t − w/ρ)
//! ```
//!
//! followed, in group-sparse mode, by `w⁽ᵗ⁺¹⁾ = GST_{γη}(w⁽ᵗ⁺¹⁾ − w) + w`.
//! The loop tracks the displacement `δ = w⁽ᵗ⁾ − w` directly, where the same
//! update reads `δ ← (1 − γ/ρ) δ − γ g_t`; this keeps `δ` exact when GST
//! zeroes a group. The result is `mg = δ⁽ᵀ⁾ / ρ`.
//!
//! `mg` points opposite to the envelope gradient (`w⁽ᵀ⁾` moves downhill), so
//! only `|mg|` is meaningful to importance scoring.

use serde::{Deserialize, Serialize};

use super::gst::{group_norm_21, group_soft_threshold_in_place};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamSet;
use crate::smoothing::{smoothed_grad_flat, NoiseSpec, DEFAULT_RELATIVE_SCALE};
use crate::zoo::GroupLayout;

/// Displacement norms beyond `DIVERGENCE_FACTOR · (‖w‖ + 1)` abort the loop.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
pub const DEFAULT_STEPS: usize = 10;
/// Noise draws per optimizer step.
pub const DEFAULT_STEP_SAMPLES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoreauMode {
    Plain,
    GroupSparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoreauConfig {
    pub rho: f64,
    pub eta: f64,
    pub gamma: f64,
    pub steps: usize,
    pub noise: NoiseSpec,
    pub mode: MoreauMode,
}

impl MoreauConfig {
    /// ρ = 0.05, γ = 1e-3, ten steps, relative noise 0.05|w|.
    pub fn plain(seed: u64) -> Self {
        Self {
            rho: 0.05,
            eta: 0.0,
            gamma: 1e-3,
            steps: DEFAULT_STEPS,
            noise: NoiseSpec::relative(DEFAULT_RELATIVE_SCALE, DEFAULT_STEP_SAMPLES, seed),
            mode: MoreauMode::Plain,
        }
    }

    /// ρ = 0.2, γ = 2e-4, η = 5e-6, ten steps, relative noise 0.05|w|.
    pub fn group_sparse(seed: u64) -> Self {
        Self { rho: 0.2, eta: 5e-6, gamma: 2e-4, mode: MoreauMode::GroupSparse, ..Self::plain(seed) }
    }

    /// Many small exact steps, for checking against closed-form envelopes.
    pub fn convergence(rho: f64, mode: MoreauMode) -> Self {
        Self { rho, eta: 0.0, gamma: rho / 4.0, steps: 200, noise: NoiseSpec::exact(), mode }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.gamma > 0.0 && self.gamma <= self.rho) {
            return Err(Error::Config(format!(
                "step size must satisfy 0 < gamma <= rho, got gamma {} with rho {}",
                self.gamma, self.rho
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(Error::Config("at least one optimization step is required".into()));
        }
        self.noise.validate()
    }
}

#[derive(Clone, Debug)]
pub struct MoreauResult {
    /// `w⁽ᵀ⁾`
    pub w_final: ParamSet,
    /// `w⁽ᵀ⁾ − w`
    pub displacement: ParamSet,
    /// `(w⁽ᵀ⁾ − w) / ρ`
    pub mg: ParamSet,
    /// Smoothed loss plus proximal (and group) penalty at each evaluated iterate.
    pub trace: Vec<f64>,
    /// Layout subsets on which `mg` is exactly zero (group-sparse mode only).
    pub zeroed_groups: Option<usize>,
}

impl MoreauResult {
    pub fn mg_flat(&self) -> Vec<f64> {
        self.mg.flatten()
    }
}

fn run(
    objective: &dyn Objective,
    params: &ParamSet,
    config: &MoreauConfig,
    layout: Option<&GroupLayout>,
) -> Result<MoreauResult> {
    config.validate()?;
    let anchor = params.flatten();
    let anchor_norm = anchor.iter().map(|x| x * x).sum::<f64>().sqrt();
    let limit = DIVERGENCE_FACTOR * anchor_norm + DIVERGENCE_FACTOR;
    let damping = 1.0 - config.gamma / config.rho;
    let threshold = config.gamma * config.eta;

    let mut delta = vec![0.0; anchor.len()];
    let mut trace = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        let point: Vec<f64> = anchor.iter().zip(&delta).map(|(&w, &d)| if d == 0.0 { w } else { w + d }).collect();
        let (loss, g) = smoothed_grad_flat(objective, &params.with_flat(&point)?, &anchor, &config.noise, t as u64)?;

        let mut proxy = loss + delta.iter().map(|d| d * d).sum::<f64>() / (2.0 * config.rho);
        if let Some(l) = layout {
            proxy += config.eta * group_norm_21(&delta, l);
        }
        trace.push(proxy);

        for (d, gk) in delta.iter_mut().zip(&g) {
            *d = damping * *d - config.gamma * gk;
        }
        if let Some(l) = layout {
            group_soft_threshold_in_place(&mut delta, l, threshold);
        }
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Divergence { step: t, norm });
        }
    }

    let w_final: Vec<f64> = anchor.iter().zip(&delta).map(|(&w, &d)| if d == 0.0 { w } else { w + d }).collect();
    let mg: Vec<f64> = delta.iter().map(|d| d / config.rho).collect();
    Ok(MoreauResult {
        w_final: params.with_flat(&w_final)?,
        displacement: params.with_flat(&delta)?,
        zeroed_groups: layout.map(|l| l.zeroed_count(&mg)),
        mg: params.with_flat(&mg)?,
        trace,
    })
}

/// MoreauGrad of `objective` at `params`.
pub fn moreau_grad(objective: &dyn Objective, params: &ParamSet, config: &MoreauConfig) -> Result<MoreauResult> {
    if config.mode != MoreauMode::Plain {
        return Err(Error::Config("moreau_grad expects plain mode".into()));
    }
    run(objective, params, config, None)
}

/// Group-sparse MoreauGrad with penalty `η‖δ‖_{2,1}` over `layout`.
pub fn group_sparse_moreau_grad(
    objective: &dyn Objective,
    params: &ParamSet,
    config: &MoreauConfig,
    layout: &GroupLayout,
) -> Result<MoreauResult> {
    if config.mode != MoreauMode::GroupSparse {
        return Err(Error::Config("group_sparse_moreau_grad expects group-sparse mode".into()));
    }
    if let Some(&bad) = layout.subsets().iter().flatten().find(|&&i| i >= params.numel()) {
        return Err(Error::Config(format!("layout index {bad} outside {} parameters", params.numel())));
    }
    run(objective, params, config, Some(layout))
}

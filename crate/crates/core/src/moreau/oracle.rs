//! Test functions with closed-form proximal maps.
//!
//! Each function acts on the flattened parameter vector, so it can be
//! plugged into the proximal loop as an [`Objective`]. The non-smooth ones
//! use the zero subgradient at their kinks.

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::zoo::{GroupTable, PruneGroup, PruneStructure, Slice, StructureClass};

#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `½‖w‖²`
    Quadratic,
    /// `u·w`
    Linear(Vec<f64>),
    /// `β‖w‖₁`
    ScaledAbs(f64),
    /// `β‖w‖₂`, β-Lipschitz in ℓ2 for any dimension.
    ScaledNorm(f64),
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl TestFunction {
    /// `coef` carries `u` for `linear` and `[β]` for the scaled functions.
    pub fn from_id(id: &str, coef: &[f64]) -> Result<Self> {
        let beta = || coef.first().copied().ok_or_else(|| Error::Config(format!("'{id}' needs a coefficient")));
        match id {
            "quadratic" => Ok(TestFunction::Quadratic),
            "linear" => Ok(TestFunction::Linear(coef.to_vec())),
            "scaled-abs" => Ok(TestFunction::ScaledAbs(beta()?)),
            "scaled-norm" => Ok(TestFunction::ScaledNorm(beta()?)),
            other => Err(Error::UnknownFunction(other.to_string())),
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        match self {
            TestFunction::Quadratic => 0.5 * w.iter().map(|x| x * x).sum::<f64>(),
            TestFunction::Linear(u) => u.iter().zip(w).map(|(a, b)| a * b).sum(),
            TestFunction::ScaledAbs(beta) => beta * w.iter().map(|x| x.abs()).sum::<f64>(),
            TestFunction::ScaledNorm(beta) => beta * norm(w),
        }
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        match self {
            TestFunction::Quadratic => w.to_vec(),
            TestFunction::Linear(u) => u.clone(),
            TestFunction::ScaledAbs(beta) => w.iter().map(|&x| beta * sign(x)).collect(),
            TestFunction::ScaledNorm(beta) => {
                let n = norm(w);
                if n == 0.0 {
                    vec![0.0; w.len()]
                } else {
                    w.iter().map(|x| beta * x / n).collect()
                }
            }
        }
    }

    /// A parameter set holding `w` as the single parameter `"w"`.
    pub fn params(w: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(w.to_vec())).expect("fresh set");
        p
    }

    /// One channel group per contiguous block of `sizes` over `"w"`.
    pub fn block_groups(sizes: &[usize]) -> GroupTable {
        let mut table = GroupTable::default();
        let mut start = 0;
        for (id, &len) in sizes.iter().enumerate() {
            table.structures.push(PruneStructure {
                id,
                slices: vec![Slice::new("w", 0, start, len)],
                coupled: Vec::new(),
            });
            table.groups.push(PruneGroup {
                id,
                class: StructureClass::Channel,
                layer: "w".into(),
                unit: id,
                members: vec![id],
            });
            start += len;
        }
        table
    }
}

impl Objective for TestFunction {
    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, Vec<f64>)> {
        let w = params.flatten();
        if let TestFunction::Linear(u) = self {
            if u.len() != w.len() {
                return Err(Error::Shape {
                    op: "linear",
                    detail: format!("coefficient of length {} for {} weights", u.len(), w.len()),
                });
            }
        }
        Ok((self.value(&w), self.gradient(&w)))
    }
}

/// Exact proximal point `argmin_v g(v) + ‖v − w‖²/(2ρ)` and envelope gradient `(w − prox)/ρ`.
pub fn closed_form_oracle(function: &TestFunction, w: &[f64], rho: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    let prox: Vec<f64> = match function {
        TestFunction::Quadratic => w.iter().map(|x| x / (1.0 + rho)).collect(),
        TestFunction::Linear(u) => {
            if u.len() != w.len() {
                return Err(Error::Shape { op: "linear", detail: "coefficient length".into() });
            }
            w.iter().zip(u).map(|(x, u)| x - rho * u).collect()
        }
        TestFunction::ScaledAbs(beta) => w.iter().map(|&x| sign(x) * (x.abs() - rho * beta).max(0.0)).collect(),
        TestFunction::ScaledNorm(beta) => {
            let n = norm(w);
            let keep = if n == 0.0 { 0.0 } else { (1.0 - rho * beta / n).max(0.0) };
            w.iter().map(|x| x * keep).collect()
        }
    };
    let grad = match function {
        TestFunction::Linear(u) => u.clone(),
        TestFunction::ScaledAbs(beta) => w.iter().map(|&x| sign(x) * (x.abs() / rho).min(*beta)).collect(),
        _ => w.iter().zip(&prox).map(|(x, p)| (x - p) / rho).collect(),
    };
    Ok((prox, grad))
}

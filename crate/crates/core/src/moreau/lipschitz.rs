//! Empirical Lipschitz probe for gradient maps.

use serde::Serialize;

use crate::error::Result;
use crate::exec::{self, Parallelism};

/// Absolute tolerance on the ratio test, covering floating-point rounding.
const RATIO_TOLERANCE: f64 = 1e-9;

/// `σ / min(σρ, σ − ρβ)`: Lipschitz constant of the (h-)MoreauGrad of a
/// σ-smoothed β-Lipschitz function, valid for `0 < ρ < σ/β`.
pub fn moreau_lipschitz_bound(sigma: f64, rho: f64, beta: f64) -> Option<f64> {
    if !(sigma > 0.0 && rho > 0.0 && beta >= 0.0 && rho * beta < sigma) {
        return None;
    }
    Some(sigma / (sigma * rho).min(sigma - rho * beta))
}

#[derive(Clone, Debug, Serialize)]
pub struct PairOutcome {
    pub index: usize,
    pub delta_w: f64,
    pub delta_grad: f64,
    pub ratio: f64,
    /// Allowance on `delta_grad` from Monte Carlo spread (zero for exact gradients).
    pub slack: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub bound: f64,
    pub pairs: Vec<PairOutcome>,
    pub skipped: Vec<usize>,
    pub max_ratio: f64,
    pub passed: bool,
    pub warning: Option<String>,
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pooled standard deviation (ℓ2 over coordinates) of repeated estimates at two points.
fn pooled_std(at_first: &[Vec<f64>], at_second: &[Vec<f64>]) -> f64 {
    let var = |reps: &[Vec<f64>]| -> f64 {
        let r = reps.len();
        let d = reps[0].len();
        let mean: Vec<f64> = (0..d).map(|k| reps.iter().map(|v| v[k]).sum::<f64>() / r as f64).collect();
        reps.iter().map(|v| l2_dist(v, &mean).powi(2)).sum::<f64>() / (r - 1) as f64
    };
    ((var(at_first) + var(at_second)) / 2.0).sqrt()
}

/// Checks `‖∇(w₁) − ∇(w₂)‖ ≤ bound · ‖w₁ − w₂‖ + 3·s` for each pair.
///
/// `grad_fn(w, rep)` evaluates the gradient map with Monte Carlo
/// repetition `rep`. The ratio uses repetition 0. With `repetitions ≥ 2`,
/// `s` is the pooled std of the estimates over repetitions; otherwise the
/// map is treated as exact and `s = 0`.
pub fn lipschitz_probe<F>(
    grad_fn: F,
    pairs: &[(Vec<f64>, Vec<f64>)],
    bound: f64,
    repetitions: usize,
) -> Result<ProbeReport>
where
    F: Fn(&[f64], usize) -> Result<Vec<f64>> + Sync + Send,
{
    assert!(bound > 0.0, "bound must be positive");
    let reps = repetitions.max(1);
    let evaluated = exec::try_map_indexed(Parallelism::Auto, pairs.len(), |i| {
        let (w1, w2) = &pairs[i];
        let delta_w = l2_dist(w1, w2);
        if delta_w == 0.0 {
            return Ok::<_, crate::error::Error>(None);
        }
        let g1 = (0..reps).map(|r| grad_fn(w1, r)).collect::<Result<Vec<_>>>()?;
        let g2 = (0..reps).map(|r| grad_fn(w2, r)).collect::<Result<Vec<_>>>()?;
        let delta_grad = l2_dist(&g1[0], &g2[0]);
        let slack = if reps >= 2 { 3.0 * pooled_std(&g1, &g2) } else { 0.0 };
        let ratio = delta_grad / delta_w;
        let passed = ratio <= bound + slack / delta_w + RATIO_TOLERANCE;
        Ok(Some(PairOutcome { index: i, delta_w, delta_grad, ratio, slack, passed }))
    })?;

    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for (i, e) in evaluated.into_iter().enumerate() {
        match e {
            Some(o) => outcomes.push(o),
            None => skipped.push(i),
        }
    }
    let warning = if outcomes.is_empty() {
        Some("no pair with distinct points; probe passes vacuously".to_string())
    } else if !skipped.is_empty() {
        Some(format!("{} coincident pair(s) skipped", skipped.len()))
    } else {
        None
    };
    let max_ratio = outcomes.iter().map(|o| o.ratio).fold(0.0, f64::max);
    let passed = outcomes.iter().all(|o| o.passed);
    Ok(ProbeReport { bound, pairs: outcomes, skipped, max_ratio, passed, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moreau::oracle::{closed_form_oracle, TestFunction};

    #[test]
    fn bound_formula() {
        assert_eq!(moreau_lipschitz_bound(0.5, 0.2, 1.0), Some(5.0));
        assert_eq!(moreau_lipschitz_bound(0.5, 0.6, 1.0), None);
    }

    #[test]
    fn quadratic_envelope_ratio_below_one_over_one_plus_rho() {
        let rho = 1.0;
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20)
            .map(|i| {
                let a = i as f64 * 0.37 - 3.0;
                (vec![a, 1.0 - a], vec![a * 0.5 + 0.2, a])
            })
            .collect();
        let report = lipschitz_probe(
            |w, _| Ok(closed_form_oracle(&TestFunction::Quadratic, w, rho)?.1),
            &pairs,
            1.0 / (1.0 + rho),
            1,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_ratio <= 0.5 + 1e-9);
    }

    #[test]
    fn coincident_pair_is_skipped_with_warning() {
        let report = lipschitz_probe(|w, _| Ok(w.to_vec()), &[(vec![1.0], vec![1.0])], 1.0, 1).unwrap();
        assert_eq!(report.skipped, vec![0]);
        assert!(report.passed);
        assert!(report.warning.is_some());
    }

    #[test]
    fn violation_is_detected() {
        let report = lipschitz_probe(|w, _| Ok(vec![10.0 * w[0]]), &[(vec![0.0], vec![1.0])], 2.0, 1).unwrap();
        assert!(!report.passed);
        assert_eq!(report.max_ratio, 10.0);
    }
}

//! Weight perturbations and the stability of pruning decisions under them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rounding::{round_trip, HalfFormat};
use crate::error::{Error, Result};
use crate::importance::{compute_importance, Criterion, ImportanceConfig};
use crate::objective::Objective;
use crate::params::ParamSet;
use crate::zoo::GroupTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbSpec {
    Identity,
    Fp16,
    Bf16,
    /// Gaussian direction rescaled to ℓ2 length exactly `eps`.
    GaussianBall {
        eps: f64,
        seed: u64,
    },
}

impl PerturbSpec {
    pub fn label(&self) -> String {
        match self {
            PerturbSpec::Identity => "identity".into(),
            PerturbSpec::Fp16 => "fp16".into(),
            PerturbSpec::Bf16 => "bf16".into(),
            PerturbSpec::GaussianBall { eps, .. } => format!("ball-{eps}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PerturbSpec::GaussianBall { eps, .. } if !(*eps >= 0.0 && eps.is_finite()) => {
                Err(Error::Config(format!("ball radius must be non-negative, got {eps}")))
            }
            _ => Ok(()),
        }
    }
}

/// Applies `spec` to every prunable parameter; other parameters are copied.
pub fn perturb(params: &ParamSet, groups: &GroupTable, spec: &PerturbSpec) -> Result<ParamSet> {
    spec.validate()?;
    let prunable = groups.prunable_params();
    let offsets = params.offsets();
    let mut flat = params.flatten();
    let mut targets = Vec::new();
    for (name, t) in params.iter() {
        if prunable.contains(name) {
            let base = offsets[name];
            targets.extend(base..base + t.len());
        }
    }
    match spec {
        PerturbSpec::Identity => {}
        PerturbSpec::GaussianBall { eps, .. } if *eps == 0.0 => {}
        PerturbSpec::Fp16 | PerturbSpec::Bf16 => {
            let format = if *spec == PerturbSpec::Fp16 { HalfFormat::Fp16 } else { HalfFormat::Bf16 };
            let values: Vec<f64> = targets.iter().map(|&i| flat[i]).collect();
            let rounded = round_trip(&values, format).map_err(|e| match e {
                // report the position in the full flattened vector
                Error::Overflow { index, value, format } => Error::Overflow { index: targets[index], value, format },
                other => other,
            })?;
            for (&i, r) in targets.iter().zip(rounded) {
                flat[i] = r;
            }
        }
        PerturbSpec::GaussianBall { eps, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let dir: Vec<f64> = targets.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (&i, d) in targets.iter().zip(&dir) {
                flat[i] += eps * d / norm;
            }
        }
    }
    params.with_flat(&flat)
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub criterion: Criterion,
    /// e.g. `fp16-vs-bf16`
    pub comparison: String,
    /// `‖I₁ − I₂‖₂` over group scores.
    pub importance_distance: f64,
    /// `‖I₁ − I₂‖₂ / ‖I₁‖₂`
    pub relative_distance: f64,
    pub jaccard: f64,
    pub symmetric_difference: usize,
    /// `‖w₁ − w₂‖₂`
    pub weight_distance: f64,
    /// `‖I₁ − I₂‖₂ / ‖w₁ − w₂‖₂` (0 when the weights coincide)
    pub importance_ratio: f64,
    /// `‖∇₁ − ∇₂‖₂ / ‖w₁ − w₂‖₂` for the criterion's gradient-like vector
    pub gradient_ratio: f64,
    pub prune_set_first: Vec<usize>,
    pub prune_set_second: Vec<usize>,
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (a, b): (BTreeSet<_>, BTreeSet<_>) = (a.iter().collect(), b.iter().collect());
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

pub fn symmetric_difference(a: &[usize], b: &[usize]) -> usize {
    let (a, b): (BTreeSet<_>, BTreeSet<_>) = (a.iter().collect(), b.iter().collect());
    a.symmetric_difference(&b).count()
}

/// Scores `params` under `first` and `second` perturbations with every
/// criterion, reusing the same objective, seeds and configuration on both sides.
pub fn consistency_experiment(
    objective: &dyn Objective,
    params: &ParamSet,
    groups: &GroupTable,
    criteria: &[Criterion],
    first: &PerturbSpec,
    second: &PerturbSpec,
    config: &ImportanceConfig,
) -> Result<Vec<RobustnessReport>> {
    if criteria.is_empty() {
        return Err(Error::Config("at least one criterion is required".into()));
    }
    let w1 = perturb(params, groups, first)?;
    let w2 = perturb(params, groups, second)?;
    let weight_distance = l2(w1.flatten().iter().zip(w2.flatten()).map(|(a, b)| a - b));
    let comparison = format!("{}-vs-{}", first.label(), second.label());

    criteria
        .iter()
        .map(|&criterion| {
            let r1 = compute_importance(criterion, objective, &w1, groups, config)?;
            let r2 = compute_importance(criterion, objective, &w2, groups, config)?;
            let (i1, i2) = (r1.group_scores(), r2.group_scores());
            let importance_distance = l2(i1.iter().zip(&i2).map(|(a, b)| a - b));
            let gradient_distance = l2(r1.gradient.iter().zip(&r2.gradient).map(|(a, b)| a - b));
            Ok(RobustnessReport {
                criterion,
                comparison: comparison.clone(),
                importance_distance,
                relative_distance: ratio(importance_distance, l2(i1.iter().copied())),
                jaccard: jaccard(&r1.prune_set, &r2.prune_set),
                symmetric_difference: symmetric_difference(&r1.prune_set, &r2.prune_set),
                weight_distance,
                importance_ratio: ratio(importance_distance, weight_distance),
                gradient_ratio: ratio(gradient_distance, weight_distance),
                prune_set_first: r1.prune_set,
                prune_set_second: r2.prune_set,
            })
        })
        .collect()
}

pub const ROBUSTNESS_CSV_HEADER: &str = "criterion,comparison,importance_distance,relative_distance,jaccard,\
symmetric_difference,weight_distance,importance_ratio,gradient_ratio";

/// One row per report, columns as in [`ROBUSTNESS_CSV_HEADER`].
pub fn robustness_csv(reports: &[RobustnessReport]) -> String {
    let mut out = format!("{ROBUSTNESS_CSV_HEADER}\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.criterion,
            r.comparison,
            r.importance_distance,
            r.relative_distance,
            r.jaccard,
            r.symmetric_difference,
            r.weight_distance,
            r.importance_ratio,
            r.gradient_ratio
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moreau::TestFunction;
    use crate::zoo::build_mlp;

    #[test]
    fn zero_radius_ball_is_identity() {
        let (_, params, groups) = build_mlp(&[3, 5, 2], 1).unwrap();
        let p = perturb(&params, &groups, &PerturbSpec::GaussianBall { eps: 0.0, seed: 3 }).unwrap();
        assert_eq!(p, params);
    }

    #[test]
    fn ball_has_exact_radius() {
        let (_, params, groups) = build_mlp(&[3, 5, 2], 1).unwrap();
        let p = perturb(&params, &groups, &PerturbSpec::GaussianBall { eps: 0.01, seed: 3 }).unwrap();
        let d = l2(p.flatten().iter().zip(params.flatten()).map(|(a, b)| a - b));
        assert!((d - 0.01).abs() <= 1e-12, "{d}");
    }

    #[test]
    fn rounding_is_idempotent_on_parameters() {
        let (_, params, groups) = build_mlp(&[3, 5, 2], 1).unwrap();
        let once = perturb(&params, &groups, &PerturbSpec::Fp16).unwrap();
        assert_ne!(once, params);
        assert_eq!(perturb(&once, &groups, &PerturbSpec::Fp16).unwrap(), once);
    }

    #[test]
    fn identity_comparison_is_perfectly_consistent() {
        let w = [0.5, -1.2, 2.0, 0.3];
        let params = TestFunction::params(&w);
        let groups = TestFunction::block_groups(&[1, 1, 1, 1]);
        let cfg = ImportanceConfig::new(0.5, 9);
        let reports = consistency_experiment(
            &TestFunction::Quadratic,
            &params,
            &groups,
            &Criterion::ALL,
            &PerturbSpec::Identity,
            &PerturbSpec::Identity,
            &cfg,
        )
        .unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            assert_eq!(r.jaccard, 1.0);
            assert_eq!(r.importance_distance, 0.0);
        }
        let csv = robustness_csv(&reports);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with(ROBUSTNESS_CSV_HEADER));
    }

    #[test]
    fn set_metrics() {
        assert_eq!(jaccard(&[], &[]), 1.0);
        assert_eq!(jaccard(&[1, 2], &[2, 3]), 1.0 / 3.0);
        assert_eq!(symmetric_difference(&[1, 2], &[2, 3]), 2);
    }

    #[test]
    fn negative_radius_rejected() {
        let params = TestFunction::params(&[1.0]);
        let groups = TestFunction::block_groups(&[1]);
        assert!(perturb(&params, &groups, &PerturbSpec::GaussianBall { eps: -1.0, seed: 0 }).is_err());
    }
}

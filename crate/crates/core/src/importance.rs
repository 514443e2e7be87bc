//! Taylor importance at element, structure and group level, and prune-set selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moreau::{group_sparse_moreau_grad, moreau_grad, MoreauConfig};
use crate::objective::Objective;
use crate::params::ParamSet;
use crate::smoothing::{smoothed_grad_flat, NoiseSpec, DEFAULT_RELATIVE_SCALE, SMOOTHGRAD_SAMPLES};
use crate::zoo::{GroupTable, StructureClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Plain loss gradient.
    Plain,
    /// SmoothGrad: mean gradient under Gaussian weight noise.
    Smooth,
    Moreau,
    MoreauGs,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Plain, Criterion::Smooth, Criterion::Moreau, Criterion::MoreauGs];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Plain => "plain",
            Criterion::Smooth => "smooth",
            Criterion::Moreau => "moreau",
            Criterion::MoreauGs => "moreau-gs",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown criterion '{s}' (plain, smooth, moreau, moreau-gs)")))
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fold applied to the member structures of a group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agg {
    #[default]
    Sum,
    Max,
    Prod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub agg: Agg,
    pub ratio: f64,
    /// Rank all groups together instead of per structural class.
    pub global_pool: bool,
    /// Layers whose groups are never selected.
    pub protected_layers: Vec<String>,
    pub smooth: NoiseSpec,
    pub moreau: MoreauConfig,
    pub moreau_gs: MoreauConfig,
}

impl ImportanceConfig {
    pub fn new(ratio: f64, seed: u64) -> Self {
        Self {
            agg: Agg::Sum,
            ratio,
            global_pool: false,
            protected_layers: Vec::new(),
            smooth: NoiseSpec::relative(DEFAULT_RELATIVE_SCALE, SMOOTHGRAD_SAMPLES, seed),
            moreau: MoreauConfig::plain(seed),
            moreau_gs: MoreauConfig::group_sparse(seed),
        }
    }
}

/// `|g ⊙ w|` per element.
pub fn element_importance(grad_like: &ParamSet, params: &ParamSet) -> Result<ParamSet> {
    if !grad_like.same_layout(params) {
        return Err(Error::Shape {
            op: "element_importance",
            detail: "gradient and parameters differ in names or shapes".into(),
        });
    }
    params.with_flat(&element_scores_flat(&grad_like.flatten(), &params.flatten())?)
}

fn element_scores_flat(grad: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if grad.len() != w.len() {
        return Err(Error::Shape {
            op: "element_importance",
            detail: format!("{} gradient entries for {} weights", grad.len(), w.len()),
        });
    }
    Ok(grad.iter().zip(w).map(|(g, w)| (g * w).abs()).collect())
}

/// Sum of element scores over each structure's slices, in table order.
pub fn structure_importance(scores: &ParamSet, groups: &GroupTable) -> Result<Vec<f64>> {
    let flat = scores.flatten();
    groups
        .structures
        .iter()
        .map(|s| {
            if s.slices.is_empty() {
                log::warn!("structure {} has no slices; scoring it 0", s.id);
                return Ok(0.0);
            }
            Ok(groups.structure_indices(scores, s)?.iter().map(|&i| flat[i]).sum())
        })
        .collect()
}

/// Aggregates member structure scores per group, folding in ascending structure id.
pub fn group_importance(structure_scores: &[f64], groups: &GroupTable, agg: Agg) -> Result<Vec<f64>> {
    let by_id: BTreeMap<usize, f64> = groups.structures.iter().zip(structure_scores).map(|(s, &v)| (s.id, v)).collect();
    groups
        .groups
        .iter()
        .map(|g| {
            let mut members = g.members.clone();
            members.sort_unstable();
            let mut vals = members.iter().map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("group {} names missing structure {id}", g.id)))
            });
            let first = vals.next().ok_or_else(|| Error::Config(format!("group {} has no members", g.id)))??;
            vals.try_fold(first, |acc, v| {
                let v = v?;
                Ok(match agg {
                    Agg::Sum => acc + v,
                    Agg::Max => acc.max(v),
                    Agg::Prod => acc * v,
                })
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub class: StructureClass,
    pub score: f64,
}

/// Lowest-scoring `floor(ratio · n)` candidates per class (or over all
/// candidates with `global_pool`). Ties go to the lower id. Returns sorted ids.
pub fn rank_and_select(candidates: &[Candidate], ratio: f64, global_pool: bool) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("pruning ratio must lie in [0, 1), got {ratio}")));
    }
    let mut pools: BTreeMap<Option<StructureClass>, Vec<&Candidate>> = BTreeMap::new();
    for c in candidates {
        pools.entry((!global_pool).then_some(c.class)).or_default().push(c);
    }
    let mut selected = Vec::new();
    for pool in pools.values_mut() {
        let k = (ratio * pool.len() as f64).floor() as usize;
        pool.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)));
        selected.extend(pool.iter().take(k).map(|c| c.id));
    }
    selected.sort_unstable();
    Ok(selected)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub id: usize,
    pub class: StructureClass,
    pub layer: String,
    pub unit: usize,
    pub score: f64,
    pub pruned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoreauSummary {
    pub rho: f64,
    pub eta: f64,
    pub gamma: f64,
    pub steps: usize,
    pub samples: usize,
    pub zeroed_groups: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub criterion: Criterion,
    pub agg: Agg,
    pub ratio: f64,
    pub global_pool: bool,
    pub element_scores: Vec<f64>,
    pub structure_scores: Vec<f64>,
    pub groups: Vec<GroupRow>,
    pub prune_set: Vec<usize>,
    pub moreau: Option<MoreauSummary>,
    /// The gradient-like vector the scores were built from.
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

impl ImportanceReport {
    pub fn group_scores(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.score).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns: `group_id,class,score,pruned`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group_id,class,score,pruned\n");
        for g in &self.groups {
            writeln!(out, "{},{},{},{}", g.id, g.class.as_str(), g.score, g.pruned as u8).unwrap();
        }
        out
    }
}

/// Gradient-like vector for `criterion`, flattened in parameter order.
pub fn criterion_gradient(
    criterion: Criterion,
    objective: &dyn Objective,
    params: &ParamSet,
    groups: &GroupTable,
    config: &ImportanceConfig,
) -> Result<(Vec<f64>, Option<MoreauSummary>)> {
    let summary = |c: &MoreauConfig, zeroed| MoreauSummary {
        rho: c.rho,
        eta: c.eta,
        gamma: c.gamma,
        steps: c.steps,
        samples: c.noise.samples,
        zeroed_groups: zeroed,
    };
    Ok(match criterion {
        Criterion::Plain => (objective.loss_and_grad(params)?.1, None),
        Criterion::Smooth => {
            let (_, g) = smoothed_grad_flat(objective, params, &params.flatten(), &config.smooth, 0)?;
            (g, None)
        }
        Criterion::Moreau => {
            let r = moreau_grad(objective, params, &config.moreau)?;
            (r.mg_flat(), Some(summary(&config.moreau, None)))
        }
        Criterion::MoreauGs => {
            let layout = groups.layout(params)?;
            let r = group_sparse_moreau_grad(objective, params, &config.moreau_gs, &layout)?;
            (r.mg_flat(), Some(summary(&config.moreau_gs, r.zeroed_groups)))
        }
    })
}

/// Scores every group under `criterion` and selects the prune set.
pub fn compute_importance(
    criterion: Criterion,
    objective: &dyn Objective,
    params: &ParamSet,
    groups: &GroupTable,
    config: &ImportanceConfig,
) -> Result<ImportanceReport> {
    let (gradient, moreau) = criterion_gradient(criterion, objective, params, groups, config)?;
    let elements = params.with_flat(&element_scores_flat(&gradient, &params.flatten())?)?;
    let structure_scores = structure_importance(&elements, groups)?;
    let group_scores = group_importance(&structure_scores, groups, config.agg)?;

    let candidates: Vec<Candidate> = groups
        .groups
        .iter()
        .zip(&group_scores)
        .filter(|(g, _)| !config.protected_layers.contains(&g.layer))
        .map(|(g, &score)| Candidate { id: g.id, class: g.class, score })
        .collect();
    let prune_set = rank_and_select(&candidates, config.ratio, config.global_pool)?;

    let rows = groups
        .groups
        .iter()
        .zip(&group_scores)
        .map(|(g, &score)| GroupRow {
            id: g.id,
            class: g.class,
            layer: g.layer.clone(),
            unit: g.unit,
            score,
            pruned: prune_set.binary_search(&g.id).is_ok(),
        })
        .collect();
    Ok(ImportanceReport {
        criterion,
        agg: config.agg,
        ratio: config.ratio,
        global_pool: config.global_pool,
        element_scores: elements.flatten(),
        structure_scores,
        groups: rows,
        prune_set,
        moreau,
        gradient,
    })
}

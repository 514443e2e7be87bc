//! Physical removal of pruned groups.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::zoo::{Architecture, GroupTable, Model};

/// Surviving positions of one parameter: new index `i` along `axis` came
/// from old index `kept[axis][i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub old_shape: Vec<usize>,
    pub new_shape: Vec<usize>,
    pub kept: Vec<Vec<usize>>,
}

impl IndexMap {
    pub fn old_to_new(&self, axis: usize, old: usize) -> Option<usize> {
        self.kept[axis].binary_search(&old).ok()
    }

    pub fn removed_elements(&self) -> usize {
        self.old_shape.iter().product::<usize>() - self.new_shape.iter().product::<usize>()
    }
}

#[derive(Clone, Debug)]
pub struct Pruned {
    pub model: Model,
    pub params: ParamSet,
    pub groups: GroupTable,
    /// Only parameters whose shape changed.
    pub index_maps: BTreeMap<String, IndexMap>,
}

fn gather(t: &Tensor, kept: &[Vec<usize>]) -> Result<Tensor> {
    let shape: Vec<usize> = kept.iter().map(Vec::len).collect();
    let strides = t.strides();
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let src: usize = idx.iter().zip(kept).zip(&strides).map(|((&i, k), &s)| k[i] * s).sum();
        data.push(t.data()[src]);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Tensor::new(shape, data)
}

fn architecture_from_shapes(arch: &Architecture, params: &ParamSet) -> Result<Architecture> {
    let width = |name: &str, axis: usize| -> Result<usize> { Ok(params.expect(name)?.shape()[axis]) };
    Ok(match arch {
        Architecture::Mlp { widths, context } => {
            let mut w = widths.clone();
            for (l, slot) in w.iter_mut().enumerate().skip(1) {
                *slot = width(&format!("fc{}.weight", l - 1), 1)?;
            }
            Architecture::Mlp { widths: w, context: *context }
        }
        Architecture::Transformer { vocab, d_model, head_dim, max_len, blocks } => {
            let mut b = blocks.clone();
            for (i, block) in b.iter_mut().enumerate() {
                block.heads = width(&format!("blocks.{i}.attn.wq"), 1)? / head_dim;
                block.ffn_hidden = width(&format!("blocks.{i}.ffn.w1"), 1)?;
            }
            Architecture::Transformer {
                vocab: *vocab,
                d_model: *d_model,
                head_dim: *head_dim,
                max_len: *max_len,
                blocks: b,
            }
        }
    })
}

/// Deletes the slices of every group in `prune_set` and rebuilds the
/// architecture and group table of the smaller model.
pub fn prune_model(model: &Model, params: &ParamSet, groups: &GroupTable, prune_set: &[usize]) -> Result<Pruned> {
    let selected: BTreeSet<usize> = prune_set.iter().copied().collect();
    for &id in &selected {
        if groups.group(id).is_none() {
            return Err(Error::Config(format!("prune set names unknown group {id}")));
        }
    }
    for (layer, ids) in groups.groups_per_layer() {
        if ids.iter().all(|id| selected.contains(id)) {
            return Err(Error::EmptyLayer { layer });
        }
    }

    // (param, axis) -> removed positions along that axis
    let mut removed: BTreeMap<(String, usize), BTreeSet<usize>> = BTreeMap::new();
    for &id in &selected {
        let g = groups.group(id).expect("checked above");
        for &sid in &g.members {
            let s = groups
                .structure(sid)
                .ok_or_else(|| Error::Config(format!("group {id} names missing structure {sid}")))?;
            for slice in s.slices.iter().chain(&s.coupled) {
                let t = params.expect(&slice.param)?;
                slice.local_indices(t.shape())?;
                removed
                    .entry((slice.param.clone(), slice.axis))
                    .or_default()
                    .extend(slice.start..slice.start + slice.len);
            }
        }
    }

    let mut new_params = ParamSet::new();
    let mut index_maps = BTreeMap::new();
    for (name, t) in params.iter() {
        let kept: Vec<Vec<usize>> = t
            .shape()
            .iter()
            .enumerate()
            .map(|(axis, &extent)| match removed.get(&(name.to_string(), axis)) {
                Some(r) => (0..extent).filter(|i| !r.contains(i)).collect(),
                None => (0..extent).collect(),
            })
            .collect();
        if kept.iter().zip(t.shape()).all(|(k, &e)| k.len() == e) {
            new_params.insert(name, t.clone())?;
            continue;
        }
        if let Some(axis) = kept.iter().position(Vec::is_empty) {
            return Err(Error::EmptyLayer { layer: format!("{name} (axis {axis})") });
        }
        let nt = gather(t, &kept)?;
        index_maps
            .insert(name.to_string(), IndexMap { old_shape: t.shape().to_vec(), new_shape: nt.shape().to_vec(), kept });
        new_params.insert(name, nt)?;
    }

    let new_model = Model { arch: architecture_from_shapes(&model.arch, &new_params)? };
    let new_groups = new_model.group_table();
    new_groups.validate(&new_params)?;
    Ok(Pruned { model: new_model, params: new_params, groups: new_groups, index_maps })
}

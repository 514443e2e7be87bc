//! Prunable structures and the coupled groups that contain them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Indices `start..start + len` along `axis` of one parameter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub param: String,
    pub axis: usize,
    pub start: usize,
    pub len: usize,
}

impl Slice {
    pub fn new(param: impl Into<String>, axis: usize, start: usize, len: usize) -> Self {
        Self { param: param.into(), axis, start, len }
    }

    /// Row-major element offsets inside the parameter covered by this slice.
    pub fn local_indices(&self, shape: &[usize]) -> Result<Vec<usize>> {
        if self.axis >= shape.len() || self.len == 0 || self.start + self.len > shape[self.axis] {
            return Err(Error::SliceOutOfBounds(format!(
                "{} axis {} range {}..{} for shape {:?}",
                self.param,
                self.axis,
                self.start,
                self.start + self.len,
                shape
            )));
        }
        let outer: usize = shape[..self.axis].iter().product();
        let inner: usize = shape[self.axis + 1..].iter().product();
        let extent = shape[self.axis];
        let mut out = Vec::with_capacity(outer * self.len * inner);
        for o in 0..outer {
            for a in self.start..self.start + self.len {
                let base = (o * extent + a) * inner;
                out.extend(base..base + inner);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneStructure {
    pub id: usize,
    pub slices: Vec<Slice>,
    /// Removed along with the structure but owned (and scored) by a structure
    /// of the next layer, e.g. an interior MLP unit's fan-out row.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupled: Vec<Slice>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureClass {
    Head,
    Channel,
}

impl StructureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureClass::Head => "head",
            StructureClass::Channel => "channel",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneGroup {
    pub id: usize,
    pub class: StructureClass,
    /// Layer the group belongs to; pruning may not empty a layer.
    pub layer: String,
    /// Position of the group's unit inside its layer (hidden index or head index).
    pub unit: usize,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub structures: Vec<PruneStructure>,
    pub groups: Vec<PruneGroup>,
}

/// Disjoint index subsets over the flattened parameter vector, one per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupLayout {
    subsets: Vec<Vec<usize>>,
}

impl GroupLayout {
    pub fn new(subsets: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &subsets {
            for &i in s {
                if !seen.insert(i) {
                    return Err(Error::Config(format!("index {i} appears in two layout subsets")));
                }
            }
        }
        Ok(Self { subsets })
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Number of subsets on which `v` is identically zero.
    pub fn zeroed_count(&self, v: &[f64]) -> usize {
        self.subsets.iter().filter(|s| s.iter().all(|&i| v[i] == 0.0)).count()
    }
}

impl GroupTable {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn structure(&self, id: usize) -> Option<&PruneStructure> {
        self.structures.iter().find(|s| s.id == id)
    }

    pub fn group(&self, id: usize) -> Option<&PruneGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    /// Flattened-vector indices covered by one structure.
    pub fn structure_indices(&self, params: &ParamSet, structure: &PruneStructure) -> Result<Vec<usize>> {
        let offsets = params.offsets();
        let mut out = Vec::new();
        for slice in &structure.slices {
            let t = params
                .get(&slice.param)
                .ok_or_else(|| Error::SliceOutOfBounds(format!("unknown parameter '{}'", slice.param)))?;
            let base = offsets[&slice.param];
            out.extend(slice.local_indices(t.shape())?.into_iter().map(|i| base + i));
        }
        Ok(out)
    }

    pub fn group_indices(&self, params: &ParamSet, group: &PruneGroup) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for &sid in &group.members {
            let s = self
                .structure(sid)
                .ok_or_else(|| Error::Config(format!("group {} names missing structure {sid}", group.id)))?;
            out.extend(self.structure_indices(params, s)?);
        }
        Ok(out)
    }

    /// One subset per group, in group order.
    pub fn layout(&self, params: &ParamSet) -> Result<GroupLayout> {
        let subsets = self.groups.iter().map(|g| self.group_indices(params, g)).collect::<Result<Vec<_>>>()?;
        GroupLayout::new(subsets)
    }

    /// Names of parameters touched by at least one structure.
    pub fn prunable_params(&self) -> BTreeSet<String> {
        self.structures.iter().flat_map(|s| s.slices.iter().map(|sl| sl.param.clone())).collect()
    }

    /// Groups per layer, used to refuse prune sets that would empty a layer.
    pub fn groups_per_layer(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for g in &self.groups {
            out.entry(g.layer.clone()).or_default().push(g.id);
        }
        out
    }

    /// Checks bounds, slice disjointness and that the groups partition the structures.
    pub fn validate(&self, params: &ParamSet) -> Result<()> {
        let mut covered = BTreeSet::new();
        for s in &self.structures {
            for i in self.structure_indices(params, s)? {
                if !covered.insert(i) {
                    return Err(Error::Config(format!(
                        "structure {} overlaps another structure at flat index {i}",
                        s.id
                    )));
                }
            }
            for c in &s.coupled {
                let t = params
                    .get(&c.param)
                    .ok_or_else(|| Error::SliceOutOfBounds(format!("unknown parameter '{}'", c.param)))?;
                c.local_indices(t.shape())?;
            }
        }
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for g in &self.groups {
            if g.members.is_empty() {
                return Err(Error::Config(format!("group {} has no members", g.id)));
            }
            for &m in &g.members {
                if self.structure(m).is_none() {
                    return Err(Error::Config(format!("group {} names missing structure {m}", g.id)));
                }
                if let Some(prev) = owner.insert(m, g.id) {
                    return Err(Error::Config(format!("structure {m} belongs to groups {prev} and {}", g.id)));
                }
            }
        }
        if let Some(s) = self.structures.iter().find(|s| !owner.contains_key(&s.id)) {
            return Err(Error::Config(format!("structure {} belongs to no group", s.id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_slice_indices() {
        let s = Slice::new("w", 1, 1, 2);
        assert_eq!(s.local_indices(&[2, 4]).unwrap(), vec![1, 2, 5, 6]);
        let r = Slice::new("w", 0, 1, 1);
        assert_eq!(r.local_indices(&[2, 4]).unwrap(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn out_of_bounds_slice_rejected() {
        assert!(Slice::new("w", 1, 3, 2).local_indices(&[2, 4]).is_err());
        assert!(Slice::new("w", 2, 0, 1).local_indices(&[2, 4]).is_err());
    }

    #[test]
    fn layout_rejects_overlap() {
        assert!(GroupLayout::new(vec![vec![0, 1], vec![1, 2]]).is_err());
        let l = GroupLayout::new(vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(l.zeroed_count(&[0.0, 0.0, 1.0]), 1);
    }
}

//! Named, ordered model parameters.
//!
//! The flattened view concatenates parameters in set order, each one
//! row-major. Group layouts, noise draws and perturbations all index into
//! this view, so the order is part of the checkpoint contract.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count `d`.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Offset of each parameter inside the flattened vector.
    pub fn offsets(&self) -> BTreeMap<String, usize> {
        let mut offset = 0;
        let mut out = BTreeMap::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), offset);
            offset += t.len();
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// A set with the same names and shapes holding `flat` instead.
    pub fn with_flat(&self, flat: &[f64]) -> Result<ParamSet> {
        if flat.len() != self.numel() {
            return Err(Error::Shape {
                op: "unflatten",
                detail: format!("expected {} values, got {}", self.numel(), flat.len()),
            });
        }
        let mut offset = 0;
        let entries = self
            .entries
            .iter()
            .map(|(name, t)| {
                let n = t.len();
                let data = flat[offset..offset + n].to_vec();
                offset += n;
                (name.clone(), Tensor::new(t.shape().to_vec(), data).expect("shape preserved"))
            })
            .collect();
        Ok(ParamSet { entries })
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
    }

    pub fn map(&self, f: impl Fn(&str, &Tensor) -> Tensor) -> ParamSet {
        ParamSet { entries: self.entries.iter().map(|(n, t)| (n.clone(), f(n, t))).collect() }
    }
}

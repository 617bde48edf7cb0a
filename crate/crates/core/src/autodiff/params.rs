//! Ordered, named parameter collections.
//!
//! Iteration order is insertion order everywhere (binding, gradients,
//! optimizer state, checkpoints), which keeps training bit-reproducible.

use std::collections::HashMap;

use super::tape::{Arr, GradientMap, Tape, Tensor};
use crate::{Error, Result};

#[derive(Clone, Default)]
pub struct ParamSet {
    items: Vec<(String, Arr)>,
    index: HashMap<String, usize>,
}

impl std::fmt::Debug for ParamSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamSet")
            .field("params", &self.items.len())
            .field("elements", &self.total_elements())
            .finish()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, arr: Arr) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name: {name}"
        );
        self.index.insert(name.clone(), self.items.len());
        self.items.push((name, arr));
    }

    pub fn get(&self, name: &str) -> Option<&Arr> {
        self.index.get(name).map(|&i| &self.items[i].1)
    }

    pub fn set(&mut self, name: &str, arr: Arr) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter: {name}")))?;
        self.items[i].1 = arr;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arr)> {
        self.items.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn values(&self) -> impl Iterator<Item = &Arr> {
        self.items.iter().map(|(_, a)| a)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Arr> {
        self.items.iter_mut().map(|(_, a)| a)
    }

    pub fn total_elements(&self) -> usize {
        self.items.iter().map(|(_, a)| a.len()).sum()
    }

    /// Binds every parameter as a tape leaf (for training) or a constant
    /// (for inference).
    pub fn bind(&self, tape: Option<&Tape>) -> BoundParams {
        let tensors = self
            .items
            .iter()
            .map(|(_, a)| match tape {
                Some(t) => t.leaf(a.clone()),
                None => Tensor::constant(a.clone()),
            })
            .collect();
        BoundParams {
            index: self.index.clone(),
            tensors,
        }
    }

    /// Gradients for every parameter of a binding, zeros where the loss did
    /// not touch a parameter, in insertion order.
    pub fn gradients(&self, bound: &BoundParams, gm: &GradientMap) -> Vec<Arr> {
        bound.tensors.iter().map(|t| gm.get_or_zeros(t)).collect()
    }
}

/// Tensors for one forward pass, aligned with the originating [`ParamSet`].
pub struct BoundParams {
    index: HashMap<String, usize>,
    tensors: Vec<Tensor>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> &Tensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"));
        &self.tensors[i]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

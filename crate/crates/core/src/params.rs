//! Named parameter storage.
//!
//! All tensors a network owns — trainable weights and batch-norm running
//! statistics — live in one store under stable canonical names, in insertion
//! order. Checkpoints, the optimizer, and parameter counting all walk the
//! same collection.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

pub struct ParamStore<T> {
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Tensor<T>>,
    pub(crate) grads: Vec<Vec<T>>,
    pub(crate) trainable: Vec<bool>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            trainable: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Register a tensor under a unique canonical name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {:?}", name)));
        }
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id.0);
        self.names.push(name);
        self.grads.push(vec![T::ZERO; value.numel()]);
        self.values.push(value);
        self.trainable.push(trainable);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    /// Total element count over trainable entries.
    pub fn trainable_count(&self) -> usize {
        self.values
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(v, _)| v.numel())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v = T::ZERO;
            }
        }
    }

    /// Error if any gradient element is non-finite.
    pub fn check_grads_finite(&self) -> Result<()> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if g.iter().any(|v| !v.is_finite_v()) {
                return Err(Error::NonFinite {
                    op: "backward".into(),
                    detail: format!("gradient of {:?}", name),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::<f64>::new();
        s.add("w", Tensor::zeros(&[2]), true).unwrap();
        assert!(s.add("w", Tensor::zeros(&[2]), true).is_err());
    }

    #[test]
    fn trainable_count_skips_running_stats() {
        let mut s = ParamStore::<f64>::new();
        s.add("bn.gamma", Tensor::zeros(&[4]), true).unwrap();
        s.add("bn.running_mean", Tensor::zeros(&[4]), false).unwrap();
        assert_eq!(s.trainable_count(), 4);
    }
}

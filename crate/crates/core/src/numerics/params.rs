//! Named parameter registry.
//!
//! Registration order is the canonical order for serialization and hashing.
//! Frozen entries stay in the registry (their values are still needed for the
//! forward pass) but receive no optimizer state and no updates.

use crate::error::{MftError, Result};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let id = ParamId(self.entries.len());
        self.entries.push(Param { name: name.into(), value, trainable });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn freeze_all(&mut self) {
        for e in &mut self.entries {
            e.trainable = false;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// (total element count, trainable element count)
    pub fn count_params(&self) -> (usize, usize) {
        let mut total = 0;
        let mut trainable = 0;
        for e in &self.entries {
            total += e.value.numel();
            if e.trainable {
                trainable += e.value.numel();
            }
        }
        (total, trainable)
    }
}

/// Per-parameter gradients produced by a backward pass, aligned with the
/// store's registration order. Every trainable parameter has an entry (zeros
/// if the loss did not touch it).
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub(crate) fn new(n: usize) -> Self {
        Gradients { slots: (0..n).map(|_| None).collect() }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, delta: &Tensor) -> Result<()> {
        match &mut self.slots[id.0] {
            Some(t) => t.add_assign(delta),
            slot @ None => {
                *slot = Some(delta.clone());
                Ok(())
            }
        }
    }

    pub(crate) fn materialize_zeros(&mut self, store: &ParamStore) {
        for (id, p) in store.iter() {
            if p.trainable && self.slots[id.0].is_none() {
                self.slots[id.0] = Some(Tensor::zeros(p.value.shape()));
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.0].as_ref()
    }

    /// Gradient for a parameter that must have one.
    pub fn expect(&self, id: ParamId) -> Result<&Tensor> {
        self.slots[id.0]
            .as_ref()
            .ok_or_else(|| MftError::numeric(format!("no gradient for parameter #{}", id.0)))
    }
}

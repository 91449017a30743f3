use serde::{Deserialize, Serialize};

use super::tape::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learned arrays and their accumulated gradients.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let id = ParamId(self.values.len());
        self.grads
            .push(Tensor::new(value.shape().to_vec(), vec![0.0; value.len()]).unwrap());
        self.names.push(name.into());
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &mut Tensor) {
        (&mut self.values[id.0], &mut self.grads[id.0])
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds every parameter gradient found in `grads` into the store.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.param_grads() {
            let slot = self
                .grads
                .get_mut(id.0)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {}", id.0)))?;
            if slot.shape() != g.shape() {
                return Err(Error::shape(
                    "ParamStore::accumulate",
                    format!("{:?} vs {:?}", slot.shape(), g.shape()),
                ));
            }
            for (s, v) in slot.data_mut().iter_mut().zip(g.data()) {
                *s += v;
            }
        }
        Ok(())
    }

    /// Named copies of every value, in insertion order.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect()
    }

    /// Replaces every value from a snapshot. Names and shapes must match
    /// exactly; on any mismatch nothing is modified.
    pub fn restore(&mut self, snapshot: &[(String, Tensor)]) -> Result<()> {
        if snapshot.len() != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.values.len(),
                snapshot.len()
            )));
        }
        for ((name, value), (own_name, own)) in
            snapshot.iter().zip(self.names.iter().zip(&self.values))
        {
            if name != own_name || value.shape() != own.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} {:?} does not match {own_name} {:?}",
                    value.shape(),
                    own.shape()
                )));
            }
        }
        for (slot, (_, value)) in self.values.iter_mut().zip(snapshot) {
            *slot = value.clone();
        }
        Ok(())
    }
}

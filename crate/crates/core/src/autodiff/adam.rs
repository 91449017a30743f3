use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are kept per parameter of the store
/// the state was created for.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| Tensor::new(store.value(id).shape().to_vec(), vec![0.0; store.value(id).len()]).unwrap())
                .collect::<Vec<_>>()
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients accumulated in `store`, then
    /// zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len()
            || store
                .ids()
                .any(|id| store.value(id).shape() != self.m[id.index()].shape())
        {
            return Err(Error::shape(
                "adam_step",
                "optimizer state does not match parameter store",
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            for (((p, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * *g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * *g * *g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

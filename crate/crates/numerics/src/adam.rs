use crate::error::{NumericsError, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
struct Slot<T> {
    id: ParamId,
    m: Vec<T>,
    v: Vec<T>,
}

/// Bias-corrected Adam over a fixed subset of a store's parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    config: AdamConfig,
    t: u64,
    slots: Vec<Slot<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>, ids: &[ParamId]) -> Self {
        let slots = ids
            .iter()
            .map(|&id| {
                let n = store.value(id).numel();
                Slot {
                    id,
                    m: vec![T::zero(); n],
                    v: vec![T::zero(); n],
                }
            })
            .collect();
        AdamState {
            config,
            t: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.slots.iter().map(|s| s.id).collect()
    }

    /// Applies one update from the store's gradient buffers.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for slot in &self.slots {
            let n = store.grad(slot.id).len();
            if n != slot.m.len() || store.value(slot.id).numel() != slot.m.len() {
                return Err(NumericsError::shape(
                    "adam_step",
                    &[slot.m.len()],
                    &[n],
                ));
            }
        }
        self.t += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.epsilon);
        for slot in &mut self.slots {
            let grad = store.grad(slot.id).to_vec();
            let value = store.value_mut(slot.id).data_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                slot.m[j] = b1 * slot.m[j] + (one - b1) * g;
                slot.v[j] = b2 * slot.v[j] + (one - b2) * g * g;
                let m_hat = slot.m[j] / bc1;
                let v_hat = slot.v[j] / bc2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

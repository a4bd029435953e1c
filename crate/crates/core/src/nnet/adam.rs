//! Adam optimizer over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate is multiplied by this once per epoch.
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 0.90,
        }
    }
}

impl AdamConfig {
    /// Faster schedule for small synthetic runs.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    /// Step counter t used for bias correction; starts at 0.
    step: u64,
    epoch_lr: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            step: 0,
            epoch_lr: config.learning_rate,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.epoch_lr
    }

    pub fn end_epoch(&mut self) {
        self.epoch_lr *= self.config.lr_decay;
    }

    /// One bias-corrected update in place. Rejects non-finite gradients.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} parameters", self.m.len()),
                format!("{} / {}", params.len(), grads.len()),
            ));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one = T::one();
        let eps = T::from_f64(self.config.epsilon);
        let bias1 = one - b1.powi(t);
        let bias2 = one - b2.powi(t);
        let lr = T::from_f64(self.epoch_lr);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

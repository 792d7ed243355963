//! Adam optimizer with bias correction, operating on the network's
//! parameter slot list.

use crate::tensor::{Scalar, Tensor};
use crate::training::TrainingError;

/// Adam hyperparameters. The learning rate defaults to 1e-4; the moment
/// decays and epsilon are the optimizer's standard values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.0001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar> {
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh zero-moment state mirroring the given parameter slots.
    pub fn new(params: &[&Tensor<T>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
            v: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update across all slots:
    /// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn apply(
        &mut self,
        cfg: &AdamConfig,
        params: Vec<&mut Tensor<T>>,
        grads: &[&Tensor<T>],
    ) -> Result<(), TrainingError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainingError::SlotMismatch {
                state: self.m.len(),
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (slot, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[slot].shape() || g.shape() != self.m[slot].shape() {
                return Err(TrainingError::ShapeMismatch {
                    slot,
                    detail: format!(
                        "state {:?}, params {:?}, grads {:?}",
                        self.m[slot].shape(),
                        p.shape(),
                        g.shape()
                    ),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = T::from_f64(cfg.lr);
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one_minus_b1 = T::from_f64(1.0 - cfg.beta1);
        let one_minus_b2 = T::from_f64(1.0 - cfg.beta2);
        let eps = T::from_f64(cfg.epsilon);
        // Bias corrections in f64: beta powers underflow gracefully there.
        let c1 = T::from_f64(1.0 / (1.0 - cfg.beta1.powi(t)));
        let c2 = T::from_f64(1.0 / (1.0 - cfg.beta2.powi(t)));

        for (slot, (param, grad)) in params.into_iter().zip(grads).enumerate() {
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            let p = param.data_mut();
            let g = grad.data();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_minus_b1 * g[i];
                v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
                let m_hat = m[i] * c1;
                let v_hat = v[i] * c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

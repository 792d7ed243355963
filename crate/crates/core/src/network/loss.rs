//! Margin loss over class capsule norms.
//!
//! Each class capsule contributes a present-class term pulling its norm
//! above `m_plus` when the class is the target, and a down-weighted
//! absent-class term pushing the norm below `m_minus` otherwise. The loss
//! operates on capsule vectors, with gradients flowing through the norm.

use crate::network::squash::vector_norm;
use crate::network::NetworkError;
use crate::tensor::Scalar;

/// Margins and the absent-class weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginLossConfig {
    pub m_plus: f64,
    pub m_minus: f64,
    pub lambda: f64,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        Self { m_plus: 0.9, m_minus: 0.1, lambda: 0.5 }
    }
}

/// Total margin loss for one sample.
///
/// `capsules` holds one vector per class; `target` is the true class index.
pub fn margin_loss<T: Scalar>(
    capsules: &[Vec<T>],
    target: usize,
    cfg: &MarginLossConfig,
) -> Result<T, NetworkError> {
    if target >= capsules.len() {
        return Err(NetworkError::BadTarget { target, classes: capsules.len() });
    }
    let m_plus = T::from_f64(cfg.m_plus);
    let m_minus = T::from_f64(cfg.m_minus);
    let lambda = T::from_f64(cfg.lambda);
    let mut total = T::zero();
    for (k, v) in capsules.iter().enumerate() {
        let n = vector_norm(v);
        if k == target {
            let short = (m_plus - n).max(T::zero());
            total += short * short;
        } else {
            let over = (n - m_minus).max(T::zero());
            total += lambda * over * over;
        }
    }
    Ok(total)
}

/// Gradient of [`margin_loss`] w.r.t. each capsule vector.
///
/// At a zero vector the norm is not differentiable; the gradient is taken
/// as zero there (the absent-class term is flat at the origin anyway, and
/// a present-class capsule at exactly zero has no descent direction).
pub fn margin_loss_backward<T: Scalar>(
    capsules: &[Vec<T>],
    target: usize,
    cfg: &MarginLossConfig,
) -> Result<Vec<Vec<T>>, NetworkError> {
    if target >= capsules.len() {
        return Err(NetworkError::BadTarget { target, classes: capsules.len() });
    }
    let m_plus = T::from_f64(cfg.m_plus);
    let m_minus = T::from_f64(cfg.m_minus);
    let lambda = T::from_f64(cfg.lambda);
    let two = T::from_f64(2.0);
    let mut grads = Vec::with_capacity(capsules.len());
    for (k, v) in capsules.iter().enumerate() {
        let n = vector_norm(v);
        // dL/dn for this capsule's term.
        let d_n = if k == target {
            if n < m_plus { -two * (m_plus - n) } else { T::zero() }
        } else if n > m_minus {
            lambda * two * (n - m_minus)
        } else {
            T::zero()
        };
        let mut g = vec![T::zero(); v.len()];
        if d_n != T::zero() && n > T::zero() {
            let scale = d_n / n;
            for (gd, vd) in g.iter_mut().zip(v) {
                *gd = scale * *vd;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

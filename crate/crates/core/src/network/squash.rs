//! Norm-bounding vector nonlinearity for capsules.

use crate::tensor::Scalar;

/// Squash `s` to a same-direction vector of length `|s|^2 / (1 + |s|^2)`.
///
/// The zero vector maps to zero (the formula is 0/0 there); the output norm
/// is strictly below one for every input.
pub fn squash<T: Scalar>(s: &[T]) -> Vec<T> {
    let norm_sq = s.iter().fold(T::zero(), |a, &v| a + v * v);
    if norm_sq == T::zero() {
        return vec![T::zero(); s.len()];
    }
    let norm = norm_sq.sqrt();
    // |s|^2/(1+|s|^2) * s/|s|  ==  s * |s|/(1+|s|^2)
    let scale = norm / (T::one() + norm_sq);
    s.iter().map(|&v| v * scale).collect()
}

/// Euclidean norm of a capsule vector.
pub fn vector_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

/// Backward pass of [`squash`]: given the forward input `s` and the upstream
/// gradient, returns the gradient w.r.t. `s`.
///
/// With `a(n) = n / (1 + n^2)` the Jacobian is
/// `a * I + a'(n)/n * s s^T`, and at `s = 0` the map is quadratically flat,
/// so the gradient there is zero.
pub fn squash_backward<T: Scalar>(s: &[T], upstream: &[T]) -> Vec<T> {
    debug_assert_eq!(s.len(), upstream.len());
    let norm_sq = s.iter().fold(T::zero(), |a, &v| a + v * v);
    if norm_sq == T::zero() {
        return vec![T::zero(); s.len()];
    }
    let norm = norm_sq.sqrt();
    let denom = T::one() + norm_sq;
    let scale = norm / denom;
    // a'(n) = (1 - n^2) / (1 + n^2)^2
    let d_scale = (T::one() - norm_sq) / (denom * denom);
    let dot = s
        .iter()
        .zip(upstream)
        .fold(T::zero(), |a, (&si, &gi)| a + si * gi);
    let radial = d_scale / norm * dot;
    s.iter()
        .zip(upstream)
        .map(|(&si, &gi)| gi * scale + si * radial)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeedRng;

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(squash(&[0.0f64, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(squash_backward(&[0.0f64, 0.0], &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_norm_halves() {
        let s = [0.6f64, 0.8];
        let v = squash(&s);
        assert!((vector_norm(&v) - 0.5).abs() < 1e-15);
        // direction preserved
        assert!((v[0] / v[1] - s[0] / s[1]).abs() < 1e-12);
    }

    #[test]
    fn norm_three_maps_to_nine_tenths() {
        let s = [3.0f64, 0.0, 0.0, 0.0];
        let v = squash(&s);
        assert!((vector_norm(&v) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn norm_strictly_below_one_and_monotone() {
        let mut prev = 0.0f64;
        for i in 1..200 {
            let n = i as f64 * 0.25;
            let v = squash(&[n, 0.0]);
            let out = vector_norm(&v);
            assert!(out < 1.0);
            assert!(out > prev, "norm must increase with |s|");
            prev = out;
        }
    }

    #[test]
    fn cosine_with_input_is_one() {
        let mut rng = SeedRng::new(8);
        for _ in 0..20 {
            let s: Vec<f64> = (0..8).map(|_| rng.next_uniform(-2.0, 2.0)).collect();
            let v = squash(&s);
            let dot: f64 = s.iter().zip(&v).map(|(a, b)| a * b).sum();
            let cos = dot / (vector_norm(&s) * vector_norm(&v));
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeedRng::new(17);
        let s: Vec<f64> = (0..8).map(|_| rng.next_uniform(-1.5, 1.5)).collect();
        let up: Vec<f64> = (0..8).map(|_| rng.next_uniform(-1.0, 1.0)).collect();
        let grad = squash_backward(&s, &up);
        let h = 1e-5;
        for i in 0..s.len() {
            let mut plus = s.clone();
            plus[i] += h;
            let mut minus = s.clone();
            minus[i] -= h;
            let f = |probe: &[f64]| -> f64 {
                squash(probe).iter().zip(&up).map(|(a, g)| a * g).sum()
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / numeric.abs().max(1e-6);
            assert!(rel < 1e-5, "squash grad {i}: {} vs {}", grad[i], numeric);
        }
    }
}

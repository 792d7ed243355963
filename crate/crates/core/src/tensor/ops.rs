//! Differentiable numeric kernels: strided valid convolution, ReLU, softmax
//! and matrix-vector maps. Backward passes are hand-derived and verified
//! against central finite differences in the test suite.

use super::{ConvSpec, Scalar, Tensor, TensorError};

/// Gradients returned by [`conv2d_backward`].
pub struct Conv2dGradients<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize), TensorError> {
    let (channels, height, width) = input.dims3()?;
    let (k_maps, w_channels, kh, kw) = weights.dims4()?;
    if channels != spec.in_maps || w_channels != spec.in_maps {
        return Err(TensorError::ChannelMismatch { input: channels, expected: spec.in_maps });
    }
    if k_maps != spec.out_maps {
        return Err(TensorError::ChannelMismatch { input: k_maps, expected: spec.out_maps });
    }
    if kh != spec.kernel || kw != spec.kernel {
        return Err(TensorError::BadConvSpec {
            reason: format!("weight kernel {kh}x{kw} does not match spec kernel {}", spec.kernel),
        });
    }
    if bias.shape() != [spec.out_maps] {
        return Err(TensorError::DimensionMismatch {
            left: bias.len(),
            right: spec.out_maps,
            op: "conv2d bias",
        });
    }
    let h_out = spec.output_extent(height)?;
    let w_out = spec.output_extent(width)?;
    Ok((channels, height, width, h_out, w_out))
}

/// Valid (no-padding) strided convolution of a `[C, H, W]` input with
/// `[K, C, k, k]` weights and a `[K]` bias, producing `[K, H', W']` with
/// `H' = floor((H - k) / stride) + 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (channels, _h, width, h_out, w_out) = check_conv_shapes(input, spec, weights, bias)?;
    let k = spec.kernel;
    let stride = spec.stride;
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let in_map = input.shape()[1] * width;

    let mut out = vec![T::zero(); spec.out_maps * h_out * w_out];
    for o in 0..spec.out_maps {
        let w_map = o * channels * k * k;
        let out_map = o * h_out * w_out;
        for y in 0..h_out {
            for xo in 0..w_out {
                let mut acc = b[o];
                for c in 0..channels {
                    let x_base = c * in_map + y * stride * width + xo * stride;
                    let w_base = w_map + c * k * k;
                    for dy in 0..k {
                        let x_row = x_base + dy * width;
                        let w_row = w_base + dy * k;
                        for dx in 0..k {
                            acc += x[x_row + dx] * w[w_row + dx];
                        }
                    }
                }
                out[out_map + y * w_out + xo] = acc;
            }
        }
    }
    let out = Tensor::new(vec![spec.out_maps, h_out, w_out], out)?;
    out.ensure_finite("conv2d")?;
    Ok(out)
}

/// Gradients of [`conv2d`] w.r.t. input, weights and bias given the upstream
/// gradient of shape `[K, H', W']`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Conv2dGradients<T>, TensorError> {
    let (channels, _h, width, h_out, w_out) = check_conv_shapes(input, spec, weights, bias)?;
    if upstream.shape() != [spec.out_maps, h_out, w_out] {
        return Err(TensorError::DimensionMismatch {
            left: upstream.len(),
            right: spec.out_maps * h_out * w_out,
            op: "conv2d upstream",
        });
    }
    let k = spec.kernel;
    let stride = spec.stride;
    let x = input.data();
    let w = weights.data();
    let g = upstream.data();
    let in_map = input.shape()[1] * width;

    let mut d_input = vec![T::zero(); x.len()];
    let mut d_weights = vec![T::zero(); w.len()];
    let mut d_bias = vec![T::zero(); spec.out_maps];

    for o in 0..spec.out_maps {
        let w_map = o * channels * k * k;
        let out_map = o * h_out * w_out;
        for y in 0..h_out {
            for xo in 0..w_out {
                let go = g[out_map + y * w_out + xo];
                if go == T::zero() {
                    continue;
                }
                d_bias[o] += go;
                for c in 0..channels {
                    let x_base = c * in_map + y * stride * width + xo * stride;
                    let w_base = w_map + c * k * k;
                    for dy in 0..k {
                        let x_row = x_base + dy * width;
                        let w_row = w_base + dy * k;
                        for dx in 0..k {
                            d_weights[w_row + dx] += go * x[x_row + dx];
                            d_input[x_row + dx] += go * w[w_row + dx];
                        }
                    }
                }
            }
        }
    }

    Ok(Conv2dGradients {
        input: Tensor::new(input.shape().to_vec(), d_input)?,
        weights: Tensor::new(weights.shape().to_vec(), d_weights)?,
        bias: Tensor::new(vec![spec.out_maps], d_bias)?,
    })
}

/// Elementwise max(0, x).
pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros_like(x);
    for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v > T::zero() {
            *o = v;
        }
    }
    out
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if x.shape() != upstream.shape() {
        return Err(TensorError::DimensionMismatch {
            left: x.len(),
            right: upstream.len(),
            op: "relu upstream",
        });
    }
    let mut out = Tensor::zeros_like(x);
    for ((o, &v), &g) in out.data_mut().iter_mut().zip(x.data()).zip(upstream.data()) {
        if v > T::zero() {
            *o = g;
        }
    }
    Ok(out)
}

/// Numerically stabilized softmax over a vector: outputs are positive and sum
/// to one; adding a constant to every input leaves the result unchanged.
pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum = out.iter().fold(T::zero(), |a, &b| a + b);
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Jacobian-vector product of softmax: given the forward output `y` and the
/// upstream gradient, returns `y .* (g - <g, y>)`.
pub fn softmax_backward<T: Scalar>(y: &[T], upstream: &[T]) -> Vec<T> {
    debug_assert_eq!(y.len(), upstream.len());
    let dot = y
        .iter()
        .zip(upstream)
        .fold(T::zero(), |acc, (&yi, &gi)| acc + yi * gi);
    y.iter()
        .zip(upstream)
        .map(|(&yi, &gi)| yi * (gi - dot))
        .collect()
}

/// Matrix-vector product `W u` with `W` of shape `[d_out, d_in]`.
pub fn linear_map<T: Scalar>(weights: &Tensor<T>, u: &[T]) -> Result<Vec<T>, TensorError> {
    let (d_out, d_in) = match weights.shape() {
        [a, b] => (*a, *b),
        other => return Err(TensorError::Rank { expected: 2, shape: other.to_vec() }),
    };
    if u.len() != d_in {
        return Err(TensorError::DimensionMismatch { left: d_in, right: u.len(), op: "linear_map" });
    }
    let w = weights.data();
    let mut out = vec![T::zero(); d_out];
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * d_in..(r + 1) * d_in];
        let mut acc = T::zero();
        for (wv, uv) in row.iter().zip(u) {
            acc += *wv * *uv;
        }
        if !acc.is_finite() {
            return Err(TensorError::NonFinite { op: "linear_map" });
        }
        *o = acc;
    }
    Ok(out)
}

/// Gradients of `W u` w.r.t. `W` (outer product `g u^T`) and `u` (`W^T g`).
pub fn linear_map_backward<T: Scalar>(
    weights: &Tensor<T>,
    u: &[T],
    upstream: &[T],
) -> Result<(Tensor<T>, Vec<T>), TensorError> {
    let (d_out, d_in) = match weights.shape() {
        [a, b] => (*a, *b),
        other => return Err(TensorError::Rank { expected: 2, shape: other.to_vec() }),
    };
    if u.len() != d_in || upstream.len() != d_out {
        return Err(TensorError::DimensionMismatch {
            left: u.len(),
            right: upstream.len(),
            op: "linear_map_backward",
        });
    }
    let w = weights.data();
    let mut d_w = vec![T::zero(); w.len()];
    let mut d_u = vec![T::zero(); d_in];
    for r in 0..d_out {
        let g = upstream[r];
        let row = &w[r * d_in..(r + 1) * d_in];
        let d_row = &mut d_w[r * d_in..(r + 1) * d_in];
        for c in 0..d_in {
            d_row[c] = g * u[c];
            d_u[c] += g * row[c];
        }
    }
    Ok((Tensor::new(vec![d_out, d_in], d_w)?, d_u))
}

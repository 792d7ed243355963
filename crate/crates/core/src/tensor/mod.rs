//! Dense row-major tensors and the numeric kernels the capsule network is
//! built from: strided valid convolution, ReLU, softmax and linear maps, each
//! with an explicit backward pass.
//!
//! Everything here is a pure function of its inputs. Results are bitwise
//! deterministic for a fixed precision, so tensors can be handed freely
//! between threads.

mod ops;
mod rng;

pub use ops::{
    conv2d, conv2d_backward, linear_map, linear_map_backward, relu, relu_backward, softmax,
    softmax_backward, Conv2dGradients,
};
pub use rng::SeedRng;

use std::fmt;

use thiserror::Error;

/// Errors reported by tensor construction and kernels.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("empty shape is not a valid tensor shape")]
    EmptyShape,
    #[error("zero extent in shape {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
    #[error("shape {shape:?} holds {expected} values, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("channel mismatch: input has {input} maps, operation expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },
    #[error("kernel {kernel} larger than input extent {input}")]
    KernelTooLarge { kernel: usize, input: usize },
    #[error("dimension mismatch: {left} vs {right} in {op}")]
    DimensionMismatch {
        left: usize,
        right: usize,
        op: &'static str,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("conv spec invalid: {reason}")]
    BadConvSpec { reason: String },
}

/// Numeric precision carried by a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

/// Scalar element type of a tensor. The engine runs in `f32` for training
/// throughput and in `f64` for gradient-check test mode.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense N-dimensional array with row-major contiguous storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Initialization modes accepted by [`alloc`].
pub enum Init<'a> {
    Zeros,
    Constant(f64),
    Uniform {
        lo: f64,
        hi: f64,
        rng: &'a mut SeedRng,
    },
    Normal {
        mean: f64,
        sd: f64,
        rng: &'a mut SeedRng,
    },
}

/// Allocate a tensor of the requested shape. Deterministic under a fixed rng.
pub fn alloc<T: Scalar>(shape: &[usize], init: Init<'_>) -> Result<Tensor<T>, TensorError> {
    validate_shape(shape)?;
    let n = shape.iter().product();
    let data = match init {
        Init::Zeros => vec![T::zero(); n],
        Init::Constant(v) => {
            if !v.is_finite() {
                return Err(TensorError::NonFinite { op: "alloc" });
            }
            vec![T::from_f64(v); n]
        }
        Init::Uniform { lo, hi, rng } => (0..n)
            .map(|_| T::from_f64(rng.next_uniform(lo, hi)))
            .collect(),
        Init::Normal { mean, sd, rng } => (0..n)
            .map(|_| T::from_f64(rng.next_normal(mean, sd)))
            .collect(),
    };
    Ok(Tensor { shape: shape.to_vec(), data })
}

fn validate_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() {
        return Err(TensorError::EmptyShape);
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(TensorError::ZeroExtent { shape: shape.to_vec() });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength { shape, expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        alloc(shape, Init::Zeros)
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    /// Reinterpret the same storage under a new shape of equal volume.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::DataLength { shape, expected, got: self.data.len() });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Convert element type; used to hand single-precision checkpoints to
    /// double-precision test networks.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Row-major flat offset of a multi-index. Panics on rank mismatch or an
    /// out-of-range index; intended for tests and small hot-free paths.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&ix, &extent)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < extent, "index {ix} out of range at axis {i}");
            off = off * extent + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// The three extents of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize), TensorError> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(TensorError::Rank { expected: 3, shape: self.shape.clone() }),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), TensorError> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(TensorError::Rank { expected: 4, shape: self.shape.clone() }),
        }
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<(), TensorError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }
}

/// Square-kernel strided convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_maps: usize,
    pub out_maps: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_maps: usize, out_maps: usize, kernel: usize, stride: usize) -> Result<Self, TensorError> {
        if in_maps == 0 || out_maps == 0 {
            return Err(TensorError::BadConvSpec { reason: "map counts must be positive".into() });
        }
        if kernel == 0 {
            return Err(TensorError::BadConvSpec { reason: "kernel must be >= 1".into() });
        }
        if stride == 0 {
            return Err(TensorError::BadConvSpec { reason: "stride must be >= 1".into() });
        }
        Ok(Self { in_maps, out_maps, kernel, stride })
    }

    /// Valid (no-padding) output extent: floor((input - kernel) / stride) + 1.
    pub fn output_extent(&self, input: usize) -> Result<usize, TensorError> {
        if self.kernel > input {
            return Err(TensorError::KernelTooLarge { kernel: self.kernel, input });
        }
        Ok((input - self.kernel) / self.stride + 1)
    }

    /// Trainable parameters of one layer: weights plus one bias per output map.
    pub fn parameter_count(&self) -> usize {
        self.out_maps * self.in_maps * self.kernel * self.kernel + self.out_maps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_zeros() {
        let t: Tensor<f64> = alloc(&[2, 2], Init::Zeros).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alloc_constant() {
        let t: Tensor<f64> = alloc(&[3], Init::Constant(1.5)).unwrap();
        assert_eq!(t.data(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn alloc_uniform_is_deterministic() {
        let mut rng_a = SeedRng::new(7);
        let mut rng_b = SeedRng::new(7);
        let a: Tensor<f64> = alloc(&[4], Init::Uniform { lo: 0.0, hi: 1.0, rng: &mut rng_a }).unwrap();
        let b: Tensor<f64> = alloc(&[4], Init::Uniform { lo: 0.0, hi: 1.0, rng: &mut rng_b }).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn alloc_rejects_zero_extent() {
        assert!(matches!(
            alloc::<f64>(&[2, 0], Init::Zeros),
            Err(TensorError::ZeroExtent { .. })
        ));
        assert!(matches!(alloc::<f64>(&[], Init::Zeros), Err(TensorError::EmptyShape)));
    }

    #[test]
    fn shape_data_length_invariant() {
        assert!(Tensor::new(vec![2, 3], vec![0.0f32; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0f32; 5]),
            Err(TensorError::DataLength { .. })
        ));
    }

    #[test]
    fn output_extent_reproduces_architecture_chain() {
        // 512 -> 255 -> 126 -> 61 -> 28 -> 11 under the stock conv chain.
        let chain = [(4usize, 2usize), (4, 2), (6, 2), (6, 2), (8, 2)];
        let mut side = 512usize;
        let mut sides = Vec::new();
        for (k, s) in chain {
            let spec = ConvSpec::new(1, 1, k, s).unwrap();
            side = spec.output_extent(side).unwrap();
            sides.push(side);
        }
        assert_eq!(sides, vec![255, 126, 61, 28, 11]);
    }

    #[test]
    fn output_extent_examples() {
        assert_eq!(ConvSpec::new(1, 1, 4, 2).unwrap().output_extent(512).unwrap(), 255);
        assert_eq!(ConvSpec::new(1, 1, 6, 2).unwrap().output_extent(126).unwrap(), 61);
        assert_eq!(ConvSpec::new(1, 1, 8, 2).unwrap().output_extent(28).unwrap(), 11);
        assert!(matches!(
            ConvSpec::new(1, 1, 9, 2).unwrap().output_extent(8),
            Err(TensorError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn precision_tags() {
        let a: Tensor<f32> = Tensor::zeros(&[1]).unwrap();
        let b: Tensor<f64> = Tensor::zeros(&[1]).unwrap();
        assert_eq!(a.precision(), Precision::Single);
        assert_eq!(b.precision(), Precision::Double);
    }
}

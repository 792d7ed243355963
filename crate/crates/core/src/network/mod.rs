//! Capsule network model: squash nonlinearity, routing-by-agreement, margin
//! loss, the network itself, and its checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod net;
pub mod routing;
pub mod squash;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, network_from_bytes, save_checkpoint};
pub use config::{Activation, ConvLayer, LayerShapes, NetworkConfig};
pub use loss::{margin_loss, margin_loss_backward, MarginLossConfig};
pub use net::{argmax, ForwardPass, InitScheme, Network, NetworkGradients};
pub use routing::{routing, routing_backward, RoutingState};
pub use squash::{squash, squash_backward, vector_norm};

use crate::tensor::TensorError;

/// Failures raised by model construction, evaluation, and persistence.
#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid architecture: {0}")]
    BadConfig(String),

    #[error("routing needs at least one iteration, got {0}")]
    BadRoutingIterations(usize),

    #[error("input shape {got:?} does not match network input {want:?}")]
    BadInputShape { got: Vec<usize>, want: Vec<usize> },

    #[error("target class {target} out of range for {classes} classes")]
    BadTarget { target: usize, classes: usize },

    #[error("forward cache is stale: parameters changed since it was computed")]
    StaleCache,

    #[error("parameter slot {slot} mismatch: {detail}")]
    ParameterMismatch { slot: usize, detail: String },

    #[error("checkpoint magic mismatch: not a checkpoint file")]
    BadMagic,

    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),

    #[error("checkpoint truncated ({0} bytes present)")]
    Truncated(usize),

    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

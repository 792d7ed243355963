//! Training: optimizer, stratified folds, the batch loop, whole-image
//! prediction, confusion-matrix metrics, and cross-validation.

mod adam;
mod crossval;
mod dataset;
mod folds;
mod metrics;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use crossval::{cross_validate, CrossvalReport, FoldOutcome};
pub use dataset::PatchDataset;
pub use folds::{split_folds, FoldPlan};
pub use metrics::{
    macro_accuracy, matrix_to_csv, mean_percentage_matrix, percent_matrix_to_csv,
    sensitivities, ConfusionMatrix, CLASSES,
};
pub use trainer::{
    mean_loss, predict_image, train, StopReason, TrainOptions, TrainReport,
};

use crate::network::NetworkError;
use crate::preprocess::{ClassLabel, PreprocessError};
use thiserror::Error;

/// Failures across fold planning, optimization, and evaluation.
#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("optimizer state holds {state} slots but got {params} parameters and {grads} gradients")]
    SlotMismatch { state: usize, params: usize, grads: usize },
    #[error("optimizer slot {slot}: {detail}")]
    ShapeMismatch { slot: usize, detail: String },
    #[error("fold count {0} is too small; need at least 2")]
    BadFoldCount(usize),
    #[error("image id {0:?} appears more than once")]
    DuplicateImage(String),
    #[error("class {label} has {images} images, fewer than the {k} folds")]
    ClassTooSmall { label: ClassLabel, images: usize, k: usize },
    #[error("{truths} truths but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("evaluation produced no outcomes")]
    EmptyEvaluation,
    #[error("no patches to work with")]
    EmptyDataset,
    #[error("cannot predict an image from zero patches")]
    EmptyPatchSet,
    #[error("bad training options: {0}")]
    BadTrainOptions(String),
    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("patch {patch_id:?} decodes to {got:?}, manifest says {want}x{want}")]
    PatchSizeMismatch { patch_id: String, got: (usize, usize), want: usize },
    #[error("manifest patches are {patch}x{patch} but the network expects {input_side}x{input_side} input")]
    PatchNetworkMismatch { patch: usize, input_side: usize },
    #[error("image id {0:?} is not in the dataset")]
    UnknownImage(String),
    #[error("could not write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

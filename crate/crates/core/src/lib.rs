//! Convolutional capsule network engine for whole-slide histology patches:
//! tensor primitives, the capsule model with routing-by-agreement, stain
//! normalization and patch extraction, training with cross-validation, and
//! capsule-feature embedding tools.

pub mod network;
pub mod cli;
pub mod embedding;
pub mod preprocess;
pub mod tensor;
pub mod training;

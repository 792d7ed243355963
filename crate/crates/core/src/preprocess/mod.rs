//! Dataset preparation: image handling, Reinhard color normalization,
//! rotation augmentation, seeded patch extraction, manifests, and the
//! synthetic desk-scale corpus.

pub mod color;
pub mod image;
pub mod manifest;
pub mod patches;
pub mod synth;

pub use color::{
    channel_stats, lab_to_rgb, reinhard_transfer, rgb_to_lab, transfer_lab, LabStats,
    StatsAccumulator,
};
pub use image::{Image, Rotation};
pub use manifest::{
    build_manifest, BuildOptions, ClassLabel, DatasetManifest, LabeledImage, PatchFormat,
    PatchRecord,
};
pub use patches::extract_random_patches;
pub use synth::{synthesize_dataset, synthesize_image};

/// Failures raised while preparing or describing datasets.
#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("bad image: {0}")]
    BadImage(String),

    #[error("unsupported rotation {0} degrees (use 0, 90 or 180)")]
    UnsupportedRotation(u32),

    #[error("crop {w}x{h}+{x}+{y} exceeds {width}x{height} image")]
    BadCrop { x: usize, y: usize, w: usize, h: usize, width: usize, height: usize },

    #[error("patch size/count must be positive, got {0}")]
    BadPatchSize(usize),

    #[error("{width}x{height} image cannot fit a {size}x{size} patch")]
    ImageTooSmall { width: usize, height: usize, size: usize },

    #[error("rotation list is empty")]
    EmptyRotations,

    #[error("unknown class label `{0}` (expect normal, benign, insitu or invasive)")]
    UnknownLabel(String),

    #[error("manifest line {line}: {detail}")]
    ManifestParse { line: usize, detail: String },
}

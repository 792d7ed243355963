//! Capsule-feature extraction, exact t-SNE embedding, feature-map export,
//! and SVG scatter plots.

mod features;
mod maps;
mod svg;
mod tsne;

pub use features::{aggregate_by_source, extract_features, features_to_tsv, FeatureRow};
pub use maps::export_feature_maps;
pub use svg::{scatter_svg, write_scatter_svg};
pub use tsne::{
    embedding_to_tsv, tsne_affinities, tsne_embed, Affinities, TsneConfig, TsneResult,
};

use crate::network::NetworkError;
use crate::training::TrainingError;
use thiserror::Error;

/// Failures across feature extraction, embedding, and plotting.
#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error("{got} points, but at least {need} are required")]
    TooFewPoints { got: usize, need: usize },
    #[error("perplexity {perplexity} invalid for {points} points (need 1 < perplexity < points - 1)")]
    BadPerplexity { perplexity: f64, points: usize },
    #[error("row of length {got} in a set of width {want}")]
    RaggedFeatures { got: usize, want: usize },
    #[error("conv layer {layer} out of range; the network has layers 1..={layers}")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("nothing to plot")]
    EmptyPlot,
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error("could not write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

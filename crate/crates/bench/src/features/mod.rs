//! Coupled unsupervised/supervised image pipeline: patch extraction, ZCA
//! whitening, a k-means codebook with percentile-sparse encoding, quadrant
//! pooling, and gradient-boosted regression trees on the pooled features.

pub mod boost;
pub mod encode;
pub mod images;
pub mod kmeans;
pub mod pipeline;
pub mod tree;
pub mod zca;

use thiserror::Error;

pub use boost::{boost_fit, boost_fit_traced, BoostedEnsemble, SupConfig};
pub use encode::{encode_sparse, featurize_image};
pub use images::{extract_patches, make_synthetic_images, ImageSet, PatchGrid};
pub use kmeans::{kmeans_fit, Codebook};
pub use pipeline::{pipeline_objective, FeaturesConfig, UnsupConfig};
pub use tree::RegressionTree;
pub use zca::{fit_zca, ZcaTransform};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("patch width {w} exceeds image size {n}")]
    PatchTooWide { w: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Space(#[from] hypertune_core::space::SpaceError),
}

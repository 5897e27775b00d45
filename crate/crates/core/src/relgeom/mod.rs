//! Relative representations of latent spaces and the scores built on them.
//!
//! A latent matrix `Z` (`N × k`, one row per shared input window) is z-scored
//! feature-wise and each row is described by its cosine similarity to `m`
//! anchor rows. Two forecasters are compared through these `N × m` relative
//! embeddings, which are unaffected by rotations and rescalings of either
//! latent space.

mod ablation;
mod baselines;
mod embed;
mod metrics;
mod pca;
mod probe;
mod temporal;

pub use ablation::{anchor_ablation, random_baseline, AblationPoint, RandomBaseline};
pub use baselines::{baseline_cka, baseline_procrustes, baseline_rsa};
pub use embed::{relative_embed, zscore_features, AnchorSet, RelativeEmbedding, ZScore};
pub use metrics::{align, alpha_cosine, alpha_rank, alpha_t1, descending_ranks, AlignmentReport};
pub use pca::{pca_project, Pca};
pub use probe::{probe_ridge, ProbeReport};
pub use temporal::temporal_track;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelError {
    #[error("feature column {column} has std {std:e} (constant feature)")]
    DegenerateFeature { column: usize, std: f64 },
    #[error("row {row} has (near) zero norm")]
    ZeroVector { row: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("need {need} samples, have {have}")]
    InsufficientSamples { need: usize, have: usize },
    #[error("anchor index {index} invalid for {n} samples")]
    BadAnchor { index: usize, n: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("ridge normal equations are numerically singular")]
    SingularSystem,
}

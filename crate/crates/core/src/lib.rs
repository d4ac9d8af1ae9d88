//! Metric-learning core: the Label-Aware Ranked (LAR) loss and the baseline
//! deep-metric-learning losses it is benchmarked against, together with the
//! numerical tooling the rest of the workspace builds on.
//!
//! The crate is organised around a handful of small modules:
//!
//! - [`matrix`] — a minimal row-major `f64` matrix used for embeddings.
//! - [`batch`] — [`EmbeddingBatch`], the labelled unit-vector batch every
//!   loss consumes, plus smart-batch (two samples per label) validation.
//! - [`loss`] — Triplet, Multiclass-N-Pair, Constellation and LAR losses
//!   with hand-derived gradients, and the circular label distance.
//! - [`gradcheck`] — central finite-difference gradient verification.
//! - [`smoothing`] — first-order exponential smoothing for prediction
//!   streams.
//! - [`geometry`] — numerical verification that the LAR class objective is
//!   minimised by rank-preserving uniform-angle configurations on the
//!   circle.
//! - [`kv`] — flat `key=value` config/sidecar files.
//!
//! Everything here is a pure function of its inputs; results are
//! deterministic given identical inputs because all summation orders are
//! fixed (ascending anchor index, then ascending negative index).

pub mod batch;
pub mod geometry;
pub mod gradcheck;
pub mod kv;
pub mod loss;
pub mod matrix;
pub mod smoothing;

pub use batch::EmbeddingBatch;
pub use loss::{
    constellation_loss, label_distance, lar_loss, mc_n_pair_loss, normalize, triplet_loss,
    LossKind, LossOutput, TripletMargin,
};
pub use matrix::Matrix;

/// Derive an independent RNG seed for a named sub-stream (recording index,
/// layer index, ...) from a master seed. SplitMix64-style mixing so nearby
/// stream ids do not produce correlated seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

use thiserror::Error;

/// Errors shared by the metric-loss and geometry operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    /// A vector that must be normalised has (numerically) zero length.
    #[error("row {row} is a zero vector (norm <= 1e-12), cannot normalise")]
    ZeroVector { row: usize },

    /// Anchor and negative share a label; the circular label distance would
    /// be 0 and `log(0)` diverges.
    #[error("labels are equal ({label}); label distance is undefined for same-label pairs")]
    EqualLabels { label: usize },

    /// The batch cannot supply the anchor/positive/negative structure a
    /// loss needs.
    #[error("degenerate batch: {reason}")]
    DegenerateBatch { reason: String },

    /// Constellation `K` outside `[1, available negative labels]`.
    #[error("K = {k} is invalid: {available} negative labels available")]
    BadK { k: usize, available: usize },

    /// A label lies outside `[0, num_labels)`.
    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    /// Mismatched vector/label counts or an unusable dimension.
    #[error("dimension error: {0}")]
    DimensionError(String),

    /// Smoothing coefficient outside `(0, 1]`.
    #[error("alpha = {alpha} outside (0, 1]")]
    BadAlpha { alpha: f64 },

    /// Perturbation angle outside `(0, 2*pi/l)`.
    #[error("epsilon = {epsilon} outside (0, {limit}) for l = {l}")]
    BadEpsilon { epsilon: f64, l: usize, limit: f64 },

    /// An objective or loss stopped being finite.
    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;

//! Detection and classification of infant hand-on-face touches from body,
//! face and hand landmark streams and grayscale frame images.
//!
//! The crate covers the whole chain: ingesting landmark files, normalizing
//! and smoothing them per video, computing the 170 landmark features and the
//! 540 HOG appearance dimensions, reducing them (random-forest selection with
//! PCA, or an autoencoder), classifying with an RBF-kernel SVM (Label Powerset
//! for touch locations), cross-validated model selection, evaluation against
//! ZeroR and random-chance baselines, and the correlation of touch frequency
//! with Mullen rate-of-development scores. A seeded synthetic generator
//! provides labeled data with known ground truth.

pub mod exec;
pub mod extract;
pub mod features;
pub mod imaging;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod reduce;
pub mod stats;
pub mod svm;
pub mod synth;

pub use exec::Execution;

/// Any failure surfaced by the higher-level entry points.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Imaging(#[from] imaging::ImagingError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error(transparent)]
    Reduce(#[from] reduce::ReduceError),
    #[error(transparent)]
    Svm(#[from] svm::SvmError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

//! Diagnostics for multimodal empathy classifiers.
//!
//! The crate trains unimodal probe heads and a gated-attention fusion model
//! over precomputed per-modality embeddings, sorts examples into confidence
//! quadrants where the unimodal and fused predictions disagree, and provides
//! the statistics (Welch t-tests, Cohen's kappa) and 2-D projections used to
//! characterize those regions.
//!
//! Data-parallel inner loops (batch prediction, per-feature tests, covariance
//! accumulation) go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise.

pub mod data;
pub mod disagreement;
pub mod fusion;
pub mod nn;
pub mod par;
pub mod probe;
pub mod projection;
pub mod stats;

pub use data::{
    AnnotationRecord, DataError, Dataset, DatasetManifest, EmbeddingStore, ExampleRecord,
    FeatureTable, Label, Modality, Pass, Split,
};
pub use disagreement::{PredictionRecord, Quadrant};

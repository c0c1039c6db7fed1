//! Group comparison statistics.
//!
//! All location tests are Welch (unequal-variance) t-tests. Quadrant groups
//! have very different sizes and spreads, so the pooled-variance Student
//! test is not offered; its p-values differ from the ones reported here.

mod compare;
mod kappa;
pub mod special;
mod ttest;

use thiserror::Error;

use crate::disagreement::Quadrant;

pub use compare::{
    au_activation_compare, au_activation_compare_with, group_compare, group_compare_with,
    FeatureComparison, ALPHA, DEFAULT_PAIRS,
};
pub use kappa::{cohen_kappa, kappa_by_quadrant, kappa_delta, KappaResult, KappaTable};
pub use ttest::{welch_ttest, Direction, TTestResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("each sample needs at least 2 values (got {n_a} and {n_b})")]
    TooFewSamples { n_a: usize, n_b: usize },
    #[error("both samples are constant and equal; p is undefined")]
    ZeroVarianceBoth,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("quadrant `{0}` has no rows in the feature table")]
    EmptyGroup(Quadrant),
    #[error("unknown feature column `{0}`")]
    UnknownFeature(String),
    #[error("judgment lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no judgments to compare")]
    EmptyInput,
    #[error("expected marginal agreement is 1; kappa is undefined")]
    DegenerateMarginals,
    #[error("expected exactly 2 annotators, found {0}")]
    AnnotatorCount(usize),
    #[error("duplicate judgment for task `{task_id}` by `{annotator}` in pass {pass}")]
    DuplicateJudgment {
        task_id: String,
        annotator: String,
        pass: u8,
    },
    #[error("task `{0}` has no quadrant assignment")]
    UnknownTask(String),
}

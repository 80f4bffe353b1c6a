//! Portfolio-based algorithm selection.
//!
//! The crate trains per-instance algorithm selectors and timeout-minimal
//! pre-solving schedules from recorded performance data, replays the
//! resulting portfolio solver against that data, and scores it.
//!
//! Module map:
//!
//! - [`scenario`]: data model and on-disk format of a selection scenario.
//! - [`preprocessing`]: imputation, normalization, performance transforms and
//!   algorithm filtering.
//! - [`learners`]: the machine-learning base models (ridge, kernel ridge,
//!   k-NN, k-means, cost-sensitive random forests).
//! - [`selectors`]: the seven selection approaches and grid search.
//! - [`scheduling`]: pre-solving schedule optimization.
//! - [`pipeline`]: training workflow and solve-time simulation.
//! - [`evaluation`]: PAR scores, oracle baselines and permutation tests.
//! - [`report`]: comparison tables.
//! - [`synthetic`]: generator for cluster-structured benchmark scenarios.

pub mod evaluation;
pub mod learners;
pub mod pipeline;
pub mod preprocessing;
pub mod report;
pub mod scenario;
pub mod scheduling;
pub mod selectors;
pub mod synthetic;

mod seed;

pub use seed::derive_seed;

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Preprocess(#[from] preprocessing::PreprocessError),
    #[error(transparent)]
    Learn(#[from] learners::LearnError),
    #[error(transparent)]
    Selector(#[from] selectors::SelectorError),
    #[error(transparent)]
    Evaluation(#[from] evaluation::EvaluationError),
    #[error(transparent)]
    Model(#[from] pipeline::ModelFileError),
}

pub type Result<T> = std::result::Result<T, Error>;

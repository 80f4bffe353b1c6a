//! Machine-learning base models used by the selection approaches.
//!
//! All randomized learners take an explicit seed; trained models are plain
//! data and serialize with serde.

mod forest;
mod kernel_ridge;
mod kmeans;
mod knn;
mod ridge;

pub use forest::{train_forest, CostSensitiveForest, DecisionTree, ForestParams, TreeNode};
pub use kernel_ridge::{train_kernel_ridge, KernelRidgeModel};
pub use kmeans::{train_kmeans, KMeansFit, KMeansModel};
pub use knn::{knn_query, squared_distance};
pub use ridge::{train_ridge, RidgeModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("singular system; increase regularization")]
    Singular,
    #[error("no training rows")]
    Empty,
    #[error("{rows} rows but {targets} targets")]
    TargetMismatch { rows: usize, targets: usize },
    #[error("row has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("k must be in 1..={max}, got {k}")]
    InvalidK { k: usize, max: usize },
    #[error("all example weights are zero")]
    ZeroWeights,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn check_rows(x: &[Vec<f64>], targets: usize) -> Result<usize, LearnError> {
    let first = x.first().ok_or(LearnError::Empty)?;
    if x.len() != targets {
        return Err(LearnError::TargetMismatch {
            rows: x.len(),
            targets,
        });
    }
    let d = first.len();
    for row in x {
        if row.len() != d {
            return Err(LearnError::LengthMismatch {
                expected: d,
                found: row.len(),
            });
        }
    }
    Ok(d)
}

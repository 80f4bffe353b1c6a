use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_rows, squared_distance, LearnError};

/// RBF kernel ridge regression: `f(x) = sum_i alpha_i exp(-gamma |x - x_i|^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidgeModel {
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Solves `(K + lambda I) alpha = y` for the RBF Gram matrix `K`.
pub fn train_kernel_ridge(
    x: &[Vec<f64>],
    y: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<KernelRidgeModel, LearnError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(LearnError::InvalidParameter(format!("gamma = {gamma}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LearnError::InvalidParameter(format!("lambda = {lambda}")));
    }
    check_rows(x, y.len())?;
    let n = x.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| rbf(gamma, &x[i], &x[j]));
    for i in 0..n {
        k[(i, i)] += lambda;
    }
    let alpha = k
        .cholesky()
        .ok_or(LearnError::Singular)?
        .solve(&DVector::from_column_slice(y));
    Ok(KernelRidgeModel {
        support: x.to_vec(),
        alpha: alpha.iter().copied().collect(),
        gamma,
        lambda,
    })
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

impl KernelRidgeModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| a * rbf(self.gamma, s, row))
            .sum()
    }
}

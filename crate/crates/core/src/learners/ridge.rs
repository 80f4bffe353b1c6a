use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_rows, LearnError};

/// Linear model `y = w . x + b` fitted by ridge regression. The intercept is
/// not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

/// Relative singular-value threshold below which an unregularized system
/// counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;

/// Solves the centered normal equations `(Xc'Xc + lambda I) w = Xc'yc`.
pub fn train_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel, LearnError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LearnError::InvalidParameter(format!("lambda = {lambda}")));
    }
    let d = check_rows(x, y.len())?;
    let n = x.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let x_mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    if d == 0 {
        return Ok(RidgeModel {
            weights: vec![],
            intercept: y_mean,
            lambda,
        });
    }

    let xc = DMatrix::from_fn(x.len(), d, |i, j| x[i][j] - x_mean[j]);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * yc;

    if lambda == 0.0 {
        let sv = gram.singular_values();
        let max = sv.max();
        if max <= 0.0 || sv.min() / max < RANK_TOLERANCE {
            return Err(LearnError::Singular);
        }
    }
    let w = gram
        .cholesky()
        .ok_or(LearnError::Singular)?
        .solve(&rhs);
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeModel {
        weights,
        intercept,
        lambda,
    })
}

impl RidgeModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.weights.len());
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let m = train_ridge(&[vec![0.0], vec![1.0]], &[0.0, 1.0], 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        for lambda in [0.0, 0.5, 10.0] {
            let m = train_ridge(&[vec![0.0], vec![1.0]], &[1.0, 1.0], lambda).unwrap();
            assert!(m.weights[0].abs() < 1e-12);
            assert!((m.intercept - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_prediction_at_center() {
        // Centered: x = [-1, 0, 1], y = [-1, 0, 1]; w = 2 / (2 + 1), b = 1.
        let m = train_ridge(&[vec![0.0], vec![1.0], vec![2.0]], &[0.0, 1.0, 2.0], 1.0).unwrap();
        assert!((m.predict(&[1.0]) - 1.0).abs() < 1e-12);
        assert!((m.weights[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_without_regularization() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert_eq!(train_ridge(&x, &[1.0, 2.0, 3.0], 0.0), Err(LearnError::Singular));
        assert!(train_ridge(&x, &[1.0, 2.0, 3.0], 0.1).is_ok());
        assert_eq!(train_ridge(&[], &[], 1.0), Err(LearnError::Empty));
    }

    /// Least squares through Gaussian elimination on the uncentered
    /// augmented normal equations `[1 X]' [1 X] beta = [1 X]' y`.
    fn least_squares_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len() + 1;
        let aug: Vec<Vec<f64>> = x
            .iter()
            .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
            .collect();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &t) in aug.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
                a[i][p] += row[i] * t;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    proptest! {
        #[test]
        fn unregularized_matches_least_squares(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), 6..12)
        ) {
            let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
            // Skip near-collinear designs.
            let m = match train_ridge(&x, &y, 0.0) { Ok(m) => m, Err(_) => return Ok(()) };
            let beta = least_squares_oracle(&x, &y);
            let cond_ok = beta.iter().all(|b| b.is_finite() && b.abs() < 1e6);
            prop_assume!(cond_ok);
            prop_assert!((m.intercept - beta[0]).abs() < 1e-8);
            prop_assert!((m.weights[0] - beta[1]).abs() < 1e-8);
            prop_assert!((m.weights[1] - beta[2]).abs() < 1e-8);
        }
    }
}

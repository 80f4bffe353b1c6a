//! Feature and performance preprocessing.
//!
//! Every state here is fitted on training rows only and is immutable
//! afterwards; applying it to new rows is a pure function.

use serde::{Deserialize, Serialize};

use crate::scenario::{PerformanceMatrix, Scenario};

/// Smallest runtime fed to the log transform, in seconds.
pub const LOG_FLOOR: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("cannot fit preprocessing on zero rows")]
    Empty,
    #[error("row has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    None,
    #[serde(rename = "zscore")]
    ZScore,
    Linear,
}

/// Fitted per-feature normalization.
///
/// For z-score, `params[j] = (mean, population stddev)`; for linear,
/// `params[j] = (min, max)`. Degenerate features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub kind: NormalizationKind,
    pub params: Vec<(f64, f64)>,
}

pub fn fit_normalization(
    rows: &[Vec<f64>],
    kind: NormalizationKind,
) -> Result<NormalizationState, PreprocessError> {
    let first = rows.first().ok_or(PreprocessError::Empty)?;
    let d = first.len();
    for row in rows {
        check_len(d, row.len())?;
    }
    let n = rows.len() as f64;
    let params = (0..d)
        .map(|j| {
            let column = rows.iter().map(|r| r[j]);
            match kind {
                NormalizationKind::None => (0.0, 1.0),
                NormalizationKind::ZScore => {
                    let mean = column.clone().sum::<f64>() / n;
                    let var = column.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
                NormalizationKind::Linear => column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                }),
            }
        })
        .collect();
    Ok(NormalizationState { kind, params })
}

impl NormalizationState {
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Normalizes one row. Linear scaling does not clip values outside the
    /// training range.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        check_len(self.params.len(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.params)
            .map(|(&x, &(a, b))| match self.kind {
                NormalizationKind::None => x,
                NormalizationKind::ZScore => {
                    if b > 0.0 {
                        (x - a) / b
                    } else {
                        0.0
                    }
                }
                NormalizationKind::Linear => {
                    if b > a {
                        (x - a) / (b - a)
                    } else {
                        0.0
                    }
                }
            })
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PreprocessError> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Per-feature fill values for missing entries (training medians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationState {
    pub fill: Vec<f64>,
}

/// Fits median imputation and returns the completed training rows. A
/// feature with no observed value is filled with 0.
pub fn impute(rows: &[Vec<Option<f64>>]) -> Result<(ImputationState, Vec<Vec<f64>>), PreprocessError> {
    let first = rows.first().ok_or(PreprocessError::Empty)?;
    let d = first.len();
    for row in rows {
        check_len(d, row.len())?;
    }
    let fill = (0..d)
        .map(|j| {
            let mut observed: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            median(&mut observed).unwrap_or(0.0)
        })
        .collect();
    let state = ImputationState { fill };
    let completed = rows
        .iter()
        .map(|r| state.apply(r))
        .collect::<Result<_, _>>()?;
    Ok((state, completed))
}

impl ImputationState {
    pub fn dim(&self) -> usize {
        self.fill.len()
    }

    pub fn apply(&self, row: &[Option<f64>]) -> Result<Vec<f64>, PreprocessError> {
        check_len(self.fill.len(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.fill)
            .map(|(v, &f)| v.unwrap_or(f))
            .collect())
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn check_len(expected: usize, found: usize) -> Result<(), PreprocessError> {
    if expected == found {
        Ok(())
    } else {
        Err(PreprocessError::LengthMismatch { expected, found })
    }
}

/// Hook for feature-subset selection. Implementations return the indices
/// of the feature columns to keep.
pub trait FeatureSelector {
    fn select(&self, rows: &[Vec<f64>], n_features: usize) -> Vec<usize>;
}

/// Keeps every feature.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllFeatures;

impl FeatureSelector for AllFeatures {
    fn select(&self, _rows: &[Vec<f64>], n_features: usize) -> Vec<usize> {
        (0..n_features).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceTransform {
    Raw,
    Log,
    Par10,
}

impl PerformanceTransform {
    /// Transforms one run. Unsolved runs count as `cutoff` seconds for `Raw`
    /// and `Log`, and as `10 * cutoff` for `Par10`.
    pub fn apply(self, run: crate::scenario::Run, cutoff: f64) -> f64 {
        let effective = if run.is_solved() { run.runtime } else { cutoff };
        match self {
            PerformanceTransform::Raw => effective,
            PerformanceTransform::Log => effective.max(LOG_FLOOR).log10(),
            PerformanceTransform::Par10 => run.par(cutoff, 10.0),
        }
    }
}

/// Applies `kind` to every cell; result is instance-major.
pub fn transform_performance(
    matrix: &PerformanceMatrix,
    cutoff: f64,
    kind: PerformanceTransform,
) -> Vec<Vec<f64>> {
    (0..matrix.n_instances())
        .map(|i| matrix.row(i).iter().map(|&r| kind.apply(r, cutoff)).collect())
        .collect()
}

/// Drops algorithms whose marginal contribution to the training-set virtual
/// best solver is zero.
///
/// Candidates are visited weakest first (descending solo PAR10, ties by
/// ascending index); a candidate is removed when every training instance
/// keeps its per-instance best PAR10 without it. The survivors are returned
/// in their original order, and at least one algorithm always survives.
pub fn filter_algorithms(scenario: &Scenario, training: &[usize]) -> Vec<usize> {
    let m = scenario.n_algorithms();
    let par10 = |i: usize, a: usize| scenario.par10(i, a);
    let solo: Vec<f64> = (0..m)
        .map(|a| training.iter().map(|&i| par10(i, a)).sum())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| solo[y].total_cmp(&solo[x]).then(x.cmp(&y)));

    let mut kept = vec![true; m];
    let vbs_row = |i: usize, kept: &[bool]| {
        (0..m)
            .filter(|&a| kept[a])
            .map(|a| par10(i, a))
            .fold(f64::INFINITY, f64::min)
    };
    for &cand in &order {
        if kept.iter().filter(|&&k| k).count() == 1 {
            break;
        }
        let mut without = kept.clone();
        without[cand] = false;
        let unchanged = training
            .iter()
            .all(|&i| vbs_row(i, &without) == vbs_row(i, &kept));
        if unchanged {
            kept = without;
        }
    }
    (0..m).filter(|&a| kept[a]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{FeatureCost, FeatureMatrix, Run, ScenarioParts};

    fn col(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn flat(rows: Vec<Vec<f64>>) -> Vec<f64> {
        rows.into_iter().map(|r| r[0]).collect()
    }

    #[test]
    fn zscore_uses_population_stddev() {
        let rows = col(&[1.0, 2.0, 3.0]);
        let st = fit_normalization(&rows, NormalizationKind::ZScore).unwrap();
        let out = flat(st.apply_all(&rows).unwrap());
        let z = (1.5f64).sqrt();
        for (a, b) in out.iter().zip([-z, 0.0, z]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((out[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn linear_and_degenerate() {
        let st = fit_normalization(&col(&[1.0, 2.0, 3.0]), NormalizationKind::Linear).unwrap();
        assert_eq!(flat(st.apply_all(&col(&[1.0, 2.0, 3.0])).unwrap()), vec![0.0, 0.5, 1.0]);

        let rows = col(&[5.0, 5.0, 5.0]);
        for kind in [NormalizationKind::ZScore, NormalizationKind::Linear] {
            let st = fit_normalization(&rows, kind).unwrap();
            assert_eq!(flat(st.apply_all(&rows).unwrap()), vec![0.0; 3]);
        }
        assert_eq!(
            fit_normalization(&[], NormalizationKind::Linear),
            Err(PreprocessError::Empty)
        );
    }

    #[test]
    fn linear_extrapolates_without_clipping() {
        let st = fit_normalization(&col(&[1.0, 3.0]), NormalizationKind::Linear).unwrap();
        assert_eq!(st.apply(&[2.0]).unwrap(), vec![0.5]);
        assert_eq!(st.apply(&[5.0]).unwrap(), vec![2.0]);
        assert_eq!(
            st.apply(&[1.0, 2.0]),
            Err(PreprocessError::LengthMismatch {
                expected: 1,
                found: 2
            })
        );
        let none = fit_normalization(&col(&[1.0, 3.0]), NormalizationKind::None).unwrap();
        assert_eq!(none.apply(&[17.25]).unwrap(), vec![17.25]);
    }

    #[test]
    fn imputes_medians() {
        let rows = vec![vec![Some(1.0), None], vec![None, None], vec![Some(3.0), None]];
        let (st, out) = impute(&rows).unwrap();
        assert_eq!(st.fill, vec![2.0, 0.0]);
        assert_eq!(out, vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);

        let full = vec![vec![Some(4.0)], vec![Some(9.0)]];
        let (_, out) = impute(&full).unwrap();
        assert_eq!(out, vec![vec![4.0], vec![9.0]]);
    }

    #[test]
    fn performance_transforms() {
        let cutoff = 600.0;
        assert_eq!(PerformanceTransform::Par10.apply(Run::timeout(cutoff), cutoff), 6000.0);
        assert_eq!(PerformanceTransform::Log.apply(Run::solved(100.0), cutoff), 2.0);
        assert_eq!(PerformanceTransform::Raw.apply(Run::solved(42.5), cutoff), 42.5);
        assert_eq!(
            PerformanceTransform::Log.apply(Run::solved(0.001), cutoff),
            LOG_FLOOR.log10()
        );
    }

    fn matrix_scenario(times: &[&[Option<f64>]]) -> Scenario {
        let cutoff = 100.0;
        let n = times.len();
        let m = times[0].len();
        let rows = times
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| t.map_or(Run::timeout(cutoff), Run::solved))
                    .collect()
            })
            .collect();
        Scenario::new(ScenarioParts {
            name: "m".into(),
            instances: (0..n).map(|i| format!("i{i}")).collect(),
            algorithms: (0..m).map(|a| format!("a{a}")).collect(),
            cutoff,
            performance: PerformanceMatrix::from_rows(rows),
            features: FeatureMatrix {
                names: vec![],
                rows: vec![vec![]; n],
            },
            feature_costs: vec![FeatureCost { cost: 0.0, solved: false }; n],
            folds: None,
        })
        .unwrap()
    }

    #[test]
    fn filter_removes_dominated() {
        let s = matrix_scenario(&[&[Some(1.0), Some(2.0)], &[Some(3.0), Some(4.0)]]);
        assert_eq!(filter_algorithms(&s, &[0, 1]), vec![0]);
    }

    #[test]
    fn filter_keeps_complementary() {
        let s = matrix_scenario(&[&[Some(1.0), Some(2.0)], &[Some(5.0), Some(4.0)]]);
        assert_eq!(filter_algorithms(&s, &[0, 1]), vec![0, 1]);
    }

    #[test]
    fn filter_keeps_one_of_identical() {
        let s = matrix_scenario(&[&[Some(1.0), Some(1.0)], &[None, None]]);
        assert_eq!(filter_algorithms(&s, &[0, 1]).len(), 1);
    }

    /// Brute force: the smallest subsets that preserve per-instance VBS.
    fn minimal_preserving_subsets(s: &Scenario, training: &[usize]) -> Vec<Vec<usize>> {
        let m = s.n_algorithms();
        let vbs = |mask: u32, i: usize| {
            (0..m)
                .filter(|a| mask >> a & 1 == 1)
                .map(|a| s.par10(i, a))
                .fold(f64::INFINITY, f64::min)
        };
        let full = (1u32 << m) - 1;
        let ok: Vec<u32> = (1..=full)
            .filter(|&mask| training.iter().all(|&i| vbs(mask, i) == vbs(full, i)))
            .collect();
        let best = ok.iter().map(|m| m.count_ones()).min().unwrap();
        ok.into_iter()
            .filter(|m| m.count_ones() == best)
            .map(|mask| (0..m).filter(|a| mask >> a & 1 == 1).collect())
            .collect()
    }

    #[test]
    fn filter_removes_never_strictly_best() {
        // C (index 2) ties the minimum on i0 and i3 but is never strictly best.
        let s = matrix_scenario(&[
            &[Some(1.0), Some(5.0), Some(1.0)],
            &[Some(9.0), Some(2.0), Some(8.0)],
            &[Some(3.0), Some(7.0), Some(4.0)],
            &[None, Some(6.0), Some(6.0)],
            &[Some(2.0), None, None],
        ]);
        let training: Vec<usize> = (0..5).collect();
        let oracle = minimal_preserving_subsets(&s, &training);
        assert_eq!(oracle, vec![vec![0, 1]]);
        assert_eq!(filter_algorithms(&s, &training), vec![0, 1]);
    }
}

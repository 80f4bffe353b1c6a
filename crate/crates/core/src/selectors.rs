//! The seven selection approaches and hyperparameter grid search.
//!
//! A trained [`SelectionModel`] maps a raw feature vector to one score per
//! algorithm; lower is better everywhere.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::evaluation::best_algorithm;
use crate::learners::{
    knn_query, train_forest, train_kernel_ridge, train_kmeans, train_ridge, CostSensitiveForest,
    ForestParams, KMeansModel, KernelRidgeModel, LearnError, RidgeModel,
};
use crate::preprocessing::{
    fit_normalization, impute, ImputationState, NormalizationKind, NormalizationState,
    PerformanceTransform, PreprocessError,
};
use crate::scenario::{assign_folds, Scenario};
use crate::scheduling::ScheduleLimits;

/// Cutoff the absolute pre-solving limits are stated for.
pub const REFERENCE_CUTOFF: f64 = 600.0;

/// Default number of inner cross-validation folds.
pub const INNER_FOLDS: usize = 5;

const KMEANS_MAX_ITERS: usize = 300;

// Seed tags for derived random streams.
const TAG_KMEANS: u64 = 1;
const TAG_PAIRS: u64 = 2;
const TAG_INNER_FOLDS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectorError {
    #[error("unknown approach `{0}`")]
    UnknownApproach(String),
    #[error("need at least 2 training instances, got {0}")]
    TooFewInstances(usize),
    #[error("no algorithms to select from")]
    NoAlgorithms,
    #[error("degenerate training data: every training instance is unsolved by every algorithm")]
    Degenerate,
    #[error("approach aspeed is schedule-only and has no scoring model")]
    ScheduleOnly,
    #[error("feature vector has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("approach {approach} has no hyperparameter `{name}`")]
    UnknownHyperparameter { approach: Approach, name: String },
    #[error("invalid value {value} for hyperparameter `{name}`")]
    InvalidHyperparameter { name: String, value: f64 },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("malformed grid `{0}`")]
    BadGrid(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Aspeed,
    Cf1,
    Measp,
    Isac,
    Threes,
    Satzilla09,
    Satzilla11,
}

impl Approach {
    pub const ALL: [Approach; 7] = [
        Approach::Aspeed,
        Approach::Cf1,
        Approach::Measp,
        Approach::Isac,
        Approach::Threes,
        Approach::Satzilla09,
        Approach::Satzilla11,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Approach::Aspeed => "aspeed",
            Approach::Cf1 => "cf1",
            Approach::Measp => "measp",
            Approach::Isac => "isac",
            Approach::Threes => "threes",
            Approach::Satzilla09 => "satzilla09",
            Approach::Satzilla11 => "satzilla11",
        }
    }

    /// The approach's default preprocessing and pre-solving constraints.
    pub fn spec(self) -> ApproachSpec {
        use NormalizationKind as N;
        use PresolveTime as T;
        let (normalization, max_presolvers, max_presolve_time) = match self {
            Approach::Aspeed => (N::None, None, T::Unlimited),
            Approach::Cf1 => (N::ZScore, Some(0), T::Seconds(0.0)),
            Approach::Measp => (N::None, Some(0), T::Seconds(0.0)),
            Approach::Isac => (N::Linear, Some(0), T::Seconds(0.0)),
            Approach::Threes => (N::Linear, None, T::CutoffFraction(0.1)),
            Approach::Satzilla09 => (N::ZScore, Some(2), T::Seconds(20.0)),
            Approach::Satzilla11 => (N::ZScore, Some(3), T::Seconds(30.0)),
        };
        ApproachSpec {
            approach: self,
            normalization,
            max_presolvers,
            max_presolve_time,
        }
    }

    /// Hyperparameters used when no grid search is requested.
    pub fn default_hyperparameters(self) -> Hyperparameters {
        let pairs: &[(&str, f64)] = match self {
            Approach::Aspeed | Approach::Measp => &[],
            Approach::Cf1 => &[("gamma", 0.2), ("lambda", 1.0)],
            Approach::Satzilla09 => &[("lambda", 1.0)],
            Approach::Isac => &[("k", 4.0)],
            Approach::Threes => &[("k", 5.0)],
            Approach::Satzilla11 => &[("trees", 99.0)],
        };
        Hyperparameters::from_pairs(pairs)
    }

    /// Lattice searched by `--grid` when the user gives none.
    pub fn default_grid(self) -> Grid {
        let axes: Vec<(&str, Vec<f64>)> = match self {
            Approach::Aspeed | Approach::Measp => vec![],
            Approach::Cf1 => vec![("gamma", vec![0.05, 0.2, 1.0]), ("lambda", vec![0.1, 1.0])],
            Approach::Satzilla09 => vec![("lambda", vec![0.1, 1.0, 10.0])],
            Approach::Isac => vec![("k", vec![2.0, 4.0, 8.0, 16.0])],
            Approach::Threes => vec![("k", vec![1.0, 3.0, 5.0, 9.0])],
            Approach::Satzilla11 => vec![("trees", vec![99.0])],
        };
        Grid {
            axes: axes.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        }
    }

    fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Approach::Aspeed | Approach::Measp => &[],
            Approach::Cf1 => &["gamma", "lambda"],
            Approach::Satzilla09 => &["lambda"],
            Approach::Isac | Approach::Threes => &["k"],
            Approach::Satzilla11 => &["trees"],
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Approach {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Approach::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| SelectorError::UnknownApproach(s.to_string()))
    }
}

/// Limit on the total pre-solving time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresolveTime {
    Unlimited,
    /// Seconds at [`REFERENCE_CUTOFF`]; scaled proportionally to the cutoff.
    Seconds(f64),
    CutoffFraction(f64),
}

impl PresolveTime {
    pub fn resolve(self, cutoff: f64) -> Option<f64> {
        match self {
            PresolveTime::Unlimited => None,
            PresolveTime::Seconds(s) => Some(s * cutoff / REFERENCE_CUTOFF),
            PresolveTime::CutoffFraction(f) => Some(f * cutoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachSpec {
    pub approach: Approach,
    pub normalization: NormalizationKind,
    /// `None` is unbounded.
    pub max_presolvers: Option<usize>,
    pub max_presolve_time: PresolveTime,
}

impl ApproachSpec {
    pub fn limits(&self, cutoff: f64) -> ScheduleLimits {
        ScheduleLimits {
            max_components: self.max_presolvers,
            max_total_time: self.max_presolve_time.resolve(cutoff),
        }
    }
}

/// Named numeric hyperparameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters(pub BTreeMap<String, f64>);

impl Hyperparameters {
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Hyperparameters(pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// Fills in defaults and rejects names the approach does not know.
    fn resolve(&self, approach: Approach) -> Result<Hyperparameters, SelectorError> {
        let known = approach.parameter_names();
        if let Some(name) = self.0.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(SelectorError::UnknownHyperparameter {
                approach,
                name: name.clone(),
            });
        }
        let mut out = approach.default_hyperparameters();
        out.0.extend(self.0.iter().map(|(k, v)| (k.clone(), *v)));
        for (name, &value) in &out.0 {
            let ok = match name.as_str() {
                "gamma" => value > 0.0 && value.is_finite(),
                "lambda" => value >= 0.0 && value.is_finite(),
                "k" | "trees" => value >= 1.0 && value.fract() == 0.0 && value <= 1e6,
                _ => true,
            };
            if !ok {
                return Err(SelectorError::InvalidHyperparameter {
                    name: name.clone(),
                    value,
                });
            }
        }
        Ok(out)
    }

    fn count(&self, name: &str) -> usize {
        self.get(name).expect("resolved hyperparameter") as usize
    }
}

impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Named parameter axes; the lattice is their cartesian product.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<f64>)>,
}

impl Grid {
    /// Parses `name=v1,v2;name2=v3`.
    pub fn parse(text: &str) -> Result<Grid, SelectorError> {
        let bad = || SelectorError::BadGrid(text.to_string());
        let mut axes = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part.split_once('=').ok_or_else(bad)?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            axes.push((name.trim().to_string(), values));
        }
        Ok(Grid { axes })
    }

    /// Lattice points; the first axis varies slowest.
    pub fn points(&self) -> Vec<Hyperparameters> {
        let mut points = vec![Hyperparameters::default()];
        for (name, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.0.insert(name.clone(), v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Ridge(RidgeModel),
    /// Kernel model fitted on centered targets; `offset` is the mean.
    Kernel { model: KernelRidgeModel, offset: f64 },
}

impl Regressor {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Ridge(m) => m.predict(row),
            Regressor::Kernel { model, offset } => model.predict(row) + offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    /// Positions in the model's algorithm list, `a < b`.
    pub a: usize,
    pub b: usize,
    /// `None` when no example carried weight; `b` then never wins.
    pub forest: Option<CostSensitiveForest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnedState {
    ScheduleOnly,
    Regression {
        models: Vec<Regressor>,
    },
    /// k-NN over training rows; scores are mean PAR10 of the neighbors.
    Neighbors {
        k: usize,
        points: Vec<Vec<f64>>,
        par10: Vec<Vec<f64>>,
    },
    Clusters {
        model: KMeansModel,
        /// Position of each cluster's best algorithm.
        best: Vec<usize>,
    },
    Pairwise {
        pairs: Vec<PairModel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub approach: Approach,
    pub spec: ApproachSpec,
    pub hyperparameters: Hyperparameters,
    /// Scenario indices of the algorithms this model scores.
    pub algorithms: Vec<usize>,
    pub algorithm_names: Vec<String>,
    /// Scenario index of the single best training algorithm.
    pub backup: usize,
    pub n_features: usize,
    pub imputation: ImputationState,
    pub normalization: NormalizationState,
    pub state: LearnedState,
}

impl SelectionModel {
    pub fn is_schedule_only(&self) -> bool {
        matches!(self.state, LearnedState::ScheduleOnly)
    }

    /// Imputation then normalization.
    pub fn preprocess(&self, raw: &[Option<f64>]) -> Result<Vec<f64>, SelectorError> {
        if raw.len() != self.n_features {
            return Err(SelectorError::LengthMismatch {
                expected: self.n_features,
                found: raw.len(),
            });
        }
        let filled = self.imputation.apply(raw)?;
        Ok(self.normalization.apply(&filled)?)
    }

    /// Scenario index of the best-scored algorithm; ties go to the lower
    /// position in the model's algorithm list.
    pub fn select(&self, raw: &[Option<f64>]) -> Result<usize, SelectorError> {
        let scores = score_algorithms(self, raw)?;
        Ok(self.algorithms[argmin(&scores)])
    }
}

pub fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.total_cmp(&scores[best]) == std::cmp::Ordering::Less {
            best = i;
        }
    }
    best
}

/// Per-algorithm scores for a raw feature vector (lower is better).
pub fn score_algorithms(model: &SelectionModel, raw: &[Option<f64>]) -> Result<Vec<f64>, SelectorError> {
    if model.is_schedule_only() {
        return Err(SelectorError::ScheduleOnly);
    }
    let x = model.preprocess(raw)?;
    let m = model.algorithms.len();
    let scores = match &model.state {
        LearnedState::ScheduleOnly => unreachable!(),
        LearnedState::Regression { models } => models.iter().map(|r| r.predict(&x)).collect(),
        LearnedState::Neighbors { k, points, par10 } => {
            let near = knn_query(points, &x, *k)?;
            (0..m)
                .map(|a| near.iter().map(|&(i, _)| par10[i][a]).sum::<f64>() / near.len() as f64)
                .collect()
        }
        LearnedState::Clusters { model: km, best } => {
            let winner = best[km.assign(&x)];
            (0..m).map(|a| if a == winner { 0.0 } else { 1.0 }).collect()
        }
        LearnedState::Pairwise { pairs } => {
            let mut losses = vec![0.0; m];
            for p in pairs {
                let b_wins = p.forest.as_ref().is_some_and(|f| f.predict(&x));
                losses[if b_wins { p.a } else { p.b }] += 1.0;
            }
            losses
        }
    };
    Ok(scores)
}

/// Trains the scoring model of `spec.approach` on `training` instances and
/// the given algorithm subset (scenario indices, ascending).
pub fn train_selector(
    scenario: &Scenario,
    training: &[usize],
    algorithms: &[usize],
    spec: &ApproachSpec,
    hyperparameters: &Hyperparameters,
    seed: u64,
) -> Result<SelectionModel, SelectorError> {
    if training.len() < 2 {
        return Err(SelectorError::TooFewInstances(training.len()));
    }
    if algorithms.is_empty() {
        return Err(SelectorError::NoAlgorithms);
    }
    let approach = spec.approach;
    let hp = hyperparameters.resolve(approach)?;
    let backup = best_algorithm(scenario, training, algorithms);

    let raw: Vec<Vec<Option<f64>>> = training.iter().map(|&i| scenario.feature_row(i).to_vec()).collect();
    let (imputation, filled) = impute(&raw)?;
    let normalization = fit_normalization(&filled, spec.normalization)?;
    let x = normalization.apply_all(&filled)?;

    let degenerate = training
        .iter()
        .all(|&i| algorithms.iter().all(|&a| !scenario.run(i, a).is_solved()));
    if degenerate && approach != Approach::Aspeed {
        return Err(SelectorError::Degenerate);
    }

    let cutoff = scenario.cutoff();
    let target = |kind: PerformanceTransform, a: usize| -> Vec<f64> {
        training.iter().map(|&i| kind.apply(scenario.run(i, a), cutoff)).collect()
    };
    let par10: Vec<Vec<f64>> = training
        .iter()
        .map(|&i| algorithms.iter().map(|&a| scenario.par10(i, a)).collect())
        .collect();

    let state = match approach {
        Approach::Aspeed => LearnedState::ScheduleOnly,
        Approach::Cf1 => {
            let (gamma, lambda) = (hp.get("gamma").unwrap(), hp.get("lambda").unwrap());
            let models = algorithms
                .par_iter()
                .map(|&a| {
                    let y = target(PerformanceTransform::Par10, a);
                    let offset = y.iter().sum::<f64>() / y.len() as f64;
                    let centered: Vec<f64> = y.iter().map(|v| v - offset).collect();
                    let model = train_kernel_ridge(&x, &centered, gamma, lambda)?;
                    Ok(Regressor::Kernel { model, offset })
                })
                .collect::<Result<Vec<_>, LearnError>>()?;
            LearnedState::Regression { models }
        }
        Approach::Satzilla09 => {
            let lambda = hp.get("lambda").unwrap();
            let models = algorithms
                .par_iter()
                .map(|&a| Ok(Regressor::Ridge(train_ridge(&x, &target(PerformanceTransform::Log, a), lambda)?)))
                .collect::<Result<Vec<_>, LearnError>>()?;
            LearnedState::Regression { models }
        }
        Approach::Measp | Approach::Threes => {
            let k = if approach == Approach::Measp { 1 } else { hp.count("k") };
            LearnedState::Neighbors {
                k: k.min(x.len()),
                points: x,
                par10,
            }
        }
        Approach::Isac => {
            let k = hp.count("k").min(x.len());
            let fit = train_kmeans(&x, k, derive_seed(seed, TAG_KMEANS), KMEANS_MAX_ITERS)?;
            let positions: Vec<usize> = (0..algorithms.len()).collect();
            let overall = best_position(&par10, &(0..x.len()).collect::<Vec<_>>(), &positions);
            let best = (0..k)
                .map(|c| {
                    let members: Vec<usize> = (0..x.len()).filter(|&r| fit.assignment[r] == c).collect();
                    if members.is_empty() {
                        overall
                    } else {
                        best_position(&par10, &members, &positions)
                    }
                })
                .collect();
            LearnedState::Clusters {
                model: fit.model,
                best,
            }
        }
        Approach::Satzilla11 => {
            let params = ForestParams {
                trees: hp.count("trees"),
                ..ForestParams::default()
            };
            let m = algorithms.len();
            let pair_ids: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
            let pairs = pair_ids
                .par_iter()
                .enumerate()
                .map(|(p, &(a, b))| {
                    let labels: Vec<bool> = par10.iter().map(|r| r[b] < r[a]).collect();
                    let weights: Vec<f64> = par10.iter().map(|r| (r[a] - r[b]).abs()).collect();
                    let forest = if weights.iter().all(|&w| w == 0.0) {
                        None
                    } else {
                        let pair_seed = derive_seed(derive_seed(seed, TAG_PAIRS), p as u64);
                        Some(train_forest(&x, &labels, &weights, &params, pair_seed)?)
                    };
                    Ok(PairModel { a, b, forest })
                })
                .collect::<Result<Vec<_>, LearnError>>()?;
            LearnedState::Pairwise { pairs }
        }
    };

    Ok(SelectionModel {
        approach,
        spec: *spec,
        hyperparameters: hp,
        algorithms: algorithms.to_vec(),
        algorithm_names: algorithms.iter().map(|&a| scenario.algorithms()[a].clone()).collect(),
        backup,
        n_features: scenario.features().n_features(),
        imputation,
        normalization,
        state,
    })
}

/// Position with the lowest summed PAR10 over `rows`; ties to the lower position.
fn best_position(par10: &[Vec<f64>], rows: &[usize], positions: &[usize]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &a in positions {
        let total: f64 = rows.iter().map(|&r| par10[r][a]).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((a, total));
        }
    }
    best.expect("non-empty positions").0
}

/// Inner cross-validation of the selection step alone.
///
/// Returns, for each position in `training`, the scenario index of the
/// algorithm chosen by a model trained on the other inner folds, or `None`
/// when no model could be trained (too few instances or degenerate data).
pub fn cross_validated_choices(
    scenario: &Scenario,
    training: &[usize],
    algorithms: &[usize],
    spec: &ApproachSpec,
    hyperparameters: &Hyperparameters,
    folds: usize,
    seed: u64,
) -> Result<Vec<Option<usize>>, SelectorError> {
    let n = training.len();
    let k = folds.min(n);
    if k < 2 || n < 4 {
        return Ok(vec![None; n]);
    }
    let assignment = assign_folds(n, k, derive_seed(seed, TAG_INNER_FOLDS)).expect("k <= n");
    let per_fold = (1..=k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&p| assignment[p] != f).map(|p| training[p]).collect();
            let held: Vec<usize> = (0..n).filter(|&p| assignment[p] == f).collect();
            let model = match train_selector(scenario, &train, algorithms, spec, hyperparameters, seed.wrapping_add(f as u64)) {
                Ok(m) => m,
                Err(SelectorError::Degenerate | SelectorError::TooFewInstances(_)) => {
                    return Ok(held.into_iter().map(|p| (p, None)).collect());
                }
                Err(e) => return Err(e),
            };
            held.into_iter()
                .map(|p| Ok((p, Some(model.select(scenario.feature_row(training[p]))?))))
                .collect::<Result<Vec<_>, SelectorError>>()
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    let mut out = vec![None; n];
    for (p, choice) in per_fold.into_iter().flatten() {
        out[p] = choice;
    }
    Ok(out)
}

/// Picks the lattice point with the lowest mean inner-CV PAR10 of the
/// selected algorithm; ties go to the earliest point.
pub fn grid_search(
    scenario: &Scenario,
    training: &[usize],
    algorithms: &[usize],
    spec: &ApproachSpec,
    grid: &Grid,
    folds: usize,
    seed: u64,
) -> Result<Hyperparameters, SelectorError> {
    let points = grid.points();
    if grid.axes.iter().any(|(_, v)| v.is_empty()) || points.is_empty() {
        return Err(SelectorError::EmptyGrid);
    }
    if points.len() == 1 {
        return Ok(points.into_iter().next().unwrap());
    }
    let cutoff = scenario.cutoff();
    let fallback = best_algorithm(scenario, training, algorithms);
    let scores = points
        .par_iter()
        .map(|hp| {
            let choices = cross_validated_choices(scenario, training, algorithms, spec, hp, folds, seed)?;
            let total: f64 = training
                .iter()
                .zip(&choices)
                .map(|(&i, c)| scenario.run(i, c.unwrap_or(fallback)).par(cutoff, 10.0))
                .sum();
            Ok(total / training.len() as f64)
        })
        .collect::<Result<Vec<f64>, SelectorError>>()?;
    let best = argmin(&scores);
    Ok(points[best].clone())
}

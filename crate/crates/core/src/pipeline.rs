//! Training workflow and replay of the solving workflow on recorded data.
//!
//! Training: optional algorithm filtering, optional grid search, an inner
//! cross-validation that estimates how well the selector alone performs on
//! each training instance, a pre-solving schedule computed with that
//! estimate as an extra simulated algorithm, and optionally a final scoring
//! model fitted only on instances the schedule leaves unsolved.
//!
//! Solving: features are computed first, then the pre-solving schedule runs
//! without the selected algorithm, and the selected algorithm gets whatever
//! budget remains.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::preprocessing::filter_algorithms;
use crate::scenario::{assign_folds, Scenario};
use crate::scheduling::{align_schedule, compute_schedule, compute_schedule_with_selector, Schedule, Slot};
use crate::selectors::{
    cross_validated_choices, grid_search, train_selector, Approach, ApproachSpec, Grid, Hyperparameters,
    SelectionModel, SelectorError, INNER_FOLDS,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

const TAG_GRID: u64 = 10;
const TAG_ESTIMATE: u64 = 11;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("invalid model file: {0}")]
    Invalid(String),
}

/// How to train a portfolio solver.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub spec: ApproachSpec,
    /// Overrides of the approach defaults; ignored when `grid` is set.
    pub hyperparameters: Hyperparameters,
    /// Grid searched on the training instances.
    pub grid: Option<Grid>,
    pub inner_folds: usize,
    pub filter_algorithms: bool,
    /// Refit the scoring model on instances the schedule leaves unsolved.
    pub ignore_presolved: bool,
}

impl PipelineOptions {
    pub fn new(approach: Approach) -> Self {
        PipelineOptions {
            spec: approach.spec(),
            hyperparameters: Hyperparameters::default(),
            grid: None,
            inner_folds: INNER_FOLDS,
            filter_algorithms: false,
            ignore_presolved: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPortfolioSolver {
    pub model: SelectionModel,
    /// Pre-solving schedule in execution order (scenario algorithm indices).
    pub schedule: Schedule,
    /// Budget share the schedule optimizer left for the selected algorithm.
    pub selector_slice: f64,
    pub backup: usize,
    pub cutoff: f64,
    pub ignore_presolved: bool,
    pub scenario_name: String,
    /// All algorithm ids of the training scenario, in scenario order.
    pub scenario_algorithms: Vec<String>,
}

impl TrainedPortfolioSolver {
    pub fn approach(&self) -> Approach {
        self.model.approach
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "algorithm", rename_all = "snake_case")]
pub enum SolverUsed {
    FeatureExtractor,
    Presolver(usize),
    Selected(usize),
    Backup(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub solved: bool,
    /// Total time charged, at most the cutoff; equals the cutoff when unsolved.
    pub time: f64,
    pub feature_time: f64,
    pub presolve_time: f64,
    pub final_time: f64,
    /// Last solver that ran (the one that solved the instance, if any).
    pub solver_used: SolverUsed,
}

fn quantize_up(s: f64) -> f64 {
    (s * 1000.0).ceil() / 1000.0
}

fn quantize_down(s: f64) -> f64 {
    (s * 1000.0).floor() / 1000.0
}

/// Rounds slices up to whole milliseconds (never losing coverage) while
/// keeping the total within `budget`.
fn quantize_schedule(schedule: &Schedule, budget: f64) -> Schedule {
    let mut components: Vec<Slot> = schedule
        .components
        .iter()
        .map(|c| Slot {
            algorithm: c.algorithm,
            slice: quantize_up(c.slice),
        })
        .collect();
    while components.iter().map(|c| c.slice).sum::<f64>() > budget {
        let others: f64 = components[..components.len() - 1].iter().map(|c| c.slice).sum();
        let last = components.last_mut().expect("non-empty");
        last.slice = quantize_down(budget - others);
        if last.slice <= 0.0 {
            components.pop();
        }
        if components.is_empty() {
            break;
        }
    }
    Schedule { components }
}

fn solve_times(scenario: &Scenario, rows: &[usize], algorithms: &[usize]) -> Vec<Vec<Option<f64>>> {
    rows.iter()
        .map(|&i| algorithms.iter().map(|&a| scenario.run(i, a).solve_time()).collect())
        .collect()
}

fn to_scenario_indices(schedule: &Schedule, algorithms: &[usize]) -> Schedule {
    Schedule {
        components: schedule
            .components
            .iter()
            .map(|c| Slot {
                algorithm: algorithms[c.algorithm],
                slice: c.slice,
            })
            .collect(),
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Trains a portfolio solver on `training` instances.
pub fn train_pipeline(
    scenario: &Scenario,
    training: &[usize],
    options: &PipelineOptions,
    seed: u64,
) -> crate::Result<TrainedPortfolioSolver> {
    let spec = &options.spec;
    let cutoff = scenario.cutoff();
    let algorithms: Vec<usize> = if options.filter_algorithms {
        filter_algorithms(scenario, training)
    } else {
        (0..scenario.n_algorithms()).collect()
    };
    let hyperparameters = match &options.grid {
        Some(grid) if spec.approach != Approach::Aspeed => grid_search(
            scenario,
            training,
            &algorithms,
            spec,
            grid,
            options.inner_folds,
            derive_seed(seed, TAG_GRID),
        )?,
        _ => options.hyperparameters.clone(),
    };

    let model = train_selector(scenario, training, &algorithms, spec, &hyperparameters, seed)?;
    let backup = model.backup;

    if spec.approach == Approach::Aspeed {
        let times = solve_times(scenario, training, &algorithms);
        let raw = compute_schedule(&times, cutoff, &spec.limits(cutoff));
        let mut schedule = align_schedule(&to_scenario_indices(&raw, &algorithms));
        // Nothing runs after the schedule, so the last component gets the
        // rest of the budget.
        if schedule.is_empty() {
            schedule.components.push(Slot {
                algorithm: backup,
                slice: cutoff,
            });
        } else {
            let last = schedule.components.len() - 1;
            let others: f64 = schedule.components[..last].iter().map(|c| c.slice).sum();
            schedule.components[last].slice = cutoff - others;
        }
        let schedule = quantize_schedule(&schedule, cutoff);
        return Ok(TrainedPortfolioSolver {
            model,
            schedule,
            selector_slice: 0.0,
            backup,
            cutoff,
            ignore_presolved: options.ignore_presolved,
            scenario_name: scenario.name().to_string(),
            scenario_algorithms: scenario.algorithms().to_vec(),
        });
    }

    // Instances the feature extractor solves never reach the schedule.
    let rows: Vec<usize> = training
        .iter()
        .copied()
        .filter(|&i| !scenario.feature_cost(i).solved)
        .collect();
    let choices = cross_validated_choices(
        scenario,
        training,
        &algorithms,
        spec,
        &hyperparameters,
        options.inner_folds,
        derive_seed(seed, TAG_ESTIMATE),
    )?;
    let estimate: Vec<Option<f64>> = training
        .iter()
        .zip(&choices)
        .filter(|(&i, _)| !scenario.feature_cost(i).solved)
        .map(|(&i, c)| c.and_then(|a| scenario.run(i, a).solve_time()))
        .collect();
    let mut costs: Vec<f64> = training.iter().map(|&i| scenario.feature_cost(i).cost).collect();
    let budget = (cutoff - median(&mut costs)).max(0.0);

    let (schedule, selector_slice) = if rows.is_empty() || budget <= 0.0 {
        (Schedule::default(), quantize_down(budget))
    } else {
        let times = solve_times(scenario, &rows, &algorithms);
        let r = compute_schedule_with_selector(&times, &estimate, budget, &spec.limits(cutoff));
        let schedule = align_schedule(&to_scenario_indices(&r.presolve, &algorithms));
        (quantize_schedule(&schedule, budget), (r.selector_slice * 1000.0).round() / 1000.0)
    };
    debug!(
        "{}: schedule {:?}, selector slice {selector_slice}",
        spec.approach, schedule.components
    );

    let model = if options.ignore_presolved {
        let remaining: Vec<usize> = training
            .iter()
            .copied()
            .filter(|&i| {
                let row: Vec<Option<f64>> = (0..scenario.n_algorithms()).map(|a| scenario.run(i, a).solve_time()).collect();
                !schedule.solves(&row)
            })
            .collect();
        match train_selector(scenario, &remaining, &algorithms, spec, &hyperparameters, seed) {
            Ok(m) => m,
            Err(e) => {
                warn!("cannot refit on the {} instances left by the schedule ({e}); using all training instances", remaining.len());
                model
            }
        }
    } else {
        model
    };

    Ok(TrainedPortfolioSolver {
        model,
        schedule,
        selector_slice,
        backup,
        cutoff,
        ignore_presolved: options.ignore_presolved,
        scenario_name: scenario.name().to_string(),
        scenario_algorithms: scenario.algorithms().to_vec(),
    })
}

/// Replays the solving workflow on one instance of `scenario`.
pub fn simulate_solve(solver: &TrainedPortfolioSolver, instance: usize, scenario: &Scenario) -> SolveOutcome {
    let cutoff = solver.cutoff;
    let mut out = SolveOutcome {
        solved: false,
        time: cutoff,
        feature_time: 0.0,
        presolve_time: 0.0,
        final_time: 0.0,
        solver_used: SolverUsed::Backup(solver.backup),
    };
    let finish = |mut out: SolveOutcome, solved: bool| {
        out.solved = solved;
        if solved {
            out.time = out.feature_time + out.presolve_time + out.final_time;
        } else {
            out.final_time = (cutoff - out.feature_time - out.presolve_time).max(0.0);
            out.time = cutoff;
        }
        out
    };

    if solver.model.is_schedule_only() {
        return run_schedule(&solver.schedule, instance, scenario, cutoff, out)
            .map_or_else(|o| finish(o, false), |o| finish(o, true));
    }

    let fc = scenario.feature_cost(instance);
    out.feature_time = fc.cost.min(cutoff);
    out.solver_used = SolverUsed::FeatureExtractor;
    if fc.cost >= cutoff {
        return finish(out, false);
    }
    if fc.solved {
        return finish(out, true);
    }

    let row = scenario.feature_row(instance);
    let selected = if row.iter().all(Option::is_none) {
        None
    } else {
        solver.model.select(row).ok()
    };
    let Some(selected) = selected else {
        out.solver_used = SolverUsed::Backup(solver.backup);
        return run_final(solver.backup, instance, scenario, cutoff, out).map_or_else(|o| finish(o, false), |o| finish(o, true));
    };

    let schedule = Schedule {
        components: solver
            .schedule
            .components
            .iter()
            .copied()
            .filter(|c| c.algorithm != selected)
            .collect(),
    };
    let out = match run_schedule(&schedule, instance, scenario, cutoff, out) {
        Ok(o) => return finish(o, true),
        Err(o) => o,
    };
    let mut out = out;
    out.solver_used = SolverUsed::Selected(selected);
    run_final(selected, instance, scenario, cutoff, out).map_or_else(|o| finish(o, false), |o| finish(o, true))
}

/// What the solver would run for one feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    /// Pre-solving components still to run, in order.
    pub presolve: Schedule,
    /// Algorithm run for the remaining budget; `None` for schedule-only models.
    pub final_algorithm: Option<usize>,
    pub uses_backup: bool,
}

/// The execution plan for a raw feature row. A row with every value
/// missing (or no values at all) falls back to the backup algorithm.
pub fn plan_execution(solver: &TrainedPortfolioSolver, row: &[Option<f64>]) -> Result<ExecutionPlan, SelectorError> {
    if solver.model.is_schedule_only() {
        return Ok(ExecutionPlan {
            presolve: solver.schedule.clone(),
            final_algorithm: None,
            uses_backup: false,
        });
    }
    if row.iter().all(Option::is_none) {
        return Ok(ExecutionPlan {
            presolve: Schedule::default(),
            final_algorithm: Some(solver.backup),
            uses_backup: true,
        });
    }
    let selected = solver.model.select(row)?;
    Ok(ExecutionPlan {
        presolve: Schedule {
            components: solver
                .schedule
                .components
                .iter()
                .copied()
                .filter(|c| c.algorithm != selected)
                .collect(),
        },
        final_algorithm: Some(selected),
        uses_backup: false,
    })
}

/// Runs schedule components in order; `Ok` when one of them solves.
fn run_schedule(
    schedule: &Schedule,
    instance: usize,
    scenario: &Scenario,
    cutoff: f64,
    mut out: SolveOutcome,
) -> Result<SolveOutcome, SolveOutcome> {
    for c in &schedule.components {
        let remaining = cutoff - out.feature_time - out.presolve_time;
        if remaining <= 0.0 {
            break;
        }
        out.solver_used = SolverUsed::Presolver(c.algorithm);
        let slice = c.slice.min(remaining);
        match scenario.run(instance, c.algorithm).solve_time() {
            Some(t) if t <= slice => {
                out.presolve_time += t;
                return Ok(out);
            }
            _ => out.presolve_time += slice,
        }
    }
    Err(out)
}

/// Runs one algorithm for the remaining budget.
fn run_final(
    algorithm: usize,
    instance: usize,
    scenario: &Scenario,
    cutoff: f64,
    mut out: SolveOutcome,
) -> Result<SolveOutcome, SolveOutcome> {
    let remaining = cutoff - out.feature_time - out.presolve_time;
    match scenario.run(instance, algorithm).solve_time() {
        Some(t) if t <= remaining => {
            out.final_time = t;
            Ok(out)
        }
        _ => Err(out),
    }
}

/// Per-fold training summary of [`evaluate_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub fold: usize,
    pub schedule: Schedule,
    pub selector_slice: f64,
    pub hyperparameters: Hyperparameters,
    pub algorithms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineEvaluation {
    /// Outcome per scenario instance.
    pub outcomes: Vec<SolveOutcome>,
    /// 1-based fold of every instance.
    pub folds: Vec<usize>,
    pub summaries: Vec<FoldSummary>,
}

/// Fold assignment used for evaluation: the scenario's own folds when it
/// has them, otherwise a seeded split into `k` folds.
pub fn evaluation_folds(scenario: &Scenario, k: usize, seed: u64) -> crate::Result<Vec<usize>> {
    match scenario.folds() {
        Some(f) => Ok(f.to_vec()),
        None => Ok(assign_folds(scenario.n_instances(), k, seed)?),
    }
}

/// Cross-validated evaluation: for each fold, train on the others and
/// replay the held-out instances. Fold `f` trains with seed `seed + f`.
pub fn evaluate_pipeline(
    scenario: &Scenario,
    options: &PipelineOptions,
    k: usize,
    seed: u64,
) -> crate::Result<PipelineEvaluation> {
    let folds = evaluation_folds(scenario, k, seed)?;
    let n_folds = folds.iter().copied().max().unwrap_or(0);
    let results = (1..=n_folds)
        .into_par_iter()
        .map(|f| {
            let training: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let held: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let solver = train_pipeline(scenario, &training, options, seed.wrapping_add(f as u64))?;
            let outcomes: Vec<(usize, SolveOutcome)> =
                held.iter().map(|&i| (i, simulate_solve(&solver, i, scenario))).collect();
            let summary = FoldSummary {
                fold: f,
                schedule: solver.schedule.clone(),
                selector_slice: solver.selector_slice,
                hyperparameters: solver.model.hyperparameters.clone(),
                algorithms: solver.model.algorithms.clone(),
            };
            Ok((outcomes, summary))
        })
        .collect::<crate::Result<Vec<_>>>()?;

    let mut outcomes = vec![None; scenario.n_instances()];
    let mut summaries = Vec::with_capacity(results.len());
    for (fold_outcomes, summary) in results {
        for (i, o) in fold_outcomes {
            outcomes[i] = Some(o);
        }
        summaries.push(summary);
    }
    Ok(PipelineEvaluation {
        outcomes: outcomes.into_iter().map(|o| o.expect("every instance is in a fold")).collect(),
        folds,
        summaries,
    })
}

// -- model file ---------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ScheduleEntry {
    algorithm: String,
    slice: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    scenario: String,
    cutoff: f64,
    algorithms: Vec<String>,
    backup: String,
    ignore_presolved: bool,
    selector_slice: String,
    schedule: Vec<ScheduleEntry>,
    model: SelectionModel,
}

fn seconds_text(s: f64) -> String {
    format!("{s:.3}")
}

/// Serializes a trained solver to its JSON model-file form.
pub fn model_to_json(solver: &TrainedPortfolioSolver) -> String {
    let name = |a: usize| solver.scenario_algorithms[a].clone();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        scenario: solver.scenario_name.clone(),
        cutoff: solver.cutoff,
        algorithms: solver.scenario_algorithms.clone(),
        backup: name(solver.backup),
        ignore_presolved: solver.ignore_presolved,
        selector_slice: seconds_text(solver.selector_slice),
        schedule: solver
            .schedule
            .components
            .iter()
            .map(|c| ScheduleEntry {
                algorithm: name(c.algorithm),
                slice: seconds_text(c.slice),
            })
            .collect(),
        model: solver.model.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<TrainedPortfolioSolver, ModelFileError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelFileError::Invalid("missing format_version".into()))?;
    if found != u64::from(MODEL_FORMAT_VERSION) {
        return Err(ModelFileError::VersionMismatch {
            found,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let index = |name: &str| {
        file.algorithms
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| ModelFileError::Invalid(format!("unknown algorithm `{name}`")))
    };
    let seconds = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| ModelFileError::Invalid(format!("bad seconds `{s}`")))
    };
    let mut components = Vec::with_capacity(file.schedule.len());
    for e in &file.schedule {
        components.push(Slot {
            algorithm: index(&e.algorithm)?,
            slice: seconds(&e.slice)?,
        });
    }
    if file.model.algorithms.iter().any(|&a| a >= file.algorithms.len()) {
        return Err(ModelFileError::Invalid("model algorithm out of range".into()));
    }
    Ok(TrainedPortfolioSolver {
        backup: index(&file.backup)?,
        selector_slice: seconds(&file.selector_slice)?,
        schedule: Schedule { components },
        cutoff: file.cutoff,
        ignore_presolved: file.ignore_presolved,
        scenario_name: file.scenario,
        scenario_algorithms: file.algorithms,
        model: file.model,
    })
}

pub fn save_model(solver: &TrainedPortfolioSolver, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    fs::write(path, model_to_json(solver) + "\n").map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedPortfolioSolver, ModelFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text)
}

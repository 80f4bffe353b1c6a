//! Algorithm-selection scenarios: runtimes, features, feature costs and
//! cross-validation folds, plus the directory format they are stored in.
//!
//! A scenario directory holds comma-delimited files with a header line:
//!
//! | file                | columns                                   |
//! |---------------------|-------------------------------------------|
//! | `description.txt`   | `key=value` lines, needs `name`, `cutoff` |
//! | `runtimes.csv`      | `instance,algorithm,runtime,status`       |
//! | `features.csv`      | `instance,<feature_1>,...,<feature_n>`    |
//! | `feature_costs.csv` | `instance,cost,solved`                    |
//! | `cv.csv` (optional) | `instance,fold`                           |
//!
//! Instance order is the order of first appearance in `runtimes.csv`, and
//! the same holds for algorithms.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Token marking a missing feature value.
pub const MISSING_TOKEN: &str = "?";

pub const DESCRIPTION_FILE: &str = "description.txt";
pub const RUNTIMES_FILE: &str = "runtimes.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURE_COSTS_FILE: &str = "feature_costs.csv";
pub const CV_FILE: &str = "cv.csv";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: missing file", .path.display())]
    MissingFile { path: PathBuf },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{location}: {kind}")]
    Invalid { location: Location, kind: InvalidKind },
    #[error("cannot split {instances} instances into {folds} folds")]
    TooManyFolds { folds: usize, instances: usize },
}

impl ScenarioError {
    fn invalid(file: &str, line: Option<u64>, kind: InvalidKind) -> Self {
        ScenarioError::Invalid {
            location: Location {
                file: file.to_string(),
                line,
            },
            kind,
        }
    }

    /// The validation failure, if this is one.
    pub fn kind(&self) -> Option<&InvalidKind> {
        match self {
            ScenarioError::Invalid { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

/// File and (1-based) line of a diagnostic. `line` is `None` for
/// whole-file conditions such as a missing row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: Option<u64>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}", self.file, line),
            None => write!(f, "{}", self.file),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvalidKind {
    #[error("runtime exceeds cutoff ({runtime} > {cutoff})")]
    RuntimeExceedsCutoff { runtime: f64, cutoff: f64 },
    #[error("runtime must be positive, found {0}")]
    NonPositiveRuntime(f64),
    #[error("ragged feature row: expected {expected} values, found {found}")]
    RaggedFeatureRow { expected: usize, found: usize },
    #[error("wrong number of fields: expected {expected}, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("duplicate instance id `{0}`")]
    DuplicateInstance(String),
    #[error("duplicate run for instance `{instance}` and algorithm `{algorithm}`")]
    DuplicateRun { instance: String, algorithm: String },
    #[error("missing run for instance `{instance}` and algorithm `{algorithm}`")]
    MissingRun { instance: String, algorithm: String },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("no row for instance `{0}`")]
    MissingInstance(String),
    #[error("invalid status `{0}` (expected solved, timeout or crashed)")]
    BadStatus(String),
    #[error("invalid number `{0}`")]
    BadNumber(String),
    #[error("invalid flag `{0}` (expected 0 or 1)")]
    BadFlag(String),
    #[error("bad header: expected `{0}`")]
    BadHeader(String),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("malformed line `{0}`")]
    Malformed(String),
    #[error("cutoff must be a positive number, found {0}")]
    BadCutoff(f64),
    #[error("feature cost must be a non-negative number, found {0}")]
    BadCost(f64),
    #[error("fold index must be at least 1, found {0}")]
    BadFold(usize),
    #[error("fold {0} has no instances")]
    EmptyFold(usize),
    #[error("scenario has no instances")]
    NoInstances,
    #[error("scenario has no algorithms")]
    NoAlgorithms,
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Solved,
    Timeout,
    Crashed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Solved => "solved",
            RunStatus::Timeout => "timeout",
            RunStatus::Crashed => "crashed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "solved" => Some(RunStatus::Solved),
            "timeout" => Some(RunStatus::Timeout),
            "crashed" => Some(RunStatus::Crashed),
            _ => None,
        }
    }
}

/// One recorded algorithm run. Crashed runs never count as solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub runtime: f64,
    pub status: RunStatus,
}

impl Run {
    pub fn solved(runtime: f64) -> Self {
        Run {
            runtime,
            status: RunStatus::Solved,
        }
    }

    pub fn timeout(cutoff: f64) -> Self {
        Run {
            runtime: cutoff,
            status: RunStatus::Timeout,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == RunStatus::Solved
    }

    /// Runtime when solved, `None` otherwise.
    pub fn solve_time(&self) -> Option<f64> {
        self.is_solved().then_some(self.runtime)
    }

    /// Penalized runtime: the runtime when solved, `factor * cutoff` otherwise.
    pub fn par(&self, cutoff: f64, factor: f64) -> f64 {
        if self.is_solved() {
            self.runtime
        } else {
            factor * cutoff
        }
    }
}

/// Dense instance x algorithm matrix of runs, row-major by instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    n_algorithms: usize,
    runs: Vec<Run>,
}

impl PerformanceMatrix {
    pub fn from_rows(rows: Vec<Vec<Run>>) -> Self {
        let n_algorithms = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == n_algorithms),
            "performance rows must have equal length"
        );
        PerformanceMatrix {
            n_algorithms,
            runs: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n_instances(&self) -> usize {
        self.runs.len().checked_div(self.n_algorithms).unwrap_or(0)
    }

    pub fn n_algorithms(&self) -> usize {
        self.n_algorithms
    }

    pub fn get(&self, instance: usize, algorithm: usize) -> Run {
        self.runs[instance * self.n_algorithms + algorithm]
    }

    pub fn row(&self, instance: usize) -> &[Run] {
        &self.runs[instance * self.n_algorithms..(instance + 1) * self.n_algorithms]
    }
}

/// Instance features; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl FeatureMatrix {
    pub fn n_features(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCost {
    pub cost: f64,
    /// The feature extractor itself solved the instance.
    pub solved: bool,
}

/// A complete algorithm-selection dataset. Immutable once built.
#[derive(Debug, Clone)]
pub struct Scenario {
    name: String,
    instances: Vec<String>,
    algorithms: Vec<String>,
    cutoff: f64,
    performance: PerformanceMatrix,
    features: FeatureMatrix,
    feature_costs: Vec<FeatureCost>,
    folds: Option<Vec<usize>>,
    instance_lookup: HashMap<String, usize>,
    algorithm_lookup: HashMap<String, usize>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.instances == other.instances
            && self.algorithms == other.algorithms
            && self.cutoff == other.cutoff
            && self.performance == other.performance
            && self.features == other.features
            && self.feature_costs == other.feature_costs
            && self.folds == other.folds
    }
}

/// Raw parts of a scenario, validated by [`Scenario::new`].
#[derive(Debug, Clone)]
pub struct ScenarioParts {
    pub name: String,
    pub instances: Vec<String>,
    pub algorithms: Vec<String>,
    pub cutoff: f64,
    pub performance: PerformanceMatrix,
    pub features: FeatureMatrix,
    pub feature_costs: Vec<FeatureCost>,
    pub folds: Option<Vec<usize>>,
}

impl Scenario {
    /// Builds a scenario from in-memory parts, checking every invariant the
    /// loader checks. Timeout runs are normalized to `runtime = cutoff`.
    pub fn new(parts: ScenarioParts) -> Result<Self, ScenarioError> {
        const SRC: &str = "<memory>";
        let ScenarioParts {
            name,
            instances,
            algorithms,
            cutoff,
            performance,
            features,
            feature_costs,
            folds,
        } = parts;
        let shape = |msg: String| ScenarioError::invalid(SRC, None, InvalidKind::Shape(msg));
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(ScenarioError::invalid(SRC, None, InvalidKind::BadCutoff(cutoff)));
        }
        if instances.is_empty() {
            return Err(ScenarioError::invalid(SRC, None, InvalidKind::NoInstances));
        }
        if algorithms.is_empty() {
            return Err(ScenarioError::invalid(SRC, None, InvalidKind::NoAlgorithms));
        }
        let instance_lookup = unique_lookup(&instances)
            .map_err(|d| ScenarioError::invalid(SRC, None, InvalidKind::DuplicateInstance(d)))?;
        let algorithm_lookup = unique_lookup(&algorithms)
            .map_err(|d| shape(format!("duplicate algorithm id `{d}`")))?;
        if performance.n_instances() != instances.len()
            || performance.n_algorithms() != algorithms.len()
        {
            return Err(shape(format!(
                "performance matrix is {}x{}, expected {}x{}",
                performance.n_instances(),
                performance.n_algorithms(),
                instances.len(),
                algorithms.len()
            )));
        }
        if features.rows.len() != instances.len() || feature_costs.len() != instances.len() {
            return Err(shape("feature rows or costs do not match instances".into()));
        }
        for row in &features.rows {
            if row.len() != features.names.len() {
                return Err(ScenarioError::invalid(
                    SRC,
                    None,
                    InvalidKind::RaggedFeatureRow {
                        expected: features.names.len(),
                        found: row.len(),
                    },
                ));
            }
        }
        let mut runs = performance.runs;
        for run in &mut runs {
            check_runtime(run.runtime, cutoff).map_err(|k| ScenarioError::invalid(SRC, None, k))?;
            if run.status == RunStatus::Timeout {
                run.runtime = cutoff;
            }
        }
        let performance = PerformanceMatrix {
            n_algorithms: performance.n_algorithms,
            runs,
        };
        for fc in &feature_costs {
            if !(fc.cost.is_finite() && fc.cost >= 0.0) {
                return Err(ScenarioError::invalid(SRC, None, InvalidKind::BadCost(fc.cost)));
            }
        }
        if let Some(folds) = &folds {
            if folds.len() != instances.len() {
                return Err(shape("fold assignment does not match instances".into()));
            }
            check_folds(folds).map_err(|k| ScenarioError::invalid(SRC, None, k))?;
        }
        Ok(Scenario {
            name,
            instances,
            algorithms,
            cutoff,
            performance,
            features,
            feature_costs,
            folds,
            instance_lookup,
            algorithm_lookup,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_algorithms(&self) -> usize {
        self.algorithms.len()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn performance(&self) -> &PerformanceMatrix {
        &self.performance
    }

    pub fn run(&self, instance: usize, algorithm: usize) -> Run {
        self.performance.get(instance, algorithm)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn feature_row(&self, instance: usize) -> &[Option<f64>] {
        &self.features.rows[instance]
    }

    pub fn feature_cost(&self, instance: usize) -> FeatureCost {
        self.feature_costs[instance]
    }

    pub fn feature_costs(&self) -> &[FeatureCost] {
        &self.feature_costs
    }

    /// 1-based fold index per instance, if folds are assigned.
    pub fn folds(&self) -> Option<&[usize]> {
        self.folds.as_deref()
    }

    pub fn n_folds(&self) -> Option<usize> {
        self.folds.as_ref().and_then(|f| f.iter().copied().max())
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instance_lookup.get(id).copied()
    }

    pub fn algorithm_index(&self, id: &str) -> Option<usize> {
        self.algorithm_lookup.get(id).copied()
    }

    pub fn all_instances(&self) -> Vec<usize> {
        (0..self.instances.len()).collect()
    }

    /// PAR10 score of one run.
    pub fn par10(&self, instance: usize, algorithm: usize) -> f64 {
        self.run(instance, algorithm).par(self.cutoff, 10.0)
    }

    /// Returns a copy with a fresh fold assignment. Fold sizes differ by at
    /// most one and the assignment depends only on `k`, `seed` and the
    /// number of instances.
    pub fn split_folds(&self, k: usize, seed: u64) -> Result<Scenario, ScenarioError> {
        let folds = assign_folds(self.n_instances(), k, seed)?;
        let mut out = self.clone();
        out.folds = Some(folds);
        Ok(out)
    }

    /// Returns a copy with the given feature matrix (same instance order).
    pub fn with_features(&self, features: FeatureMatrix) -> Result<Scenario, ScenarioError> {
        let mut parts = self.to_parts();
        parts.features = features;
        Scenario::new(parts)
    }

    pub fn to_parts(&self) -> ScenarioParts {
        ScenarioParts {
            name: self.name.clone(),
            instances: self.instances.clone(),
            algorithms: self.algorithms.clone(),
            cutoff: self.cutoff,
            performance: self.performance.clone(),
            features: self.features.clone(),
            feature_costs: self.feature_costs.clone(),
            folds: self.folds.clone(),
        }
    }
}

/// Assigns `n` items to `k` folds (1-based): a seeded shuffle followed by
/// round-robin dealing.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, ScenarioError> {
    if k == 0 || k > n {
        return Err(ScenarioError::TooManyFolds {
            folds: k,
            instances: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        folds[item] = pos % k + 1;
    }
    Ok(folds)
}

fn unique_lookup(ids: &[String]) -> Result<HashMap<String, usize>, String> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(id.clone());
        }
    }
    Ok(map)
}

fn check_runtime(runtime: f64, cutoff: f64) -> Result<(), InvalidKind> {
    if runtime.is_nan() || runtime <= 0.0 || !runtime.is_finite() {
        return Err(InvalidKind::NonPositiveRuntime(runtime));
    }
    if runtime > cutoff {
        return Err(InvalidKind::RuntimeExceedsCutoff { runtime, cutoff });
    }
    Ok(())
}

fn check_folds(folds: &[usize]) -> Result<(), InvalidKind> {
    let k = folds.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; k + 1];
    for &f in folds {
        if f == 0 {
            return Err(InvalidKind::BadFold(f));
        }
        seen[f] = true;
    }
    match (1..=k).find(|&f| !seen[f]) {
        Some(f) => Err(InvalidKind::EmptyFold(f)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Loading

struct CsvFile {
    name: &'static str,
    rows: Vec<(u64, Vec<String>)>,
}

impl CsvFile {
    fn read(dir: &Path, name: &'static str) -> Result<Self, ScenarioError> {
        let path = dir.join(name);
        let text = read_file(&path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line());
                ScenarioError::invalid(name, line, InvalidKind::Malformed(e.to_string()))
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let fields: Vec<String> = record.iter().map(str::to_string).collect();
            if fields.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push((line, fields));
        }
        Ok(CsvFile { name, rows })
    }

    fn err(&self, line: u64, kind: InvalidKind) -> ScenarioError {
        ScenarioError::invalid(self.name, Some(line), kind)
    }

    /// Splits off the header, requiring its leading columns to be `expected`.
    fn header(&mut self, expected: &[&str]) -> Result<Vec<String>, ScenarioError> {
        let expected_text = expected.join(",");
        if self.rows.is_empty() {
            return Err(ScenarioError::invalid(
                self.name,
                None,
                InvalidKind::BadHeader(expected_text),
            ));
        }
        let (line, header) = self.rows.remove(0);
        if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(self.err(line, InvalidKind::BadHeader(expected_text)));
        }
        Ok(header)
    }
}

fn read_file(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            ScenarioError::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            ScenarioError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| !v.is_nan())
}

/// Loads and validates a scenario directory.
pub fn load_scenario(dir: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let dir = dir.as_ref();
    let (name, cutoff) = read_description(dir)?;

    // runtimes.csv
    let mut runtimes = CsvFile::read(dir, RUNTIMES_FILE)?;
    runtimes.header(&["instance", "algorithm", "runtime", "status"])?;
    let mut instances: Vec<String> = Vec::new();
    let mut algorithms: Vec<String> = Vec::new();
    let mut inst_lookup: HashMap<String, usize> = HashMap::new();
    let mut alg_lookup: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Run> = HashMap::new();
    for (line, fields) in &runtimes.rows {
        if fields.len() != 4 {
            return Err(runtimes.err(
                *line,
                InvalidKind::FieldCount {
                    expected: 4,
                    found: fields.len(),
                },
            ));
        }
        let runtime = parse_f64(&fields[2])
            .ok_or_else(|| runtimes.err(*line, InvalidKind::BadNumber(fields[2].clone())))?;
        let status = RunStatus::parse(&fields[3])
            .ok_or_else(|| runtimes.err(*line, InvalidKind::BadStatus(fields[3].clone())))?;
        check_runtime(runtime, cutoff).map_err(|k| runtimes.err(*line, k))?;
        let i = intern(&fields[0], &mut instances, &mut inst_lookup);
        let a = intern(&fields[1], &mut algorithms, &mut alg_lookup);
        let runtime = if status == RunStatus::Timeout { cutoff } else { runtime };
        if cells.insert((i, a), Run { runtime, status }).is_some() {
            return Err(runtimes.err(
                *line,
                InvalidKind::DuplicateRun {
                    instance: fields[0].clone(),
                    algorithm: fields[1].clone(),
                },
            ));
        }
    }
    if instances.is_empty() {
        return Err(ScenarioError::invalid(RUNTIMES_FILE, None, InvalidKind::NoInstances));
    }
    let mut rows = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let mut row = Vec::with_capacity(algorithms.len());
        for (a, alg) in algorithms.iter().enumerate() {
            let run = cells.get(&(i, a)).copied().ok_or_else(|| {
                ScenarioError::invalid(
                    RUNTIMES_FILE,
                    None,
                    InvalidKind::MissingRun {
                        instance: inst.clone(),
                        algorithm: alg.clone(),
                    },
                )
            })?;
            row.push(run);
        }
        rows.push(row);
    }
    let performance = PerformanceMatrix::from_rows(rows);

    // features.csv
    let mut feat_file = CsvFile::read(dir, FEATURES_FILE)?;
    let header = feat_file.header(&["instance"])?;
    let names: Vec<String> = header[1..].to_vec();
    let feature_rows = per_instance_rows(&feat_file, &inst_lookup, |line, fields| {
        let values = &fields[1..];
        if values.len() != names.len() {
            return Err(feat_file.err(
                line,
                InvalidKind::RaggedFeatureRow {
                    expected: names.len(),
                    found: values.len(),
                },
            ));
        }
        values
            .iter()
            .map(|v| {
                if v == MISSING_TOKEN {
                    Ok(None)
                } else {
                    parse_f64(v)
                        .filter(|x| x.is_finite())
                        .map(Some)
                        .ok_or_else(|| feat_file.err(line, InvalidKind::BadNumber(v.clone())))
                }
            })
            .collect()
    })?;
    let feature_rows = require_all(feature_rows, &instances, FEATURES_FILE)?;

    // feature_costs.csv
    let mut cost_file = CsvFile::read(dir, FEATURE_COSTS_FILE)?;
    let cost_header = cost_file.header(&["instance", "cost"])?;
    let has_solved = match cost_header.len() {
        2 => false,
        3 if cost_header[2] == "solved" => true,
        _ => {
            return Err(ScenarioError::invalid(
                FEATURE_COSTS_FILE,
                Some(1),
                InvalidKind::BadHeader("instance,cost,solved".into()),
            ))
        }
    };
    let expected_fields = cost_header.len();
    let costs = per_instance_rows(&cost_file, &inst_lookup, |line, fields| {
        if fields.len() != expected_fields {
            return Err(cost_file.err(
                line,
                InvalidKind::FieldCount {
                    expected: expected_fields,
                    found: fields.len(),
                },
            ));
        }
        let cost = parse_f64(&fields[1])
            .ok_or_else(|| cost_file.err(line, InvalidKind::BadNumber(fields[1].clone())))?;
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(cost_file.err(line, InvalidKind::BadCost(cost)));
        }
        let solved = if has_solved {
            match fields[2].as_str() {
                "0" => false,
                "1" => true,
                other => return Err(cost_file.err(line, InvalidKind::BadFlag(other.into()))),
            }
        } else {
            false
        };
        Ok(FeatureCost { cost, solved })
    })?;
    let feature_costs = require_all(costs, &instances, FEATURE_COSTS_FILE)?;

    // cv.csv
    let folds = if dir.join(CV_FILE).exists() {
        let mut cv = CsvFile::read(dir, CV_FILE)?;
        cv.header(&["instance", "fold"])?;
        let folds = per_instance_rows(&cv, &inst_lookup, |line, fields| {
            if fields.len() != 2 {
                return Err(cv.err(
                    line,
                    InvalidKind::FieldCount {
                        expected: 2,
                        found: fields.len(),
                    },
                ));
            }
            let fold: usize = fields[1]
                .parse()
                .map_err(|_| cv.err(line, InvalidKind::BadNumber(fields[1].clone())))?;
            if fold == 0 {
                return Err(cv.err(line, InvalidKind::BadFold(fold)));
            }
            Ok(fold)
        })?;
        let folds = require_all(folds, &instances, CV_FILE)?;
        check_folds(&folds).map_err(|k| ScenarioError::invalid(CV_FILE, None, k))?;
        Some(folds)
    } else {
        None
    };

    Scenario::new(ScenarioParts {
        name,
        instances,
        algorithms,
        cutoff,
        performance,
        features: FeatureMatrix {
            names,
            rows: feature_rows,
        },
        feature_costs,
        folds,
    })
}

fn read_description(dir: &Path) -> Result<(String, f64), ScenarioError> {
    let text = read_file(&dir.join(DESCRIPTION_FILE))?;
    let mut name = None;
    let mut cutoff = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ScenarioError::invalid(
                DESCRIPTION_FILE,
                Some(line_no),
                InvalidKind::Malformed(line.to_string()),
            )
        })?;
        match key.trim() {
            "name" => name = Some(value.trim().to_string()),
            "cutoff" => {
                let v = parse_f64(value.trim()).ok_or_else(|| {
                    ScenarioError::invalid(
                        DESCRIPTION_FILE,
                        Some(line_no),
                        InvalidKind::BadNumber(value.trim().to_string()),
                    )
                })?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(ScenarioError::invalid(
                        DESCRIPTION_FILE,
                        Some(line_no),
                        InvalidKind::BadCutoff(v),
                    ));
                }
                cutoff = Some(v);
            }
            _ => {}
        }
    }
    let missing = |k| ScenarioError::invalid(DESCRIPTION_FILE, None, InvalidKind::MissingKey(k));
    Ok((name.ok_or_else(|| missing("name"))?, cutoff.ok_or_else(|| missing("cutoff"))?))
}

fn intern(id: &str, list: &mut Vec<String>, lookup: &mut HashMap<String, usize>) -> usize {
    if let Some(&i) = lookup.get(id) {
        return i;
    }
    list.push(id.to_string());
    lookup.insert(id.to_string(), list.len() - 1);
    list.len() - 1
}

/// Parses one value per instance row, rejecting unknown and duplicate ids.
fn per_instance_rows<T>(
    file: &CsvFile,
    lookup: &HashMap<String, usize>,
    mut parse: impl FnMut(u64, &[String]) -> Result<T, ScenarioError>,
) -> Result<Vec<Option<T>>, ScenarioError> {
    let mut out: Vec<Option<T>> = (0..lookup.len()).map(|_| None).collect();
    for (line, fields) in &file.rows {
        let id = &fields[0];
        let &i = lookup
            .get(id)
            .ok_or_else(|| file.err(*line, InvalidKind::UnknownInstance(id.clone())))?;
        if out[i].is_some() {
            return Err(file.err(*line, InvalidKind::DuplicateInstance(id.clone())));
        }
        out[i] = Some(parse(*line, fields)?);
    }
    Ok(out)
}

fn require_all<T>(
    rows: Vec<Option<T>>,
    instances: &[String],
    file: &str,
) -> Result<Vec<T>, ScenarioError> {
    rows.into_iter()
        .zip(instances)
        .map(|(row, id)| {
            row.ok_or_else(|| {
                ScenarioError::invalid(file, None, InvalidKind::MissingInstance(id.clone()))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Writing

/// Writes `scenario` in the directory format read by [`load_scenario`].
/// Numbers use the shortest representation that parses back exactly.
pub fn write_scenario(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| ScenarioError::Io { path, source })
    };

    write(
        DESCRIPTION_FILE,
        format!("name={}\ncutoff={}\n", scenario.name, scenario.cutoff),
    )?;

    let mut text = String::from("instance,algorithm,runtime,status\n");
    for (i, inst) in scenario.instances.iter().enumerate() {
        for (a, alg) in scenario.algorithms.iter().enumerate() {
            let run = scenario.run(i, a);
            text.push_str(&format!("{inst},{alg},{},{}\n", run.runtime, run.status.as_str()));
        }
    }
    write(RUNTIMES_FILE, text)?;

    let mut text = String::from("instance");
    for name in &scenario.features.names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (inst, row) in scenario.instances.iter().zip(&scenario.features.rows) {
        text.push_str(inst);
        for v in row {
            text.push(',');
            match v {
                Some(x) => text.push_str(&x.to_string()),
                None => text.push_str(MISSING_TOKEN),
            }
        }
        text.push('\n');
    }
    write(FEATURES_FILE, text)?;

    let mut text = String::from("instance,cost,solved\n");
    for (inst, fc) in scenario.instances.iter().zip(&scenario.feature_costs) {
        text.push_str(&format!("{inst},{},{}\n", fc.cost, u8::from(fc.solved)));
    }
    write(FEATURE_COSTS_FILE, text)?;

    let cv_path = dir.join(CV_FILE);
    match &scenario.folds {
        Some(folds) => {
            let mut text = String::from("instance,fold\n");
            for (inst, f) in scenario.instances.iter().zip(folds) {
                text.push_str(&format!("{inst},{f}\n"));
            }
            write(CV_FILE, text)?;
        }
        None if cv_path.exists() => {
            fs::remove_file(&cv_path).map_err(|source| ScenarioError::Io {
                path: cv_path,
                source,
            })?;
        }
        None => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in files {
            fs::write(dir.path().join(name), body).unwrap();
        }
        dir
    }

    const DESC: &str = "name=toy\ncutoff=600\n";
    const RUNTIMES: &str = "instance,algorithm,runtime,status\n\
        i1,A,10,solved\ni1,B,600,timeout\n\
        i2,A,20.5,solved\ni2,B,3,solved\n\
        i3,A,600,timeout\ni3,B,100,crashed\n";
    const FEATURES: &str = "instance,f1,f2\ni1,1,2\ni2,?,4\ni3,5,6\n";
    const COSTS: &str = "instance,cost,solved\ni1,0.5,0\ni2,1,1\ni3,2,0\n";

    fn toy() -> tempfile::TempDir {
        write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, RUNTIMES),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ])
    }

    #[test]
    fn loads_counts_and_values() {
        let dir = toy();
        let s = load_scenario(dir.path()).unwrap();
        assert_eq!(s.n_instances(), 3);
        assert_eq!(s.n_algorithms(), 2);
        assert_eq!(s.cutoff(), 600.0);
        assert_eq!(s.name(), "toy");
        assert_eq!(s.feature_row(1), &[None, Some(4.0)]);
        assert!(s.feature_cost(1).solved);
        assert!(!s.run(2, 1).is_solved());
        assert_eq!(s.par10(0, 1), 6000.0);
        assert_eq!(s.par10(2, 1), 6000.0, "crashed scores as timeout");
        assert_eq!(s.folds(), None);
    }

    #[test]
    fn rejects_runtime_over_cutoff() {
        let rt = RUNTIMES.replace("i1,B,600,timeout", "i1,B,650.0,timeout");
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, &rt),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(err.to_string().contains("runtime exceeds cutoff"), "{err}");
        assert!(err.to_string().starts_with("runtimes.csv:3:"), "{err}");
    }

    #[test]
    fn rejects_ragged_feature_row() {
        let feats = "instance,f1,f2,f3,f4,f5\ni1,1,2,3,4,5\ni2,1,2,3,4\ni3,1,2,3,4,5\n";
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, RUNTIMES),
            (FEATURES_FILE, feats),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(
            err.kind(),
            Some(InvalidKind::RaggedFeatureRow {
                expected: 5,
                found: 4
            })
        ));
        assert!(err.to_string().contains("features.csv:3"), "{err}");
    }

    #[test]
    fn rejects_duplicate_and_missing() {
        let feats = format!("{FEATURES}i1,7,8\n");
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, RUNTIMES),
            (FEATURES_FILE, &feats),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(err.kind(), Some(InvalidKind::DuplicateInstance(id)) if id == "i1"));

        let rt = RUNTIMES.replace("i2,B,3,solved\n", "");
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, &rt),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(err.kind(), Some(InvalidKind::MissingRun { .. })));

        let dir = write_dir(&[(DESCRIPTION_FILE, DESC), (RUNTIMES_FILE, RUNTIMES)]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(err, ScenarioError::MissingFile { .. }));
        assert!(err.to_string().contains("features.csv"));
    }

    #[test]
    fn rejects_bad_description_and_status() {
        let dir = write_dir(&[
            (DESCRIPTION_FILE, "name=x\n"),
            (RUNTIMES_FILE, RUNTIMES),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(err.kind(), Some(InvalidKind::MissingKey("cutoff"))));

        let rt = RUNTIMES.replace("i1,A,10,solved", "i1,A,10,maybe");
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, &rt),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        assert!(matches!(
            load_scenario(dir.path()).unwrap_err().kind(),
            Some(InvalidKind::BadStatus(_))
        ));
    }

    #[test]
    fn timeout_runtime_normalized_to_cutoff() {
        let rt = RUNTIMES.replace("i1,B,600,timeout", "i1,B,300,timeout");
        let dir = write_dir(&[
            (DESCRIPTION_FILE, DESC),
            (RUNTIMES_FILE, &rt),
            (FEATURES_FILE, FEATURES),
            (FEATURE_COSTS_FILE, COSTS),
        ]);
        let s = load_scenario(dir.path()).unwrap();
        assert_eq!(s.run(0, 1).runtime, 600.0);
    }

    #[test]
    fn cv_file_validated() {
        let dir = toy();
        fs::write(dir.path().join(CV_FILE), "instance,fold\ni1,1\ni2,3\ni3,1\n").unwrap();
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(matches!(err.kind(), Some(InvalidKind::EmptyFold(2))));
        fs::write(dir.path().join(CV_FILE), "instance,fold\ni1,1\ni2,2\ni3,1\n").unwrap();
        let s = load_scenario(dir.path()).unwrap();
        assert_eq!(s.folds(), Some(&[1, 2, 1][..]));
        assert_eq!(s.n_folds(), Some(2));
    }

    #[test]
    fn round_trip_is_identical() {
        let dir = toy();
        let s = load_scenario(dir.path()).unwrap().split_folds(2, 5).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_scenario(&s, out.path()).unwrap();
        let back = load_scenario(out.path()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn fold_sizes_and_determinism() {
        let f = assign_folds(10, 10, 1).unwrap();
        let mut counts = [0; 11];
        f.iter().for_each(|&x| counts[x] += 1);
        assert!(counts[1..].iter().all(|&c| c == 1));

        let f = assign_folds(11, 10, 1).unwrap();
        let mut counts = [0; 11];
        f.iter().for_each(|&x| counts[x] += 1);
        let mut sizes: Vec<_> = counts[1..].to_vec();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);

        assert_eq!(assign_folds(37, 5, 9).unwrap(), assign_folds(37, 5, 9).unwrap());
        assert!(matches!(
            assign_folds(3, 4, 0),
            Err(ScenarioError::TooManyFolds { .. })
        ));
    }
}

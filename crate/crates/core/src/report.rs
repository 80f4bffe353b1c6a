//! Comparison tables of evaluated approaches.
//!
//! One row per approach plus the oracle (VBS) and single-best baselines,
//! with #TOs, PAR10 and PAR1. `significant_best` marks the row with the
//! lowest PAR10 (VBS excluded) when a paired permutation test finds it
//! significantly better than every other non-oracle row.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::evaluation::{permutation_test, EvaluationError, MetricReport};
use crate::pipeline::{SolveOutcome, SolverUsed};
use crate::scenario::Scenario;

pub const VBS_ROW: &str = "vbs";
pub const SINGLE_BEST_ROW: &str = "single_best";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Approach,
    Oracle,
    SingleBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub kind: RowKind,
    pub report: MetricReport,
    pub significant_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub mean_difference: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Tests between every pair of non-oracle rows, in row order.
    pub tests: Vec<PairwiseTest>,
}

/// Builds the table from approach reports (in display order) and the two
/// baselines. All reports must cover the same instances in the same order.
pub fn compare(
    approaches: Vec<(String, MetricReport)>,
    oracle: MetricReport,
    single_best: MetricReport,
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<Comparison, EvaluationError> {
    let mut rows: Vec<ComparisonRow> = approaches
        .into_iter()
        .map(|(name, report)| ComparisonRow {
            name,
            kind: RowKind::Approach,
            report,
            significant_best: false,
        })
        .collect();
    rows.push(ComparisonRow {
        name: SINGLE_BEST_ROW.into(),
        kind: RowKind::SingleBest,
        report: single_best,
        significant_best: false,
    });
    rows.push(ComparisonRow {
        name: VBS_ROW.into(),
        kind: RowKind::Oracle,
        report: oracle,
        significant_best: false,
    });

    let contenders: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].kind != RowKind::Oracle).collect();
    let pairs: Vec<(usize, usize)> = contenders
        .iter()
        .enumerate()
        .flat_map(|(p, &x)| contenders[p + 1..].iter().map(move |&y| (x, y)))
        .collect();
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.report.par_vector(10.0)).collect();
    let results = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(x, y))| permutation_test(&vectors[x], &vectors[y], n_permutations, alpha, derive_seed(seed, p as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let tests: Vec<PairwiseTest> = pairs
        .iter()
        .zip(&results)
        .map(|(&(x, y), r)| PairwiseTest {
            a: rows[x].name.clone(),
            b: rows[y].name.clone(),
            mean_difference: r.statistic,
            p_value: r.p_value,
            significant: r.significant,
        })
        .collect();

    let best = contenders
        .iter()
        .copied()
        .min_by(|&x, &y| rows[x].report.par10.total_cmp(&rows[y].report.par10).then(x.cmp(&y)));
    if let Some(best) = best {
        let beats_all = pairs.iter().zip(&results).all(|(&(x, y), r)| {
            if x == best {
                r.significant && r.statistic < 0.0
            } else if y == best {
                r.significant && r.statistic > 0.0
            } else {
                true
            }
        });
        rows[best].significant_best = beats_all && contenders.len() > 1;
    }
    Ok(Comparison { rows, tests })
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>12}  {:>12}  best", "approach", "#TOs", "PAR10", "PAR1");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>12}  {:>12}  {}",
                r.name,
                r.report.timeouts,
                num(r.report.par10),
                num(r.report.par1),
                if r.significant_best { "*" } else { "" }
            );
        }
        if !self.tests.is_empty() {
            out.push_str("\npairwise permutation tests (PAR10)\n");
            for t in &self.tests {
                let _ = writeln!(
                    out,
                    "{:<width$}  vs  {:<width$}  diff {:>12}  p {:.5}{}",
                    t.a,
                    t.b,
                    num(t.mean_difference),
                    t.p_value,
                    if t.significant { "  *" } else { "" }
                );
            }
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("approach,timeouts,par10,par1,significant_best\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.name,
                r.report.timeouts,
                num(r.report.par10),
                num(r.report.par1),
                r.significant_best
            );
        }
        out
    }

    pub fn tests_csv(&self) -> String {
        let mut out = String::from("a,b,mean_difference,p_value,significant\n");
        for t in &self.tests {
            let _ = writeln!(out, "{},{},{},{:.6},{}", t.a, t.b, num(t.mean_difference), t.p_value, t.significant);
        }
        out
    }

    /// Table and tests as two CSV blocks separated by a blank line.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.table_csv(), self.tests_csv())
    }
}

/// Per-instance outcomes of one approach as CSV rows (no header).
pub fn outcomes_csv_rows(approach: &str, scenario: &Scenario, folds: &[usize], outcomes: &[SolveOutcome]) -> String {
    let mut out = String::new();
    for (i, o) in outcomes.iter().enumerate() {
        let solver = match o.solver_used {
            SolverUsed::FeatureExtractor => "features".to_string(),
            SolverUsed::Presolver(a) => format!("presolver:{}", scenario.algorithms()[a]),
            SolverUsed::Selected(a) => format!("selected:{}", scenario.algorithms()[a]),
            SolverUsed::Backup(a) => format!("backup:{}", scenario.algorithms()[a]),
        };
        let _ = writeln!(
            out,
            "{approach},{},{},{},{},{},{},{},{solver}",
            scenario.instances()[i],
            folds[i],
            o.solved,
            num(o.time),
            num(o.feature_time),
            num(o.presolve_time),
            num(o.final_time),
        );
    }
    out
}

pub const OUTCOMES_HEADER: &str =
    "approach,instance,fold,solved,time,feature_time,presolve_time,final_time,solver\n";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::score;

    fn rep(times: &[Option<f64>]) -> MetricReport {
        let o: Vec<(bool, f64)> = times.iter().map(|t| t.map_or((false, 600.0), |v| (true, v))).collect();
        score(&o, 600.0).unwrap()
    }

    #[test]
    fn row_count_and_bold() {
        let good = rep(&[Some(1.0); 12]);
        let bad = rep(&[None; 12]);
        let c = compare(
            vec![("x".into(), good.clone()), ("y".into(), bad.clone())],
            good.clone(),
            bad,
            1000,
            0.05,
            1,
        )
        .unwrap();
        assert_eq!(c.rows.len(), 4);
        assert!(c.rows[0].significant_best);
        assert!(!c.rows[1].significant_best);
        assert!(!c.rows[3].significant_best);
        assert_eq!(c.tests.len(), 3);
        assert_eq!(c.table_csv().lines().count(), 5);
    }

    #[test]
    fn no_bold_without_significance() {
        let a = rep(&[Some(1.0), Some(2.0), Some(3.0)]);
        let b = rep(&[Some(1.5), Some(2.0), Some(3.0)]);
        let c = compare(vec![("a".into(), a.clone()), ("b".into(), b.clone())], a, b, 1000, 0.05, 0).unwrap();
        assert!(c.rows.iter().all(|r| !r.significant_best));
    }
}

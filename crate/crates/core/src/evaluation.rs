//! Metrics, baselines and paired permutation tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::scenario::Scenario;

pub const DEFAULT_PERMUTATIONS: usize = 100_000;
pub const DEFAULT_ALPHA: f64 = 0.05;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("no outcomes to score")]
    Empty,
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("outcome time {time} exceeds cutoff {cutoff}")]
    TimeExceedsCutoff { time: f64, cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub timeouts: usize,
    pub par10: f64,
    pub par1: f64,
    pub cutoff: f64,
    /// Per-instance time; for unsolved instances this is the cutoff.
    pub times: Vec<f64>,
    pub solved: Vec<bool>,
}

impl MetricReport {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Per-instance scores with unsolved instances at `factor * cutoff`.
    pub fn par_vector(&self, factor: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.solved)
            .map(|(&t, &s)| if s { t } else { factor * self.cutoff })
            .collect()
    }
}

/// Scores `(solved, time)` outcomes.
pub fn score(outcomes: &[(bool, f64)], cutoff: f64) -> Result<MetricReport, EvaluationError> {
    if outcomes.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let mut solved_sum = 0.0;
    let mut timeouts = 0;
    let mut times = Vec::with_capacity(outcomes.len());
    let mut solved = Vec::with_capacity(outcomes.len());
    for &(s, t) in outcomes {
        if s {
            if t > cutoff {
                return Err(EvaluationError::TimeExceedsCutoff { time: t, cutoff });
            }
            solved_sum += t;
            times.push(t);
        } else {
            timeouts += 1;
            times.push(cutoff);
        }
        solved.push(s);
    }
    let n = outcomes.len() as f64;
    let t = timeouts as f64;
    Ok(MetricReport {
        timeouts,
        par10: (solved_sum + 10.0 * cutoff * t) / n,
        par1: (solved_sum + cutoff * t) / n,
        cutoff,
        times,
        solved,
    })
}

/// Performance of one algorithm run alone, without feature cost.
pub fn solo(scenario: &Scenario, algorithm: usize, ids: &[usize]) -> Result<MetricReport, EvaluationError> {
    let outcomes: Vec<(bool, f64)> = ids
        .iter()
        .map(|&i| {
            let run = scenario.run(i, algorithm);
            (run.is_solved(), run.runtime)
        })
        .collect();
    score(&outcomes, scenario.cutoff())
}

/// Virtual best solver: per-instance minimum over algorithms.
pub fn vbs(scenario: &Scenario, ids: &[usize]) -> Result<MetricReport, EvaluationError> {
    let outcomes: Vec<(bool, f64)> = ids
        .iter()
        .map(|&i| {
            let best = (0..scenario.n_algorithms())
                .filter_map(|a| scenario.run(i, a).solve_time())
                .min_by(f64::total_cmp);
            match best {
                Some(t) => (true, t),
                None => (false, scenario.cutoff()),
            }
        })
        .collect();
    score(&outcomes, scenario.cutoff())
}

/// Algorithm with the lowest PAR10 on `ids`; ties go to the lower index.
pub fn best_algorithm(scenario: &Scenario, ids: &[usize], candidates: &[usize]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &a in candidates {
        let total: f64 = ids.iter().map(|&i| scenario.par10(i, a)).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((a, total));
        }
    }
    best.expect("at least one candidate").0
}

/// Single best algorithm on `training` and its report on `evaluation`.
pub fn single_best(
    scenario: &Scenario,
    training: &[usize],
    evaluation: &[usize],
) -> Result<(usize, MetricReport), EvaluationError> {
    if training.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let all: Vec<usize> = (0..scenario.n_algorithms()).collect();
    let a = best_algorithm(scenario, training, &all);
    Ok((a, solo(scenario, a, evaluation)?))
}

/// Single best under cross-validation: every instance is solved by the
/// algorithm that was best on the other folds. `folds` holds the fold of
/// every scenario instance; the report follows scenario order.
pub fn cross_validated_single_best(scenario: &Scenario, folds: &[usize]) -> Result<MetricReport, EvaluationError> {
    if folds.len() != scenario.n_instances() {
        return Err(EvaluationError::LengthMismatch(folds.len(), scenario.n_instances()));
    }
    let all: Vec<usize> = (0..scenario.n_algorithms()).collect();
    let mut per_fold = std::collections::BTreeMap::new();
    let outcomes: Vec<(bool, f64)> = (0..folds.len())
        .map(|i| {
            let a = *per_fold.entry(folds[i]).or_insert_with(|| {
                let training: Vec<usize> = (0..folds.len()).filter(|&j| folds[j] != folds[i]).collect();
                let training = if training.is_empty() { (0..folds.len()).collect() } else { training };
                best_algorithm(scenario, &training, &all)
            });
            let run = scenario.run(i, a);
            (run.is_solved(), run.runtime)
        })
        .collect();
    score(&outcomes, scenario.cutoff())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    pub n_permutations: usize,
    pub exact: bool,
    /// `mean(a) - mean(b)`.
    pub statistic: f64,
    pub significant: bool,
}

/// Two-sided paired sign-flip permutation test on `a - b`.
///
/// All `2^n` sign patterns are enumerated when that is at most
/// `n_permutations`; otherwise `n_permutations` patterns are sampled.
pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<SignificanceResult, EvaluationError> {
    let exact = a.len() < 63 && (1u64 << a.len()) <= n_permutations as u64;
    run_permutation_test(a, b, n_permutations, alpha, seed, exact)
}

/// [`permutation_test`] that always samples, even for short vectors.
pub fn sampled_permutation_test(
    a: &[f64],
    b: &[f64],
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<SignificanceResult, EvaluationError> {
    run_permutation_test(a, b, n_permutations, alpha, seed, false)
}

fn run_permutation_test(
    a: &[f64],
    b: &[f64],
    n_permutations: usize,
    alpha: f64,
    seed: u64,
    exact: bool,
) -> Result<SignificanceResult, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let observed: f64 = d.iter().sum::<f64>().abs();
    let scale: f64 = d.iter().map(|v| v.abs()).sum();
    let threshold = observed - 1e-12 * scale;

    let (count, total) = if exact {
        (exact_count(&d, threshold), 1usize << n)
    } else {
        (sampled_count(&d, threshold, n_permutations.max(1), seed), n_permutations.max(1))
    };
    let p_value = (1 + count) as f64 / (1 + total) as f64;
    Ok(SignificanceResult {
        p_value,
        n_permutations: total,
        exact,
        statistic: d.iter().sum::<f64>() / n as f64,
        significant: p_value < alpha,
    })
}

fn flipped_sum(d: &[f64], mut signs: impl FnMut(usize) -> bool) -> f64 {
    d.iter()
        .enumerate()
        .map(|(i, &v)| if signs(i) { -v } else { v })
        .sum()
}

fn exact_count(d: &[f64], threshold: f64) -> usize {
    let patterns = 1u64 << d.len();
    (0..patterns)
        .into_par_iter()
        .filter(|&mask| flipped_sum(d, |i| mask >> i & 1 == 1).abs() >= threshold)
        .count()
}

fn sampled_count(d: &[f64], threshold: f64, n_permutations: usize, seed: u64) -> usize {
    let chunks = n_permutations.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
            let todo = CHUNK.min(n_permutations - c * CHUNK);
            let mut words = vec![0u64; d.len().div_ceil(64)];
            let mut hits = 0;
            for _ in 0..todo {
                words.iter_mut().for_each(|w| *w = rng.gen());
                if flipped_sum(d, |i| words[i / 64] >> (i % 64) & 1 == 1).abs() >= threshold {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scenario(rows: Vec<Vec<Option<f64>>>) -> Scenario {
        let features = (0..rows.len()).map(|i| vec![i as f64]).collect();
        crate::synthetic::from_runtimes(rows, features, 600.0)
    }

    #[test]
    fn score_definitions() {
        let r = score(&[(true, 100.0), (false, 600.0)], 600.0).unwrap();
        assert_eq!((r.par10, r.par1, r.timeouts), (3050.0, 350.0, 1));
        let r = score(&[(true, 10.0), (true, 20.0)], 600.0).unwrap();
        assert_eq!((r.par10, r.par1), (15.0, 15.0));
        let r = score(&[(false, 600.0); 3], 600.0).unwrap();
        assert_eq!(r.par10, 6000.0);
        assert_eq!(score(&[], 600.0), Err(EvaluationError::Empty));
    }

    #[test]
    fn vbs_and_single_best() {
        let s = scenario(vec![vec![Some(2.0), None], vec![None, Some(3.0)]]);
        let v = vbs(&s, &[0, 1]).unwrap();
        assert_eq!((v.times.clone(), v.timeouts), (vec![2.0, 3.0], 0));

        let s = scenario(vec![vec![Some(5.0), Some(5.0)], vec![Some(7.0), Some(7.0)]]);
        let (a, r) = single_best(&s, &[0, 1], &[1]).unwrap();
        assert_eq!(a, 0);
        assert_eq!(r.par10, 7.0);

        let s = scenario(vec![vec![Some(4.0)], vec![None]]);
        assert_eq!(vbs(&s, &[0, 1]).unwrap(), solo(&s, 0, &[0, 1]).unwrap());
    }

    #[test]
    fn permutation_identical_and_constant_shift() {
        let a = [1.0, 5.0, 9.0];
        let r = permutation_test(&a, &a, 1000, 0.05, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);

        let b = [0.0, 2.0, 7.0];
        let a: Vec<f64> = b.iter().map(|v| v + 100.0).collect();
        let r = permutation_test(&a, &b, 1000, 0.05, 1).unwrap();
        assert!(r.exact);
        assert_eq!(r.n_permutations, 8);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        assert!(permutation_test(&a, &b[..2], 10, 0.05, 0).is_err());
    }

    /// Hand-rolled enumeration over all sign patterns.
    fn oracle_p(d: &[f64]) -> f64 {
        let obs: f64 = d.iter().sum::<f64>().abs();
        let n = d.len();
        let mut count = 0usize;
        for mask in 0..(1usize << n) {
            let mut s = 0.0;
            for (i, v) in d.iter().enumerate() {
                s += if mask & (1 << i) != 0 { -v } else { *v };
            }
            if s.abs() >= obs - 1e-9 {
                count += 1;
            }
        }
        (1 + count) as f64 / (1 + (1usize << n)) as f64
    }

    #[test]
    fn sampled_tracks_exact_for_n20() {
        let b: Vec<f64> = (0..20).map(|i| (i * 37 % 11) as f64).collect();
        let mut a = b.clone();
        a[4] += 50.0;
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let exact = oracle_p(&d);
        assert!(exact > 0.9);
        let sampled = permutation_test(&a, &b, 100_000, 0.05, 9).unwrap();
        assert!(!sampled.exact);
        assert!((sampled.p_value - exact).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn par_identity(rows in proptest::collection::vec((any::<bool>(), 0.0f64..600.0), 1..50)) {
            let r = score(&rows, 600.0).unwrap();
            let gap = 9.0 * 600.0 * r.timeouts as f64 / rows.len() as f64;
            prop_assert!((r.par10 - r.par1 - gap).abs() <= 1e-9 * r.par10.max(1.0));
            prop_assert!(r.par10 >= r.par1);
        }

        #[test]
        fn exact_mode_matches_oracle_and_is_symmetric(
            a in proptest::collection::vec(0u32..50, 1..10),
            b_shift in proptest::collection::vec(-20i32..20, 10),
            seed in 0u64..10,
        ) {
            let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = a.iter().zip(&b_shift).map(|(x, s)| x + *s as f64).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let r = permutation_test(&a, &b, 1 << 12, 0.05, seed).unwrap();
            prop_assert!(r.exact);
            prop_assert!((r.p_value - oracle_p(&d)).abs() < 1e-12);
            let s = permutation_test(&b, &a, 1 << 12, 0.05, seed).unwrap();
            prop_assert_eq!(r.p_value, s.p_value);
        }

        #[test]
        fn sampled_mode_is_symmetric(
            a in proptest::collection::vec(0.0f64..100.0, 13..30),
            seed in 0u64..10,
        ) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let r = permutation_test(&a, &b, 500, 0.05, seed).unwrap();
            let s = permutation_test(&b, &a, 500, 0.05, seed).unwrap();
            prop_assert!(!r.exact);
            prop_assert_eq!(r.p_value, s.p_value);
        }
    }
}

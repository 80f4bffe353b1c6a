//! Synthetic scenarios with cluster-structured algorithm strengths.
//!
//! Instances fall into clusters; each cluster has one algorithm that is
//! fast on it while the others are slow and often time out. A fraction of
//! instances is easy for every algorithm and a fraction is hard for all of
//! them. Informative features place instances near their cluster centre.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::derive_seed;
use crate::scenario::{FeatureCost, FeatureMatrix, PerformanceMatrix, Run, Scenario, ScenarioParts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Noisy cluster centres.
    Informative,
    /// Independent noise unrelated to the clusters.
    Noise,
    /// The same value for every instance.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub instances: usize,
    pub algorithms: usize,
    pub clusters: usize,
    pub features: usize,
    pub feature_mode: FeatureMode,
    pub cutoff: f64,
    /// Feature computation cost per instance, seconds.
    pub feature_cost: f64,
    /// Share of instances every algorithm solves within a few seconds.
    pub easy_fraction: f64,
    /// Share of instances no algorithm solves.
    pub hard_fraction: f64,
    /// Median runtime of the strong algorithm on its own cluster.
    pub strong_median: f64,
    /// Median runtime of the other algorithms.
    pub weak_median: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            instances: 200,
            algorithms: 4,
            clusters: 4,
            features: 4,
            feature_mode: FeatureMode::Informative,
            cutoff: 600.0,
            feature_cost: 0.5,
            easy_fraction: 0.1,
            hard_fraction: 0.1,
            strong_median: 10.0,
            weak_median: 400.0,
            seed: 7,
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> Scenario {
    // Separate streams so the feature mode never changes the runtimes.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut feature_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let n = config.instances;
    let m = config.algorithms.max(1);
    let k = config.clusters.max(1);
    let d = config.features.max(1);
    let cutoff = config.cutoff;

    let centres: Vec<Vec<f64>> = (0..k)
        .map(|c| (0..d).map(|j| if j == c % d { 10.0 } else { feature_rng.gen_range(0.0..2.0) }).collect())
        .collect();
    let jitter = Normal::new(0.0, 1.0).expect("valid normal");
    let strong = LogNormal::new(config.strong_median.ln(), 0.6).expect("valid lognormal");
    let weak = LogNormal::new(config.weak_median.ln(), 1.0).expect("valid lognormal");
    let easy = LogNormal::new(1.0f64.ln(), 0.5).expect("valid lognormal");

    let mut perf = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = i % k;
        let kind: f64 = rng.gen();
        let runs: Vec<Run> = (0..m)
            .map(|a| {
                let t: f64 = if kind < config.hard_fraction {
                    f64::INFINITY
                } else if kind < config.hard_fraction + config.easy_fraction {
                    easy.sample(&mut rng) * (1.0 + a as f64 * 0.3)
                } else if a == cluster % m {
                    strong.sample(&mut rng)
                } else {
                    weak.sample(&mut rng)
                };
                // Runtimes are recorded with millisecond resolution.
                let t = ((t * 1000.0).round() / 1000.0).max(0.001);
                if t <= cutoff {
                    Run::solved(t)
                } else {
                    Run::timeout(cutoff)
                }
            })
            .collect();
        perf.push(runs);
        let row: Vec<f64> = match config.feature_mode {
            FeatureMode::Informative => centres[cluster].iter().map(|c| c + jitter.sample(&mut feature_rng)).collect(),
            FeatureMode::Noise => (0..d).map(|_| feature_rng.gen_range(0.0..10.0)).collect(),
            FeatureMode::Constant => vec![1.0; d],
        };
        rows.push(row);
    }
    let mut parts = from_runtimes_rows(perf, rows, cutoff).to_parts();
    parts.name = format!("synthetic-{}", config.seed);
    parts.feature_costs = vec![
        FeatureCost {
            cost: config.feature_cost,
            solved: false,
        };
        n
    ];
    Scenario::new(parts).expect("generated scenario is valid")
}

/// A scenario from solve times (`None` = timeout) and complete feature rows,
/// with zero feature cost and no folds.
pub fn from_runtimes(runtimes: Vec<Vec<Option<f64>>>, features: Vec<Vec<f64>>, cutoff: f64) -> Scenario {
    let perf = runtimes
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.map_or(Run::timeout(cutoff), Run::solved)).collect())
        .collect();
    from_runtimes_rows(perf, features, cutoff)
}

fn from_runtimes_rows(perf: Vec<Vec<Run>>, features: Vec<Vec<f64>>, cutoff: f64) -> Scenario {
    let n = perf.len();
    let m = perf.first().map_or(0, Vec::len);
    let d = features.first().map_or(0, Vec::len);
    Scenario::new(ScenarioParts {
        name: "synthetic".into(),
        instances: (0..n).map(|i| format!("i{i:04}")).collect(),
        algorithms: (0..m).map(|a| format!("a{a}")).collect(),
        cutoff,
        performance: PerformanceMatrix::from_rows(perf),
        features: FeatureMatrix {
            names: (0..d).map(|j| format!("f{j}")).collect(),
            rows: features.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        },
        feature_costs: vec![
            FeatureCost {
                cost: 0.0,
                solved: false,
            };
            n
        ],
        folds: None,
    })
    .expect("well-formed synthetic scenario")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{single_best, vbs};

    #[test]
    fn deterministic_and_complementary() {
        let c = SyntheticConfig::default();
        let a = generate(&c);
        assert_eq!(a, generate(&c));
        assert_eq!((a.n_instances(), a.n_algorithms()), (200, 4));
        let ids = a.all_instances();
        let v = vbs(&a, &ids).unwrap();
        let (_, sb) = single_best(&a, &ids, &ids).unwrap();
        assert!(sb.par10 > 2.0 * v.par10, "single best {} vs vbs {}", sb.par10, v.par10);
    }

    #[test]
    fn feature_modes() {
        let c = SyntheticConfig {
            feature_mode: FeatureMode::Constant,
            instances: 10,
            ..Default::default()
        };
        let s = generate(&c);
        assert!(s.features().rows.iter().all(|r| r.iter().all(|v| *v == Some(1.0))));
        let informative = generate(&SyntheticConfig {
            instances: 10,
            ..Default::default()
        });
        assert_eq!(s.performance(), informative.performance());
    }
}

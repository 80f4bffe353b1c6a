use pfolio_core::derive_seed;
use pfolio_core::evaluation::{solo, vbs};
use pfolio_core::pipeline::{evaluate_pipeline, simulate_solve, train_pipeline, PipelineOptions};
use pfolio_core::scenario::{assign_folds, Scenario};
use pfolio_core::scheduling::{compute_schedule, ScheduleLimits};
use pfolio_core::selectors::{grid_search, Approach, Grid};
use pfolio_core::synthetic::{from_runtimes, generate, SyntheticConfig};
use proptest::prelude::*;

/// Solve-time matrix with whole-second runtimes, so sums are exact.
fn matrix(max_instances: usize, max_algorithms: usize) -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (1..=max_algorithms).prop_flat_map(move |m| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.7, (1u32..60).prop_map(f64::from)), m),
            1..=max_instances,
        )
    })
}

/// Exhaustive search over slices drawn from {0} and observed runtimes.
fn oracle(times: &[Vec<Option<f64>>], budget: f64, limits: &ScheduleLimits) -> (usize, f64) {
    let m = times[0].len();
    let cap = limits.max_total_time.map_or(budget, |t| t.min(budget));
    let options: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            let mut v: Vec<f64> = times.iter().filter_map(|r| r[a]).filter(|&t| t <= cap).collect();
            v.push(0.0);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let mut best = (usize::MAX, f64::INFINITY);
    let combos: usize = options.iter().map(Vec::len).product();
    for mut code in 0..combos {
        let slices: Vec<f64> = options
            .iter()
            .map(|o| {
                let s = o[code % o.len()];
                code /= o.len();
                s
            })
            .collect();
        let used = slices.iter().filter(|&&s| s > 0.0).count();
        let total: f64 = slices.iter().sum();
        if total > cap || limits.max_components.is_some_and(|c| used > c) {
            continue;
        }
        let unsolved = times
            .iter()
            .filter(|r| !(0..m).any(|a| slices[a] > 0.0 && r[a].is_some_and(|t| t <= slices[a])))
            .count();
        if (unsolved, total) < best {
            best = (unsolved, total);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schedule_matches_exhaustive_search(
        times in matrix(10, 4),
        budget in 1u32..150,
        max_components in prop::option::of(0usize..4),
        max_total in prop::option::of(1u32..100),
    ) {
        let limits = ScheduleLimits { max_components, max_total_time: max_total.map(f64::from) };
        let s = compute_schedule(&times, f64::from(budget), &limits);
        prop_assert_eq!((s.unsolved(&times), s.total_time()), oracle(&times, f64::from(budget), &limits));
        prop_assert!(s.components.iter().all(|c| c.slice > 0.0));
    }

    #[test]
    fn unsolved_count_never_grows_with_budget(times in matrix(10, 4), b1 in 1u32..100, extra in 0u32..100) {
        let small = compute_schedule(&times, f64::from(b1), &ScheduleLimits::UNBOUNDED);
        let large = compute_schedule(&times, f64::from(b1 + extra), &ScheduleLimits::UNBOUNDED);
        prop_assert!(large.unsolved(&times) <= small.unsolved(&times));
    }
}

fn random_scenario(seed: u64, instances: usize) -> Scenario {
    generate(&SyntheticConfig {
        instances,
        algorithms: 3,
        clusters: 3,
        features: 3,
        seed,
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn time_budget_is_conserved(seed in 0u64..1000, a in 0usize..7) {
        let s = random_scenario(seed, 30);
        let approach = Approach::ALL[a];
        let e = evaluate_pipeline(&s, &PipelineOptions::new(approach), 3, seed).unwrap();
        for o in &e.outcomes {
            let parts = o.feature_time + o.presolve_time + o.final_time;
            prop_assert!(o.time <= s.cutoff());
            if o.solved {
                prop_assert!((o.time - parts).abs() <= 1e-9 * s.cutoff());
            } else {
                prop_assert_eq!(o.time, s.cutoff());
                prop_assert!(parts <= s.cutoff() + 1e-9);
            }
        }
    }

    #[test]
    fn vbs_dominates_every_approach_and_algorithm(seed in 0u64..1000) {
        let s = random_scenario(seed, 24);
        let ids = s.all_instances();
        let oracle = vbs(&s, &ids).unwrap();
        for approach in Approach::ALL {
            let e = evaluate_pipeline(&s, &PipelineOptions::new(approach), 3, seed).unwrap();
            for (i, o) in e.outcomes.iter().enumerate() {
                if o.solved {
                    prop_assert!(oracle.solved[i] && oracle.times[i] <= o.time);
                }
            }
            let pairs: Vec<(bool, f64)> = e.outcomes.iter().map(|o| (o.solved, o.time)).collect();
            let r = pfolio_core::evaluation::score(&pairs, s.cutoff()).unwrap();
            prop_assert!(oracle.par10 <= r.par10);
        }
        for a in 0..s.n_algorithms() {
            prop_assert!(oracle.par10 <= solo(&s, a, &ids).unwrap().par10);
        }
    }
}

#[test]
fn perfect_features_reach_the_oracle() {
    // The feature is a one-hot code of each instance's fastest algorithm.
    let runtimes = [
        vec![Some(1.0), Some(50.0), None],
        vec![None, Some(2.0), Some(90.0)],
        vec![Some(80.0), None, Some(3.0)],
    ];
    let mut rows = Vec::new();
    let mut features = Vec::new();
    for i in 0..30 {
        let best = i % 3;
        rows.push(runtimes[best].iter().map(|t| t.map(|v| v + i as f64 / 100.0)).collect());
        features.push((0..3).map(|j| f64::from(u8::from(j == best))).collect());
    }
    let s = from_runtimes(rows, features, 100.0);
    let ids = s.all_instances();
    let oracle = vbs(&s, &ids).unwrap();
    for approach in [Approach::Measp, Approach::Isac, Approach::Satzilla11] {
        let solver = train_pipeline(&s, &ids, &PipelineOptions::new(approach), 3).unwrap();
        let total: f64 = ids.iter().map(|&i| simulate_solve(&solver, i, &s).time).sum::<f64>() / ids.len() as f64;
        assert!((total - oracle.par10).abs() < 1e-9, "{approach}: {total} vs {}", oracle.par10);
    }
}

/// Inner cross-validated PAR10 of k-nearest-neighbour selection on a single
/// feature, worked out directly from the data.
fn knn_cv_par10(s: &Scenario, training: &[usize], k: usize, seed: u64) -> f64 {
    let n = training.len();
    let folds = assign_folds(n, 5.min(n), derive_seed(seed, 3)).unwrap();
    let x = |i: usize| s.feature_row(i)[0].unwrap();
    let mut total = 0.0;
    for p in 0..n {
        let mut train: Vec<usize> = (0..n).filter(|&q| folds[q] != folds[p]).map(|q| training[q]).collect();
        let xi = x(training[p]);
        train.sort_by(|&a, &b| (x(a) - xi).abs().total_cmp(&(x(b) - xi).abs()));
        let near = &train[..k];
        let scores: Vec<f64> = (0..s.n_algorithms())
            .map(|a| near.iter().map(|&j| s.par10(j, a)).sum::<f64>() / k as f64)
            .collect();
        let mut best = 0;
        for a in 1..scores.len() {
            if scores[a] < scores[best] {
                best = a;
            }
        }
        total += s.par10(training[p], best);
    }
    total / n as f64
}

#[test]
fn grid_search_matches_exhaustive_oracle() {
    for seed in [3u64, 11, 29] {
        let base = random_scenario(seed, 40);
        // One feature with distinct values keeps neighbour order unambiguous
        // under any monotone rescaling.
        let mut parts = base.to_parts();
        parts.features.names = vec!["f".into()];
        parts.features.rows = (0..base.n_instances())
            .map(|i| vec![Some(base.feature_row(i)[i % 3].unwrap() + i as f64 * 1e-3)])
            .collect();
        let s = Scenario::new(parts).unwrap();
        let training: Vec<usize> = (0..s.n_instances()).filter(|i| i % 4 != 0).collect();
        let ks = [1usize, 3, 5];
        let scores: Vec<f64> = ks.iter().map(|&k| knn_cv_par10(&s, &training, k, seed)).collect();
        let mut best = 0;
        for j in 1..ks.len() {
            if scores[j] < scores[best] {
                best = j;
            }
        }
        let algs: Vec<usize> = (0..s.n_algorithms()).collect();
        let grid = Grid::parse("k=1,3,5").unwrap();
        let hp = grid_search(&s, &training, &algs, &Approach::Threes.spec(), &grid, 5, seed).unwrap();
        assert_eq!(hp.get("k"), Some(ks[best] as f64), "seed {seed}: oracle scores {scores:?}");
    }
}

//! Cost-sensitive random forests of binary CART trees.
//!
//! Each tree sees a bootstrap sample of the examples and keeps their
//! weights; splits maximize the reduction of weighted Gini impurity over a
//! random subset of features. Example weights are normalized to sum to one
//! before training, so scaling all weights by a constant yields the same
//! forest.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_rows, LearnError};

/// Gains closer than this (in normalized weight units) count as ties, which
/// are resolved by feature index and then threshold order.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 99,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        label: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSensitiveForest {
    pub trees: Vec<DecisionTree>,
}

impl CostSensitiveForest {
    /// Unweighted majority vote; a tie predicts `false`.
    pub fn predict(&self, row: &[f64]) -> bool {
        let ones = self.trees.iter().filter(|t| t.predict(row)).count();
        2 * ones > self.trees.len()
    }

    pub fn votes(&self, row: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(row)).count()
    }
}

/// Trains `params.trees` trees; tree `t` uses the random stream seeded with
/// `seed + t`, so the result does not depend on the thread count.
pub fn train_forest(
    x: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<CostSensitiveForest, LearnError> {
    let d = check_rows(x, labels.len())?;
    if weights.len() != labels.len() {
        return Err(LearnError::TargetMismatch {
            rows: x.len(),
            targets: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(LearnError::InvalidParameter("weights must be finite and >= 0".into()));
    }
    if params.trees == 0 || params.min_leaf == 0 {
        return Err(LearnError::InvalidParameter(
            "trees and min_leaf must be positive".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(LearnError::ZeroWeights);
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let data = TrainData {
        x,
        labels,
        weights: &weights,
        d,
        mtry,
        params,
    };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| data.grow(seed.wrapping_add(t as u64)))
        .collect();
    Ok(CostSensitiveForest { trees })
}

struct TrainData<'a> {
    x: &'a [Vec<f64>],
    labels: &'a [bool],
    weights: &'a [f64],
    d: usize,
    mtry: usize,
    params: &'a ForestParams,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TrainData<'_> {
    fn grow(&self, seed: u64) -> DecisionTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.x.len();
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut nodes = Vec::new();
        self.build(&mut nodes, sample, 0, &mut rng);
        DecisionTree { nodes }
    }

    fn class_weights(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(w0, w1), &i| {
            if self.labels[i] {
                (w0, w1 + self.weights[i])
            } else {
                (w0 + self.weights[i], w1)
            }
        })
    }

    fn build(&self, nodes: &mut Vec<TreeNode>, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = nodes.len();
        let (w0, w1) = self.class_weights(&idx);
        nodes.push(TreeNode::Leaf { label: w1 > w0 });

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        if w0 == 0.0 || w1 == 0.0 || !depth_ok || idx.len() < 2 * self.params.min_leaf || self.d == 0 {
            return at;
        }
        let Some(best) = self.best_split(&idx, w0, w1, rng) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[i][best.feature] <= best.threshold);
        let l = self.build(nodes, left, depth + 1, rng);
        let r = self.build(nodes, right, depth + 1, rng);
        nodes[at] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    fn best_split(&self, idx: &[usize], w0: f64, w1: f64, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let mut features = sample(rng, self.d, self.mtry).into_vec();
        features.sort_unstable();
        let parent = gini_mass(w0, w1);
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut l0, mut l1) = (0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                if self.labels[i] {
                    l1 += self.weights[i];
                } else {
                    l0 += self.weights[i];
                }
                let here = self.x[i][f];
                let next = self.x[order[pos + 1]][f];
                if here == next || pos + 1 < min_leaf || order.len() - pos - 1 < min_leaf {
                    continue;
                }
                let gain = parent - gini_mass(l0, l1) - gini_mass(w0 - l0, w1 - l1);
                if gain <= GAIN_TIE {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain + GAIN_TIE) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: here + (next - here) / 2.0,
                    });
                }
            }
        }
        best
    }
}

/// Node weight times weighted Gini impurity: `W - (w0^2 + w1^2) / W`.
fn gini_mass(w0: f64, w1: f64) -> f64 {
    let w = w0 + w1;
    if w <= 0.0 {
        0.0
    } else {
        w - (w0 * w0 + w1 * w1) / w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separable_line() {
        let x: Vec<Vec<f64>> = (-10..=10).filter(|&v| v != 0).map(|v| vec![v as f64]).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] > 0.0).collect();
        let params = ForestParams {
            trees: 10,
            ..Default::default()
        };
        let f = train_forest(&x, &y, &vec![1.0; x.len()], &params, 1).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &l)| f.predict(r) == l).count();
        assert_eq!(acc, x.len());
    }

    #[test]
    fn constant_labels() {
        let x: Vec<Vec<f64>> = (0..8).map(|v| vec![v as f64, (v * v) as f64]).collect();
        let f = train_forest(&x, &[false; 8], &[1.0; 8], &ForestParams::default(), 3).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert!(!f.predict(&[100.0, -3.0]));
    }

    #[test]
    fn heavy_example_dominates() {
        // Identical features: no split exists, so each tree's single leaf is
        // the weighted majority of its bootstrap sample. With the heavy
        // example present, 1000 > 10 * 1 for any multiplicities up to 10.
        let x = vec![vec![0.5]; 11];
        let mut y = vec![false; 11];
        let mut w = vec![1.0; 11];
        y[0] = true;
        w[0] = 1000.0;
        let params = ForestParams {
            trees: 99,
            max_depth: Some(1),
            ..Default::default()
        };
        let f = train_forest(&x, &y, &w, &params, 7).unwrap();
        assert!(f.predict(&[0.5]));
        assert!(f.trees.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn rejects_zero_weights() {
        let x = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            train_forest(&x, &[false, true], &[0.0, 0.0], &ForestParams::default(), 0),
            Err(LearnError::ZeroWeights)
        );
    }

    #[test]
    fn depth_and_min_leaf_respected() {
        let x: Vec<Vec<f64>> = (0..40).map(|v| vec![v as f64]).collect();
        let y: Vec<bool> = (0..40).map(|v| v % 2 == 0).collect();
        let params = ForestParams {
            trees: 5,
            max_depth: Some(3),
            min_leaf: 4,
            features_per_split: None,
        };
        let f = train_forest(&x, &y, &vec![1.0; 40], &params, 0).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn invariant_to_weight_scaling(
            rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>(), 0.0f64..10.0), 4..30),
            c in 0.001f64..1000.0,
            seed in 0u64..100,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let y: Vec<bool> = rows.iter().map(|r| r.2).collect();
            let w: Vec<f64> = rows.iter().map(|r| r.3 + 0.01).collect();
            let wc: Vec<f64> = w.iter().map(|v| v * c).collect();
            let params = ForestParams { trees: 7, ..Default::default() };
            let a = train_forest(&x, &y, &w, &params, seed).unwrap();
            let b = train_forest(&x, &y, &wc, &params, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

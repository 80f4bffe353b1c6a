use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, squared_distance, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Index of the nearest centroid; ties go to the lower index.
    pub fn assign(&self, row: &[f64]) -> usize {
        nearest(&self.centroids, row).0
    }
}

/// Result of [`train_kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, first to last.
    pub inertia_history: Vec<f64>,
}

fn nearest(centroids: &[Vec<f64>], row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(centroid, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// stops changing or `max_iters` is reached. An empty cluster is re-seeded
/// at the point farthest from its current centroid.
pub fn train_kmeans(
    x: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit, LearnError> {
    check_rows(x, x.len())?;
    let n = x.len();
    if k == 0 || k > n {
        return Err(LearnError::InvalidK { k, max: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(x, k, &mut rng);

    let mut assignment: Vec<usize> = Vec::new();
    let mut inertia_history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let (next, inertia) = assign_all(&centroids, x);
        inertia_history.push(inertia);
        if next == assignment {
            break;
        }
        assignment = next;
        centroids = update_centroids(x, &assignment, &centroids);
        if reseed_empty(x, &mut assignment, &mut centroids) {
            // Donor clusters lost a point.
            centroids = update_centroids(x, &assignment, &centroids);
        }
    }
    let (assignment, inertia) = assign_all(&centroids, x);
    if inertia_history.last() != Some(&inertia) {
        inertia_history.push(inertia);
    }
    Ok(KMeansFit {
        model: KMeansModel { centroids },
        assignment,
        inertia,
        inertia_history,
    })
}

fn seed_plus_plus(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![x[first].clone()];
    let mut d2: Vec<f64> = x.iter().map(|r| squared_distance(r, &x[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Fewer distinct points than clusters.
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        centroids.push(x[pick].clone());
        for (i, r) in x.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(r, &x[pick]));
        }
    }
    centroids
}

fn assign_all(centroids: &[Vec<f64>], x: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignment = x
        .iter()
        .map(|r| {
            let (c, d) = nearest(centroids, r);
            inertia += d;
            c
        })
        .collect();
    (assignment, inertia)
}

fn update_centroids(x: &[Vec<f64>], assignment: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let mut sums = vec![vec![0.0; d]; old.len()];
    let mut counts = vec![0usize; old.len()];
    for (row, &c) in x.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(&counts)
        .zip(old)
        .map(|((s, &cnt), prev)| {
            if cnt == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / cnt as f64).collect()
            }
        })
        .collect()
}

/// Returns whether any point was moved.
fn reseed_empty(x: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut moved = false;
    loop {
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return moved;
        };
        // Farthest point among those whose cluster can spare one.
        let far = (0..x.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .map(|i| (i, squared_distance(&x[i], &centroids[assignment[i]])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((i, _)) = far else { return moved };
        centroids[empty] = x[i].clone();
        assignment[i] = empty;
        moved = true;
    }
}

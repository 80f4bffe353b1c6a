use super::LearnError;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` training rows nearest to `query` as `(row index, squared
/// distance)`, closest first. Equal distances are ordered by row index.
pub fn knn_query(
    train: &[Vec<f64>],
    query: &[f64],
    k: usize,
) -> Result<Vec<(usize, f64)>, LearnError> {
    if k == 0 || k > train.len() {
        return Err(LearnError::InvalidK {
            k,
            max: train.len(),
        });
    }
    let mut dists: Vec<(usize, f64)> = train
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != query.len() {
                return Err(LearnError::LengthMismatch {
                    expected: row.len(),
                    found: query.len(),
                });
            }
            Ok((i, squared_distance(row, query)))
        })
        .collect::<Result<_, _>>()?;
    let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, by_distance);
        dists.truncate(k);
    }
    dists.sort_by(by_distance);
    Ok(dists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_and_ties() {
        let train = vec![vec![0.0], vec![10.0]];
        assert_eq!(knn_query(&train, &[1.0], 1).unwrap()[0].0, 0);
        assert_eq!(knn_query(&train, &[5.0], 1).unwrap()[0].0, 0);
        let all = knn_query(&train, &[9.0], 2).unwrap();
        assert_eq!(all.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 0]);
        assert!(matches!(knn_query(&train, &[1.0], 0), Err(LearnError::InvalidK { .. })));
        assert!(matches!(knn_query(&train, &[1.0], 3), Err(LearnError::InvalidK { .. })));
    }

    proptest! {
        #[test]
        fn matches_exhaustive_sort(
            rows in proptest::collection::vec(proptest::collection::vec(-3i32..3, 2), 1..100),
            q in proptest::collection::vec(-3i32..3, 2),
            k_frac in 0.0f64..1.0,
        ) {
            let train: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let query: Vec<f64> = q.iter().map(|&v| v as f64).collect();
            let k = 1 + ((train.len() - 1) as f64 * k_frac) as usize;
            let mut oracle: Vec<(usize, f64)> = train
                .iter()
                .enumerate()
                .map(|(i, r)| (i, r.iter().zip(&query).map(|(a, b)| (a - b).powi(2)).sum()))
                .collect();
            oracle.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            oracle.truncate(k);
            prop_assert_eq!(knn_query(&train, &query, k).unwrap(), oracle);
        }
    }
}

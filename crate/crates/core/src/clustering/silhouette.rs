use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{distance, map_indices, validate_points, ClusterError, DistanceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub per_point: Vec<f64>,
    pub mean: f64,
}

/// Silhouette coefficients with Euclidean distance.
///
/// `a(i)` is the mean distance to the other members of i's cluster, `b(i)`
/// the smallest mean distance to another cluster, and
/// `s(i) = (b - a) / max(a, b)`. Members of singleton clusters score 0.
pub fn silhouette_score<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<Silhouette, ClusterError> {
    validate_points(points)?;
    compute(points.len(), labels, |i, j| distance(points[i].as_ref(), points[j].as_ref()))
}

pub(crate) fn silhouette_from_matrix(matrix: &DistanceMatrix, labels: &[usize]) -> Result<Silhouette, ClusterError> {
    if matrix.len() == 0 {
        return Err(ClusterError::Empty);
    }
    compute(matrix.len(), labels, |i, j| matrix.get(i, j))
}

fn compute(n: usize, labels: &[usize], dist: impl Fn(usize, usize) -> f64 + Sync + Send) -> Result<Silhouette, ClusterError> {
    if labels.len() != n {
        return Err(ClusterError::LabelMismatch { points: n, labels: labels.len() });
    }
    // dense cluster ids in label order
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    if ids.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let dense: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &c in &dense {
        sizes[c] += 1;
    }

    let per_point = map_indices(n, |i| {
        let own = dense[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; sizes.len()];
        for j in 0..n {
            if j != i {
                sums[dense[j]] += dist(i, j);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = sums
            .iter()
            .zip(&sizes)
            .enumerate()
            .filter(|&(c, _)| c != own)
            .map(|(_, (s, &size))| s / size as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    let mean = per_point.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { per_point, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singletons_score_zero() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]];
        let s = silhouette_score(&pts, &[0, 1, 2, 3]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!(s.per_point.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_tight_pairs() {
        // a = 0.1 for every point; b = mean of the two cross distances.
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.1], vec![10.0, 10.0], vec![10.0, 10.1]];
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let b0 = (d([0.0, 0.0], [10.0, 10.0]) + d([0.0, 0.0], [10.0, 10.1])) / 2.0;
        let b1 = (d([0.0, 0.1], [10.0, 10.0]) + d([0.0, 0.1], [10.0, 10.1])) / 2.0;
        let expected = ((1.0 - 0.1 / b0) + (1.0 - 0.1 / b1)) / 2.0;
        assert!((s.mean - expected).abs() < 1e-12);
        assert!((s.mean - 0.9930).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(silhouette_score(&pts, &[0, 0]), Err(ClusterError::SingleCluster)));
        assert!(matches!(silhouette_score(&pts, &[0]), Err(ClusterError::LabelMismatch { .. })));
        let none: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(silhouette_score(&none, &[]), Err(ClusterError::Empty)));
    }

    #[test]
    fn duplicate_points_do_not_produce_nan() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0]];
        let s = silhouette_score(&pts, &[0, 0, 1]).unwrap();
        assert!(s.per_point.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matrix_path_matches_direct() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let direct = silhouette_score(&pts, &labels).unwrap();
        let via = silhouette_from_matrix(&DistanceMatrix::new(&pts), &labels).unwrap();
        assert_eq!(direct, via);
    }
}

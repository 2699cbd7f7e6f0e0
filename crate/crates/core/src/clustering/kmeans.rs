use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{map_indices, squared_distance, validate_points, ClusterError};

/// Trained K-Means state. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from training points to their centroid.
    pub inertia: f64,
    pub seed: u64,
    pub iterations_run: usize,
}

impl CentroidModel {
    /// Checks shape and finiteness.
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.centroids.len() != self.k {
            return Err(format!("k={} but {} centroids", self.k, self.centroids.len()));
        }
        if self.dim == 0 {
            return Err("centroid dimension is 0".into());
        }
        for (i, c) in self.centroids.iter().enumerate() {
            if c.len() != self.dim {
                return Err(format!("centroid {i} has dimension {}, expected {}", c.len(), self.dim));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(format!("centroid {i} is not finite"));
            }
        }
        if !(self.inertia.is_finite() && self.inertia >= 0.0) {
            return Err(format!("inertia {} is not a nonnegative real", self.inertia));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the largest centroid displacement falls below this.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: CentroidModel,
    /// Final label of each training point; equal to re-assigning it with `model`.
    pub labels: Vec<usize>,
    /// Inertia after each Lloyd update step.
    pub inertia_history: Vec<f64>,
}

/// Index of the nearest centroid and its squared distance. Exact ties go to
/// the smaller index.
pub fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn assign_nearest_centroid(x: &[f64], model: &CentroidModel) -> Result<usize, ClusterError> {
    if x.len() != model.dim {
        return Err(ClusterError::DimensionMismatch { index: 0, expected: model.dim, got: x.len() });
    }
    Ok(nearest_centroid(x, &model.centroids).0)
}

fn kmeans_plus_plus<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut min_sq: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), points[first].as_ref()))
        .collect();

    while chosen.len() < k {
        let total: f64 = min_sq.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in min_sq.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the accumulated total
            pick.unwrap_or_else(|| min_sq.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p.as_ref(), points[next].as_ref());
            if d < min_sq[i] {
                min_sq[i] = d;
            }
        }
    }
    chosen.into_iter().map(|i| points[i].as_ref().to_vec()).collect()
}

fn assign_all<P: AsRef<[f64]> + Sync>(points: &[P], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    map_indices(points.len(), |i| nearest_centroid(points[i].as_ref(), centroids))
}

/// Per-cluster means; a cluster left without members keeps its previous centroid.
fn means<P: AsRef<[f64]>>(points: &[P], labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = previous.len();
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }
    for ((s, &c), prev) in sums.iter_mut().zip(&counts).zip(previous) {
        if c > 0 {
            let c = c as f64;
            s.iter_mut().for_each(|v| *v /= c);
        } else {
            s.clone_from(prev);
        }
    }
    sums
}

fn inertia_of<P: AsRef<[f64]>>(points: &[P], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p.as_ref(), &centroids[l]))
        .sum()
}

/// Moves the farthest points (from clusters with at least two members) into
/// empty clusters, lowest empty index first.
fn repair_empty(labels: &mut [usize], sq_dist: &[f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] < 2 {
                continue;
            }
            if far.is_none_or(|f| sq_dist[i] > sq_dist[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[labels[i]] -= 1;
        counts[empty] += 1;
        labels[i] = empty;
    }
}

/// Fits K-Means with k-means++ seeding and Lloyd iterations.
pub fn kmeans_fit<P: AsRef<[f64]> + Sync>(points: &[P], params: KMeansParams) -> Result<KMeansFit, ClusterError> {
    let KMeansParams { k, seed, max_iter, tol } = params;
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let dim = validate_points(points)?;
    let n = points.len();
    if n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let assigned = assign_all(points, &centroids);
        let mut labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let sq: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        repair_empty(&mut labels, &sq, k);

        let updated = means(points, &labels, &centroids);
        let inertia = inertia_of(points, &labels, &updated);
        debug_assert!(
            history.last().is_none_or(|&prev: &f64| inertia <= prev * (1.0 + 1e-12) + 1e-300),
            "inertia increased: {history:?} -> {inertia}"
        );
        history.push(inertia);

        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < tol {
            break;
        }
    }

    let labels: Vec<usize> = assign_all(points, &centroids).into_iter().map(|a| a.0).collect();
    let inertia = inertia_of(points, &labels, &centroids);
    Ok(KMeansFit {
        model: CentroidModel { k, dim, centroids, inertia, seed, iterations_run: iterations },
        labels,
        inertia_history: history,
    })
}

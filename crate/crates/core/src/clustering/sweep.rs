use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::silhouette::silhouette_from_matrix;
use super::{kmeans_fit, validate_points, ClusterError, DistanceMatrix, KMeansParams};

pub const DEFAULT_SILHOUETTE_CAP: usize = 5_000;

// Decorrelates the subsample stream from the K-Means seeding stream.
const SUBSAMPLE_STREAM: u64 = 0x5157_4f55_4554_5445;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub silhouette_cap: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            silhouette_cap: DEFAULT_SILHOUETTE_CAP,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Mean silhouette per k.
    pub scores: BTreeMap<usize, f64>,
    /// K-Means inertia per k.
    pub inertias: BTreeMap<usize, f64>,
    /// Highest mean silhouette; ties go to the smallest k.
    pub best_k: usize,
    pub seed: u64,
    pub silhouette_cap: usize,
    /// Points actually scored (min of n and the cap).
    pub silhouette_sample: usize,
}

impl SweepResult {
    /// `k,silhouette_mean` CSV, one row per k.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,silhouette_mean\n");
        for (k, s) in &self.scores {
            out.push_str(&format!("{k},{s}\n"));
        }
        out
    }
}

/// Fits K-Means for every k in `k_range` and scores each fit by mean
/// silhouette on a seeded subsample shared across k.
pub fn sweep_k<P: AsRef<[f64]> + Sync>(
    points: &[P],
    k_range: RangeInclusive<usize>,
    seed: u64,
    options: SweepOptions,
) -> Result<SweepResult, ClusterError> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || lo > hi {
        return Err(ClusterError::InvalidRange(format!("{lo}..={hi} (need 2 <= min <= max)")));
    }
    validate_points(points)?;
    let n = points.len();
    if n <= hi {
        return Err(ClusterError::InvalidRange(format!("need more than {hi} points, got {n}")));
    }
    if options.silhouette_cap < 2 {
        return Err(ClusterError::InvalidRange("silhouette cap must be >= 2".into()));
    }

    let sample: Vec<usize> = if n > options.silhouette_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSAMPLE_STREAM);
        let mut idx = rand::seq::index::sample(&mut rng, n, options.silhouette_cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let sampled: Vec<&[f64]> = sample.iter().map(|&i| points[i].as_ref()).collect();
    let matrix = DistanceMatrix::new(&sampled);

    let mut scores = BTreeMap::new();
    let mut inertias = BTreeMap::new();
    let mut best: Option<(usize, f64)> = None;
    for k in lo..=hi {
        let at_k = |source| ClusterError::AtK { k, source: Box::new(source) };
        let params = KMeansParams { k, seed, max_iter: options.max_iter, tol: options.tol };
        let fit = kmeans_fit(points, params).map_err(at_k)?;
        let labels: Vec<usize> = sample.iter().map(|&i| fit.labels[i]).collect();
        let score = silhouette_from_matrix(&matrix, &labels).map_err(at_k)?.mean;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
        scores.insert(k, score);
        inertias.insert(k, fit.model.inertia);
    }

    Ok(SweepResult {
        scores,
        inertias,
        best_k: best.expect("non-empty range").0,
        seed,
        silhouette_cap: options.silhouette_cap,
        silhouette_sample: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn boundary_range_and_errors() {
        let pts: Vec<Vec<f64>> = (0..31).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let r = sweep_k(&pts, 2..=30, 1, SweepOptions::default()).unwrap();
        assert_eq!(r.scores.len(), 29);
        assert!(r.scores.contains_key(&2) && r.scores.contains_key(&30));

        assert!(matches!(sweep_k(&pts, 1..=3, 1, SweepOptions::default()), Err(ClusterError::InvalidRange(_))));
        assert!(matches!(sweep_k(&pts, 2..=31, 1, SweepOptions::default()), Err(ClusterError::InvalidRange(_))));
    }

    #[test]
    fn uniform_points_score_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<Vec<f64>> = (0..400).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
        let r = sweep_k(&pts, 2..=10, 3, SweepOptions::default()).unwrap();
        assert!(r.scores.values().all(|&s| s < 0.3), "{:?}", r.scores);
    }

    #[test]
    fn subsampling_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let opts = SweepOptions { silhouette_cap: 50, ..SweepOptions::default() };
        let a = sweep_k(&pts, 2..=4, 8, opts).unwrap();
        let b = sweep_k(&pts, 2..=4, 8, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.silhouette_sample, 50);
        assert!(a.to_csv().starts_with("k,silhouette_mean\n2,"));
    }
}

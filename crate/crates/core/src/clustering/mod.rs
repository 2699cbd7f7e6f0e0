//! K-Means, silhouette analysis, k sweeps, average-linkage clustering and a
//! 2-D PCA projection for inspecting embedding clusters.
//!
//! Every routine is deterministic for fixed inputs and seed. Where work is
//! spread over threads (feature `parallel`), each output element is computed
//! independently and reductions run sequentially in index order.

mod agglomerative;
mod kmeans;
mod pca;
mod silhouette;
mod sweep;

use thiserror::Error;

pub use agglomerative::{agglomerative_fit, LinkageTree, Merge};
pub use kmeans::{assign_nearest_centroid, kmeans_fit, nearest_centroid, CentroidModel, KMeansFit, KMeansParams};
pub use pca::{pca_project_2d, Pca2};
pub use silhouette::{silhouette_score, Silhouette};
pub use sweep::{sweep_k, SweepOptions, SweepResult, DEFAULT_SILHOUETTE_CAP};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no points given")]
    Empty,
    #[error("need at least {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("points have zero dimensions")]
    ZeroDim,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("point {0} has non-finite coordinates")]
    NonFinite(usize),
    #[error("{labels} labels for {points} points")]
    LabelMismatch { points: usize, labels: usize },
    #[error("silhouette needs at least two distinct clusters")]
    SingleCluster,
    #[error("invalid k range: {0}")]
    InvalidRange(String),
    #[error("{what} needs at least {min}, got {got}")]
    Degenerate { what: &'static str, min: usize, got: usize },
    #[error("k={k}: {source}")]
    AtK {
        k: usize,
        #[source]
        source: Box<ClusterError>,
    },
}

/// Checks that all points share one positive dimension and are finite.
/// Returns that dimension.
pub(crate) fn validate_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, ClusterError> {
    let first = points.first().ok_or(ClusterError::Empty)?;
    let dim = first.as_ref().len();
    if dim == 0 {
        return Err(ClusterError::ZeroDim);
    }
    for (index, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(ClusterError::DimensionMismatch { index, expected: dim, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::NonFinite(index));
        }
    }
    Ok(dim)
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Maps `f` over `0..n`, in parallel when the feature is enabled. Output
/// order is always index order.
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Condensed upper-triangle Euclidean distance matrix.
pub(crate) struct DistanceMatrix {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub(crate) fn new<P: AsRef<[f64]> + Sync>(points: &[P]) -> Self {
        let n = points.len();
        let rows = map_indices(n, |i| {
            let pi = points[i].as_ref();
            points[i + 1..].iter().map(|pj| distance(pi, pj.as_ref())).collect()
        });
        Self { n, rows }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.rows[i][j - i - 1],
            std::cmp::Ordering::Greater => self.rows[j][i - j - 1],
            std::cmp::Ordering::Equal => 0.0,
        }
    }
}

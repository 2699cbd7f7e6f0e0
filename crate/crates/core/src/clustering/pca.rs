use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{validate_points, ClusterError};

/// Top-two principal directions of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit-length directions, largest variance first. Each is signed so
    /// that its largest-magnitude loading is positive.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

impl Pca2 {
    pub fn fit<P: AsRef<[f64]>>(points: &[P]) -> Result<Self, ClusterError> {
        let dim = validate_points(points)?;
        let n = points.len();
        if n < 2 {
            return Err(ClusterError::Degenerate { what: "PCA", min: 2, got: n });
        }
        if dim < 2 {
            return Err(ClusterError::Degenerate { what: "PCA dimension", min: 2, got: dim });
        }

        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let centered = DMatrix::from_fn(n, dim, |i, j| points[i].as_ref()[j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n - 1) as f64;
        let eigen = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
        let component = |rank: usize| -> Vec<f64> {
            let col = eigen.eigenvectors.column(order[rank]);
            let mut v: Vec<f64> = col.iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, *x) } else { best });
            if lead.1 < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        };
        Ok(Self {
            mean,
            components: [component(0), component(1)],
            explained_variance: [
                eigen.eigenvalues[order[0]].max(0.0),
                eigen.eigenvalues[order[1]].max(0.0),
            ],
        })
    }

    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let dot = |c: &[f64]| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum::<f64>();
        [dot(&self.components[0]), dot(&self.components[1])]
    }

    /// Maps 2-D coordinates back into the input space.
    pub fn reconstruct(&self, coords: [f64; 2]) -> Vec<f64> {
        self.mean
            .iter()
            .enumerate()
            .map(|(j, m)| m + coords[0] * self.components[0][j] + coords[1] * self.components[1][j])
            .collect()
    }
}

/// Mean-centered projection onto the top two principal directions.
/// Identical points project to the origin.
pub fn pca_project_2d<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<[f64; 2]>, ClusterError> {
    let pca = Pca2::fit(points)?;
    Ok(points.iter().map(|p| pca.project(p.as_ref())).collect())
}

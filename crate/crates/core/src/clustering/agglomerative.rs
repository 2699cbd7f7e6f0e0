use serde::{Deserialize, Serialize};

use super::{validate_points, ClusterError, DistanceMatrix};

/// One merge step. Leaves are `0..n`; the cluster created by step `s` has
/// id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl LinkageTree {
    /// Labels after applying the first `n - k` merges. Clusters are numbered
    /// by their smallest member index.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.leaves;
        let steps = n.saturating_sub(k).min(self.merges.len());
        // union-find over leaves + internal ids
        let mut parent: Vec<usize> = (0..n + steps).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, m) in self.merges.iter().take(steps).enumerate() {
            let node = n + s;
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = node;
            parent[rb] = node;
        }
        let mut label_of_root = std::collections::HashMap::new();
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                let next = label_of_root.len();
                *label_of_root.entry(root).or_insert(next)
            })
            .collect()
    }
}

/// Average-linkage (UPGMA) hierarchy with Euclidean distance, cut to `k`
/// clusters.
///
/// Each step merges the closest pair of active clusters; ties go to the pair
/// with the smallest (lower slot, higher slot) indices, where a merged
/// cluster keeps the lower slot of its two parts.
pub fn agglomerative_fit<P: AsRef<[f64]> + Sync>(points: &[P], k: usize) -> Result<(Vec<usize>, LinkageTree), ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    validate_points(points)?;
    let n = points.len();
    if n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }

    let condensed = DistanceMatrix::new(points);
    let mut d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| condensed.get(i, j)).collect()).collect();
    drop(condensed);

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node_id: Vec<usize> = (0..n).collect();

    let nearest = |d: &Vec<Vec<f64>>, active: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..d.len() {
            if j != i && active[j] && d[i][j] < best.0 {
                best = (d[i][j], j);
            }
        }
        best
    };
    let mut nn: Vec<(f64, usize)> = (0..n).map(|i| nearest(&d, &active, i)).collect();

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            let (dist, j) = nn[i];
            let cand = (dist, i.min(j), i.max(j));
            let better = match pick {
                None => true,
                Some(p) => cand.0 < p.0 || (cand.0 == p.0 && (cand.1, cand.2) < (p.1, p.2)),
            };
            if better {
                pick = Some(cand);
            }
        }
        let (dist, a, b) = pick.expect("two active clusters remain");

        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for x in 0..n {
            if active[x] && x != a && x != b {
                let merged = (sa * d[a][x] + sb * d[b][x]) / (sa + sb);
                d[a][x] = merged;
                d[x][a] = merged;
            }
        }
        active[b] = false;
        let (id_a, id_b) = (node_id[a], node_id[b]);
        merges.push(Merge { a: id_a.min(id_b), b: id_a.max(id_b), distance: dist, size: size[a] + size[b] });
        size[a] += size[b];
        node_id[a] = n + step;

        for x in 0..n {
            if !active[x] {
                continue;
            }
            if x == a || nn[x].1 == a || nn[x].1 == b {
                nn[x] = nearest(&d, &active, x);
            } else if d[x][a] < nn[x].0 || (d[x][a] == nn[x].0 && a < nn[x].1) {
                nn[x] = (d[x][a], a);
            }
        }
    }

    let tree = LinkageTree { leaves: n, merges };
    Ok((tree.cut(k), tree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_pair_merges_first() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0]];
        let (labels, tree) = agglomerative_fit(&pts, 2).unwrap();
        assert_eq!(tree.merges[0], Merge { a: 0, b: 1, distance: 1.0, size: 2 });
        // average of |0-10| and |1-10|
        assert_eq!(tree.merges[1], Merge { a: 2, b: 3, distance: 9.5, size: 3 });
        assert_eq!(labels, vec![0, 0, 1]);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = vec![vec![0.0], vec![4.0], vec![1.0], vec![9.0]];
        let (labels, tree) = agglomerative_fit(&pts, 4).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(tree.merges.len(), 3);
        assert_eq!(tree.cut(1), vec![0, 0, 0, 0]);
    }

    #[test]
    fn ties_take_smallest_pair() {
        // three equidistant merges available at distance 1
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let (_, tree) = agglomerative_fit(&pts, 1).unwrap();
        assert_eq!((tree.merges[0].a, tree.merges[0].b), (0, 1));
    }

    #[test]
    fn errors() {
        assert!(matches!(agglomerative_fit(&[vec![0.0]], 2), Err(ClusterError::TooFewPoints { .. })));
        assert!(matches!(agglomerative_fit(&[vec![0.0]], 0), Err(ClusterError::ZeroK)));
    }

    #[test]
    fn merge_distances_non_decreasing() {
        let pts: Vec<Vec<f64>> = (0..60).map(|i| vec![((i * 37) % 17) as f64 * 0.3, ((i * 11) % 13) as f64]).collect();
        let (_, tree) = agglomerative_fit(&pts, 3).unwrap();
        assert_eq!(tree.merges.len(), 59);
        assert!(tree.merges.windows(2).all(|w| w[1].distance >= w[0].distance - 1e-12));
        assert_eq!(tree.merges.last().unwrap().size, 60);
    }
}

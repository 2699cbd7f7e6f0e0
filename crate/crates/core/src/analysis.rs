//! Benchmark composition of clusters and cluster dominance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BenchmarkId;

/// Share below which a dominant benchmark is reported as weak.
pub const DEFAULT_MIN_DOMINANCE: f64 = 0.4;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("benchmark {0} is not in the declared benchmark set")]
    UnknownBenchmark(BenchmarkId),
    #[error("cluster index {index} out of range for K={k}")]
    ClusterOutOfRange { index: usize, k: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("every cluster is empty")]
    AllEmpty,
}

/// Cluster x benchmark count matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDistribution {
    pub benchmarks: Vec<BenchmarkId>,
    /// `counts[k][j]`: prompts in cluster k from `benchmarks[j]`.
    pub counts: Vec<Vec<usize>>,
}

impl BenchmarkDistribution {
    pub fn clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn cluster_size(&self, k: usize) -> usize {
        self.counts[k].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub benchmarks: Vec<BenchmarkId>,
    pub proportions: Vec<Vec<f64>>,
    pub empty: Vec<bool>,
    /// Dominant benchmark and its share, `None` for empty clusters.
    pub dominant: Vec<Option<(BenchmarkId, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBenchmarkMap {
    pub map: BTreeMap<usize, BenchmarkId>,
    pub empty_clusters: Vec<usize>,
    /// Clusters whose dominant share is below the configured threshold.
    pub weak_clusters: Vec<(usize, f64)>,
}

pub fn count_distribution(
    records: &[(usize, BenchmarkId)],
    k: usize,
    benchmarks: &[BenchmarkId],
) -> Result<BenchmarkDistribution, AnalysisError> {
    let column: HashMap<&BenchmarkId, usize> = benchmarks.iter().enumerate().map(|(j, b)| (b, j)).collect();
    let mut counts = vec![vec![0usize; benchmarks.len()]; k];
    for (cluster, benchmark) in records {
        if *cluster >= k {
            return Err(AnalysisError::ClusterOutOfRange { index: *cluster, k });
        }
        let j = *column.get(benchmark).ok_or_else(|| AnalysisError::UnknownBenchmark(benchmark.clone()))?;
        counts[*cluster][j] += 1;
    }
    Ok(BenchmarkDistribution { benchmarks: benchmarks.to_vec(), counts })
}

/// Row-normalized counts. Empty rows stay all-zero and are flagged.
pub fn proportions(dist: &BenchmarkDistribution) -> ClusterProfile {
    let mut props = Vec::with_capacity(dist.clusters());
    let mut empty = Vec::with_capacity(dist.clusters());
    let mut dominant = Vec::with_capacity(dist.clusters());
    for (k, row) in dist.counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            props.push(vec![0.0; row.len()]);
            empty.push(true);
            dominant.push(None);
            continue;
        }
        props.push(row.iter().map(|&c| c as f64 / total as f64).collect());
        empty.push(false);
        let b = dominant_benchmark(dist, k).expect("row is non-empty");
        let j = dist.benchmarks.iter().position(|x| *x == b).expect("dominant is a column");
        dominant.push(Some((b, row[j] as f64 / total as f64)));
    }
    ClusterProfile { benchmarks: dist.benchmarks.clone(), proportions: props, empty, dominant }
}

/// Benchmark with the largest count in cluster `k`; ties go to the
/// lexicographically smallest name, independent of column order.
pub fn dominant_benchmark(dist: &BenchmarkDistribution, k: usize) -> Result<BenchmarkId, AnalysisError> {
    let row = dist
        .counts
        .get(k)
        .ok_or(AnalysisError::ClusterOutOfRange { index: k, k: dist.clusters() })?;
    let mut best: Option<(usize, &BenchmarkId)> = None;
    for (&count, name) in row.iter().zip(&dist.benchmarks) {
        if count == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((c, n)) => count > c || (count == c && name < n),
        };
        if better {
            best = Some((count, name));
        }
    }
    best.map(|(_, b)| b.clone()).ok_or(AnalysisError::EmptyCluster(k))
}

pub fn build_cluster_benchmark_map(dist: &BenchmarkDistribution, min_dominance: f64) -> Result<ClusterBenchmarkMap, AnalysisError> {
    let mut map = BTreeMap::new();
    let mut empty_clusters = Vec::new();
    let mut weak_clusters = Vec::new();
    for k in 0..dist.clusters() {
        match dominant_benchmark(dist, k) {
            Ok(b) => {
                let j = dist.benchmarks.iter().position(|x| *x == b).expect("dominant is a column");
                let share = dist.counts[k][j] as f64 / dist.cluster_size(k) as f64;
                if share < min_dominance {
                    weak_clusters.push((k, share));
                }
                map.insert(k, b);
            }
            Err(AnalysisError::EmptyCluster(_)) => empty_clusters.push(k),
            Err(e) => return Err(e),
        }
    }
    if map.is_empty() {
        return Err(AnalysisError::AllEmpty);
    }
    Ok(ClusterBenchmarkMap { map, empty_clusters, weak_clusters })
}

/// `cluster,benchmark,count,proportion,dominant` CSV, one row per cell.
pub fn profile_csv(dist: &BenchmarkDistribution) -> String {
    let profile = proportions(dist);
    let mut out = String::from("cluster,benchmark,count,proportion,dominant\n");
    for (k, row) in dist.counts.iter().enumerate() {
        let dominant = profile.dominant[k].as_ref().map(|(b, _)| b);
        for (j, b) in dist.benchmarks.iter().enumerate() {
            out.push_str(&format!(
                "{k},{b},{},{},{}\n",
                row[j],
                profile.proportions[k][j],
                dominant == Some(b)
            ));
        }
    }
    out
}

//! Router training, persistence and query routing.
//!
//! Training embeds a train-split corpus, clusters it, tags every non-empty
//! cluster with its dominant benchmark and records the best registry model
//! per benchmark. Routing embeds a prompt, finds the nearest centroid, and
//! sends the prompt to the live registry's best enabled model for that
//! cluster's benchmark. Unmapped clusters and benchmarks without an enabled
//! scorer fall back to the enabled model with the best mean score.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, BenchmarkDistribution, ClusterBenchmarkMap};
use crate::clustering::{
    self, kmeans_fit, nearest_centroid, pca_project_2d, silhouette_score, sweep_k, CentroidModel, ClusterError,
    KMeansParams, SweepOptions, SweepResult,
};
use crate::corpus::{corpus_hash, BenchmarkId, CorpusError, PromptRecord, Split};
use crate::embedding::{embed_batch, EmbedError, Embedder, EmbedderFingerprint, EmbeddingCache, EmbeddingVector};
use crate::registry::{ModelCard, Registry, RegistryError};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("corpus stage: {0}")]
    Corpus(#[from] CorpusError),
    #[error("corpus stage: record {0} is from the test split")]
    TestRecordInCorpus(String),
    #[error("corpus stage: training corpus is empty")]
    EmptyCorpus,
    #[error("embedding stage: {0}")]
    Embedding(#[from] EmbedError),
    #[error("clustering stage: {0}")]
    Clustering(#[from] ClusterError),
    #[error("analysis stage: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("registry stage: {0}")]
    Registry(#[from] RegistryError),
    #[error("registry stage: registry has no enabled models")]
    EmptyRegistry,
    #[error("registry stage: no enabled model is scored on {}", .0.iter().map(|b| b.as_str()).collect::<Vec<_>>().join(", "))]
    Unmappable(Vec<BenchmarkId>),
    #[error("artifact was trained with embedder {artifact}, active embedder is {active}")]
    FingerprintMismatch {
        artifact: EmbedderFingerprint,
        active: EmbedderFingerprint,
    },
    #[error("artifact version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("invalid artifact: {0}")]
    Invalid(String),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("artifact i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact stores no training embeddings; retrain with embeddings kept")]
    NoStoredEmbeddings,
    #[error("k_neighbors must be >= 1")]
    ZeroNeighbors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub corpus_hash: String,
    pub seed: u64,
    pub k: usize,
    pub silhouette_mean: Option<f64>,
    pub train_size: usize,
    pub benchmarks: Vec<BenchmarkId>,
    pub empty_clusters: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BTreeMap<usize, f64>>,
}

/// Stored training embeddings for neighbor-vote routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnIndex {
    pub embeddings: Vec<Vec<f64>>,
    pub benchmarks: Vec<BenchmarkId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterArtifact {
    pub version: u32,
    pub fingerprint: EmbedderFingerprint,
    #[serde(rename = "kmeans")]
    pub centroid_model: CentroidModel,
    #[serde(rename = "cluster_map")]
    pub cluster_to_benchmark: BTreeMap<usize, BenchmarkId>,
    #[serde(rename = "model_map")]
    pub benchmark_to_model: BTreeMap<BenchmarkId, String>,
    pub meta: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
    pub cluster: usize,
    /// Dominant benchmark of the cluster (or neighbor vote); `None` when
    /// the cluster has no mapping.
    pub benchmark: Option<BenchmarkId>,
    pub model_id: String,
    /// Euclidean distance from the prompt embedding to the chosen centroid.
    pub distance: f64,
    pub fallback_used: bool,
}

impl RouterArtifact {
    pub fn validate(&self) -> Result<(), RouterError> {
        if self.version != ARTIFACT_VERSION {
            return Err(RouterError::VersionMismatch { found: self.version.into(), supported: ARTIFACT_VERSION });
        }
        let model = &self.centroid_model;
        model.validate().map_err(RouterError::Invalid)?;
        if self.fingerprint.dim != model.dim {
            return Err(RouterError::Invalid(format!(
                "embedder dim {} does not match centroid dim {}",
                self.fingerprint.dim, model.dim
            )));
        }
        if self.meta.k != model.k {
            return Err(RouterError::Invalid(format!("meta k {} does not match model k {}", self.meta.k, model.k)));
        }
        for (&cluster, b) in &self.cluster_to_benchmark {
            if cluster >= model.k {
                return Err(RouterError::Invalid(format!("cluster {cluster} out of range for k={}", model.k)));
            }
            if !self.benchmark_to_model.contains_key(b) {
                return Err(RouterError::Invalid(format!("benchmark {b} has no model mapping")));
            }
        }
        for cluster in 0..model.k {
            let mapped = self.cluster_to_benchmark.contains_key(&cluster);
            let empty = self.meta.empty_clusters.contains(&cluster);
            if mapped == empty {
                return Err(RouterError::Invalid(format!("cluster {cluster} must be either mapped or listed empty")));
            }
        }
        if let Some(knn) = &self.knn {
            if knn.embeddings.len() != knn.benchmarks.len() {
                return Err(RouterError::Invalid("knn embeddings and labels differ in length".into()));
            }
            if let Some(bad) = knn.embeddings.iter().position(|e| e.len() != model.dim || e.iter().any(|v| !v.is_finite())) {
                return Err(RouterError::Invalid(format!("knn embedding {bad} has wrong dimension or non-finite values")));
            }
        }
        Ok(())
    }

    /// Checks that every mapped benchmark resolves to a model in `registry`.
    pub fn check_registry(&self, registry: &Registry) -> Result<(), RouterError> {
        let missing: Vec<BenchmarkId> = self
            .benchmark_to_model
            .iter()
            .filter(|(_, m)| registry.get(m).is_none())
            .map(|(b, _)| b.clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(RouterError::Unmappable(missing))
        }
    }

    /// Canonical JSON: sorted keys, shortest round-trip floats.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("artifact serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, RouterError> {
        let value: serde_json::Value = serde_json::from_str(json).map_err(|e| RouterError::Corrupt(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| RouterError::Corrupt("missing integer `version`".into()))?;
        if version != u64::from(ARTIFACT_VERSION) {
            return Err(RouterError::VersionMismatch { found: version, supported: ARTIFACT_VERSION });
        }
        let artifact: RouterArtifact = serde_json::from_value(value).map_err(|e| RouterError::Corrupt(e.to_string()))?;
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), RouterError> {
        self.validate()?;
        fs::write(path, self.to_canonical_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RouterError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    Sweep(RangeInclusive<usize>),
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub k: KChoice,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub silhouette_cap: usize,
    pub min_dominance: f64,
    /// Keep training embeddings in the artifact for neighbor-vote routing.
    pub store_embeddings: bool,
}

impl TrainOptions {
    pub fn new(k: KChoice, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
            silhouette_cap: clustering::DEFAULT_SILHOUETTE_CAP,
            min_dominance: analysis::DEFAULT_MIN_DOMINANCE,
            store_embeddings: false,
        }
    }
}

/// Trained artifact plus the intermediate products worth reporting.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: RouterArtifact,
    pub sweep: Option<SweepResult>,
    pub distribution: BenchmarkDistribution,
    pub cluster_map: ClusterBenchmarkMap,
    pub labels: Vec<usize>,
    pub embeddings: Vec<EmbeddingVector>,
    pub record_benchmarks: Vec<BenchmarkId>,
}

impl TrainOutcome {
    /// `x,y,cluster,benchmark` CSV of the 2-D PCA projection of the
    /// training embeddings.
    pub fn projection_csv(&self) -> Result<String, RouterError> {
        let coords = pca_project_2d(&self.embeddings)?;
        let mut out = String::from("x,y,cluster,benchmark\n");
        for ((xy, label), b) in coords.iter().zip(&self.labels).zip(&self.record_benchmarks) {
            out.push_str(&format!("{},{},{label},{b}\n", xy[0], xy[1]));
        }
        Ok(out)
    }
}

pub fn train_router<E: Embedder + ?Sized>(
    corpus: &[PromptRecord],
    embedder: &E,
    registry: &Registry,
    options: &TrainOptions,
    cache: Option<&EmbeddingCache>,
) -> Result<TrainOutcome, RouterError> {
    if let Some(r) = corpus.iter().find(|r| r.split == Split::Test) {
        return Err(RouterError::TestRecordInCorpus(r.id.clone()));
    }
    if corpus.is_empty() {
        return Err(RouterError::EmptyCorpus);
    }
    if registry.enabled_models().next().is_none() {
        return Err(RouterError::EmptyRegistry);
    }

    let texts: Vec<&str> = corpus.iter().map(|r| r.text.as_str()).collect();
    let embeddings = match cache {
        Some(cache) => embed_batch(embedder, &texts, cache)?,
        None => embedder.embed_many(&texts)?,
    };

    let sweep_options = SweepOptions { silhouette_cap: options.silhouette_cap, max_iter: options.max_iter, tol: options.tol };
    let (k, sweep) = match &options.k {
        KChoice::Fixed(k) => (*k, None),
        KChoice::Sweep(range) => {
            let result = sweep_k(&embeddings, range.clone(), options.seed, sweep_options)?;
            (result.best_k, Some(result))
        }
    };
    let params = KMeansParams { k, seed: options.seed, max_iter: options.max_iter, tol: options.tol };
    let fit = kmeans_fit(&embeddings, params)?;

    let silhouette_mean = match &sweep {
        Some(s) => s.scores.get(&k).copied(),
        None if k >= 2 => {
            // fixed k: score the same seeded subsample a one-point sweep would use
            let one = sweep_k(&embeddings, k..=k, options.seed, sweep_options);
            match one {
                Ok(r) => r.scores.get(&k).copied(),
                Err(_) => silhouette_score(&embeddings, &fit.labels).ok().map(|s| s.mean),
            }
        }
        None => None,
    };

    let benchmarks: Vec<BenchmarkId> = corpus.iter().map(|r| r.benchmark.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let pairs: Vec<(usize, BenchmarkId)> = fit.labels.iter().copied().zip(corpus.iter().map(|r| r.benchmark.clone())).collect();
    let distribution = analysis::count_distribution(&pairs, k, &benchmarks)?;
    let cluster_map = analysis::build_cluster_benchmark_map(&distribution, options.min_dominance)?;

    let mut benchmark_to_model = BTreeMap::new();
    let mut unmappable = Vec::new();
    for b in cluster_map.map.values().collect::<BTreeSet<_>>() {
        match registry.best_model_for_benchmark(b) {
            Ok(card) => {
                benchmark_to_model.insert(b.clone(), card.model_id.clone());
            }
            Err(RegistryError::NoScoredModel(_)) => unmappable.push(b.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    if !unmappable.is_empty() {
        return Err(RouterError::Unmappable(unmappable));
    }

    let knn = options.store_embeddings.then(|| KnnIndex {
        embeddings: embeddings.iter().map(|e| e.as_slice().to_vec()).collect(),
        benchmarks: corpus.iter().map(|r| r.benchmark.clone()).collect(),
    });
    let artifact = RouterArtifact {
        version: ARTIFACT_VERSION,
        fingerprint: embedder.fingerprint().clone(),
        centroid_model: fit.model,
        cluster_to_benchmark: cluster_map.map.clone(),
        benchmark_to_model,
        meta: TrainingMeta {
            corpus_hash: corpus_hash(corpus),
            seed: options.seed,
            k,
            silhouette_mean,
            train_size: corpus.len(),
            benchmarks,
            empty_clusters: cluster_map.empty_clusters.clone(),
            sweep: sweep.as_ref().map(|s| s.scores.clone()),
        },
        knn,
    };
    artifact.validate()?;
    Ok(TrainOutcome {
        artifact,
        sweep,
        distribution,
        cluster_map,
        labels: fit.labels,
        embeddings,
        record_benchmarks: corpus.iter().map(|r| r.benchmark.clone()).collect(),
    })
}

fn ensure_fingerprint<E: Embedder + ?Sized>(artifact: &RouterArtifact, embedder: &E) -> Result<(), RouterError> {
    if embedder.fingerprint() != &artifact.fingerprint {
        return Err(RouterError::FingerprintMismatch {
            artifact: artifact.fingerprint.clone(),
            active: embedder.fingerprint().clone(),
        });
    }
    Ok(())
}

fn choose_model<'r>(registry: &'r Registry, benchmark: Option<&BenchmarkId>) -> Result<(&'r ModelCard, bool), RouterError> {
    if let Some(b) = benchmark {
        match registry.best_model_for_benchmark(b) {
            Ok(card) => return Ok((card, false)),
            Err(RegistryError::NoScoredModel(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    match registry.fallback_model() {
        Ok(card) => Ok((card, true)),
        Err(RegistryError::NoEnabledModel) => Err(RouterError::EmptyRegistry),
        Err(e) => Err(e.into()),
    }
}

/// Routes an already-embedded prompt with the nearest-centroid rule.
pub fn route_embedding(
    artifact: &RouterArtifact,
    registry: &Registry,
    embedding: &[f64],
    prompt_id: Option<&str>,
) -> Result<RoutingDecision, RouterError> {
    let model = &artifact.centroid_model;
    if embedding.len() != model.dim {
        return Err(RouterError::Embedding(EmbedError::DimensionMismatch { expected: model.dim, got: embedding.len() }));
    }
    let (cluster, sq) = nearest_centroid(embedding, &model.centroids);
    let benchmark = artifact.cluster_to_benchmark.get(&cluster).cloned();
    let (card, fallback_used) = choose_model(registry, benchmark.as_ref())?;
    Ok(RoutingDecision {
        prompt_id: prompt_id.map(str::to_string),
        cluster,
        benchmark,
        model_id: card.model_id.clone(),
        distance: sq.sqrt(),
        fallback_used,
    })
}

pub fn route<E: Embedder + ?Sized>(
    artifact: &RouterArtifact,
    registry: &Registry,
    embedder: &E,
    text: &str,
) -> Result<RoutingDecision, RouterError> {
    ensure_fingerprint(artifact, embedder)?;
    let embedding = embedder.embed(text)?;
    route_embedding(artifact, registry, embedding.as_slice(), None)
}

/// Routes `(prompt_id, text)` pairs; emits exactly one decision per prompt.
pub fn route_batch<E: Embedder + ?Sized>(
    artifact: &RouterArtifact,
    registry: &Registry,
    embedder: &E,
    prompts: &[(&str, &str)],
) -> Result<Vec<RoutingDecision>, RouterError> {
    ensure_fingerprint(artifact, embedder)?;
    let texts: Vec<&str> = prompts.iter().map(|p| p.1).collect();
    let embeddings = embedder.embed_many(&texts)?;
    prompts
        .iter()
        .zip(&embeddings)
        .map(|((id, _), e)| route_embedding(artifact, registry, e.as_slice(), Some(id)))
        .collect()
}

/// Neighbor-vote routing over stored training embeddings.
///
/// The benchmark is the majority label among the `k_neighbors` nearest
/// training points (distance ties by index); vote ties go to the smaller mean
/// neighbor distance, then the smaller benchmark name. The reported cluster
/// and distance are those of the nearest centroid.
pub fn knn_route<E: Embedder + ?Sized>(
    artifact: &RouterArtifact,
    registry: &Registry,
    embedder: &E,
    text: &str,
    k_neighbors: usize,
) -> Result<RoutingDecision, RouterError> {
    ensure_fingerprint(artifact, embedder)?;
    let embedding = embedder.embed(text)?;
    knn_route_embedding(artifact, registry, embedding.as_slice(), k_neighbors, None)
}

pub fn knn_route_embedding(
    artifact: &RouterArtifact,
    registry: &Registry,
    embedding: &[f64],
    k_neighbors: usize,
    prompt_id: Option<&str>,
) -> Result<RoutingDecision, RouterError> {
    let knn = artifact.knn.as_ref().ok_or(RouterError::NoStoredEmbeddings)?;
    if k_neighbors == 0 {
        return Err(RouterError::ZeroNeighbors);
    }
    if knn.embeddings.is_empty() {
        return Err(RouterError::NoStoredEmbeddings);
    }
    let model = &artifact.centroid_model;
    if embedding.len() != model.dim {
        return Err(RouterError::Embedding(EmbedError::DimensionMismatch { expected: model.dim, got: embedding.len() }));
    }

    let mut by_distance: Vec<(f64, usize)> = knn
        .embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| (clustering_distance(embedding, e), i))
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut votes: BTreeMap<&BenchmarkId, (usize, f64)> = BTreeMap::new();
    for &(d, i) in by_distance.iter().take(k_neighbors) {
        let entry = votes.entry(&knn.benchmarks[i]).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += d;
    }
    // BTreeMap order is name order, so strict comparisons keep the smaller name on full ties.
    let mut winner: Option<(&BenchmarkId, usize, f64)> = None;
    for (b, (count, total)) in votes {
        let mean = total / count as f64;
        let better = match winner {
            None => true,
            Some((_, c, m)) => count > c || (count == c && mean < m),
        };
        if better {
            winner = Some((b, count, mean));
        }
    }
    let benchmark = winner.map(|w| w.0.clone());
    let (cluster, sq) = nearest_centroid(embedding, &model.centroids);
    let (card, fallback_used) = choose_model(registry, benchmark.as_ref())?;
    Ok(RoutingDecision {
        prompt_id: prompt_id.map(str::to_string),
        cluster,
        benchmark,
        model_id: card.model_id.clone(),
        distance: sq.sqrt(),
        fallback_used,
    })
}

fn clustering_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReferenceAnswer;
    use crate::embedding::{AnchoredEmbedder, TestEmbedder};

    fn b(name: &str) -> BenchmarkId {
        BenchmarkId::new(name).unwrap()
    }

    fn card(id: &str, scores: &[(&str, f64)]) -> ModelCard {
        ModelCard {
            model_id: id.into(),
            endpoint: format!("mock:{id}"),
            benchmark_scores: scores.iter().map(|(n, s)| (b(n), *s)).collect(),
            price_per_mtok_in: 0.0,
            price_per_mtok_out: 0.0,
            enabled: true,
        }
    }

    fn three_way() -> (Vec<PromptRecord>, AnchoredEmbedder, Registry) {
        let names = ["alpha", "beta", "gamma"];
        let embedder = AnchoredEmbedder::new(names.iter().map(|n| vec![n.to_string()]).collect(), 0.3, 16).unwrap();
        let corpus = names
            .iter()
            .flat_map(|n| {
                (0..20).map(move |i| PromptRecord {
                    id: format!("{}/train/{i}", n.to_uppercase()),
                    text: format!("{n} question number {i}"),
                    benchmark: BenchmarkId::new(n).unwrap(),
                    subcategory: None,
                    reference: ReferenceAnswer::parse("A"),
                    split: Split::Train,
                })
            })
            .collect();
        let mut registry = Registry::new();
        registry.register_model(card("model-a", &[("ALPHA", 95.0), ("BETA", 50.0), ("GAMMA", 50.0)])).unwrap();
        registry.register_model(card("model-b", &[("ALPHA", 50.0), ("BETA", 95.0), ("GAMMA", 50.0)])).unwrap();
        registry.register_model(card("model-c", &[("ALPHA", 50.0), ("BETA", 50.0), ("GAMMA", 95.0)])).unwrap();
        (corpus, embedder, registry)
    }

    #[test]
    fn separable_corpus_maps_each_cluster_to_one_benchmark() {
        let (corpus, embedder, registry) = three_way();
        let out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 4), None).unwrap();
        // brute force: every cluster's members share one benchmark
        for k in 0..3 {
            let members: BTreeSet<&BenchmarkId> = out.labels.iter().zip(&corpus).filter(|(&l, _)| l == k).map(|(_, r)| &r.benchmark).collect();
            assert_eq!(members.len(), 1);
        }
        let models: BTreeSet<&String> = out.artifact.benchmark_to_model.values().collect();
        assert_eq!(models.len(), 3);
        assert_eq!(out.artifact.benchmark_to_model[&b("BETA")], "model-b");

        let d = route(&out.artifact, &registry, &embedder, "a fresh gamma prompt").unwrap();
        assert_eq!(d.benchmark, Some(b("GAMMA")));
        assert_eq!(d.model_id, "model-c");
        assert!(!d.fallback_used);
    }

    #[test]
    fn training_is_deterministic() {
        let (corpus, embedder, registry) = three_way();
        let opts = TrainOptions::new(KChoice::Sweep(2..=5), 11);
        let a = train_router(&corpus, &embedder, &registry, &opts, None).unwrap();
        let b = train_router(&corpus, &embedder, &registry, &opts, None).unwrap();
        assert_eq!(a.artifact.to_canonical_json(), b.artifact.to_canonical_json());
        assert_eq!(a.artifact.meta.k, 3);
    }

    #[test]
    fn test_records_rejected_before_fitting() {
        let (mut corpus, embedder, registry) = three_way();
        corpus[5].split = Split::Test;
        let err = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 0), None).unwrap_err();
        assert!(matches!(err, RouterError::TestRecordInCorpus(_)));
        assert!(err.to_string().starts_with("corpus stage"));
    }

    #[test]
    fn unmappable_benchmark_listed() {
        let (corpus, embedder, _) = three_way();
        let mut registry = Registry::new();
        registry.register_model(card("only-alpha", &[("ALPHA", 70.0)])).unwrap();
        match train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 0), None) {
            Err(RouterError::Unmappable(list)) => assert_eq!(list, vec![b("BETA"), b("GAMMA")]),
            other => panic!("expected unmappable error, got {other:?}"),
        }
    }

    #[test]
    fn single_cluster_single_model() {
        let embedder = TestEmbedder::new(8);
        let corpus: Vec<PromptRecord> = (0..5)
            .map(|i| PromptRecord {
                id: format!("BBH/train/{i}"),
                text: format!("prompt {i}"),
                benchmark: b("BBH"),
                subcategory: None,
                reference: ReferenceAnswer::parse("A"),
                split: Split::Train,
            })
            .collect();
        let mut registry = Registry::new();
        registry.register_model(card("solo", &[("BBH", 60.0)])).unwrap();
        let out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(1), 0), None).unwrap();
        let text = "some query";
        let d = route(&out.artifact, &registry, &embedder, text).unwrap();
        assert_eq!(d.model_id, "solo");
        let x = embedder.embed(text).unwrap();
        let expected = clustering_distance(x.as_slice(), &out.artifact.centroid_model.centroids[0]);
        assert!((d.distance - expected).abs() < 1e-12);
    }

    #[test]
    fn fallback_when_unmapped_or_disabled() {
        let (corpus, embedder, mut registry) = three_way();
        let mut out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 4), None).unwrap();
        let gamma_cluster = route(&out.artifact, &registry, &embedder, "gamma").unwrap().cluster;

        registry.register_model(card("generalist", &[("DELTA", 99.0)])).unwrap();
        // drop the mapping -> cluster counts as empty
        out.artifact.cluster_to_benchmark.remove(&gamma_cluster);
        out.artifact.meta.empty_clusters.push(gamma_cluster);
        let d = route(&out.artifact, &registry, &embedder, "gamma").unwrap();
        assert!(d.fallback_used);
        assert_eq!(d.benchmark, None);
        assert_eq!(d.model_id, "generalist");

        for id in ["model-a", "model-b", "model-c"] {
            registry.set_enabled(id, false).unwrap();
        }
        let d = route(&out.artifact, &registry, &embedder, "alpha").unwrap();
        assert!(d.fallback_used);
        assert_eq!(d.model_id, "generalist");

        registry.set_enabled("generalist", false).unwrap();
        assert!(matches!(route(&out.artifact, &registry, &embedder, "alpha"), Err(RouterError::EmptyRegistry)));
    }

    #[test]
    fn fingerprint_mismatch_rejected() {
        let (corpus, embedder, registry) = three_way();
        let out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 4), None).unwrap();
        let other = TestEmbedder::new(16);
        assert!(matches!(route(&out.artifact, &registry, &other, "alpha"), Err(RouterError::FingerprintMismatch { .. })));
    }

    #[test]
    fn knn_votes() {
        let (corpus, embedder, registry) = three_way();
        let mut opts = TrainOptions::new(KChoice::Fixed(3), 4);
        let out = train_router(&corpus, &embedder, &registry, &opts, None).unwrap();
        assert!(matches!(knn_route(&out.artifact, &registry, &embedder, "alpha", 3), Err(RouterError::NoStoredEmbeddings)));

        opts.store_embeddings = true;
        let out = train_router(&corpus, &embedder, &registry, &opts, None).unwrap();
        let d = knn_route(&out.artifact, &registry, &embedder, &corpus[0].text, 1).unwrap();
        assert_eq!(d.benchmark, Some(corpus[0].benchmark.clone()));
        assert_eq!(d.model_id, "model-a");
        assert!(matches!(knn_route(&out.artifact, &registry, &embedder, "alpha", 0), Err(RouterError::ZeroNeighbors)));
    }

    fn hand_artifact(points: Vec<(Vec<f64>, &str)>) -> RouterArtifact {
        let dim = points[0].0.len();
        RouterArtifact {
            version: ARTIFACT_VERSION,
            fingerprint: EmbedderFingerprint { provider_name: "hand".into(), model_name: "x".into(), dim },
            centroid_model: CentroidModel { k: 1, dim, centroids: vec![vec![0.0; dim]], inertia: 0.0, seed: 0, iterations_run: 0 },
            cluster_to_benchmark: BTreeMap::from([(0, b("MMLU"))]),
            benchmark_to_model: BTreeMap::from([(b("MMLU"), "Qwen2.5-72B".to_string())]),
            meta: TrainingMeta {
                corpus_hash: String::new(),
                seed: 0,
                k: 1,
                silhouette_mean: None,
                train_size: points.len(),
                benchmarks: vec![b("BBH"), b("MMLU")],
                empty_clusters: vec![],
                sweep: None,
            },
            knn: Some(KnnIndex {
                embeddings: points.iter().map(|p| p.0.clone()).collect(),
                benchmarks: points.iter().map(|p| b(p.1)).collect(),
            }),
        }
    }

    #[test]
    fn knn_majority_and_tie_break() {
        let registry = Registry::shipped();
        let art = hand_artifact(vec![(vec![1.0], "MMLU"), (vec![2.0], "MMLU"), (vec![3.0], "BBH"), (vec![50.0], "BBH")]);
        let d = knn_route_embedding(&art, &registry, &[1.5], 3, None).unwrap();
        assert_eq!(d.benchmark, Some(b("MMLU")));
        assert_eq!(d.model_id, "Qwen2.5-72B");

        // query 0: MMLU at 2, 3 (mean 2.5); BBH at 1.5, 2.5 (mean 2.0)
        let art = hand_artifact(vec![(vec![2.0], "MMLU"), (vec![-3.0], "MMLU"), (vec![1.5], "BBH"), (vec![-2.5], "BBH")]);
        let d = knn_route_embedding(&art, &registry, &[0.0], 4, None).unwrap();
        assert_eq!(d.benchmark, Some(b("BBH")));
        assert_eq!(d.model_id, "Deepseek-67B");
    }

    #[test]
    fn artifact_roundtrip_and_tampering() {
        let (corpus, embedder, registry) = three_way();
        let out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 4), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        out.artifact.save(&path).unwrap();
        let back = RouterArtifact::load(&path).unwrap();
        assert_eq!(back, out.artifact);
        assert_eq!(back.to_canonical_json(), out.artifact.to_canonical_json());
        back.check_registry(&registry).unwrap();
        assert!(back.check_registry(&Registry::shipped()).is_err());

        let mut value: serde_json::Value = serde_json::from_str(&out.artifact.to_canonical_json()).unwrap();
        value["fingerprint"]["dim"] = 17.into();
        assert!(matches!(RouterArtifact::from_json(&value.to_string()), Err(RouterError::Invalid(_))));

        let mut value: serde_json::Value = serde_json::from_str(&out.artifact.to_canonical_json()).unwrap();
        value["version"] = 2.into();
        assert!(matches!(RouterArtifact::from_json(&value.to_string()), Err(RouterError::VersionMismatch { found: 2, .. })));

        assert!(matches!(RouterArtifact::from_json("{\"version\": 1, \"junk\""), Err(RouterError::Corrupt(_))));
        assert!(matches!(RouterArtifact::from_json("{\"version\": 1}"), Err(RouterError::Corrupt(_))));
    }

    #[test]
    fn projection_csv_has_one_row_per_record() {
        let (corpus, embedder, registry) = three_way();
        let out = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(3), 4), None).unwrap();
        let csv = out.projection_csv().unwrap();
        assert_eq!(csv.lines().count(), corpus.len() + 1);
        assert!(csv.starts_with("x,y,cluster,benchmark\n"));
    }
}

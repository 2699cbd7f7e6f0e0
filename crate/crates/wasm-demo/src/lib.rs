//! Browser bindings for a small, fully offline routing demo.
//!
//! Everything is computed in plain Rust and returned as JSON strings; the
//! `#[wasm_bindgen]` wrappers only translate errors.

use std::collections::BTreeMap;

use ori_core::clustering::{agglomerative_fit, kmeans_fit, sweep_k, KMeansParams, Pca2, SweepOptions};
use ori_core::embedding::AnchoredEmbedder;
use ori_core::router::{route, train_router, KChoice, TrainOptions};
use ori_core::{BenchmarkId, Embedder, ModelCard, PromptRecord, Registry, RouterArtifact, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const FILLER: &[&str] = &[
    "please", "explain", "what", "happens", "when", "we", "consider", "the", "following", "case", "briefly", "and", "carefully",
];

/// Demo benchmarks: name, keywords, home model.
const TOPICS: &[(&str, &[&str], &str)] = &[
    ("ARITH", &["sum", "multiply", "integer", "equation"], "demo-arith"),
    ("LAW", &["contract", "statute", "court", "plaintiff"], "demo-law"),
    ("CODE", &["function", "compile", "pointer", "loop"], "demo-code"),
];

#[derive(Serialize)]
struct Sweep {
    points: Vec<[f64; 2]>,
    truth: Vec<usize>,
    scores: BTreeMap<usize, f64>,
    best_k: usize,
    kmeans_labels: Vec<usize>,
    agglomerative_labels: Vec<usize>,
    /// Share of point pairs on which the two partitions agree.
    pair_agreement: f64,
}

/// Gaussian blobs on a circle, swept over `k_min..=k_max`; both clusterers
/// are run at the chosen k.
pub fn blob_sweep_json(blobs: usize, per_blob: usize, spread: f64, k_min: usize, k_max: usize, seed: u64) -> Result<String, String> {
    if blobs == 0 || per_blob == 0 {
        return Err("need at least one blob with one point".into());
    }
    let noise = Normal::new(0.0, spread).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(blobs * per_blob);
    let mut truth = Vec::with_capacity(blobs * per_blob);
    for b in 0..blobs {
        let t = b as f64 * std::f64::consts::TAU / blobs as f64;
        let (cx, cy) = (5.0 * t.cos(), 5.0 * t.sin());
        for _ in 0..per_blob {
            points.push([cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            truth.push(b);
        }
    }
    let sweep = sweep_k(&points, k_min..=k_max, seed, SweepOptions::default()).map_err(|e| e.to_string())?;
    let kmeans = kmeans_fit(&points, KMeansParams::new(sweep.best_k, seed)).map_err(|e| e.to_string())?;
    let (agglomerative, _) = agglomerative_fit(&points, sweep.best_k).map_err(|e| e.to_string())?;
    let out = Sweep {
        pair_agreement: pair_agreement(&kmeans.labels, &agglomerative),
        points,
        truth,
        scores: sweep.scores,
        best_k: sweep.best_k,
        kmeans_labels: kmeans.labels,
        agglomerative_labels: agglomerative,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Fraction of pairs that both partitions put together or both put apart.
pub fn pair_agreement(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            agree += usize::from((a[i] == a[j]) == (b[i] == b[j]));
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

/// Router trained on generated keyword prompts, kept in memory.
#[wasm_bindgen]
pub struct DemoRouter {
    artifact: RouterArtifact,
    registry: Registry,
    embedder: AnchoredEmbedder,
    pca: Pca2,
    training: Vec<serde_json::Value>,
}

impl DemoRouter {
    pub fn build(noise: f64, per_topic: usize, seed: u64) -> Result<Self, String> {
        let anchors = TOPICS.iter().map(|(_, words, _)| words.iter().map(|w| w.to_string()).collect()).collect();
        let embedder = AnchoredEmbedder::new(anchors, noise, 8).map_err(|e| e.to_string())?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut corpus = Vec::new();
        for (name, words, _) in TOPICS {
            for i in 0..per_topic {
                let mut text: Vec<&str> = (0..6).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
                text.insert(rng.random_range(0..=text.len()), words[rng.random_range(0..words.len())]);
                corpus.push(PromptRecord {
                    id: format!("{name}/train/{i}"),
                    text: text.join(" "),
                    benchmark: BenchmarkId::new(name).map_err(|e| e.to_string())?,
                    subcategory: None,
                    reference: None,
                    split: Split::Train,
                });
            }
        }

        let mut registry = Registry::new();
        for (home, (_, _, model)) in TOPICS.iter().enumerate() {
            let scores = TOPICS
                .iter()
                .enumerate()
                .map(|(j, (name, _, _))| (BenchmarkId::new(name).unwrap(), if j == home { 90.0 } else { 50.0 + j as f64 }))
                .collect();
            registry
                .register_model(ModelCard {
                    model_id: model.to_string(),
                    endpoint: format!("mock:{model}"),
                    benchmark_scores: scores,
                    price_per_mtok_in: 0.0,
                    price_per_mtok_out: 0.0,
                    enabled: true,
                })
                .map_err(|e| e.to_string())?;
        }

        let outcome = train_router(&corpus, &embedder, &registry, &TrainOptions::new(KChoice::Sweep(2..=6), seed), None).map_err(|e| e.to_string())?;
        let pca = Pca2::fit(&outcome.embeddings.iter().map(|e| e.as_slice().to_vec()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let training = outcome
            .embeddings
            .iter()
            .zip(&outcome.labels)
            .zip(&outcome.record_benchmarks)
            .map(|((e, &cluster), b)| {
                let [x, y] = pca.project(e.as_slice());
                json!({"x": x, "y": y, "cluster": cluster, "benchmark": b})
            })
            .collect();
        Ok(Self { artifact: outcome.artifact, registry, embedder, pca, training })
    }

    /// Training points and centroids in the 2-D projection.
    pub fn projection_json(&self) -> String {
        let centroids: Vec<[f64; 2]> = self.artifact.centroid_model.centroids.iter().map(|c| self.pca.project(c)).collect();
        json!({
            "k": self.artifact.centroid_model.k,
            "silhouette": self.artifact.meta.silhouette_mean,
            "sweep": self.artifact.meta.sweep,
            "cluster_to_benchmark": self.artifact.cluster_to_benchmark,
            "points": self.training,
            "centroids": centroids,
        })
        .to_string()
    }

    /// Routing decision for `text` plus its projected position.
    pub fn route_json(&self, text: &str) -> Result<String, String> {
        let decision = route(&self.artifact, &self.registry, &self.embedder, text).map_err(|e| e.to_string())?;
        let embedding = self.embedder.embed(text).map_err(|e| e.to_string())?;
        let [x, y] = self.pca.project(embedding.as_slice());
        Ok(json!({"decision": decision, "x": x, "y": y}).to_string())
    }

    /// Enables or disables a model; routing falls over to the next scorer.
    pub fn toggle(&mut self, model_id: &str, enabled: bool) -> Result<String, String> {
        self.registry.set_enabled(model_id, enabled).map_err(|e| e.to_string())?;
        Ok(self.models_json())
    }

    pub fn models_json(&self) -> String {
        let models: Vec<_> = self.registry.models().map(|m| json!({"model_id": m.model_id, "enabled": m.enabled})).collect();
        serde_json::Value::Array(models).to_string()
    }
}

#[wasm_bindgen]
impl DemoRouter {
    #[wasm_bindgen(constructor)]
    pub fn new(noise: f64, per_topic: usize, seed: u64) -> Result<DemoRouter, JsError> {
        Self::build(noise, per_topic, seed).map_err(|e| JsError::new(&e))
    }

    pub fn projection(&self) -> String {
        self.projection_json()
    }

    pub fn route(&self, text: &str) -> Result<String, JsError> {
        self.route_json(text).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = setEnabled)]
    pub fn set_enabled(&mut self, model_id: &str, enabled: bool) -> Result<String, JsError> {
        self.toggle(model_id, enabled).map_err(|e| JsError::new(&e))
    }

    pub fn models(&self) -> String {
        self.models_json()
    }
}

#[wasm_bindgen(js_name = blobSweep)]
pub fn blob_sweep(blobs: usize, per_blob: usize, spread: f64, k_min: usize, k_max: usize, seed: u64) -> Result<String, JsError> {
    blob_sweep_json(blobs, per_blob, spread, k_min, k_max, seed).map_err(|e| JsError::new(&e))
}

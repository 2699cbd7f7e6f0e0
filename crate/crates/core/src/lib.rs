//! Cluster-based query routing for LLM gateways.
//!
//! A routing artifact is trained from benchmark-labeled prompts: prompts are
//! embedded, clustered with K-Means, each cluster is tagged with the benchmark
//! that dominates it, and each benchmark is mapped to the registry model with
//! the best score on it. At serve time a query goes to the model owning the
//! dominant benchmark of its nearest centroid.
//!
//! Modules, bottom-up:
//!
//! * [`corpus`]: JSONL ingestion, stratified sampling, merging, cleaning.
//! * [`embedding`]: provider contract, offline providers and a persistent cache.
//! * [`clustering`]: K-Means, silhouette, k sweep, average-linkage, PCA.
//! * [`analysis`]: per-cluster benchmark counts and dominance.
//! * [`registry`]: model cards, best-model selection, completion dispatch.
//! * [`router`]: training, artifact persistence, centroid and KNN routing.
//! * [`eval`]: graders, scores, objective value, run metrics and reports.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod registry;
pub mod router;
mod text;

pub use analysis::{BenchmarkDistribution, ClusterProfile};
pub use clustering::{CentroidModel, LinkageTree, SweepResult};
pub use corpus::{BenchmarkId, CorpusConfig, PromptRecord, ReferenceAnswer, Split};
pub use embedding::{Embedder, EmbedderFingerprint, EmbeddingCache, EmbeddingVector};
pub use eval::{EvalOutcome, RunReport};
pub use registry::{ModelCard, Registry, UsageRecord};
pub use router::{RouterArtifact, RoutingDecision};

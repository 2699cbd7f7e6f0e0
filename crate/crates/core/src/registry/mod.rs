//! Model registry: per-benchmark scores, pricing and endpoints, plus
//! best-model selection and completion dispatch.

mod dispatch;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BenchmarkId;

pub use dispatch::{
    dispatch_completion, token_count, usage_cost, Completion, CompletionBackend, CompletionRequest, DispatchError,
    GenerationParams, MockBackend, MockRule, MultiBackend, UsageRecord,
};

const SHIPPED_REGISTRY: &str = include_str!("../../data/registry.json");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid model card {model_id}: {reason}")]
    InvalidCard { model_id: String, reason: String },
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("no enabled model has a score for {0}")]
    NoScoredModel(BenchmarkId),
    #[error("no enabled model in the registry")]
    NoEnabledModel,
    #[error("registry i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_id: String,
    /// `http(s)://...` base URL or `mock:<name>`.
    pub endpoint: String,
    pub benchmark_scores: BTreeMap<BenchmarkId, f64>,
    /// USD per million prompt tokens.
    pub price_per_mtok_in: f64,
    /// USD per million completion tokens.
    pub price_per_mtok_out: f64,
    pub enabled: bool,
}

impl ModelCard {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: String| RegistryError::InvalidCard { model_id: self.model_id.clone(), reason };
        if self.model_id.trim().is_empty() {
            return Err(invalid("model_id is empty".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(invalid("endpoint is empty".into()));
        }
        for (b, &s) in &self.benchmark_scores {
            if !(0.0..=100.0).contains(&s) {
                return Err(invalid(format!("score {s} for {b} outside [0, 100]")));
            }
        }
        for (name, p) in [("price_per_mtok_in", self.price_per_mtok_in), ("price_per_mtok_out", self.price_per_mtok_out)] {
            if !(p.is_finite() && p >= 0.0) {
                return Err(invalid(format!("{name} = {p} must be a finite nonnegative price")));
            }
        }
        Ok(())
    }

    pub fn mean_score(&self) -> Option<f64> {
        if self.benchmark_scores.is_empty() {
            return None;
        }
        Some(self.benchmark_scores.values().sum::<f64>() / self.benchmark_scores.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    aliases: BTreeMap<BenchmarkId, BenchmarkId>,
    models: Vec<ModelCard>,
}

/// Model cards keyed by id, with benchmark-name aliases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    models: BTreeMap<String, ModelCard>,
    aliases: BTreeMap<BenchmarkId, BenchmarkId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The default registry: top leaderboard models per benchmark with their
    /// published scores. Prices are zero and endpoints are mocks until
    /// configured.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_REGISTRY).expect("shipped registry is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = serde_json::from_str(json)?;
        let mut registry = Self { models: BTreeMap::new(), aliases: file.aliases };
        for card in file.models {
            if registry.models.contains_key(&card.model_id) {
                return Err(RegistryError::InvalidCard { model_id: card.model_id, reason: "duplicate model_id".into() });
            }
            registry.register_model(card)?;
        }
        Ok(registry)
    }

    /// Canonical JSON: sorted keys, cards ordered by id, shortest
    /// round-trip float formatting.
    pub fn to_canonical_json(&self) -> String {
        let file = RegistryFile {
            aliases: self.aliases.clone(),
            models: self.models.values().cloned().collect(),
        };
        let value = serde_json::to_value(&file).expect("registry serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        fs::write(path, self.to_canonical_json() + "\n")?;
        Ok(())
    }

    /// Maps a benchmark name through the alias table.
    pub fn canonical_benchmark(&self, b: &BenchmarkId) -> BenchmarkId {
        self.aliases.get(b).cloned().unwrap_or_else(|| b.clone())
    }

    pub fn set_alias(&mut self, from: BenchmarkId, to: BenchmarkId) {
        self.aliases.insert(from, to);
    }

    /// Inserts or replaces a card by `model_id`. Score keys are stored under
    /// their canonical benchmark names.
    pub fn register_model(&mut self, mut card: ModelCard) -> Result<(), RegistryError> {
        card.validate()?;
        card.benchmark_scores = card
            .benchmark_scores
            .into_iter()
            .map(|(b, s)| (self.canonical_benchmark(&b), s))
            .collect();
        self.models.insert(card.model_id.clone(), card);
        Ok(())
    }

    pub fn set_enabled(&mut self, model_id: &str, enabled: bool) -> Result<(), RegistryError> {
        let card = self
            .models
            .get_mut(model_id)
            .ok_or_else(|| RegistryError::UnknownModel(model_id.to_string()))?;
        card.enabled = enabled;
        Ok(())
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelCard> {
        self.models.get(model_id)
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelCard> {
        self.models.values()
    }

    pub fn enabled_models(&self) -> impl Iterator<Item = &ModelCard> {
        self.models.values().filter(|c| c.enabled)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Enabled model with the highest score on `b`; ties go to the
    /// lexicographically smallest id.
    pub fn best_model_for_benchmark(&self, b: &BenchmarkId) -> Result<&ModelCard, RegistryError> {
        let b = self.canonical_benchmark(b);
        let mut best: Option<(&ModelCard, f64)> = None;
        // BTreeMap iteration is id-ordered, so strict `>` keeps the smallest id on ties.
        for card in self.enabled_models() {
            if let Some(&score) = card.benchmark_scores.get(&b) {
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((card, score));
                }
            }
        }
        best.map(|(c, _)| c).ok_or(RegistryError::NoScoredModel(b))
    }

    /// Enabled model with the highest mean score across its benchmarks.
    pub fn fallback_model(&self) -> Result<&ModelCard, RegistryError> {
        let mut best: Option<(&ModelCard, f64)> = None;
        for card in self.enabled_models() {
            if let Some(mean) = card.mean_score() {
                if best.is_none_or(|(_, s)| mean > s) {
                    best = Some((card, mean));
                }
            }
        }
        if let Some((card, _)) = best {
            return Ok(card);
        }
        self.enabled_models().next().ok_or(RegistryError::NoEnabledModel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(name: &str) -> BenchmarkId {
        BenchmarkId::new(name).unwrap()
    }

    fn card(id: &str, scores: &[(&str, f64)]) -> ModelCard {
        ModelCard {
            model_id: id.into(),
            endpoint: format!("mock:{id}"),
            benchmark_scores: scores.iter().map(|(n, s)| (b(n), *s)).collect(),
            price_per_mtok_in: 1.0,
            price_per_mtok_out: 2.0,
            enabled: true,
        }
    }

    #[test]
    fn shipped_registry_top_models() {
        let r = Registry::shipped();
        assert_eq!(r.best_model_for_benchmark(&b("MMLU")).unwrap().model_id, "Qwen2.5-72B");
        assert_eq!(r.best_model_for_benchmark(&b("MMLU-PRO")).unwrap().model_id, "Qwen2.5-72B");
        assert_eq!(r.best_model_for_benchmark(&b("BBH")).unwrap().model_id, "Deepseek-67B");
        assert_eq!(r.best_model_for_benchmark(&b("IFEval")).unwrap().model_id, "Llama-3.3-70B");
        assert_eq!(r.best_model_for_benchmark(&b("MuSR")).unwrap().model_id, "Calme-2.4-78B");
        // (82.3 + 49.0 + 52.7) / 3 = 61.33 < 92.1
        assert_eq!(r.fallback_model().unwrap().model_id, "Llama-3.3-70B");
    }

    #[test]
    fn shipped_file_is_canonical() {
        assert_eq!(Registry::shipped().to_canonical_json(), SHIPPED_REGISTRY.trim_end());
    }

    #[test]
    fn disabling_moves_argmax() {
        let mut r = Registry::shipped();
        r.register_model(card("Llama-3-70B", &[("MMLU", 82.1)])).unwrap();
        r.set_enabled("Qwen2.5-72B", false).unwrap();
        assert_eq!(r.best_model_for_benchmark(&b("MMLU")).unwrap().model_id, "Llama-3-70B");

        let mut shipped = Registry::shipped();
        shipped.set_enabled("Qwen2.5-72B", false).unwrap();
        assert!(matches!(shipped.best_model_for_benchmark(&b("MMLU")), Err(RegistryError::NoScoredModel(_))));
        assert!(matches!(shipped.set_enabled("nope", true), Err(RegistryError::UnknownModel(_))));
    }

    #[test]
    fn upsert_and_validation() {
        let mut r = Registry::new();
        r.register_model(card("m", &[("BBH", 10.0)])).unwrap();
        r.register_model(card("m", &[("BBH", 20.0)])).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("m").unwrap().benchmark_scores[&b("BBH")], 20.0);

        assert!(r.register_model(card("bad", &[("BBH", 101.0)])).is_err());
        let mut negative = card("neg", &[]);
        negative.price_per_mtok_in = -1.0;
        assert!(r.register_model(negative).is_err());
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let mut r = Registry::new();
        r.register_model(card("zeta", &[("BBH", 50.0)])).unwrap();
        r.register_model(card("alpha", &[("BBH", 50.0)])).unwrap();
        assert_eq!(r.best_model_for_benchmark(&b("BBH")).unwrap().model_id, "alpha");
        assert_eq!(r.fallback_model().unwrap().model_id, "alpha");
    }

    #[test]
    fn empty_registry_errors() {
        let r = Registry::new();
        assert!(matches!(r.fallback_model(), Err(RegistryError::NoEnabledModel)));
        assert!(matches!(r.best_model_for_benchmark(&b("BBH")), Err(RegistryError::NoScoredModel(_))));
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let mut r = Registry::shipped();
        r.register_model(card("odd", &[("GPQA", 100.0 / 3.0)])).unwrap();
        r.save(&path).unwrap();
        let back = Registry::load(&path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("odd").unwrap().benchmark_scores[&b("GPQA")].to_bits(), (100.0f64 / 3.0).to_bits());
        assert_eq!(back.to_canonical_json(), r.to_canonical_json());
    }

    #[test]
    fn duplicate_ids_in_file_rejected() {
        let json = r#"{"models":[{"model_id":"a","endpoint":"mock:a","benchmark_scores":{},"price_per_mtok_in":0,"price_per_mtok_out":0,"enabled":true},{"model_id":"a","endpoint":"mock:a","benchmark_scores":{},"price_per_mtok_in":0,"price_per_mtok_out":0,"enabled":true}]}"#;
        assert!(matches!(Registry::from_json(json), Err(RegistryError::InvalidCard { .. })));
    }
}

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModelCard;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("model {model_id} is disabled")]
    Disabled { model_id: String },
    #[error("transport error for {model_id}: {message}")]
    Transport { model_id: String, message: String },
    #[error("{model_id} timed out after {after_secs} s")]
    Timeout { model_id: String, after_secs: f64 },
    #[error("malformed response from {model_id}: {message}")]
    Malformed { model_id: String, message: String },
    #[error("no backend handles endpoint {endpoint} of {model_id}")]
    UnsupportedEndpoint { model_id: String, endpoint: String },
}

impl DispatchError {
    pub fn model_id(&self) -> &str {
        match self {
            Self::Disabled { model_id }
            | Self::Transport { model_id, .. }
            | Self::Timeout { model_id, .. }
            | Self::Malformed { model_id, .. }
            | Self::UnsupportedEndpoint { model_id, .. } => model_id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt_id: Option<&'a str>,
    /// Text used for routing and by prompt-only backends.
    pub prompt: &'a str,
    /// Full chat message list to forward, when the caller has one.
    pub messages: Option<&'a serde_json::Value>,
    pub params: &'a GenerationParams,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(prompt: &'a str, params: &'a GenerationParams) -> Self {
        Self { prompt_id: None, prompt, messages: None, params }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Backend response body when the backend speaks JSON.
    pub raw: Option<serde_json::Value>,
}

/// Token and cost accounting for one dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_seconds: f64,
    pub cost_usd: f64,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, card: &ModelCard, request: &CompletionRequest<'_>) -> Result<Completion, DispatchError>;
}

/// `(prompt_tokens * in_price + completion_tokens * out_price) / 1e6`.
pub fn usage_cost(card: &ModelCard, prompt_tokens: u64, completion_tokens: u64) -> f64 {
    (prompt_tokens as f64 * card.price_per_mtok_in + completion_tokens as f64 * card.price_per_mtok_out) / 1e6
}

/// Whitespace token count, used where a backend reports no usage.
pub fn token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

// Floor for measured wall time so throughput stays finite.
const MIN_WALL_SECONDS: f64 = 1e-9;

/// Sends one completion and returns it with its usage record.
pub fn dispatch_completion<B: CompletionBackend + ?Sized>(
    backend: &B,
    card: &ModelCard,
    request: &CompletionRequest<'_>,
) -> Result<(Completion, UsageRecord), DispatchError> {
    if !card.enabled {
        return Err(DispatchError::Disabled { model_id: card.model_id.clone() });
    }
    let started = Instant::now();
    let completion = backend.complete(card, request)?;
    let wall_seconds = started.elapsed().as_secs_f64().max(MIN_WALL_SECONDS);
    let usage = UsageRecord {
        model_id: card.model_id.clone(),
        prompt_tokens: completion.prompt_tokens,
        completion_tokens: completion.completion_tokens,
        wall_seconds,
        cost_usd: usage_cost(card, completion.prompt_tokens, completion.completion_tokens),
    };
    Ok((completion, usage))
}

/// One line of a mock script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Prompt id to match exactly, or a substring of the prompt text.
    #[serde(rename = "match")]
    pub pattern: String,
    pub reply: String,
    pub tokens_out: u64,
}

/// Scripted backends for `mock:<name>` endpoints.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    scripts: HashMap<String, Vec<MockRule>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(mut self, name: &str, rules: Vec<MockRule>) -> Self {
        self.scripts.insert(name.to_string(), rules);
        self
    }

    pub fn insert_script(&mut self, name: &str, rules: Vec<MockRule>) {
        self.scripts.insert(name.to_string(), rules);
    }

    pub fn parse_script(jsonl: &str) -> Result<Vec<MockRule>, String> {
        jsonl
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect()
    }

    pub fn load_script(&mut self, name: &str, path: &Path) -> Result<(), String> {
        let content = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let rules = Self::parse_script(&content).map_err(|e| format!("{}: {e}", path.display()))?;
        self.insert_script(name, rules);
        Ok(())
    }

    /// Loads `<dir>/<name>.jsonl` for every file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, String> {
        let mut backend = Self::new();
        let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                backend.load_script(&name, &path)?;
            }
        }
        Ok(backend)
    }

    pub fn has_script(&self, name: &str) -> bool {
        self.scripts.contains_key(name)
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, card: &ModelCard, request: &CompletionRequest<'_>) -> Result<Completion, DispatchError> {
        let name = card.endpoint.strip_prefix("mock:").ok_or_else(|| DispatchError::UnsupportedEndpoint {
            model_id: card.model_id.clone(),
            endpoint: card.endpoint.clone(),
        })?;
        let rules = self.scripts.get(name).ok_or_else(|| DispatchError::Transport {
            model_id: card.model_id.clone(),
            message: format!("no mock script named {name}"),
        })?;
        let hit = rules
            .iter()
            .find(|r| request.prompt_id == Some(r.pattern.as_str()) || request.prompt.contains(&r.pattern));
        let (text, completion_tokens) = match hit {
            Some(rule) => (rule.reply.clone(), rule.tokens_out),
            None => (String::new(), 0),
        };
        Ok(Completion { text, prompt_tokens: token_count(request.prompt), completion_tokens, raw: None })
    }
}

/// Routes `mock:` endpoints to a [`MockBackend`] and everything else to an
/// optional network backend.
pub struct MultiBackend {
    pub mock: MockBackend,
    pub network: Option<Box<dyn CompletionBackend>>,
}

impl CompletionBackend for MultiBackend {
    fn complete(&self, card: &ModelCard, request: &CompletionRequest<'_>) -> Result<Completion, DispatchError> {
        if card.endpoint.starts_with("mock:") {
            return self.mock.complete(card, request);
        }
        match &self.network {
            Some(backend) => backend.complete(card, request),
            None => Err(DispatchError::UnsupportedEndpoint {
                model_id: card.model_id.clone(),
                endpoint: card.endpoint.clone(),
            }),
        }
    }
}

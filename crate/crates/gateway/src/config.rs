//! Gateway and embedder configuration files (canonical JSON).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ori_core::embedding::{builtin_embedder, AnchoredEmbedder, FileEmbedder, TestEmbedder};
use ori_core::{Embedder, EmbedderFingerprint};
use serde::{Deserialize, Serialize};

use crate::backend::HttpEmbedder;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("embedder: {0}")]
    Embedder(#[from] ori_core::embedding::EmbedError),
}

/// Where prompt embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    /// Rebuild the offline embedder recorded in the artifact fingerprint.
    Artifact,
    Test { dim: usize },
    Anchored { anchors: Vec<Vec<String>>, noise: f64, dim: usize },
    /// Precomputed vectors from an embedding-cache file.
    File { path: PathBuf },
    /// OpenAI-style `POST {url}` with `{"input": [...], "model": ...}`.
    Http {
        url: String,
        model: String,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_env: Option<String>,
        #[serde(default = "default_embed_timeout")]
        timeout_secs: f64,
    },
}

fn default_embed_timeout() -> f64 {
    30.0
}

impl EmbedderConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        read_json(path)
    }

    /// Builds the embedder; `artifact` supplies the fingerprint for
    /// [`EmbedderConfig::Artifact`].
    pub fn build(&self, artifact: Option<&EmbedderFingerprint>) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match self {
            Self::Artifact => {
                let fp = artifact.ok_or_else(|| ConfigError::Invalid("embedder kind `artifact` needs an artifact".into()))?;
                match builtin_embedder(fp) {
                    Some(e) => Arc::from(e?),
                    None => {
                        return Err(ConfigError::Invalid(format!(
                            "embedder {fp} is not built in; pass an embedder config"
                        )))
                    }
                }
            }
            Self::Test { dim } => {
                if *dim < 2 {
                    return Err(ConfigError::Invalid("test embedder needs dim >= 2".into()));
                }
                Arc::new(TestEmbedder::new(*dim))
            }
            Self::Anchored { anchors, noise, dim } => Arc::new(AnchoredEmbedder::new(anchors.clone(), *noise, *dim)?),
            Self::File { path } => Arc::new(FileEmbedder::open(path)?),
            Self::Http { url, model, dim, token_env, timeout_secs } => {
                let token = token_env.as_ref().and_then(|v| std::env::var(v).ok());
                Arc::new(HttpEmbedder::new(url, model, *dim, token, secs(*timeout_secs)?))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub listen: String,
    pub artifact: PathBuf,
    pub registry: PathBuf,
    #[serde(default = "default_embedder")]
    pub embedder: EmbedderConfig,
    /// Directory of `<name>.jsonl` scripts for `mock:<name>` endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_dir: Option<PathBuf>,
    #[serde(default = "default_backend_timeout")]
    pub backend_timeout_secs: f64,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent_backend_calls: usize,
    /// Requests allowed to wait for a backend slot before 429.
    #[serde(default = "default_max_queue")]
    pub max_queued_requests: usize,
    #[serde(default = "default_true")]
    pub metrics: bool,
}

fn default_embedder() -> EmbedderConfig {
    EmbedderConfig::Artifact
}
fn default_backend_timeout() -> f64 {
    120.0
}
fn default_max_concurrent() -> usize {
    16
}
fn default_max_queue() -> usize {
    256
}
fn default_true() -> bool {
    true
}

impl GatewayConfig {
    pub fn new(listen: &str, artifact: PathBuf, registry: PathBuf) -> Self {
        Self {
            listen: listen.to_string(),
            artifact,
            registry,
            embedder: default_embedder(),
            mock_dir: None,
            backend_timeout_secs: default_backend_timeout(),
            max_concurrent_backend_calls: default_max_concurrent(),
            max_queued_requests: default_max_queue(),
            metrics: true,
        }
    }

    /// Loads and validates; relative paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.artifact);
        resolve(&mut config.registry);
        if let Some(dir) = config.mock_dir.as_mut() {
            resolve(dir);
        }
        if let EmbedderConfig::File { path } = &mut config.embedder {
            resolve(path);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrent_backend_calls == 0 {
            return Err(ConfigError::Invalid("max_concurrent_backend_calls must be >= 1".into()));
        }
        secs(self.backend_timeout_secs)?;
        for (what, p) in [("artifact", &self.artifact), ("registry", &self.registry)] {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!("{what} path {} is not a readable file", p.display())));
            }
        }
        if let Some(dir) = &self.mock_dir {
            if !dir.is_dir() {
                return Err(ConfigError::Invalid(format!("mock_dir {} is not a directory", dir.display())));
            }
        }
        Ok(())
    }

    pub fn backend_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.backend_timeout_secs)
    }

    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }
}

fn secs(value: f64) -> Result<Duration, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(Duration::from_secs_f64(value))
    } else {
        Err(ConfigError::Invalid(format!("timeout must be a positive number of seconds, got {value}")))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let err = |message: String| ConfigError::Read { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

//! Prompt embeddings behind a provider contract.
//!
//! An [`Embedder`] turns texts into fixed-dimension vectors and identifies
//! itself with an [`EmbedderFingerprint`]. Artifacts and caches record the
//! fingerprint so vectors from different encoders never mix.
//!
//! Offline providers live in [`providers`]: the seeded test embedder, a
//! keyword-anchored variant with controllable cluster structure, and a
//! precomputed-file provider. Network providers are implemented outside the
//! core crate against the same trait.

mod cache;
mod providers;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{content_key, EmbeddingCache};
pub use providers::{builtin_embedder, test_embedding, AnchoredEmbedder, FileEmbedder, TestEmbedder};

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text at index {index} is empty")]
    EmptyText { index: usize },
    #[error("provider failed{}: {message}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    Provider { index: Option<usize>, message: String },
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding must have at least one dimension")]
    ZeroDim,
    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch {
        expected: EmbedderFingerprint,
        found: EmbedderFingerprint,
    },
    #[error("invalid embedder configuration: {0}")]
    Config(String),
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache line {line}: {message}")]
    CacheFormat { line: usize, message: String },
}

impl EmbedError {
    fn with_offset(self, map: impl Fn(usize) -> usize) -> Self {
        match self {
            EmbedError::Provider { index: Some(i), message } => EmbedError::Provider {
                index: Some(map(i)),
                message,
            },
            EmbedError::EmptyText { index } => EmbedError::EmptyText { index: map(index) },
            other => other,
        }
    }
}

/// Fixed-length vector of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::ZeroDim);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, EmbedError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedderFingerprint {
    pub provider_name: String,
    pub model_name: String,
    pub dim: usize,
}

impl fmt::Display for EmbedderFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.provider_name, self.model_name, self.dim)
    }
}

/// Embedding provider contract.
///
/// `compute` is one provider call; the provided methods validate inputs and
/// outputs against the fingerprint.
pub trait Embedder: Send + Sync {
    fn fingerprint(&self) -> &EmbedderFingerprint;

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_many(&[text])?;
        Ok(out.pop().expect("one text in, one vector out"))
    }

    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText { index });
        }
        let raw = self.compute(texts)?;
        if raw.len() != texts.len() {
            return Err(EmbedError::Provider {
                index: None,
                message: format!("returned {} vectors for {} texts", raw.len(), texts.len()),
            });
        }
        let dim = self.fingerprint().dim;
        raw.into_iter()
            .map(|values| {
                if values.len() != dim {
                    return Err(EmbedError::DimensionMismatch { expected: dim, got: values.len() });
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        (**self).fingerprint()
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).compute(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        (**self).fingerprint()
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).compute(texts)
    }
}

/// Embeds `texts` in order, serving hits from `cache` and sending all misses
/// to the provider in a single call. New vectors are written to the cache.
pub fn embed_batch<E: Embedder + ?Sized>(
    embedder: &E,
    texts: &[&str],
    cache: &EmbeddingCache,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if cache.fingerprint() != embedder.fingerprint() {
        return Err(EmbedError::FingerprintMismatch {
            expected: embedder.fingerprint().clone(),
            found: cache.fingerprint().clone(),
        });
    }
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText { index });
    }

    let keys: Vec<String> = texts.iter().map(|t| content_key(t)).collect();
    let mut out: Vec<Option<EmbeddingVector>> = keys.iter().map(|k| cache.get_key(k)).collect();

    // one provider slot per distinct missing key
    let mut miss_first: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, slot) in out.iter().enumerate() {
        if slot.is_none() && seen.insert(keys[i].as_str()) {
            miss_first.push(i);
        }
    }
    if !miss_first.is_empty() {
        let miss_texts: Vec<&str> = miss_first.iter().map(|&i| texts[i]).collect();
        let fresh = embedder
            .embed_many(&miss_texts)
            .map_err(|e| e.with_offset(|i| miss_first[i]))?;
        for (&i, vector) in miss_first.iter().zip(fresh) {
            cache.put_key(&keys[i], &vector)?;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            if slot.is_none() {
                *slot = cache.get_key(&keys[i]);
            }
        }
    }
    Ok(out.into_iter().map(|v| v.expect("every key filled")).collect())
}

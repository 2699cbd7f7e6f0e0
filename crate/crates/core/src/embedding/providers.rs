use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{content_key, EmbedError, Embedder, EmbedderFingerprint, EmbeddingCache, EmbeddingVector};
use crate::text::{fnv1a64, normalize};

pub const TEST_PROVIDER: &str = "test";
pub const TEST_MODEL: &str = "fnv1a64-chacha8-normal";
pub const ANCHORED_PROVIDER: &str = "anchored";

/// Deterministic unit vector for `text`.
///
/// The normalized text is hashed with FNV-1a 64; the hash seeds ChaCha8,
/// which draws `dim` standard normals (ziggurat); the draw is scaled to unit
/// Euclidean norm.
pub fn test_embedding(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "test embedder needs dim >= 2");
    let seed = fnv1a64(normalize(text).as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    EmbeddingVector::new(values).expect("normals are finite")
}

/// Offline provider returning [`test_embedding`] vectors.
#[derive(Debug, Clone)]
pub struct TestEmbedder {
    fingerprint: EmbedderFingerprint,
}

impl TestEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "test embedder needs dim >= 2");
        Self {
            fingerprint: EmbedderFingerprint {
                provider_name: TEST_PROVIDER.into(),
                model_name: TEST_MODEL.into(),
                dim,
            },
        }
    }
}

impl Embedder for TestEmbedder {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        &self.fingerprint
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts
            .iter()
            .map(|t| test_embedding(t, self.fingerprint.dim).into_inner())
            .collect())
    }
}

/// Test embedder with planted structure: each anchor is a keyword group
/// owning one basis direction. A text is pulled toward the anchor whose
/// keywords it mentions most (ties to the earlier anchor), plus
/// `noise` times its test embedding, then normalized. Texts without any
/// keyword get the plain test embedding.
#[derive(Debug, Clone)]
pub struct AnchoredEmbedder {
    anchors: Vec<Vec<String>>,
    noise: f64,
    fingerprint: EmbedderFingerprint,
}

impl AnchoredEmbedder {
    pub fn new(anchors: Vec<Vec<String>>, noise: f64, dim: usize) -> Result<Self, EmbedError> {
        if dim < 2 || dim < anchors.len() {
            return Err(EmbedError::Config(format!("dim {dim} too small for {} anchors", anchors.len())));
        }
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(EmbedError::Config(format!("noise must be finite and >= 0, got {noise}")));
        }
        let valid = |k: &String| !k.is_empty() && k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
        if anchors.iter().any(|group| group.is_empty() || !group.iter().all(valid)) {
            return Err(EmbedError::Config("anchor keywords must be non-empty [a-z0-9-] words".into()));
        }
        let spec = anchors.iter().map(|g| g.join("|")).collect::<Vec<_>>().join(",");
        let fingerprint = EmbedderFingerprint {
            provider_name: ANCHORED_PROVIDER.into(),
            model_name: format!("anchors={spec};noise={noise}"),
            dim,
        };
        Ok(Self { anchors, noise, fingerprint })
    }

    /// Rebuilds the embedder described by a fingerprint it produced.
    pub fn from_fingerprint(fp: &EmbedderFingerprint) -> Result<Self, EmbedError> {
        let bad = || EmbedError::Config(format!("not an anchored fingerprint: {fp}"));
        if fp.provider_name != ANCHORED_PROVIDER {
            return Err(bad());
        }
        let (anchor_part, noise_part) = fp.model_name.split_once(';').ok_or_else(bad)?;
        let spec = anchor_part.strip_prefix("anchors=").ok_or_else(bad)?;
        let noise: f64 = noise_part.strip_prefix("noise=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let anchors = spec
            .split(',')
            .map(|g| g.split('|').map(str::to_string).collect())
            .collect();
        Self::new(anchors, noise, fp.dim)
    }

    /// Index of the anchor a text is pulled toward, if any.
    pub fn anchor_of(&self, text: &str) -> Option<usize> {
        let lowered = normalize(text).to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !(c.is_alphanumeric() || c == '-'))
            .filter(|w| !w.is_empty())
            .collect();
        let mut best: Option<(usize, usize)> = None;
        for (i, group) in self.anchors.iter().enumerate() {
            let hits = words.iter().filter(|w| group.iter().any(|k| k == *w)).count();
            if hits > 0 && best.is_none_or(|(_, h)| hits > h) {
                best = Some((i, hits));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn anchors(&self) -> &[Vec<String>] {
        &self.anchors
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let dim = self.fingerprint.dim;
        let noise = test_embedding(text, dim).into_inner();
        let Some(anchor) = self.anchor_of(text) else {
            return noise;
        };
        let mut v: Vec<f64> = noise.iter().map(|x| x * self.noise).collect();
        v[anchor] += 1.0;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl Embedder for AnchoredEmbedder {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        &self.fingerprint
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Serves precomputed vectors from an embedding-cache file.
pub struct FileEmbedder {
    store: EmbeddingCache,
}

impl FileEmbedder {
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        Ok(Self { store: EmbeddingCache::load(path)? })
    }
}

impl Embedder for FileEmbedder {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        self.store.fingerprint()
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                self.store
                    .get_key(&content_key(t))
                    .map(EmbeddingVector::into_inner)
                    .ok_or_else(|| EmbedError::Provider {
                        index: Some(i),
                        message: "no precomputed embedding for text".into(),
                    })
            })
            .collect()
    }
}

/// Reconstructs an offline embedder from its fingerprint. Returns `None` for
/// providers that need external configuration (files, HTTP endpoints).
pub fn builtin_embedder(fp: &EmbedderFingerprint) -> Option<Result<Box<dyn Embedder>, EmbedError>> {
    match fp.provider_name.as_str() {
        TEST_PROVIDER if fp.model_name == TEST_MODEL => {
            if fp.dim < 2 {
                return Some(Err(EmbedError::Config("test embedder needs dim >= 2".into())));
            }
            Some(Ok(Box::new(TestEmbedder::new(fp.dim))))
        }
        ANCHORED_PROVIDER => Some(AnchoredEmbedder::from_fingerprint(fp).map(|e| Box::new(e) as Box<dyn Embedder>)),
        _ => None,
    }
}

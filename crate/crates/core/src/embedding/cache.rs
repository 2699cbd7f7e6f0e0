use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedderFingerprint, EmbeddingVector};
use crate::text::{normalize, sha256_hex};

/// Cache key for a text: SHA-256 of its normalized form, hex encoded.
pub fn content_key(text: &str) -> String {
    sha256_hex(normalize(text).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: EmbedderFingerprint,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

/// Embedding store keyed by content hash, bound to one fingerprint.
///
/// The JSONL file starts with a `{"fingerprint": ...}` header followed by
/// `{"key", "dim", "values"}` entries. Reads take a shared lock; writes are
/// serialized and appended to the file.
pub struct EmbeddingCache {
    fingerprint: EmbedderFingerprint,
    entries: RwLock<HashMap<String, EmbeddingVector>>,
    sink: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory(fingerprint: EmbedderFingerprint) -> Self {
        Self {
            fingerprint,
            entries: RwLock::new(HashMap::new()),
            sink: None,
            path: None,
        }
    }

    /// Opens (or creates) a cache file for `fingerprint`. A file written by a
    /// different embedder is rejected before any vector is read.
    pub fn open(path: &Path, fingerprint: EmbedderFingerprint) -> Result<Self, EmbedError> {
        let entries = if path.exists() {
            let (found, entries) = read_file(path)?;
            if found != fingerprint {
                return Err(EmbedError::FingerprintMismatch { expected: fingerprint, found });
            }
            entries
        } else {
            let mut file = File::create(path)?;
            let header = serde_json::to_string(&Header { fingerprint: fingerprint.clone() }).expect("header serializes");
            writeln!(file, "{header}")?;
            HashMap::new()
        };
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            fingerprint,
            entries: RwLock::new(entries),
            sink: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    /// Loads a cache file read-only, taking the fingerprint from its header.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let (fingerprint, entries) = read_file(path)?;
        Ok(Self {
            fingerprint,
            entries: RwLock::new(entries),
            sink: None,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn fingerprint(&self) -> &EmbedderFingerprint {
        &self.fingerprint
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, text: &str) -> Option<EmbeddingVector> {
        self.get_key(&content_key(text))
    }

    pub fn get_key(&self, key: &str) -> Option<EmbeddingVector> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, text: &str, vector: &EmbeddingVector) -> Result<(), EmbedError> {
        self.put_key(&content_key(text), vector)
    }

    pub fn put_key(&self, key: &str, vector: &EmbeddingVector) -> Result<(), EmbedError> {
        if vector.dim() != self.fingerprint.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.fingerprint.dim,
                got: vector.dim(),
            });
        }
        let mut entries = self.entries.write().expect("cache lock");
        if entries.contains_key(key) {
            return Ok(());
        }
        if let Some(sink) = &self.sink {
            let line = serde_json::to_string(&Entry {
                key: key.to_string(),
                dim: vector.dim(),
                values: vector.as_slice().to_vec(),
            })
            .expect("entry serializes");
            let mut sink = sink.lock().expect("cache sink lock");
            writeln!(sink, "{line}")?;
            sink.flush()?;
        }
        entries.insert(key.to_string(), vector.clone());
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<(EmbedderFingerprint, HashMap<String, EmbeddingVector>), EmbedError> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, message: String| EmbedError::CacheFormat { line: line + 1, message };

    let (idx, first) = lines.next().ok_or_else(|| bad(0, "missing fingerprint header".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(idx, e.to_string()))?;
    let mut entries = HashMap::new();
    for (idx, line) in lines {
        let entry: Entry = serde_json::from_str(line).map_err(|e| bad(idx, e.to_string()))?;
        if entry.dim != entry.values.len() || entry.dim != header.fingerprint.dim {
            return Err(bad(
                idx,
                format!("entry dim {} / {} values, header dim {}", entry.dim, entry.values.len(), header.fingerprint.dim),
            ));
        }
        let vector = EmbeddingVector::new(entry.values).map_err(|e| bad(idx, e.to_string()))?;
        entries.insert(entry.key, vector);
    }
    Ok((header.fingerprint, entries))
}

//! Benchmark prompt ingestion and training-corpus construction.
//!
//! Records are read from JSONL, cleaned with [`preprocess`], stratified by
//! subcategory with [`proportionate_sample`] and merged into a single
//! source-labeled corpus with [`merge_with_source`]. Test-split records are
//! rejected by every operation that produces training data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::{fnv1a64, normalize, sha256_hex};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid benchmark id {0:?}")]
    InvalidBenchmark(String),
    #[error("expected a single benchmark, found {first} and {second}")]
    MixedBenchmarks { first: BenchmarkId, second: BenchmarkId },
    #[error("record {0} belongs to the test split and cannot enter a training corpus")]
    TestRecord(String),
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
}

/// Benchmark family name, stored trimmed and uppercased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BenchmarkId(String);

impl BenchmarkId {
    pub fn new(name: &str) -> Result<Self, CorpusError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(CorpusError::InvalidBenchmark(name.to_string()));
        }
        Ok(Self(name.to_uppercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for BenchmarkId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for BenchmarkId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for BenchmarkId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Self::new(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Ground-truth answer: a choice letter (A-J) or free-form text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ReferenceAnswer {
    Choice(char),
    Text(String),
}

impl ReferenceAnswer {
    /// Parses a raw reference. Blank input yields `None`.
    pub fn parse(raw: &str) -> Option<Self> {
        let trimmed = raw.trim();
        let mut chars = trimmed.chars();
        match (chars.next(), chars.next()) {
            (None, _) => None,
            (Some(c), None) if c.is_ascii_alphabetic() && ('A'..='J').contains(&c.to_ascii_uppercase()) => {
                Some(Self::Choice(c.to_ascii_uppercase()))
            }
            _ => Some(Self::Text(trimmed.to_string())),
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            Self::Choice(c) => c.to_string(),
            Self::Text(s) => s.clone(),
        }
    }
}

impl Serialize for ReferenceAnswer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for ReferenceAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Self::parse(&raw).ok_or_else(|| serde::de::Error::custom("empty reference"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    pub benchmark: BenchmarkId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceAnswer>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub per_benchmark_quota: usize,
    pub seed: u64,
    pub max_prompt_chars: usize,
    pub dedup: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            per_benchmark_quota: 500,
            seed: 0,
            max_prompt_chars: 8_000,
            dedup: true,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.per_benchmark_quota == 0 {
            return Err(CorpusError::InvalidConfig("per_benchmark_quota must be >= 1".into()));
        }
        if self.max_prompt_chars == 0 {
            return Err(CorpusError::InvalidConfig("max_prompt_chars must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    #[serde(default)]
    benchmark: Option<String>,
    #[serde(default)]
    subcategory: Option<String>,
    #[serde(default)]
    reference: Option<serde_json::Value>,
    #[serde(default)]
    split: Option<Split>,
}

fn scalar_to_string(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a JSONL dataset, stamping every record with `benchmark` and `split`.
pub fn load_dataset(path: &Path, benchmark: &BenchmarkId, split: Split) -> Result<Vec<PromptRecord>, CorpusError> {
    parse_dataset(&read_file(path)?, Some((benchmark, split)))
}

/// Loads a JSONL file whose lines each name their own benchmark and split.
pub fn load_records(path: &Path) -> Result<Vec<PromptRecord>, CorpusError> {
    parse_dataset(&read_file(path)?, None)
}

/// Parses JSONL content. With `expected` set, lines may omit benchmark and
/// split, but lines that state a different value are rejected.
pub fn parse_dataset(
    content: &str,
    expected: Option<(&BenchmarkId, Split)>,
) -> Result<Vec<PromptRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Parse { line: line_no, message };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;

        let stated_benchmark = raw
            .benchmark
            .as_deref()
            .map(BenchmarkId::new)
            .transpose()
            .map_err(|e| err(e.to_string()))?;
        let (benchmark, split) = match expected {
            Some((benchmark, split)) => {
                if let Some(stated) = &stated_benchmark {
                    if stated != benchmark {
                        return Err(err(format!("benchmark {stated} conflicts with requested {benchmark}")));
                    }
                }
                if let Some(stated) = raw.split {
                    if stated != split {
                        return Err(err(format!("split {stated} conflicts with requested {split}")));
                    }
                }
                (benchmark.clone(), split)
            }
            None => (
                stated_benchmark.ok_or_else(|| err("missing field `benchmark`".into()))?,
                raw.split.ok_or_else(|| err("missing field `split`".into()))?,
            ),
        };

        let local_id = raw
            .id
            .as_ref()
            .and_then(scalar_to_string)
            .unwrap_or_else(|| line_no.to_string());
        let prefix = format!("{benchmark}/{split}/");
        // ids written by `to_jsonl` already carry the prefix
        let id = if local_id.starts_with(&prefix) { local_id } else { format!("{prefix}{local_id}") };
        records.push(PromptRecord {
            id,
            text: raw.text,
            benchmark,
            subcategory: raw.subcategory.filter(|s| !s.trim().is_empty()),
            reference: raw.reference.as_ref().and_then(scalar_to_string).and_then(|s| ReferenceAnswer::parse(&s)),
            split,
        });
    }
    Ok(records)
}

/// Serializes records as JSONL in the same schema [`load_records`] reads.
pub fn to_jsonl(records: &[PromptRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records always serialize"));
        out.push('\n');
    }
    out
}

fn single_benchmark(records: &[PromptRecord]) -> Result<Option<&BenchmarkId>, CorpusError> {
    let Some(first) = records.first() else {
        return Ok(None);
    };
    for record in records {
        if record.benchmark != first.benchmark {
            return Err(CorpusError::MixedBenchmarks {
                first: first.benchmark.clone(),
                second: record.benchmark.clone(),
            });
        }
    }
    Ok(Some(&first.benchmark))
}

fn reject_test_records(records: &[PromptRecord]) -> Result<(), CorpusError> {
    match records.iter().find(|r| r.split == Split::Test) {
        Some(r) => Err(CorpusError::TestRecord(r.id.clone())),
        None => Ok(()),
    }
}

/// Largest-remainder apportionment of `quota` over groups of the given sizes.
///
/// Remainder ties go to the larger group, then to the earlier position.
/// `quota` is assumed not to exceed the total size.
pub(crate) fn apportion(sizes: &[usize], quota: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    // Integer arithmetic: share_i = quota * size_i / total, remainder kept exact.
    let mut counts: Vec<usize> = sizes.iter().map(|&s| quota * s / total).collect();
    let remainders: Vec<usize> = sizes.iter().map(|&s| quota * s % total).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        remainders[b]
            .cmp(&remainders[a])
            .then(sizes[b].cmp(&sizes[a]))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(quota - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Draws `min(quota, len)` training records from a single benchmark, keeping
/// subcategory proportions (largest remainder) and original record order.
pub fn proportionate_sample(records: &[PromptRecord], config: &CorpusConfig) -> Result<Vec<PromptRecord>, CorpusError> {
    config.validate()?;
    let Some(benchmark) = single_benchmark(records)? else {
        return Ok(Vec::new());
    };
    reject_test_records(records)?;
    if config.per_benchmark_quota >= records.len() {
        return Ok(records.to_vec());
    }

    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, record) in records.iter().enumerate() {
        strata.entry(record.subcategory.as_deref().unwrap_or("")).or_default().push(pos);
    }
    let keys: Vec<&str> = strata.keys().copied().collect();
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let counts = apportion(&sizes, config.per_benchmark_quota);

    let mut chosen = Vec::with_capacity(config.per_benchmark_quota);
    for ((key, positions), take) in keys.iter().zip(strata.values()).zip(counts) {
        let stratum_seed = config.seed ^ fnv1a64(format!("{benchmark}\u{1f}{key}").as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed);
        let picked = rand::seq::index::sample(&mut rng, positions.len(), take);
        chosen.extend(picked.into_iter().map(|i| positions[i]));
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|pos| records[pos].clone()).collect())
}

/// Flattens per-benchmark samples into one corpus ordered by benchmark name,
/// keeping each list's internal order. The `benchmark` field is the source
/// label.
pub fn merge_with_source(samples: Vec<Vec<PromptRecord>>) -> Result<Vec<PromptRecord>, CorpusError> {
    let mut keyed = Vec::with_capacity(samples.len());
    for list in samples {
        let key = single_benchmark(&list)?.cloned();
        keyed.push((key, list));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let mut seen = HashSet::new();
    let mut merged = Vec::new();
    for (_, list) in keyed {
        for record in list {
            if !seen.insert(record.id.clone()) {
                return Err(CorpusError::DuplicateId(record.id));
            }
            merged.push(record);
        }
    }
    Ok(merged)
}

/// Cleans records: normalizes text, drops blank text, missing references and
/// over-long prompts, and optionally removes duplicate texts (first kept).
pub fn preprocess(records: &[PromptRecord], config: &CorpusConfig) -> Vec<PromptRecord> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter_map(|record| {
            let text = normalize(&record.text);
            if text.is_empty() || record.reference.is_none() {
                return None;
            }
            if text.chars().count() > config.max_prompt_chars {
                return None;
            }
            if config.dedup && !seen.insert(text.clone()) {
                return None;
            }
            Some(PromptRecord { text, ..record.clone() })
        })
        .collect()
}

/// Full training-corpus pipeline: leakage check, per-benchmark cleaning and
/// sampling, then source-labeled merge.
pub fn build_training_corpus(records: &[PromptRecord], config: &CorpusConfig) -> Result<Vec<PromptRecord>, CorpusError> {
    config.validate()?;
    reject_test_records(records)?;
    let mut by_benchmark: BTreeMap<&BenchmarkId, Vec<PromptRecord>> = BTreeMap::new();
    for record in records {
        by_benchmark.entry(&record.benchmark).or_default().push(record.clone());
    }
    let samples = by_benchmark
        .into_values()
        .map(|group| proportionate_sample(&preprocess(&group, config), config))
        .collect::<Result<Vec<_>, _>>()?;
    merge_with_source(samples)
}

/// Content hash of a corpus (ids, benchmarks and texts, in order).
pub fn corpus_hash(records: &[PromptRecord]) -> String {
    let mut buf = Vec::new();
    for r in records {
        buf.extend_from_slice(r.id.as_bytes());
        buf.push(0);
        buf.extend_from_slice(r.benchmark.as_str().as_bytes());
        buf.push(0);
        buf.extend_from_slice(r.text.as_bytes());
        buf.push(b'\n');
    }
    sha256_hex(&buf)
}

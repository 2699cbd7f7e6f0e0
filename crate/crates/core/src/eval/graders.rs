use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkId, ReferenceAnswer};
use crate::text::normalize;

static ANSWER_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer(?:\s+is)?\s*[:\-]?\s*\(?\s*([a-j])\b").expect("valid regex"));
static UPPER_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-J])\b").expect("valid regex"));
static BARE_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\W*([a-j])\W*$").expect("valid regex"));

/// Choice letter in a model reply.
///
/// Order of preference: an `answer is X` / `Answer: X` cue (any case), the
/// first standalone capital A-J, then a reply that is a lone letter in
/// either case. Lowercase letters inside prose are ignored so that articles
/// like "a" are not read as choices.
pub fn extract_choice(predicted: &str) -> Option<char> {
    if let Some(c) = ANSWER_CUE.captures(predicted) {
        return first_char(c.get(1)?.as_str());
    }
    let standalone = UPPER_LETTER.find_iter(predicted).find(|m| !is_pronoun_i(predicted, m.start(), m.end()));
    if let Some(m) = standalone {
        return first_char(m.as_str());
    }
    first_char(BARE_LETTER.captures(predicted)?.get(1)?.as_str())
}

fn first_char(s: &str) -> Option<char> {
    s.chars().next().map(|c| c.to_ascii_uppercase())
}

// "I think", "I'm": a capital I followed by a lowercase word or an apostrophe.
fn is_pronoun_i(text: &str, start: usize, end: usize) -> bool {
    if &text[start..end] != "I" {
        return false;
    }
    let rest = &text[end..];
    let after_space = rest.trim_start();
    rest.starts_with('\'') || rest.starts_with('\u{2019}') || (after_space.len() < rest.len() && after_space.starts_with(|c: char| c.is_lowercase()))
}

/// 1 when the extracted choice equals `reference` (case-insensitive), else 0.
pub fn eval_multiple_choice(predicted: &str, reference: &str) -> f64 {
    let reference = reference.trim().to_ascii_uppercase();
    match extract_choice(predicted) {
        Some(c) if reference.len() == 1 && reference.starts_with(c) => 1.0,
        _ => 0.0,
    }
}

/// 1 when both strings agree after NFC, trimming, whitespace collapsing
/// and lowercasing.
pub fn eval_exact_match(predicted: &str, reference: &str) -> f64 {
    let fold = |s: &str| normalize(s).to_lowercase();
    if fold(predicted) == fold(reference) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grader {
    MultipleChoice,
    ExactMatch,
}

impl Grader {
    pub fn grade(self, predicted: &str, reference: &ReferenceAnswer) -> f64 {
        match self {
            Self::MultipleChoice => eval_multiple_choice(predicted, &reference.as_string()),
            Self::ExactMatch => eval_exact_match(predicted, &reference.as_string()),
        }
    }
}

/// Per-benchmark grader choice. Benchmarks without an override are graded
/// by reference shape: a single choice letter uses multiple choice,
/// anything else exact match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraderTable {
    #[serde(default)]
    pub overrides: BTreeMap<BenchmarkId, Grader>,
}

impl GraderTable {
    pub fn with(mut self, benchmark: BenchmarkId, grader: Grader) -> Self {
        self.overrides.insert(benchmark, grader);
        self
    }

    pub fn grader_for(&self, benchmark: &BenchmarkId, reference: &ReferenceAnswer) -> Grader {
        if let Some(g) = self.overrides.get(benchmark) {
            return *g;
        }
        match reference {
            ReferenceAnswer::Choice(_) => Grader::MultipleChoice,
            ReferenceAnswer::Text(_) => Grader::ExactMatch,
        }
    }

    pub fn grade(&self, benchmark: &BenchmarkId, predicted: &str, reference: &ReferenceAnswer) -> f64 {
        self.grader_for(benchmark, reference).grade(predicted, reference)
    }
}

//! Synthetic benchmark scenario with planted clusters and scripted models.
//!
//! Each benchmark owns a keyword group and a "home" mock model. Prompts
//! mention one keyword of their benchmark among neutral filler words, so the
//! anchored embedder separates benchmarks. On the test split every model
//! answers exactly `round(home_accuracy * n)` of its home prompts and
//! `round(away_accuracy * n)` of every other benchmark's prompts correctly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ori_core::embedding::AnchoredEmbedder;
use ori_core::registry::MockRule;
use ori_core::{BenchmarkId, ModelCard, PromptRecord, ReferenceAnswer, Registry, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EmbedderConfig;

const FILLER: &[&str] = &[
    "please", "consider", "the", "following", "carefully", "and", "choose", "one", "option", "given", "below", "which",
    "statement", "best", "describes", "this", "case", "briefly", "explain", "your", "reasoning", "before", "answering",
];
const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

#[derive(Debug, Clone)]
pub struct SynthBenchmark {
    pub name: String,
    pub keywords: Vec<String>,
    pub model_id: String,
    pub price_in: f64,
    pub price_out: f64,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub benchmarks: Vec<SynthBenchmark>,
    pub train_per_benchmark: usize,
    pub test_per_benchmark: usize,
    pub home_accuracy: f64,
    pub away_accuracy: f64,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let bench = |name: &str, words: &[&str], model: &str, price_in: f64, price_out: f64| SynthBenchmark {
            name: name.into(),
            keywords: words.iter().map(|w| w.to_string()).collect(),
            model_id: model.into(),
            price_in,
            price_out,
        };
        Self {
            benchmarks: vec![
                bench("ARITH", &["sum", "multiply", "integer", "equation"], "mock-arith", 0.5, 1.5),
                bench("LAW", &["contract", "statute", "court", "plaintiff"], "mock-law", 1.0, 3.0),
                bench("CODE", &["function", "compile", "pointer", "loop"], "mock-code", 0.2, 0.6),
            ],
            train_per_benchmark: 120,
            test_per_benchmark: 100,
            home_accuracy: 0.95,
            away_accuracy: 0.5,
            dim: 16,
            noise: 0.35,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: Vec<PromptRecord>,
    pub test: Vec<PromptRecord>,
    pub registry: Registry,
    /// Mock scripts keyed by script name (`mock:<name>` endpoints).
    pub scripts: BTreeMap<String, Vec<MockRule>>,
    pub embedder: EmbedderConfig,
}

impl Scenario {
    pub fn embedder(&self) -> AnchoredEmbedder {
        match &self.embedder {
            EmbedderConfig::Anchored { anchors, noise, dim } => {
                AnchoredEmbedder::new(anchors.clone(), *noise, *dim).expect("synthetic spec is valid")
            }
            _ => unreachable!("synthetic scenarios use the anchored embedder"),
        }
    }

    pub fn mock_backend(&self) -> ori_core::registry::MockBackend {
        let mut backend = ori_core::registry::MockBackend::new();
        for (name, rules) in &self.scripts {
            backend.insert_script(name, rules.clone());
        }
        backend
    }

    /// Writes `train.jsonl`, `test.jsonl`, `registry.json`, `embedder.json`
    /// and `mocks/<name>.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir.join("mocks"))?;
        fs::write(dir.join("train.jsonl"), ori_core::corpus::to_jsonl(&self.train))?;
        fs::write(dir.join("test.jsonl"), ori_core::corpus::to_jsonl(&self.test))?;
        fs::write(dir.join("registry.json"), self.registry.to_canonical_json() + "\n")?;
        let embedder = serde_json::to_value(&self.embedder).expect("config serializes");
        fs::write(dir.join("embedder.json"), serde_json::to_string_pretty(&embedder).expect("serializes") + "\n")?;
        for (name, rules) in &self.scripts {
            let lines: String = rules.iter().map(|r| serde_json::to_string(r).expect("rule serializes") + "\n").collect();
            fs::write(dir.join("mocks").join(format!("{name}.jsonl")), lines)?;
        }
        Ok(())
    }
}

fn prompt_text(rng: &mut ChaCha8Rng, keywords: &[String], i: usize) -> String {
    let keyword = &keywords[rng.random_range(0..keywords.len())];
    let mut words: Vec<&str> = (0..8).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
    let at = rng.random_range(0..=words.len());
    words.insert(at, keyword);
    format!("Question {i}: {}?", words.join(" "))
}

pub fn generate(spec: &SynthSpec) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for b in &spec.benchmarks {
        let id = BenchmarkId::new(&b.name).expect("valid benchmark name");
        for (split, n, out) in [(Split::Train, spec.train_per_benchmark, &mut train), (Split::Test, spec.test_per_benchmark, &mut test)] {
            for i in 0..n {
                let letter = LETTERS[rng.random_range(0..LETTERS.len())];
                out.push(PromptRecord {
                    id: format!("{}/{split}/{i}", b.name),
                    text: prompt_text(&mut rng, &b.keywords, i),
                    benchmark: id.clone(),
                    subcategory: None,
                    reference: Some(ReferenceAnswer::Choice(letter)),
                    split,
                });
            }
        }
    }

    let mut registry = Registry::new();
    let mut scripts = BTreeMap::new();
    for model in &spec.benchmarks {
        let scores = spec
            .benchmarks
            .iter()
            .map(|b| {
                let acc = if b.name == model.name { spec.home_accuracy } else { spec.away_accuracy };
                (BenchmarkId::new(&b.name).expect("valid"), acc * 100.0)
            })
            .collect();
        registry
            .register_model(ModelCard {
                model_id: model.model_id.clone(),
                endpoint: format!("mock:{}", model.model_id),
                benchmark_scores: scores,
                price_per_mtok_in: model.price_in,
                price_per_mtok_out: model.price_out,
                enabled: true,
            })
            .expect("valid card");

        let mut rules = Vec::with_capacity(test.len());
        for b in &spec.benchmarks {
            let acc = if b.name == model.name { spec.home_accuracy } else { spec.away_accuracy };
            let records: Vec<&PromptRecord> = test.iter().filter(|r| r.benchmark.as_str() == b.name).collect();
            let n_correct = (acc * records.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut rng);
            let mut correct = vec![false; records.len()];
            order.iter().take(n_correct).for_each(|&i| correct[i] = true);
            for (i, r) in records.iter().enumerate() {
                let Some(ReferenceAnswer::Choice(truth)) = r.reference else { unreachable!() };
                let answer = if correct[i] {
                    truth
                } else {
                    let k = LETTERS.iter().position(|&l| l == truth).expect("letter");
                    LETTERS[(k + 1) % LETTERS.len()]
                };
                rules.push(MockRule {
                    pattern: r.id.clone(),
                    reply: format!("The answer is {answer}."),
                    tokens_out: 4 + (i as u64 % 29),
                });
            }
        }
        scripts.insert(model.model_id.clone(), rules);
    }

    let embedder = EmbedderConfig::Anchored {
        anchors: spec.benchmarks.iter().map(|b| b.keywords.clone()).collect(),
        noise: spec.noise,
        dim: spec.dim,
    };
    Scenario { train, test, registry, scripts, embedder }
}

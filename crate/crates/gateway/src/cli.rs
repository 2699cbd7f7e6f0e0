//! `ori` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ori_core::analysis::profile_csv;
use ori_core::corpus::{build_training_corpus, load_records};
use ori_core::eval::{comparison_report, evaluate_policies, EvalPlan, GraderTable, RunReport};
use ori_core::registry::{GenerationParams, MockBackend, MultiBackend};
use ori_core::router::{knn_route, route, train_router, KChoice, TrainOptions};
use ori_core::{CorpusConfig, EmbeddingCache, Registry, RouterArtifact, Split};

use crate::backend::HttpBackend;
use crate::config::{EmbedderConfig, GatewayConfig};
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "ori", version, about = "Cluster-based LLM query routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a routing artifact from train-split JSONL corpora.
    Train(TrainArgs),
    /// Score the router, single-model baselines and the oracle on a test set.
    Evaluate(EvaluateArgs),
    /// Route one prompt and print the decision as one JSON line.
    Route(RouteArgs),
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge saved run reports into one comparison table.
    Report(ReportArgs),
    /// Write a synthetic three-benchmark scenario with scripted mock models.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSONL prompt records (train split only).
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    /// Inclusive K range for the silhouette sweep, e.g. `2..30`.
    #[arg(long, default_value = "2..30", value_parser = parse_k_range, conflicts_with = "k")]
    pub k_range: RangeInclusive<usize>,
    /// Fixed K; skips the sweep.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Registry JSON; the shipped registry when omitted.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Embedder config JSON; the 384-d test embedder when omitted.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Persistent embedding cache (JSONL).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub quota: usize,
    #[arg(long, default_value_t = 8000)]
    pub max_chars: usize,
    #[arg(long)]
    pub no_dedup: bool,
    #[arg(long, default_value_t = ori_core::clustering::DEFAULT_SILHOUETTE_CAP)]
    pub silhouette_cap: usize,
    /// Keep training embeddings in the artifact for `--knn` routing.
    #[arg(long)]
    pub store_embeddings: bool,
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
    #[arg(long)]
    pub profile_csv: Option<PathBuf>,
    #[arg(long)]
    pub projection_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// JSONL prompt records (test split only).
    #[arg(long, required = true, num_args = 1..)]
    pub testset: Vec<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Directory of `<name>.jsonl` scripts for `mock:<name>` endpoints.
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Output prefix: writes `<prefix>.csv`, `<prefix>.txt` and, with
    /// `--json`, `<prefix>.json`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub no_baselines: bool,
    #[arg(long)]
    pub no_oracle: bool,
    /// Also evaluate neighbor-vote routing with this many neighbors.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long, default_value_t = 120.0)]
    pub timeout_secs: f64,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    #[arg(long)]
    pub knn: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON files written by `evaluate --json` (or single RunReports).
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Output prefix for `<prefix>.csv` and `<prefix>.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 120)]
    pub train_per_benchmark: usize,
    #[arg(long, default_value_t = 100)]
    pub test_per_benchmark: usize,
}

/// Accepts `A..B`, `A..=B` and `A-B`, all inclusive.
pub fn parse_k_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let lo: usize = a.trim().parse().map_err(|_| format!("bad lower bound in `{s}`"))?;
    let hi: usize = b.trim().parse().map_err(|_| format!("bad upper bound in `{s}`"))?;
    if lo < 2 || hi < lo {
        return Err(format!("K range must satisfy 2 <= A <= B, got `{s}`"));
    }
    Ok(lo..=hi)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Route(args) => route_cmd(args),
        Command::Serve { config } => {
            let config = GatewayConfig::load(&config).context("config")?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .context("runtime")?
                .block_on(crate::server::serve(config))
        }
        Command::Report(args) => report(args),
        Command::Synth(args) => synth(args),
    }
}

fn load_registry(path: Option<&Path>) -> Result<Registry> {
    match path {
        Some(p) => Registry::load(p).with_context(|| format!("registry stage: {}", p.display())),
        None => Ok(Registry::shipped()),
    }
}

fn load_embedder_config(path: Option<&Path>, default: EmbedderConfig) -> Result<EmbedderConfig> {
    match path {
        Some(p) => EmbedderConfig::load(p).context("embedding stage"),
        None => Ok(default),
    }
}

fn load_corpus(paths: &[PathBuf]) -> Result<Vec<ori_core::PromptRecord>> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(load_records(p).with_context(|| format!("corpus stage: {}", p.display()))?);
    }
    Ok(records)
}

fn train(args: TrainArgs) -> Result<()> {
    let registry = load_registry(args.registry.as_deref())?;
    let embedder_config = load_embedder_config(args.embedder.as_deref(), EmbedderConfig::Test { dim: ori_core::embedding::DEFAULT_DIM })?;
    let embedder = embedder_config.build(None).context("embedding stage")?;
    let config = CorpusConfig {
        per_benchmark_quota: args.quota,
        seed: args.seed,
        max_prompt_chars: args.max_chars,
        dedup: !args.no_dedup,
    };
    let records = load_corpus(&args.corpus)?;
    let corpus = build_training_corpus(&records, &config).context("corpus stage")?;
    tracing::info!("training corpus: {} prompts from {} raw records", corpus.len(), records.len());

    let cache = match &args.cache {
        Some(p) => Some(EmbeddingCache::open(p, embedder.fingerprint().clone()).context("embedding stage: cache")?),
        None => None,
    };
    let k = match args.k {
        Some(k) => KChoice::Fixed(k),
        None => KChoice::Sweep(args.k_range.clone()),
    };
    let mut options = TrainOptions::new(k, args.seed);
    options.silhouette_cap = args.silhouette_cap;
    options.store_embeddings = args.store_embeddings;
    let outcome = train_router(&corpus, &embedder, &registry, &options, cache.as_ref())?;

    let meta = &outcome.artifact.meta;
    tracing::info!(
        "chose k={} (silhouette {})",
        meta.k,
        meta.silhouette_mean.map_or("n/a".to_string(), |s| format!("{s:.4}"))
    );
    for (cluster, share) in &outcome.cluster_map.weak_clusters {
        tracing::warn!("cluster {cluster} has a weak dominant benchmark ({:.1}%)", share * 100.0);
    }
    if !outcome.cluster_map.empty_clusters.is_empty() {
        tracing::warn!("empty clusters: {:?}", outcome.cluster_map.empty_clusters);
    }
    outcome.artifact.save(&args.out).context("artifact stage")?;
    tracing::info!("wrote {}", args.out.display());

    if let Some(p) = &args.sweep_csv {
        match &outcome.sweep {
            Some(s) => fs::write(p, s.to_csv()).with_context(|| format!("writing {}", p.display()))?,
            None => tracing::warn!("--sweep-csv ignored: no sweep with fixed --k"),
        }
    }
    if let Some(p) = &args.profile_csv {
        fs::write(p, profile_csv(&outcome.distribution)).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.projection_csv {
        fs::write(p, outcome.projection_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn load_artifact(path: &Path) -> Result<RouterArtifact> {
    RouterArtifact::load(path).with_context(|| format!("artifact stage: {}", path.display()))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let artifact = load_artifact(&args.artifact)?;
    let registry = load_registry(args.registry.as_deref())?;
    let embedder = load_embedder_config(args.embedder.as_deref(), EmbedderConfig::Artifact)?
        .build(Some(&artifact.fingerprint))
        .context("embedding stage")?;
    let test = load_corpus(&args.testset)?;
    if let Some(r) = test.iter().find(|r| r.split != Split::Test) {
        bail!("corpus stage: {} is not a test-split record", r.id);
    }
    let mock = match &args.mock_dir {
        Some(dir) => MockBackend::load_dir(dir).map_err(anyhow::Error::msg).context("dispatch stage")?,
        None => MockBackend::new(),
    };
    let timeout = Duration::try_from_secs_f64(args.timeout_secs).context("--timeout-secs")?;
    let backend = MultiBackend { mock, network: Some(Box::new(HttpBackend::new(timeout))) };
    let plan = EvalPlan {
        baselines: !args.no_baselines,
        oracle: !args.no_oracle,
        knn_neighbors: args.knn,
        params: GenerationParams { max_tokens: args.max_tokens, temperature: None },
    };
    let evaluation = evaluate_policies(&test, &artifact, &registry, &embedder, &backend, &GraderTable::default(), &plan)?;
    write_reports(&evaluation.reports, &args.report, args.json)
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn write_reports(reports: &BTreeMap<String, RunReport>, prefix: &Path, json: bool) -> Result<()> {
    let table = comparison_report(reports);
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(with_suffix(prefix, "csv"), &table.csv).context("writing report csv")?;
    fs::write(with_suffix(prefix, "txt"), &table.text).context("writing report text")?;
    if json {
        let value = serde_json::to_value(reports).context("serializing reports")?;
        fs::write(with_suffix(prefix, "json"), serde_json::to_string_pretty(&value)? + "\n").context("writing report json")?;
    }
    print!("{}", table.text);
    Ok(())
}

fn route_cmd(args: RouteArgs) -> Result<()> {
    let artifact = load_artifact(&args.artifact)?;
    let registry = load_registry(args.registry.as_deref())?;
    let embedder = load_embedder_config(args.embedder.as_deref(), EmbedderConfig::Artifact)?
        .build(Some(&artifact.fingerprint))
        .context("embedding stage")?;
    let decision = match args.knn {
        Some(k) => knn_route(&artifact, &registry, &embedder, &args.text, k)?,
        None => route(&artifact, &registry, &embedder, &args.text)?,
    };
    println!("{}", serde_json::to_string(&decision)?);
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut merged = BTreeMap::new();
    for path in &args.runs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let runs: BTreeMap<String, RunReport> = if value.get("policy").is_some() {
            let r: RunReport = serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
            BTreeMap::from([(r.policy.clone(), r)])
        } else {
            serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        for (name, mut r) in runs {
            let key = if merged.contains_key(&name) { format!("{stem}:{name}") } else { name };
            r.policy = key.clone();
            merged.insert(key, r);
        }
    }
    match &args.out {
        Some(prefix) => write_reports(&merged, prefix, false),
        None => {
            print!("{}", comparison_report(&merged).text);
            Ok(())
        }
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        seed: args.seed,
        train_per_benchmark: args.train_per_benchmark,
        test_per_benchmark: args.test_per_benchmark,
        ..SynthSpec::default()
    };
    let scenario = generate(&spec);
    scenario.write(&args.out).with_context(|| format!("writing scenario to {}", args.out.display()))?;
    let mut config = GatewayConfig::new("127.0.0.1:8080", "artifact.json".into(), "registry.json".into());
    config.embedder = scenario.embedder.clone();
    config.mock_dir = Some("mocks".into());
    fs::write(args.out.join("gateway.json"), config.to_canonical_json() + "\n").context("writing gateway.json")?;
    eprintln!(
        "wrote {} train and {} test prompts, {} mock models to {}",
        scenario.train.len(),
        scenario.test.len(),
        scenario.scripts.len(),
        args.out.display()
    );
    Ok(())
}

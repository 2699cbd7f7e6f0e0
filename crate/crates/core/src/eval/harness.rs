use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use super::{aggregate_run, EvalError, EvalOutcome, GraderTable, RunReport};
use crate::corpus::{PromptRecord, Split};
use crate::embedding::Embedder;
use crate::registry::{dispatch_completion, CompletionBackend, CompletionRequest, GenerationParams, Registry, UsageRecord};
use crate::router::{knn_route_embedding, route_embedding, RouterArtifact, RoutingDecision};

pub const ROUTER_POLICY: &str = "router";
pub const KNN_POLICY: &str = "router-knn";
pub const ORACLE_POLICY: &str = "oracle";

/// Which policies to run besides the centroid router.
#[derive(Debug, Clone, Default)]
pub struct EvalPlan {
    /// Route every prompt to each enabled model in turn.
    pub baselines: bool,
    /// Per-prompt best enabled model (needs every model's answer).
    pub oracle: bool,
    /// Neighbor-vote routing with this many neighbors.
    pub knn_neighbors: Option<usize>,
    pub params: GenerationParams,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub decisions: Vec<RoutingDecision>,
    pub outcomes: BTreeMap<String, Vec<EvalOutcome>>,
    pub usage: BTreeMap<String, Vec<UsageRecord>>,
    /// Keyed by policy: `router`, `router-knn`, `oracle`, or a model id for
    /// single-model baselines.
    pub reports: BTreeMap<String, RunReport>,
}

/// Runs the router (and the planned comparison policies) over a test set.
///
/// Each (prompt, model) pair is dispatched at most once and shared by every
/// policy that selects it. The oracle breaks ties between equally correct
/// models by smallest model id.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policies<E, B>(
    test_set: &[PromptRecord],
    artifact: &RouterArtifact,
    registry: &Registry,
    embedder: &E,
    backend: &B,
    graders: &GraderTable,
    plan: &EvalPlan,
) -> Result<Evaluation, EvalError>
where
    E: Embedder + ?Sized,
    B: CompletionBackend + ?Sized,
{
    for r in test_set {
        if r.split != Split::Test {
            return Err(EvalError::NotTestSplit(r.id.clone()));
        }
        if r.reference.is_none() {
            return Err(EvalError::MissingReference(r.id.clone()));
        }
    }
    if embedder.fingerprint() != &artifact.fingerprint {
        return Err(crate::router::RouterError::FingerprintMismatch {
            artifact: artifact.fingerprint.clone(),
            active: embedder.fingerprint().clone(),
        }
        .into());
    }

    let started = Instant::now();
    let texts: Vec<&str> = test_set.iter().map(|r| r.text.as_str()).collect();
    let embeddings = embedder.embed_many(&texts).map_err(crate::router::RouterError::from)?;
    let decisions = test_set
        .iter()
        .zip(&embeddings)
        .map(|(r, e)| route_embedding(artifact, registry, e.as_slice(), Some(&r.id)))
        .collect::<Result<Vec<_>, _>>()?;
    let overhead = started.elapsed().as_secs_f64();

    let knn = match plan.knn_neighbors {
        Some(k) => {
            let started = Instant::now();
            let d = test_set
                .iter()
                .zip(&embeddings)
                .map(|(r, e)| knn_route_embedding(artifact, registry, e.as_slice(), k, Some(&r.id)))
                .collect::<Result<Vec<_>, _>>()?;
            // the shared embedding pass is charged to both routers
            Some((d, overhead + started.elapsed().as_secs_f64()))
        }
        None => None,
    };

    let mut cache: HashMap<(usize, String), (EvalOutcome, UsageRecord)> = HashMap::new();
    let mut run_pair = |i: usize, model_id: &str| -> Result<(EvalOutcome, UsageRecord), EvalError> {
        if let Some(hit) = cache.get(&(i, model_id.to_string())) {
            return Ok(hit.clone());
        }
        let record = &test_set[i];
        let card = registry.get(model_id).ok_or_else(|| EvalError::UnknownModel(model_id.to_string()))?;
        let request = CompletionRequest { prompt_id: Some(&record.id), prompt: &record.text, messages: None, params: &plan.params };
        let (completion, usage) = dispatch_completion(backend, card, &request)?;
        let reference = record.reference.as_ref().expect("checked above");
        let outcome = EvalOutcome {
            prompt_id: record.id.clone(),
            benchmark: record.benchmark.clone(),
            model_id: model_id.to_string(),
            correct: graders.grade(&record.benchmark, &completion.text, reference),
            predicted: completion.text,
        };
        cache.insert((i, model_id.to_string()), (outcome.clone(), usage.clone()));
        Ok((outcome, usage))
    };

    let mut outcomes = BTreeMap::new();
    let mut usage = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut add_policy = |name: &str,
                          picks: Vec<(EvalOutcome, UsageRecord)>,
                          overhead: f64,
                          fallbacks: u64,
                          outcomes: &mut BTreeMap<String, Vec<EvalOutcome>>,
                          usage: &mut BTreeMap<String, Vec<UsageRecord>>| {
        let (o, u): (Vec<_>, Vec<_>) = picks.into_iter().unzip();
        let mut report = aggregate_run(name, &u, &o);
        report.routing_overhead_seconds = overhead;
        report.fallbacks = fallbacks;
        reports.insert(name.to_string(), report);
        outcomes.insert(name.to_string(), o);
        usage.insert(name.to_string(), u);
    };

    let picks = decisions.iter().enumerate().map(|(i, d)| run_pair(i, &d.model_id)).collect::<Result<Vec<_>, _>>()?;
    let fallbacks = decisions.iter().filter(|d| d.fallback_used).count() as u64;
    add_policy(ROUTER_POLICY, picks, overhead, fallbacks, &mut outcomes, &mut usage);

    if let Some((knn_decisions, knn_overhead)) = &knn {
        let picks = knn_decisions.iter().enumerate().map(|(i, d)| run_pair(i, &d.model_id)).collect::<Result<Vec<_>, _>>()?;
        let fallbacks = knn_decisions.iter().filter(|d| d.fallback_used).count() as u64;
        add_policy(KNN_POLICY, picks, *knn_overhead, fallbacks, &mut outcomes, &mut usage);
    }

    let models: Vec<String> = registry.enabled_models().map(|c| c.model_id.clone()).collect();
    if plan.baselines || plan.oracle {
        let mut per_model = Vec::with_capacity(models.len());
        for m in &models {
            per_model.push((0..test_set.len()).map(|i| run_pair(i, m)).collect::<Result<Vec<_>, _>>()?);
        }
        if plan.baselines {
            for (m, picks) in models.iter().zip(&per_model) {
                add_policy(m, picks.clone(), 0.0, 0, &mut outcomes, &mut usage);
            }
        }
        if plan.oracle && !models.is_empty() {
            let picks = (0..test_set.len())
                .map(|i| {
                    // models are id-sorted, so strict `>` keeps the smallest id on ties
                    let mut best = &per_model[0][i];
                    for column in &per_model[1..] {
                        if column[i].0.correct > best.0.correct {
                            best = &column[i];
                        }
                    }
                    best.clone()
                })
                .collect();
            add_policy(ORACLE_POLICY, picks, 0.0, 0, &mut outcomes, &mut usage);
        }
    }

    Ok(Evaluation { decisions, outcomes, usage, reports })
}

//! One test per acceptance criterion. Each prints a single
//! `[PASS]`/`[FAIL]` line with its measured value, tolerance and runtime
//! (run with `--nocapture` to see them), then asserts.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use ori_core::analysis::{build_cluster_benchmark_map, count_distribution, DEFAULT_MIN_DOMINANCE};
use ori_core::clustering::{kmeans_fit, silhouette_score, sweep_k, KMeansParams, SweepOptions};
use ori_core::embedding::TestEmbedder;
use ori_core::eval::{aggregate_run, evaluate_policies, EvalOutcome, EvalPlan, GraderTable, ORACLE_POLICY, ROUTER_POLICY};
use ori_core::registry::{usage_cost, GenerationParams};
use ori_core::router::{route, route_batch, train_router, KChoice, RouterError, TrainOptions};
use ori_core::{BenchmarkId, ModelCard, PromptRecord, Registry, RouterArtifact, Split, UsageRecord};
use ori_gateway::synth::{generate, SynthSpec};
use ori_gateway::{AppState, ServerOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

const SILHOUETTE_TOL: f64 = 1e-9;
const MARGIN_POINTS: f64 = 10.0;
const METRIC_COST_REL_TOL: f64 = 1e-12;

fn criterion(id: u8, name: &str, budget: Duration, body: impl FnOnce() -> Result<String, String>) {
    let started = Instant::now();
    let result = body();
    let elapsed = started.elapsed();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over budget")),
        Err(e) => (false, e),
    };
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {name}: {detail} ({:.2}s of {}s)", elapsed.as_secs_f64(), budget.as_secs());
    assert!(ok, "criterion {id} failed: {detail}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Direct O(n^2) silhouette; singleton members score 0.
fn brute_silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let clusters = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; clusters];
        let mut counts = vec![0usize; clusters];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclid(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..clusters)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn criterion_01_silhouette_matches_brute_force() {
    criterion(1, "silhouette oracle equivalence", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let points: Vec<Vec<f64>> = (0..200).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let got = silhouette_score(&points, &labels).map_err(|e| e.to_string())?.mean;
        let want = brute_silhouette(&points, &labels);
        let diff = (got - want).abs();
        ensure(diff <= SILHOUETTE_TOL, || format!("library {got} vs brute force {want}"))?;
        Ok(format!("mean {got:.12}, |diff| {diff:.1e} <= {SILHOUETTE_TOL:e}"))
    });
}

#[test]
fn criterion_02_kmeans_monotone_and_reproducible() {
    criterion(2, "k-means invariants", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<Vec<f64>> = (0..1000).map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let params = KMeansParams::new(8, 13);
        let a = kmeans_fit(&points, params).map_err(|e| e.to_string())?;
        let b = kmeans_fit(&points, params).map_err(|e| e.to_string())?;
        // strict: no slack for float noise
        for w in a.inertia_history.windows(2) {
            ensure(w[1] <= w[0], || format!("inertia rose from {} to {}", w[0], w[1]))?;
        }
        let bits = |m: &[Vec<f64>]| m.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.model.centroids) == bits(&b.model.centroids), || "reruns differ".into())?;
        // inertia recomputed from the final centroids
        let recomputed: f64 = points
            .iter()
            .zip(&a.labels)
            .map(|(p, &l)| euclid(p, &a.model.centroids[l]).powi(2))
            .sum();
        ensure((recomputed - a.model.inertia).abs() <= 1e-9 * recomputed, || format!("inertia {} vs {recomputed}", a.model.inertia))?;
        Ok(format!("{} iterations non-increasing, centroids bit-identical", a.inertia_history.len()))
    });
}

#[test]
fn criterion_03_sweep_recovers_planted_blobs() {
    criterion(3, "sweep recovery", Duration::from_secs(30), || {
        // pentagon of radius 5: neighbouring centers 5.88 apart
        let centers: Vec<[f64; 2]> = (0..5)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 5.0;
                [5.0 * t.cos(), 5.0 * t.sin()]
            })
            .collect();
        for i in 0..5 {
            for j in 0..i {
                ensure(euclid(&centers[i], &centers[j]) >= 5.0, || "centers too close".into())?;
            }
        }
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..60 {
                points.push(vec![center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
                truth.push(c);
            }
        }
        let sweep = sweep_k(&points, 2..=10, 11, SweepOptions::default()).map_err(|e| e.to_string())?;
        let best = sweep.scores[&sweep.best_k];
        ensure(sweep.best_k == 5, || format!("picked k={} ({:?})", sweep.best_k, sweep.scores))?;
        ensure(best > 0.5, || format!("silhouette {best}"))?;
        let planted = brute_silhouette(&points, &truth);
        ensure((planted - best).abs() <= SILHOUETTE_TOL, || format!("sweep {best} vs planted labels {planted}"))?;
        Ok(format!("best k=5, silhouette {best:.4} > 0.5, equals planted partition"))
    });
}

#[test]
fn criterion_04_dominance_matches_counting() {
    criterion(4, "dominance correctness", Duration::from_secs(10), || {
        let names = ["BBH", "GPQA", "IFEVAL", "MATH-L5", "MMLU", "MUSR"];
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for trial in 0..50 {
            let k = rng.random_range(1..=8);
            let used = rng.random_range(1..=names.len());
            // shuffled declaration order so the tie-break cannot lean on it
            let mut declared: Vec<BenchmarkId> = names[..used].iter().map(|n| BenchmarkId::new(n).unwrap()).collect();
            for i in (1..declared.len()).rev() {
                declared.swap(i, rng.random_range(0..=i));
            }
            // small counts make ties common
            let n = rng.random_range(1..40);
            let records: Vec<(usize, BenchmarkId)> = (0..n)
                .map(|_| (rng.random_range(0..k), declared[rng.random_range(0..used)].clone()))
                .collect();

            let mut expected: BTreeMap<usize, BenchmarkId> = BTreeMap::new();
            let mut empty = Vec::new();
            for cluster in 0..k {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for (c, b) in &records {
                    if *c == cluster {
                        *counts.entry(b.as_str()).or_default() += 1;
                    }
                }
                // BTreeMap iterates names ascending; keep the first maximum
                let mut best: Option<(&str, usize)> = None;
                for (name, count) in counts {
                    if best.is_none_or(|(_, c)| count > c) {
                        best = Some((name, count));
                    }
                }
                match best {
                    Some((name, _)) => {
                        expected.insert(cluster, BenchmarkId::new(name).unwrap());
                    }
                    None => empty.push(cluster),
                }
            }

            let dist = count_distribution(&records, k, &declared).map_err(|e| e.to_string())?;
            let got = build_cluster_benchmark_map(&dist, DEFAULT_MIN_DOMINANCE).map_err(|e| e.to_string())?;
            ensure(got.map == expected, || format!("trial {trial}: {:?} vs {expected:?}", got.map))?;
            ensure(got.empty_clusters == empty, || format!("trial {trial}: empty {:?} vs {empty:?}", got.empty_clusters))?;
        }
        Ok("50/50 label sets equal brute-force counting".into())
    });
}

#[test]
fn criterion_05_registry_top_models() {
    criterion(5, "registry fidelity", Duration::from_secs(5), || {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/registry.json");
        let registry = Registry::load(&path).map_err(|e| e.to_string())?;
        let table = [
            ("MMLU", "Qwen2.5-72B", 82.3),
            ("GPQA", "Qwen2.5-72B", 49.0),
            ("Math-L5", "Qwen2.5-72B", 52.7),
            ("MuSR", "Calme-2.4-78B", 36.37),
            ("BBH", "Deepseek-67B", 78.8),
            ("IFEval", "Llama-3.3-70B", 92.1),
        ];
        for (bench, model, score) in table {
            let id = BenchmarkId::new(bench).unwrap();
            let card = registry.best_model_for_benchmark(&id).map_err(|e| e.to_string())?;
            ensure(card.model_id == model, || format!("{bench} -> {}", card.model_id))?;
            let got = card.benchmark_scores.get(&registry.canonical_benchmark(&id)).copied();
            ensure(got == Some(score), || format!("{bench} score {got:?}, expected {score}"))?;
        }
        Ok("6/6 benchmark -> model pairs and scores exact".into())
    });
}

#[test]
fn criterion_06_every_prompt_gets_one_model() {
    criterion(6, "routing constraint", Duration::from_secs(30), || {
        let embedder = TestEmbedder::new(384);
        let names = ["BBH", "GPQA", "MMLU", "MUSR"];
        let train: Vec<PromptRecord> = (0..400)
            .map(|i| PromptRecord {
                id: format!("t{i}"),
                text: format!("training prompt number {i}"),
                benchmark: BenchmarkId::new(names[i % names.len()]).unwrap(),
                subcategory: None,
                reference: None,
                split: Split::Train,
            })
            .collect();
        let registry = Registry::shipped();
        let artifact = train_router(&train, &embedder, &registry, &TrainOptions::new(KChoice::Fixed(8), 3), None)
            .map_err(|e| e.to_string())?
            .artifact;

        let ids: Vec<String> = (0..10_000).map(|i| format!("q{i}")).collect();
        let texts: Vec<String> = (0..10_000).map(|i| format!("synthetic query {i} about topic {}", i % 37)).collect();
        let prompts: Vec<(&str, &str)> = ids.iter().zip(&texts).map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let decisions = route_batch(&artifact, &registry, &embedder, &prompts).map_err(|e| e.to_string())?;

        ensure(decisions.len() == 10_000, || format!("{} decisions", decisions.len()))?;
        let mut per_prompt: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &decisions {
            *per_prompt.entry(d.prompt_id.as_deref().unwrap_or("")).or_default() += 1;
            let card = registry.get(&d.model_id).ok_or_else(|| format!("unknown model {}", d.model_id))?;
            ensure(card.enabled, || format!("disabled model {}", d.model_id))?;
        }
        ensure(per_prompt.len() == 10_000 && per_prompt.values().all(|&c| c == 1), || "a prompt was routed twice or not at all".into())?;
        Ok("10000 prompts, exactly one enabled model each".into())
    });
}

#[test]
fn criterion_07_router_beats_single_models() {
    criterion(7, "end-to-end superiority", Duration::from_secs(60), || {
        let spec = SynthSpec::default();
        let scenario = generate(&spec);
        let embedder = scenario.embedder();
        let artifact = train_router(&scenario.train, &embedder, &scenario.registry, &TrainOptions::new(KChoice::Sweep(2..=8), 7), None)
            .map_err(|e| e.to_string())?
            .artifact;
        let plan = EvalPlan { baselines: true, oracle: true, knn_neighbors: None, params: GenerationParams::default() };
        let backend = scenario.mock_backend();
        let eval = evaluate_policies(&scenario.test, &artifact, &scenario.registry, &embedder, &backend, &GraderTable::default(), &plan)
            .map_err(|e| e.to_string())?;

        let router = &eval.reports[ROUTER_POLICY];
        let oracle = &eval.reports[ORACLE_POLICY];
        let models: Vec<&ModelCard> = scenario.registry.models().collect();
        // closed form: each benchmark is 1/3 of the test set
        let expected_router = spec.home_accuracy * 100.0;
        let expected_single = (spec.home_accuracy + 2.0 * spec.away_accuracy) / 3.0 * 100.0;
        let mut best_single = f64::MIN;
        for card in &models {
            let baseline = &eval.reports[&card.model_id];
            ensure((baseline.blended_score - expected_single).abs() < 1e-9, || {
                format!("{} scored {}, closed form {expected_single}", card.model_id, baseline.blended_score)
            })?;
            ensure(router.blended_score >= baseline.blended_score + MARGIN_POINTS, || {
                format!("router {} vs {} {}", router.blended_score, card.model_id, baseline.blended_score)
            })?;
            best_single = best_single.max(baseline.blended_score);
        }
        ensure(oracle.objective >= router.objective, || format!("oracle {} < router {}", oracle.objective, router.objective))?;
        ensure((router.blended_score - expected_router).abs() <= 2.0, || format!("router {} far from {expected_router}", router.blended_score))?;
        Ok(format!(
            "router {:.2} (closed form {expected_router:.0}), best single {best_single:.2} (closed form {expected_single:.0}), margin >= {MARGIN_POINTS}, oracle objective {} >= {}",
            router.blended_score, oracle.objective, router.objective
        ))
    });
}

#[test]
fn criterion_08_metric_formulas() {
    criterion(8, "metric formula checks", Duration::from_secs(5), || {
        let card = |id: &str, price_in: f64, price_out: f64| ModelCard {
            model_id: id.into(),
            endpoint: format!("mock:{id}"),
            benchmark_scores: BTreeMap::new(),
            price_per_mtok_in: price_in,
            price_per_mtok_out: price_out,
            enabled: true,
        };
        // $0.50 and $1.44 from per-million-token prices
        let a = card("a", 1.0, 0.0);
        let b = card("b", 0.0, 2.0);
        let usage = vec![
            UsageRecord { model_id: "a".into(), prompt_tokens: 500_000, completion_tokens: 0, wall_seconds: 0.5, cost_usd: usage_cost(&a, 500_000, 0) },
            UsageRecord { model_id: "b".into(), prompt_tokens: 0, completion_tokens: 720_000, wall_seconds: 0.0, cost_usd: usage_cost(&b, 0, 720_000) },
        ];
        ensure(usage[0].cost_usd == 0.50 && usage[1].cost_usd == 1.44, || format!("costs {} {}", usage[0].cost_usd, usage[1].cost_usd))?;
        let cost = aggregate_run("x", &usage, &[]).total_cost_usd;
        ensure(cost == 1.94, || format!("cost total {cost}"))?;

        let outcome = EvalOutcome { prompt_id: "p".into(), benchmark: BenchmarkId::new("MMLU").unwrap(), model_id: "a".into(), predicted: String::new(), correct: 1.0 };
        let timed = vec![
            UsageRecord { model_id: "a".into(), prompt_tokens: 0, completion_tokens: 300, wall_seconds: 0.75, cost_usd: 0.0 },
            UsageRecord { model_id: "a".into(), prompt_tokens: 0, completion_tokens: 450, wall_seconds: 1.25, cost_usd: 0.0 },
        ];
        let report = aggregate_run("x", &timed, &[outcome]);
        ensure(report.tokens_per_second == 375.0, || format!("throughput {}", report.tokens_per_second))?;
        Ok(format!("750 tok / 2 s = {}, $0.50 + $1.44 = ${cost}, both exact", report.tokens_per_second))
    });
}

#[test]
fn criterion_09_concurrent_routes_match_serial() {
    criterion(9, "concurrency determinism", Duration::from_secs(60), || {
        let scenario = small_scenario();
        let snapshot = trained_snapshot(&scenario);
        let texts: Vec<String> = (0..100)
            .map(|i| {
                let words = ["sum", "court", "loop", "statute", "pointer", "equation", "weather"];
                format!("question {i}: {} and {}", words[i % words.len()], words[(i * 3) % words.len()])
            })
            .collect();
        let serial: Vec<Value> = texts
            .iter()
            .map(|t| serde_json::to_value(route(&snapshot.artifact, &snapshot.registry, snapshot.embedder.as_ref(), t).unwrap()).unwrap())
            .collect();

        let state = AppState::new(Some(snapshot), Arc::new(scenario.mock_backend()), ServerOptions::default(), None);
        let base = spawn(state.clone());
        let url = format!("{base}/v1/route");
        let parallel: Vec<Value> = std::thread::scope(|s| {
            let handles: Vec<_> = texts
                .iter()
                .map(|t| {
                    let url = &url;
                    s.spawn(move || {
                        let (status, _, body) = post(url, &json!({ "text": t }));
                        assert_eq!(status, 200, "{body}");
                        serde_json::from_str(&body).unwrap()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mismatches = serial.iter().zip(&parallel).filter(|(a, b)| a != b).count();
        ensure(mismatches == 0, || format!("{mismatches} of 100 parallel decisions differ from serial"))?;

        let chat = format!("{base}/v1/chat/completions");
        std::thread::scope(|s| {
            for t in texts.iter().take(40) {
                let chat = &chat;
                s.spawn(move || post(chat, &json!({"messages": [{"role": "user", "content": t}]})));
            }
        });
        let (_, usage_body) = get(&format!("{base}/v1/usage"));
        let usage: Vec<UsageRecord> = serde_json::from_str(&usage_body).map_err(|e| e.to_string())?;
        let metrics = parse_metrics(&get(&format!("{base}/metrics")).1);
        let sum_cost: f64 = usage.iter().map(|u| u.cost_usd).sum();
        let sum_prompt: u64 = usage.iter().map(|u| u.prompt_tokens).sum();
        let sum_completion: u64 = usage.iter().map(|u| u.completion_tokens).sum();
        ensure(usage.len() == 40, || format!("{} usage records", usage.len()))?;
        ensure(metric(&metrics, "ori_dispatches_total") == usage.len() as f64, || "dispatch count differs".into())?;
        ensure(metric(&metrics, "ori_prompt_tokens_total") == sum_prompt as f64, || "prompt tokens differ".into())?;
        ensure(metric(&metrics, "ori_completion_tokens_total") == sum_completion as f64, || "completion tokens differ".into())?;
        let reported = metric(&metrics, "ori_cost_usd_total");
        ensure((reported - sum_cost).abs() <= METRIC_COST_REL_TOL * sum_cost.abs().max(1.0), || format!("cost {reported} vs {sum_cost}"))?;
        let per_model: f64 = metrics.iter().filter(|(k, _)| k.starts_with("ori_model_dispatches_total")).map(|(_, v)| v).sum();
        ensure(per_model == 40.0, || format!("per-model dispatches sum to {per_model}"))?;
        Ok(format!(
            "100/100 parallel == serial; /metrics equals usage sum over 40 dispatches (tokens exact, cost rel tol {METRIC_COST_REL_TOL:e})"
        ))
    });
}

#[test]
fn criterion_10_serialization_roundtrips() {
    criterion(10, "serialization", Duration::from_secs(10), || {
        let scenario = small_scenario();
        let snapshot = trained_snapshot(&scenario);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("artifact.json");
        snapshot.artifact.save(&path).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&path).unwrap();
        let loaded = RouterArtifact::load(&path).map_err(|e| e.to_string())?;
        ensure(loaded == snapshot.artifact, || "artifact changed on load".into())?;
        let bits = |a: &RouterArtifact| a.centroid_model.centroids.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&loaded) == bits(&snapshot.artifact), || "centroid bits changed".into())?;
        loaded.save(&path).unwrap();
        ensure(std::fs::read(&path).unwrap() == bytes, || "re-saved artifact bytes differ".into())?;

        let reg_path = dir.path().join("registry.json");
        scenario.registry.save(&reg_path).map_err(|e| e.to_string())?;
        let reg_bytes = std::fs::read(&reg_path).unwrap();
        let reg = Registry::load(&reg_path).map_err(|e| e.to_string())?;
        ensure(reg == scenario.registry, || "registry changed on load".into())?;
        reg.save(&reg_path).unwrap();
        ensure(std::fs::read(&reg_path).unwrap() == reg_bytes, || "re-saved registry bytes differ".into())?;

        let mut doc: Value = serde_json::from_slice(&bytes).unwrap();
        doc["kmeans"]["centroids"][0].as_array_mut().unwrap().pop();
        let bad_dim = RouterArtifact::from_json(&doc.to_string());
        ensure(matches!(bad_dim, Err(RouterError::Invalid(_))), || format!("dim tamper gave {bad_dim:?}"))?;
        let mut doc: Value = serde_json::from_slice(&bytes).unwrap();
        doc["version"] = json!(99);
        let bad_version = RouterArtifact::from_json(&doc.to_string());
        ensure(matches!(bad_version, Err(RouterError::VersionMismatch { found: 99, .. })), || format!("version tamper gave {bad_version:?}"))?;
        Ok(format!("artifact ({} bytes) and registry byte-identical after load+save; dim and version tampering rejected", bytes.len()))
    });
}

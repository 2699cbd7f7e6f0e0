use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ori(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ori")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Per-benchmark accuracy of one mock model, counted straight from its script.
fn scripted_scores(dir: &Path, model: &str) -> BTreeMap<String, f64> {
    let replies: BTreeMap<String, String> = jsonl(&dir.join("mocks").join(format!("{model}.jsonl")))
        .into_iter()
        .map(|r| (r["match"].as_str().unwrap().to_string(), r["reply"].as_str().unwrap().to_string()))
        .collect();
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for record in jsonl(&dir.join("test.jsonl")) {
        let reply = &replies[record["id"].as_str().unwrap()];
        let letter = reply.trim_end_matches('.').rsplit(' ').next().unwrap();
        let entry = tally.entry(record["benchmark"].as_str().unwrap().to_string()).or_default();
        entry.0 += usize::from(letter == record["reference"].as_str().unwrap());
        entry.1 += 1;
    }
    tally.into_iter().map(|(b, (hit, n))| (b, hit as f64 / n as f64 * 100.0)).collect()
}

#[test]
fn synth_train_evaluate_route_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&ori(&["synth", "--out", ".", "--train-per-benchmark", "60", "--test-per-benchmark", "30", "--seed", "3"], dir));

    let train = ori(
        &[
            "train", "--corpus", "train.jsonl", "--registry", "registry.json", "--embedder", "embedder.json", "--k-range", "2..6",
            "--seed", "1", "--out", "artifact.json", "--sweep-csv", "sweep.csv", "--profile-csv", "profile.csv", "--projection-csv",
            "proj.csv", "--store-embeddings",
        ],
        dir,
    );
    ok(&train);
    let sweep = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 6, "{sweep}");
    assert!(std::fs::read_to_string(dir.join("proj.csv")).unwrap().starts_with("x,y,cluster,benchmark\n"));
    let artifact: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("artifact.json")).unwrap()).unwrap();
    assert_eq!(artifact["meta"]["k"], 3);

    let stdout = ok(&ori(
        &[
            "evaluate", "--artifact", "artifact.json", "--testset", "test.jsonl", "--registry", "registry.json", "--mock-dir", "mocks",
            "--embedder", "embedder.json", "--report", "out/run", "--json", "--knn", "5",
        ],
        dir,
    ));
    assert!(stdout.contains("router"));
    let reports: BTreeMap<String, Value> = serde_json::from_str(&std::fs::read_to_string(dir.join("out/run.json")).unwrap()).unwrap();
    for model in ["mock-arith", "mock-code", "mock-law"] {
        let want = scripted_scores(dir, model);
        let got: BTreeMap<String, f64> = serde_json::from_value(reports[model]["scores"].clone()).unwrap();
        assert_eq!(got, want, "{model}");
    }
    let router = reports["router"]["blended_score"].as_f64().unwrap();
    let oracle = reports["oracle"]["objective"].as_f64().unwrap();
    assert!(router >= 90.0, "{router}");
    assert!(oracle >= reports["router"]["objective"].as_f64().unwrap());
    assert!(reports.contains_key("router-knn"));
    let csv = std::fs::read_to_string(dir.join("out/run.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("policy,"));

    let decision: Value = serde_json::from_str(&ok(&ori(
        &["route", "--artifact", "artifact.json", "--registry", "registry.json", "--embedder", "embedder.json", "--text", "which court heard the statute"],
        dir,
    )))
    .unwrap();
    assert_eq!(decision["model_id"], "mock-law");
    assert_eq!(decision["fallback_used"], false);

    ok(&ori(&["report", "--runs", "out/run.json", "--out", "merged"], dir));
    assert_eq!(std::fs::read_to_string(dir.join("merged.csv")).unwrap(), csv);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let usage = ori(&["train", "--k", "3", "--k-range", "2..4", "--corpus", "x", "--out", "y"], tmp.path());
    assert_eq!(usage.status.code(), Some(2));
    let bad_range = ori(&["train", "--k-range", "1..4", "--corpus", "x", "--out", "y"], tmp.path());
    assert_eq!(bad_range.status.code(), Some(2));

    let missing = ori(&["route", "--artifact", "nope.json", "--text", "hi"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    std::fs::write(tmp.path().join("artifact.json"), "{\"version\": 7}").unwrap();
    let tampered = ori(&["route", "--artifact", "artifact.json", "--text", "hi"], tmp.path());
    assert_eq!(tampered.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&tampered.stderr).contains("version"));
}

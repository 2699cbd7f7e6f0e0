#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use ori_core::router::{train_router, KChoice, TrainOptions};
use ori_gateway::synth::{generate, Scenario, SynthSpec};
use ori_gateway::{app, AppState, Snapshot};
use serde_json::Value;

/// Serves `state` on an ephemeral port from a background runtime.
pub fn spawn(state: Arc<AppState>) -> String {
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app(state)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

pub fn client() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// `(status, headers, body)` of a JSON POST.
pub fn post(url: &str, body: &Value) -> (u16, Vec<(String, String)>, String) {
    let mut response = client().post(url).send_json(body).unwrap();
    let headers = response
        .headers()
        .iter()
        .map(|(k, v)| (k.as_str().to_string(), v.to_str().unwrap_or_default().to_string()))
        .collect();
    let status = response.status().as_u16();
    (status, headers, response.body_mut().read_to_string().unwrap())
}

pub fn get(url: &str) -> (u16, String) {
    let mut response = client().get(url).call().unwrap();
    (response.status().as_u16(), response.body_mut().read_to_string().unwrap())
}

pub fn small_scenario() -> Scenario {
    generate(&SynthSpec { train_per_benchmark: 40, test_per_benchmark: 20, ..SynthSpec::default() })
}

pub fn trained_snapshot(scenario: &Scenario) -> Snapshot {
    let embedder = scenario.embedder();
    let artifact = train_router(&scenario.train, &embedder, &scenario.registry, &TrainOptions::new(KChoice::Fixed(3), 1), None)
        .unwrap()
        .artifact;
    Snapshot::new(artifact, scenario.registry.clone(), Arc::new(embedder)).unwrap()
}

/// `name{labels} value` lines of a metrics body.
pub fn parse_metrics(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|l| l.rsplit_once(' ').map(|(k, v)| (k.to_string(), v.parse().unwrap())))
        .collect()
}

pub fn metric(metrics: &[(String, f64)], key: &str) -> f64 {
    metrics.iter().find(|(k, _)| k == key).map(|(_, v)| *v).unwrap_or(0.0)
}

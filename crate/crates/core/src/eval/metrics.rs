use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EvalOutcome;
use crate::corpus::BenchmarkId;
use crate::registry::UsageRecord;
use crate::text::order_independent_sum;

/// Quality, cost and speed of one policy over one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub prompts: usize,
    /// Score (0-100) per benchmark present in the outcomes.
    pub scores: BTreeMap<BenchmarkId, f64>,
    /// Score over all outcomes; 0 for an empty run.
    pub blended_score: f64,
    /// Sum of correctness over the routed pairs.
    pub objective: f64,
    pub total_cost_usd: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    /// Sum of per-dispatch wall time.
    pub wall_seconds: f64,
    /// Completion tokens per second of wall time; 0 when undefined.
    pub tokens_per_second: f64,
    pub throughput_defined: bool,
    /// Time spent embedding and searching centroids, kept apart from
    /// backend time.
    pub routing_overhead_seconds: f64,
    pub dispatches: BTreeMap<String, u64>,
    pub fallbacks: u64,
}

/// Exact totals over a set of usage records, independent of their order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub dispatches: BTreeMap<String, u64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub wall_seconds: f64,
}

impl UsageTotals {
    pub fn from_records(usage: &[UsageRecord]) -> Self {
        let mut dispatches = BTreeMap::new();
        for u in usage {
            *dispatches.entry(u.model_id.clone()).or_insert(0) += 1;
        }
        Self {
            dispatches,
            prompt_tokens: usage.iter().map(|u| u.prompt_tokens).sum(),
            completion_tokens: usage.iter().map(|u| u.completion_tokens).sum(),
            cost_usd: order_independent_sum(usage.iter().map(|u| u.cost_usd)),
            wall_seconds: order_independent_sum(usage.iter().map(|u| u.wall_seconds)),
        }
    }

    pub fn requests(&self) -> u64 {
        self.dispatches.values().sum()
    }
}

/// Append-only usage log shared between threads.
#[derive(Debug, Default)]
pub struct UsageLedger {
    records: Mutex<Vec<UsageRecord>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, usage: UsageRecord) {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(usage);
    }

    pub fn extend(&self, other: &UsageLedger) {
        let incoming = other.snapshot();
        self.records.lock().unwrap_or_else(|e| e.into_inner()).extend(incoming);
    }

    pub fn snapshot(&self) -> Vec<UsageRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn totals(&self) -> UsageTotals {
        UsageTotals::from_records(&self.records.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

/// Builds the report for one policy from its usage records and graded
/// outcomes. Throughput is completion tokens over summed wall time.
pub fn aggregate_run(policy: &str, usage: &[UsageRecord], outcomes: &[EvalOutcome]) -> RunReport {
    let totals = UsageTotals::from_records(usage);
    let mut by_benchmark: BTreeMap<&BenchmarkId, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        by_benchmark.entry(&o.benchmark).or_default().push(o.correct);
    }
    let scores = by_benchmark
        .into_iter()
        .map(|(b, c)| (b.clone(), order_independent_sum(c.iter().copied()) / c.len() as f64 * 100.0))
        .collect();
    let objective = order_independent_sum(outcomes.iter().map(|o| o.correct));
    let blended_score = if outcomes.is_empty() { 0.0 } else { objective / outcomes.len() as f64 * 100.0 };
    let throughput_defined = totals.wall_seconds > 0.0;
    RunReport {
        policy: policy.to_string(),
        prompts: outcomes.len(),
        scores,
        blended_score,
        objective,
        total_cost_usd: totals.cost_usd,
        prompt_tokens: totals.prompt_tokens,
        completion_tokens: totals.completion_tokens,
        total_tokens: totals.prompt_tokens + totals.completion_tokens,
        wall_seconds: totals.wall_seconds,
        tokens_per_second: if throughput_defined { totals.completion_tokens as f64 / totals.wall_seconds } else { 0.0 },
        throughput_defined,
        routing_overhead_seconds: 0.0,
        dispatches: totals.dispatches,
        fallbacks: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usage(model: &str, out: u64, secs: f64, cost: f64) -> UsageRecord {
        UsageRecord { model_id: model.into(), prompt_tokens: 10, completion_tokens: out, wall_seconds: secs, cost_usd: cost }
    }

    #[test]
    fn throughput_and_cost() {
        let r = aggregate_run("p", &[usage("a", 750, 2.0, 0.5)], &[]);
        assert_eq!(r.tokens_per_second, 375.0);
        let r = aggregate_run("p", &[usage("a", 1, 1.0, 0.5), usage("b", 1, 1.0, 1.44)], &[]);
        assert_eq!(r.total_cost_usd, 1.94);
        assert_eq!(r.dispatches.len(), 2);
    }

    #[test]
    fn empty_run_flags_throughput() {
        let r = aggregate_run("p", &[], &[]);
        assert_eq!((r.total_cost_usd, r.total_tokens, r.wall_seconds, r.tokens_per_second), (0.0, 0, 0.0, 0.0));
        assert!(!r.throughput_defined);
        assert_eq!(r.blended_score, 0.0);
    }

    #[test]
    fn ledger_totals_ignore_arrival_order() {
        let records: Vec<_> = (0..200).map(|i| usage(["a", "b", "c"][i % 3], i as u64, 0.1 * i as f64, 1e-3 * (i as f64).sqrt())).collect();
        let forward = UsageLedger::new();
        records.iter().cloned().for_each(|r| forward.record(r));
        let backward = UsageLedger::new();
        std::thread::scope(|s| {
            for chunk in records.chunks(17).rev() {
                let ledger = &backward;
                s.spawn(move || chunk.iter().rev().cloned().for_each(|r| ledger.record(r)));
            }
        });
        assert_eq!(forward.totals(), backward.totals());
        assert_eq!(forward.totals().requests(), 200);
    }
}

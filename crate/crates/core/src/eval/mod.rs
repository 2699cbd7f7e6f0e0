//! Grading, scores, the routing objective, run metrics and reports.

mod graders;
mod harness;
mod metrics;
mod report;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BenchmarkId;
use crate::registry::DispatchError;
use crate::router::{RouterError, RoutingDecision};
use crate::text::order_independent_sum;

pub use graders::{eval_exact_match, eval_multiple_choice, extract_choice, Grader, GraderTable};
pub use harness::{evaluate_policies, EvalPlan, Evaluation, KNN_POLICY, ORACLE_POLICY, ROUTER_POLICY};
pub use metrics::{aggregate_run, RunReport, UsageLedger, UsageTotals};
pub use report::{comparison_report, ComparisonReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to score")]
    Empty,
    #[error("outcomes mix benchmarks {0} and {1}")]
    MixedBenchmarks(BenchmarkId, BenchmarkId),
    #[error("outcome {prompt_id} has correctness {value} outside [0, 1]")]
    InvalidCorrectness { prompt_id: String, value: f64 },
    #[error("decisions do not match outcomes: {0}")]
    DecisionMismatch(String),
    #[error("test record {0} has no reference answer")]
    MissingReference(String),
    #[error("test record {0} is not from the test split")]
    NotTestSplit(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("routing stage: {0}")]
    Router(#[from] RouterError),
    #[error("dispatch stage: {0}")]
    Dispatch(#[from] DispatchError),
}

/// Graded answer of one model to one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub prompt_id: String,
    pub benchmark: BenchmarkId,
    pub model_id: String,
    pub predicted: String,
    /// 0 or 1 for the shipped graders; any value in [0, 1] is accepted.
    pub correct: f64,
}

impl EvalOutcome {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.correct) {
            return Err(EvalError::InvalidCorrectness { prompt_id: self.prompt_id.clone(), value: self.correct });
        }
        Ok(())
    }
}

/// `100 * mean(correct)` over outcomes from a single benchmark.
pub fn score_model_on_benchmark(outcomes: &[EvalOutcome]) -> Result<f64, EvalError> {
    let first = outcomes.first().ok_or(EvalError::Empty)?;
    if let Some(other) = outcomes.iter().find(|o| o.benchmark != first.benchmark) {
        return Err(EvalError::MixedBenchmarks(first.benchmark.clone(), other.benchmark.clone()));
    }
    blended_score(outcomes)
}

/// `100 * mean(correct)` over outcomes from any mix of benchmarks.
pub fn blended_score(outcomes: &[EvalOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    for o in outcomes {
        o.validate()?;
    }
    Ok(order_independent_sum(outcomes.iter().map(|o| o.correct)) / outcomes.len() as f64 * 100.0)
}

/// Sum of `correct` over the routed (prompt, model) pairs.
///
/// `decisions` must cover `outcomes` one-to-one by prompt id, and each
/// outcome must come from the model its decision chose.
pub fn objective_value(outcomes: &[EvalOutcome], decisions: &[RoutingDecision]) -> Result<f64, EvalError> {
    if outcomes.len() != decisions.len() {
        return Err(EvalError::DecisionMismatch(format!(
            "{} outcomes vs {} decisions",
            outcomes.len(),
            decisions.len()
        )));
    }
    let mut chosen: HashMap<&str, &str> = HashMap::with_capacity(decisions.len());
    for d in decisions {
        let id = d
            .prompt_id
            .as_deref()
            .ok_or_else(|| EvalError::DecisionMismatch("decision without prompt id".into()))?;
        if chosen.insert(id, d.model_id.as_str()).is_some() {
            return Err(EvalError::DecisionMismatch(format!("prompt {id} decided twice")));
        }
    }
    let mut seen = BTreeSet::new();
    for o in outcomes {
        o.validate()?;
        match chosen.get(o.prompt_id.as_str()) {
            None => return Err(EvalError::DecisionMismatch(format!("no decision for prompt {}", o.prompt_id))),
            Some(m) if *m != o.model_id => {
                return Err(EvalError::DecisionMismatch(format!(
                    "prompt {} routed to {m} but graded for {}",
                    o.prompt_id, o.model_id
                )))
            }
            Some(_) => {}
        }
        if !seen.insert(o.prompt_id.as_str()) {
            return Err(EvalError::DecisionMismatch(format!("prompt {} graded twice", o.prompt_id)));
        }
    }
    Ok(order_independent_sum(outcomes.iter().map(|o| o.correct)))
}

use std::collections::{BTreeMap, BTreeSet};

use super::RunReport;
use crate::corpus::BenchmarkId;

/// Side-by-side policy comparison as CSV and as an aligned text table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub csv: String,
    pub text: String,
}

#[derive(Clone, Copy)]
enum Better {
    Higher,
    Lower,
}

struct Column {
    name: String,
    better: Better,
    decimals: usize,
    values: Vec<Option<f64>>,
}

/// Builds the comparison table. Rows follow policy-name order; columns are
/// per-benchmark scores (sorted), then blended score, objective, cost,
/// tokens, wall seconds, throughput and routing overhead. The best cell of
/// each column is marked with `*` in the text table and listed in the CSV
/// `best` column; ties mark every tied row.
pub fn comparison_report(runs: &BTreeMap<String, RunReport>) -> ComparisonReport {
    let benchmarks: BTreeSet<&BenchmarkId> = runs.values().flat_map(|r| r.scores.keys()).collect();
    let rows: Vec<&RunReport> = runs.values().collect();
    let col = |name: String, better, decimals, f: &dyn Fn(&RunReport) -> Option<f64>| Column {
        name,
        better,
        decimals,
        values: rows.iter().map(|r| f(r)).collect(),
    };

    let mut columns = Vec::new();
    for b in &benchmarks {
        columns.push(col(format!("score_{b}"), Better::Higher, 2, &|r| r.scores.get(*b).copied()));
    }
    columns.push(col("blended_score".into(), Better::Higher, 2, &|r| Some(r.blended_score)));
    columns.push(col("objective".into(), Better::Higher, 2, &|r| Some(r.objective)));
    columns.push(col("cost_usd".into(), Better::Lower, 6, &|r| Some(r.total_cost_usd)));
    columns.push(col("total_tokens".into(), Better::Lower, 0, &|r| Some(r.total_tokens as f64)));
    columns.push(col("wall_seconds".into(), Better::Lower, 3, &|r| Some(r.wall_seconds)));
    columns.push(col("tokens_per_second".into(), Better::Higher, 1, &|r| {
        r.throughput_defined.then_some(r.tokens_per_second)
    }));
    columns.push(col("routing_overhead_s".into(), Better::Lower, 6, &|r| Some(r.routing_overhead_seconds)));

    let best: Vec<Vec<bool>> = columns
        .iter()
        .map(|c| {
            let target = c.values.iter().flatten().copied().reduce(|a, b| match c.better {
                Better::Higher => a.max(b),
                Better::Lower => a.min(b),
            });
            c.values.iter().map(|v| v.is_some() && *v == target).collect()
        })
        .collect();

    let mut csv = String::from("policy");
    for c in &columns {
        csv.push(',');
        csv.push_str(&c.name);
    }
    csv.push_str(",best\n");
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&r.policy);
        for c in &columns {
            csv.push(',');
            if let Some(v) = c.values[i] {
                csv.push_str(&v.to_string());
            }
        }
        let marked: Vec<&str> = columns.iter().zip(&best).filter(|(_, b)| b[i]).map(|(c, _)| c.name.as_str()).collect();
        csv.push(',');
        csv.push_str(&marked.join(";"));
        csv.push('\n');
    }

    let mut grid: Vec<Vec<String>> = vec![std::iter::once("policy".to_string()).chain(columns.iter().map(|c| c.name.clone())).collect()];
    for (i, r) in rows.iter().enumerate() {
        let mut line = vec![r.policy.clone()];
        for (c, b) in columns.iter().zip(&best) {
            line.push(match c.values[i] {
                Some(v) => format!("{:.*}{}", c.decimals, v, if b[i] { "*" } else { " " }),
                None => "- ".to_string(),
            });
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len()).map(|j| grid.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for line in &grid {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (cell, w))| if j == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    ComparisonReport { csv, text }
}

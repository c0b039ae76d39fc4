//! CSV and JSON writers.
//!
//! Frontier CSV columns, in order (times in seconds, costs in USD per
//! million tokens). The breakdown columns describe one target forward pass,
//! which is the verify pass when speculation is on; the `spec_` columns are
//! empty otherwise.

use std::fs;
use std::path::Path;

use infereco::ParetoPoint;
use serde::Serialize;

use crate::{CliResult, Failure};

pub const CSV_COLUMNS: &[&str] = &[
    "tokens_per_second",
    "usd_per_million_tokens",
    "n_gpu",
    "n_nodes",
    "tp",
    "pp",
    "ep",
    "batch",
    "memory_time_s",
    "arithmetic_time_s",
    "collective_latency_time_s",
    "kernel_launch_time_s",
    "network_bandwidth_time_s",
    "pp_boundary_time_s",
    "pass_latency_s",
    "pass_gpu_seconds_per_token",
    "memory_required_bytes",
    "memory_capacity_bytes",
    "spec_gamma",
    "spec_expected_tokens",
    "spec_draft_replicas",
    "spec_draft_latency_s",
    "accelerator",
];

fn row(accelerator: &str, p: &ParetoPoint) -> Vec<String> {
    let b = &p.breakdown;
    let mut out: Vec<String> = [p.tokens_per_second, p.cost_per_million_tokens]
        .iter()
        .map(f64::to_string)
        .collect();
    out.extend(
        [
            p.plan.n_gpu,
            p.plan.n_nodes,
            p.plan.tp,
            p.plan.pp,
            p.plan.ep,
            p.batch_size,
        ]
        .iter()
        .map(u32::to_string),
    );
    out.extend(
        [
            b.memory_time,
            b.arithmetic_time,
            b.collective_latency_time,
            b.kernel_launch_time,
            b.network_bandwidth_time,
            b.pp_boundary_time,
            b.token_latency,
            b.gpu_seconds_per_token,
            b.memory_required_bytes,
            b.memory_capacity_bytes,
        ]
        .iter()
        .map(f64::to_string),
    );
    match &p.speculation {
        Some(s) => out.extend([
            s.gamma.to_string(),
            s.expected_tokens.to_string(),
            s.draft_replicas.to_string(),
            s.draft_latency.to_string(),
        ]),
        None => out.extend(std::iter::repeat_n(String::new(), 4)),
    }
    out.push(accelerator.to_string());
    out
}

/// Frontier rows for each accelerator, in the order given.
pub fn frontier_csv(frontiers: &[(&str, &[ParetoPoint])]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Output(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(fail)?;
    for (name, points) in frontiers {
        for p in *points {
            w.write_record(row(name, p)).map_err(fail)?;
        }
    }
    w.into_inner().map_err(|e| Failure::Output(format!("csv: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Failure::Output(format!("cannot write {}: {e}", path.display())))
}

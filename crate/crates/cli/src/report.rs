//! CSV and JSON report emission.
//!
//! Every CSV starts with a `# costs: ...` line recording the cost constants,
//! followed by a header row. Files are written to a temporary name and renamed.

use std::fs;
use std::path::Path;

use ecc_core::coinfer::write_outcomes;
use ecc_core::continual::LifecycleReport;
use ecc_core::costs::CostConstants;
use ecc_core::metrics::{acci, avg_accuracy, AccuracyMatrix};

use crate::runner::{AblationRow, FrontierPoint};
use crate::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(ecc_core::EccError::from)?;
    fs::rename(&tmp, path).map_err(ecc_core::EccError::from)?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn table(costs: &CostConstants, header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# costs: {}\n", costs.describe()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(ecc_core::EccError::from)?;
        for r in rows {
            w.write_record(&r).map_err(ecc_core::EccError::from)?;
        }
        w.flush().map_err(ecc_core::EccError::from)?;
    }
    Ok(out)
}

pub fn matrix_csv(m: &AccuracyMatrix, value: &str, costs: &CostConstants) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for n in 1..=m.tasks() {
        for (i, v) in m.row(n)?.into_iter().enumerate() {
            rows.push(vec![n.to_string(), (i + 1).to_string(), num(v)]);
        }
    }
    table(costs, &["after_task", "task", value], rows)
}

pub fn per_task_csv(report: &LifecycleReport, costs: &CostConstants) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for t in &report.tasks {
        let e = &t.execution;
        rows.push(vec![
            t.task.to_string(),
            t.edge_classes.to_string(),
            e.outcomes.len().to_string(),
            num(e.accuracy),
            num(t.edge_accuracy),
            num(t.cloud_accuracy),
            opt(acci(e.accuracy, t.edge_accuracy, t.cloud_accuracy).ok()),
            num(e.cur),
            num(e.mean_energy_mj),
            num(e.mean_latency_ms),
            num(e.total_cost.compute_energy_mj),
            num(e.total_cost.comm_energy_mj),
            num(e.total_cost.compute_latency_ms),
            num(e.total_cost.comm_latency_ms),
            t.buffer_size.to_string(),
            num(avg_accuracy(&report.accuracy, t.task)?),
        ]);
    }
    table(
        costs,
        &[
            "task",
            "edge_classes",
            "samples",
            "accuracy",
            "edge_accuracy",
            "cloud_accuracy",
            "acci",
            "cur",
            "mean_energy_mj",
            "mean_latency_ms",
            "compute_energy_mj",
            "comm_energy_mj",
            "compute_latency_ms",
            "comm_latency_ms",
            "buffer_size",
            "avg_accuracy",
        ],
        rows,
    )
}

pub fn outcomes_csv(report: &LifecycleReport, task: usize, costs: &CostConstants) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# costs: {}\n", costs.describe()).into_bytes();
    write_outcomes(&mut out, &report.tasks[task - 1].execution.outcomes)?;
    Ok(out)
}

pub fn frontier_csv(points: &[FrontierPoint], costs: &CostConstants) -> Result<Vec<u8>, CliError> {
    let rows = points
        .iter()
        .map(|p| {
            vec![
                num(p.delta),
                num(p.accuracy),
                num(p.cur),
                num(p.mean_energy_mj),
                num(p.mean_latency_ms),
                num(p.edge_accuracy),
                num(p.cloud_accuracy),
                opt(p.acci),
                num(p.final_avg_accuracy),
            ]
        })
        .collect();
    table(
        costs,
        &[
            "delta",
            "accuracy",
            "cur",
            "mean_energy_mj",
            "mean_latency_ms",
            "edge_accuracy",
            "cloud_accuracy",
            "acci",
            "final_avg_accuracy",
        ],
        rows,
    )
}

pub fn ablation_csv(rows: &[AblationRow], costs: &CostConstants) -> Result<Vec<u8>, CliError> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.logit_distill.to_string(),
                r.feature_align.to_string(),
                num(r.accuracy),
            ]
        })
        .collect();
    table(costs, &["seed", "logit_distill", "feature_align", "accuracy"], rows)
}

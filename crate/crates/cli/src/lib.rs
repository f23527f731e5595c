//! Config-driven experiment runner for the edge-cloud spiking simulator.

pub mod config;
pub mod report;
pub mod runner;

use std::fs;
use std::path::{Path, PathBuf};

use ecc_core::checkpoint::{write_json, MlpCheckpoint, SnnCheckpoint};
use ecc_core::EccError;
use serde_json::json;

pub use config::ExperimentConfig;
use runner::{build_world, lifecycle, sweep, AblationRow, FrontierPoint};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ECC_SIM_OUT";
const DEFAULT_OUT: &str = "ecc-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] EccError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Runtime(EccError::Config(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// `--out`, then `output.dir`, then the environment, then `ecc-out`.
pub fn resolve_out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(EccError::from)?;
    Ok(())
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig, files: &[String]) -> Result<(), CliError> {
    let mut resolved = cfg.clone();
    resolved.output.dir = Some(out.to_path_buf());
    let manifest = json!({
        "tool": "ecc-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.train.seed,
        "config": resolved,
        "files": files,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(EccError::from)?;
    bytes.push(b'\n');
    report::write_atomic(&out.join("manifest.json"), &bytes)
}

/// Paths written by a command, relative to the output directory.
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub files: Vec<String>,
}

impl Written {
    fn put(&mut self, out: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        report::write_atomic(&out.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Full lifecycle at `filter.delta`, plus a frontier when `filter.deltas` is set.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Written, CliError> {
    prepare(out)?;
    let seed = cfg.train.seed;
    let world = build_world(cfg, seed)?;
    let report = lifecycle(cfg, &world, cfg.filter.delta, seed)?;
    let costs = &cfg.costs;
    let mut w = Written::default();
    w.put(out, "accuracy_matrix.csv", &report::matrix_csv(&report.accuracy, "accuracy", costs)?)?;
    w.put(out, "cur_matrix.csv", &report::matrix_csv(&report.upload_rate, "cur", costs)?)?;
    w.put(out, "per_task_report.csv", &report::per_task_csv(&report, costs)?)?;
    for t in 1..=report.tasks.len() {
        w.put(out, &format!("outcomes_task{t}.csv"), &report::outcomes_csv(&report, t, costs)?)?;
    }
    if !cfg.filter.deltas.is_empty() {
        let points = sweep(cfg, &world, &cfg.filter.deltas, seed)?;
        w.put(out, "frontier.csv", &report::frontier_csv(&points, costs)?)?;
    }
    if cfg.output.checkpoints {
        let dir = out.join("checkpoints");
        fs::create_dir_all(&dir).map_err(EccError::from)?;
        write_json(&SnnCheckpoint::from_model(&report.edge, seed)?, dir.join("edge.json"))?;
        write_json(&MlpCheckpoint::from_model(world.cloud.mlp(), seed), dir.join("cloud.json"))?;
        w.files.push("checkpoints/edge.json".into());
        w.files.push("checkpoints/cloud.json".into());
    }
    write_manifest(out, "run", cfg, &w.files)?;
    Ok(w)
}

/// One lifecycle per threshold in `filter.deltas` (or `filter.delta` alone).
pub fn cmd_sweep_delta(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<FrontierPoint>, CliError> {
    prepare(out)?;
    let deltas = if cfg.filter.deltas.is_empty() {
        vec![cfg.filter.delta]
    } else {
        cfg.filter.deltas.clone()
    };
    let world = build_world(cfg, cfg.train.seed)?;
    let points = sweep(cfg, &world, &deltas, cfg.train.seed)?;
    let mut w = Written::default();
    w.put(out, "frontier.csv", &report::frontier_csv(&points, &cfg.costs)?)?;
    write_manifest(out, "sweep-delta", cfg, &w.files)?;
    Ok(points)
}

/// Setup-stage ablation over logit distillation and feature alignment.
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AblationRow>, CliError> {
    prepare(out)?;
    let rows = runner::ablation(cfg)?;
    let mut w = Written::default();
    w.put(out, "ablation.csv", &report::ablation_csv(&rows, &cfg.costs)?)?;
    write_manifest(out, "ablate", cfg, &w.files)?;
    Ok(rows)
}

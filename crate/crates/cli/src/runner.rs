//! Experiment orchestration: world construction, lifecycles, sweeps and ablations.

use ecc_core::coinfer::edge_accuracy;
use ecc_core::continual::{run_lifecycle, setup_stage, LifecycleParams, LifecycleReport};
use ecc_core::data::{generate_blobs, load_csv, make_task_stream, Dataset, TaskStream};
use ecc_core::filter::{FilterConfig, Route};
use ecc_core::metrics::{acci, avg_accuracy};
use ecc_core::nn::{train_ann, CloudModel};
use ecc_core::rng::{derive_seed, purpose};
use ecc_core::snn::SnnArch;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::CliError;

/// Task stream, frozen cloud model and edge architecture shared by all arms of a seed.
pub struct World {
    pub stream: TaskStream,
    pub cloud: CloudModel,
    pub arch: SnnArch,
}

pub fn build_world(cfg: &ExperimentConfig, seed: u64) -> Result<World, CliError> {
    let d = &cfg.data;
    let dataset = match d.source {
        DataSource::Blobs => generate_blobs(derive_seed(seed, purpose::DATA), d.classes, d.dim, d.per_class, d.spread)?,
        DataSource::Csv => load_csv(d.path.as_ref().expect("validated"))?,
    };
    let stream = make_task_stream(&dataset, d.base, d.increment, d.test_fraction, derive_seed(seed, purpose::SPLIT))?;
    // the cloud model is pre-trained once on every task's training split and then frozen
    let train: Vec<_> = stream
        .splits
        .iter()
        .flat_map(|t| t.train.samples().iter().cloned())
        .collect();
    let train = Dataset::new("cloud-train", dataset.dim(), dataset.num_classes(), train)?;
    let mut arch = vec![dataset.dim()];
    arch.extend(&cfg.cloud.hidden);
    arch.push(dataset.num_classes());
    let mlp = train_ann(&train, &arch, cfg.cloud.feature_tap, &cfg.cloud.fit(), seed)?;
    let cloud = if cfg.cloud.perfect_oracle {
        CloudModel::perfect_oracle(mlp, cfg.cloud.oracle_logit_scale)
    } else {
        CloudModel::new(mlp)
    };
    let arch = SnnArch {
        input_dim: dataset.dim(),
        hidden: cfg.edge.hidden.clone(),
        tap_layer: cfg.edge.tap_layer,
        lif: cfg.edge.lif,
    };
    Ok(World { stream, cloud, arch })
}

pub fn lifecycle(cfg: &ExperimentConfig, world: &World, delta: f64, seed: u64) -> Result<LifecycleReport, CliError> {
    let params = LifecycleParams {
        cloud: &world.cloud,
        arch: &world.arch,
        filter: FilterConfig::new(delta)?,
        costs: cfg.costs,
        train: cfg.train_config(seed),
        buffer_capacity: cfg.buffer_capacity(),
    };
    Ok(run_lifecycle(&world.stream, &params)?)
}

/// One point of the accuracy/cost frontier, aggregated over every execution stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub delta: f64,
    pub accuracy: f64,
    pub cur: f64,
    pub mean_energy_mj: f64,
    pub mean_latency_ms: f64,
    pub edge_accuracy: f64,
    pub cloud_accuracy: f64,
    pub acci: Option<f64>,
    pub final_avg_accuracy: f64,
}

pub fn frontier_point(report: &LifecycleReport, delta: f64) -> Result<FrontierPoint, CliError> {
    let (mut n, mut hits, mut uploads, mut energy, mut latency) = (0usize, 0usize, 0usize, 0.0, 0.0);
    let (mut edge_hits, mut cloud_hits) = (0.0, 0.0);
    for t in &report.tasks {
        let outcomes = &t.execution.outcomes;
        n += outcomes.len();
        hits += outcomes.iter().filter(|o| o.correct()).count();
        uploads += outcomes.iter().filter(|o| o.route == Route::Cloud).count();
        energy += t.execution.total_cost.total_energy_mj();
        latency += t.execution.total_cost.total_latency_ms();
        edge_hits += t.edge_accuracy * outcomes.len() as f64;
        cloud_hits += t.cloud_accuracy * outcomes.len() as f64;
    }
    let total = n as f64;
    let accuracy = hits as f64 / total;
    let edge_accuracy = edge_hits / total;
    let cloud_accuracy = cloud_hits / total;
    Ok(FrontierPoint {
        delta,
        accuracy,
        cur: uploads as f64 / total,
        mean_energy_mj: energy / total,
        mean_latency_ms: latency / total,
        edge_accuracy,
        cloud_accuracy,
        acci: acci(accuracy, edge_accuracy, cloud_accuracy).ok(),
        final_avg_accuracy: avg_accuracy(&report.accuracy, report.accuracy.tasks())?,
    })
}

/// One lifecycle per threshold on the same world; results keep the input order.
pub fn sweep(cfg: &ExperimentConfig, world: &World, deltas: &[f64], seed: u64) -> Result<Vec<FrontierPoint>, CliError> {
    deltas
        .par_iter()
        .map(|&delta| frontier_point(&lifecycle(cfg, world, delta, seed)?, delta))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub logit_distill: bool,
    pub feature_align: bool,
    pub accuracy: f64,
}

pub const ABLATION_ARMS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

/// Setup-stage task-1 test accuracy for every (λ₁, λ₂) on/off arm and seed.
pub fn ablation(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>, CliError> {
    if cfg.losses.lambda1 <= 0.0 || cfg.losses.lambda2 <= 0.0 {
        return Err(CliError::Config(
            "[losses] ablation needs positive lambda1 and lambda2 for the enabled arms".into(),
        ));
    }
    let seeds: Vec<u64> = (0..cfg.ablate.seeds as u64).map(|i| cfg.train.seed + i).collect();
    let per_seed: Vec<Vec<AblationRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let world = build_world(cfg, seed)?;
            let task = &world.stream.splits[0];
            ABLATION_ARMS
                .par_iter()
                .map(|&(logit, align)| {
                    let mut train = cfg.train_config(seed);
                    if !logit {
                        train.weights.lambda1 = 0.0;
                    }
                    if !align {
                        train.weights.lambda2 = 0.0;
                    }
                    let edge = setup_stage(task, &world.cloud, &world.arch, &train)?;
                    Ok(AblationRow {
                        seed,
                        logit_distill: logit,
                        feature_align: align,
                        accuracy: edge_accuracy(&edge, task.test.samples())?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Median accuracy of one ablation arm across seeds.
pub fn arm_median(rows: &[AblationRow], logit: bool, align: bool) -> f64 {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.logit_distill == logit && r.feature_align == align)
        .map(|r| r.accuracy)
        .collect();
    median(&mut v)
}

pub fn median(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty(), "median of an empty set");
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

//! Setup and Update stages, and the full task-by-task lifecycle.

use log::warn;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::coinfer::{
    buffer_features, cloud_accuracy, edge_accuracy, edge_scores, run_execution_stage, AmbiguityBuffer, BufferEntry,
    ExecutionReport,
};
use crate::costs::CostConstants;
use crate::data::{Sample, TaskSplit, TaskStream};
use crate::error::{arg_err, EccError, Result};
use crate::filter::FilterConfig;
use crate::losses::{joint_loss, lwf_loss, AlignmentHead, AlignmentInputs, LossWeights};
use crate::metrics::{cur, AccuracyMatrix};
use crate::nn::{gather_rows, minibatches, CloudModel, FitConfig, Optimizer};
use crate::rng::{derive_seed, purpose, seeded};
use crate::snn::{SnnArch, SnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Setup-stage optimisation.
    pub fit: FitConfig,
    pub update_epochs: usize,
    /// Update-stage learning rate as a fraction of the setup rate.
    pub update_lr_scale: f64,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            update_epochs: 10,
            update_lr_scale: 0.1,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.weights.validate()?;
        if !(self.update_lr_scale > 0.0 && self.update_lr_scale.is_finite()) {
            return arg_err("update learning-rate scale must be positive");
        }
        Ok(())
    }
}

/// Frozen copy of the edge model taken before an update.
#[derive(Debug, Clone)]
pub struct ModelSnapshot {
    model: SnnModel,
}

impl ModelSnapshot {
    pub fn take(edge: &SnnModel) -> Self {
        Self { model: edge.clone() }
    }

    pub fn model(&self) -> &SnnModel {
        &self.model
    }
}

/// Columns of `logits` (global label space) for the given classes, in order.
pub fn select_classes(logits: ArrayView2<'_, f64>, classes: &[usize]) -> Result<Array2<f64>> {
    if let Some(c) = classes.iter().find(|&&c| c >= logits.ncols()) {
        return arg_err(format!("class {c} is outside the teacher's label space"));
    }
    Ok(logits.select(ndarray::Axis(1), classes))
}

fn readout_labels(edge: &SnnModel, labels: &[usize]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&y| {
            edge.class_index(y)
                .ok_or_else(|| EccError::Argument(format!("label {y} is not in the edge readout")))
        })
        .collect()
}

/// Trains a fresh edge model on the first task with cross-entropy, cloud logit
/// distillation and, when `lambda2 > 0`, spike-feature alignment.
pub fn setup_stage(task: &TaskSplit, cloud: &CloudModel, arch: &SnnArch, cfg: &TrainConfig) -> Result<SnnModel> {
    cfg.validate()?;
    if task.train.is_empty() {
        return arg_err("the setup task has no training samples");
    }
    let mut edge = SnnModel::new(arch, task.class_ids.clone(), derive_seed(cfg.seed, purpose::EDGE_INIT))?;
    let weights = cfg.weights;
    let mut head = if weights.lambda2 > 0.0 {
        if cloud.mlp().feature_dim() == 0 || edge.tap_dim() == 0 {
            return Err(EccError::Config("feature alignment needs tap layers on both models".into()));
        }
        Some(AlignmentHead::new(
            edge.tap_dim(),
            cloud.mlp().feature_dim(),
            derive_seed(cfg.seed, purpose::HEAD_INIT),
        ))
    } else {
        None
    };

    let x = task.train.features();
    let raw_labels = task.train.labels();
    let labels = readout_labels(&edge, &raw_labels)?;
    let teacher = select_classes(cloud.logits(x.view(), Some(&raw_labels))?.view(), &task.class_ids)?;
    let ann_features = match head {
        Some(_) => Some(cloud.features(x.view())?),
        None => None,
    };

    let mut rng = seeded(derive_seed(cfg.seed, purpose::EDGE_SHUFFLE));
    let mut opt = Optimizer::new(cfg.fit.optimizer, cfg.fit.learning_rate);
    let mut head_opt = Optimizer::new(cfg.fit.optimizer, cfg.fit.learning_rate);
    for _ in 0..cfg.fit.epochs {
        for batch in minibatches(x.nrows(), cfg.fit.batch_size, &mut rng) {
            let xb = gather_rows(x.view(), &batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let tb = gather_rows(teacher.view(), &batch);
            let (logits, trace) = edge.forward(xb.view(), true)?;
            let trace = trace.expect("recorded");
            let fb = ann_features.as_ref().map(|f| gather_rows(f.view(), &batch));
            let alignment = match (&mut head, &fb) {
                (Some(h), Some(f)) => Some(AlignmentInputs {
                    head: h,
                    summed_spikes: trace.tap_sum.view(),
                    ann_features: f.view(),
                }),
                _ => None,
            };
            let loss = joint_loss(logits.view(), &yb, tb.view(), alignment, &weights)?;
            let d_tap = loss.align_grads.as_ref().map(|a| a.d_summed.view());
            let d_tap_scaled = d_tap.map(|d| d.mapv(|v| v * weights.lambda2));
            let grads = edge.backward(
                xb.view(),
                Some(&trace),
                loss.d_logits.view(),
                d_tap_scaled.as_ref().map(|d| d.view()),
            )?;
            opt.step(edge.param_slices_mut(), grads.slices());
            if let (Some(h), Some(a)) = (&mut head, &loss.align_grads) {
                let scaled: Vec<Vec<f64>> = a
                    .head
                    .slices()
                    .into_iter()
                    .map(|s| s.iter().map(|v| v * weights.lambda2).collect())
                    .collect();
                head_opt.step(h.param_slices_mut(), scaled.iter().map(Vec::as_slice).collect());
            }
        }
    }
    Ok(edge)
}

/// Exemplar-free update from drained buffer entries.
///
/// The readout grows to cover `new_class_ids`; training uses only the buffer, with
/// cloud labels and logits for the new-knowledge term and the snapshot's outputs
/// for the old-knowledge term.
pub fn update_stage(
    edge: &SnnModel,
    drained: &[BufferEntry],
    snapshot: &ModelSnapshot,
    new_class_ids: &[usize],
    cfg: &TrainConfig,
    stage_seed: u64,
) -> Result<SnnModel> {
    cfg.validate()?;
    if drained.is_empty() {
        warn!("update stage received an empty buffer; edge model left unchanged");
        return Ok(edge.clone());
    }
    let missing: Vec<usize> = new_class_ids
        .iter()
        .copied()
        .filter(|c| edge.class_index(*c).is_none())
        .collect();
    let mut model = if missing.is_empty() {
        edge.clone()
    } else {
        edge.expand_readout(&missing, derive_seed(stage_seed, purpose::EXPAND))?
    };

    let usable: Vec<&BufferEntry> = drained
        .iter()
        .filter(|e| model.class_index(e.label).is_some())
        .collect();
    if usable.len() < drained.len() {
        warn!(
            "{} buffered samples carry labels outside the edge label space and were skipped",
            drained.len() - usable.len()
        );
    }
    if usable.is_empty() {
        warn!("no usable buffer entries; edge model left unchanged");
        return Ok(edge.clone());
    }
    let entries: Vec<BufferEntry> = usable.into_iter().cloned().collect();
    let x = buffer_features(&entries);
    let labels = readout_labels(&model, &entries.iter().map(|e| e.label).collect::<Vec<_>>())?;
    let mut cloud_full = Array2::zeros((entries.len(), entries[0].cloud_logits.len()));
    for (mut row, e) in cloud_full.rows_mut().into_iter().zip(&entries) {
        if e.cloud_logits.len() != row.len() {
            return arg_err("buffered cloud logits differ in width");
        }
        row.assign(&ndarray::ArrayView1::from(&e.cloud_logits[..]));
    }
    let cloud_logits = select_classes(cloud_full.view(), &model.classes)?;
    let (old_logits, _) = snapshot.model().forward(x.view(), false)?;

    let mut rng = seeded(derive_seed(stage_seed, purpose::UPDATE_SHUFFLE));
    let mut opt = Optimizer::new(cfg.fit.optimizer, cfg.fit.learning_rate * cfg.update_lr_scale);
    for _ in 0..cfg.update_epochs {
        for batch in minibatches(x.nrows(), cfg.fit.batch_size, &mut rng) {
            let xb = gather_rows(x.view(), &batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let cb = gather_rows(cloud_logits.view(), &batch);
            let ob = gather_rows(old_logits.view(), &batch);
            let (logits, trace) = model.forward(xb.view(), true)?;
            let loss = lwf_loss(logits.view(), &yb, cb.view(), ob.view(), &cfg.weights)?;
            let grads = model.backward(xb.view(), trace.as_ref(), loss.d_logits.view(), None)?;
            opt.step(model.param_slices_mut(), grads.slices());
        }
    }
    Ok(model)
}

/// Results of one task in the lifecycle.
#[derive(Debug, Clone)]
pub struct TaskReport {
    pub task: usize,
    pub execution: ExecutionReport,
    /// Standalone accuracies on the same execution stream, for AccI.
    pub edge_accuracy: f64,
    pub cloud_accuracy: f64,
    /// Buffer entries consumed by the update that followed the execution stage.
    pub buffer_size: usize,
    /// Readout width after the task.
    pub edge_classes: usize,
}

#[derive(Debug, Clone)]
pub struct LifecycleReport {
    pub tasks: Vec<TaskReport>,
    /// Edge-only accuracy on task `m` after learning task `n`.
    pub accuracy: AccuracyMatrix,
    /// Upload rate on task `m`'s test set after learning task `n`.
    pub upload_rate: AccuracyMatrix,
    pub edge: SnnModel,
}

/// Test samples of the first `n` tasks, shuffled deterministically.
pub fn execution_stream(stream: &TaskStream, n: usize, seed: u64) -> Vec<Sample> {
    let mut samples: Vec<Sample> = stream.splits[..n]
        .iter()
        .flat_map(|t| t.test.samples().iter().cloned())
        .collect();
    if n > 1 {
        samples.shuffle(&mut seeded(derive_seed(derive_seed(seed, purpose::STREAM), n as u64)));
    }
    samples
}

pub struct LifecycleParams<'a> {
    pub cloud: &'a CloudModel,
    pub arch: &'a SnnArch,
    pub filter: FilterConfig,
    pub costs: CostConstants,
    pub train: TrainConfig,
    pub buffer_capacity: Option<usize>,
}

/// Setup on task 1, then Execution and Update for every later task.
pub fn run_lifecycle(stream: &TaskStream, params: &LifecycleParams<'_>) -> Result<LifecycleReport> {
    if stream.is_empty() {
        return arg_err("empty task stream");
    }
    let cfg = &params.train;
    let mut edge = setup_stage(&stream.splits[0], params.cloud, params.arch, cfg)?;
    let mut accuracy = AccuracyMatrix::new();
    let mut upload_rate = AccuracyMatrix::new();
    let mut buffer = AmbiguityBuffer::new(params.buffer_capacity);
    let mut tasks = Vec::with_capacity(stream.len());

    record_row(&edge, stream, 1, params.filter.delta(), &mut accuracy, &mut upload_rate)?;
    let first_samples = stream.splits[0].test.samples();
    let first = run_execution_stage(
        first_samples,
        &edge,
        params.cloud,
        &params.filter,
        &mut buffer,
        &params.costs,
    )?;
    // no new classes follow the first execution, so its uploads are not replayed
    buffer.flush();
    tasks.push(TaskReport {
        task: 1,
        execution: first,
        edge_accuracy: edge_accuracy(&edge, first_samples)?,
        cloud_accuracy: cloud_accuracy(params.cloud, first_samples)?,
        buffer_size: 0,
        edge_classes: edge.num_classes(),
    });

    for n in 2..=stream.len() {
        let samples = execution_stream(stream, n, cfg.seed);
        let execution = run_execution_stage(&samples, &edge, params.cloud, &params.filter, &mut buffer, &params.costs)?;
        let standalone_edge = edge_accuracy(&edge, &samples)?;
        let drained = buffer.flush();
        let snapshot = ModelSnapshot::take(&edge);
        let stage_seed = derive_seed(cfg.seed, 1000 + n as u64);
        edge = update_stage(&edge, &drained, &snapshot, &stream.splits[n - 1].class_ids, cfg, stage_seed)?;
        record_row(&edge, stream, n, params.filter.delta(), &mut accuracy, &mut upload_rate)?;
        tasks.push(TaskReport {
            task: n,
            execution,
            edge_accuracy: standalone_edge,
            cloud_accuracy: cloud_accuracy(params.cloud, &samples)?,
            buffer_size: drained.len(),
            edge_classes: edge.num_classes(),
        });
    }
    Ok(LifecycleReport {
        tasks,
        accuracy,
        upload_rate,
        edge,
    })
}

fn record_row(
    edge: &SnnModel,
    stream: &TaskStream,
    n: usize,
    delta: f64,
    accuracy: &mut AccuracyMatrix,
    upload_rate: &mut AccuracyMatrix,
) -> Result<()> {
    for m in 1..=n {
        let test = stream.splits[m - 1].test.samples();
        accuracy.set(n, m, edge_accuracy(edge, test)?)?;
        upload_rate.set(n, m, cur(&edge_scores(edge, test)?, delta)?)?;
    }
    Ok(())
}

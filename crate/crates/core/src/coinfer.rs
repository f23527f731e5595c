//! Collaborative inference: run the edge model, route ambiguous inputs to the
//! cloud, and buffer the cloud-labelled samples for the next update.

use std::collections::VecDeque;
use std::io::Write;

use log::warn;
use ndarray::{Array2, ArrayView2};

use crate::costs::{route_cost, CostConstants, CostReport};
use crate::data::{features_matrix, Sample};
use crate::error::{arg_err, Result};
use crate::filter::{normalized_entropy, route, FilterConfig, Route};
use crate::nn::math::argmax;
use crate::nn::CloudModel;
use crate::snn::SnnModel;

/// A cloud-labelled sample kept on the device.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub features: Vec<f64>,
    /// Cloud logits over the full label space.
    pub cloud_logits: Vec<f64>,
    /// Cloud prediction (global class id).
    pub label: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AmbiguityBuffer {
    entries: VecDeque<BufferEntry>,
    capacity: Option<usize>,
    evicted: usize,
}

impl AmbiguityBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
            evicted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evicted(&self) -> usize {
        self.evicted
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    /// Appends an entry, dropping the oldest one when the buffer is full.
    pub fn push(&mut self, entry: BufferEntry) {
        if let Some(cap) = self.capacity {
            if cap == 0 {
                self.evicted += 1;
                warn!("ambiguity buffer has zero capacity; dropping sample");
                return;
            }
            if self.entries.len() == cap {
                self.entries.pop_front();
                self.evicted += 1;
                warn!("ambiguity buffer full ({cap}); evicted the oldest sample");
            }
        }
        self.entries.push_back(entry);
    }

    /// Drains all entries in insertion order.
    pub fn flush(&mut self) -> Vec<BufferEntry> {
        self.entries.drain(..).collect()
    }
}

pub fn flush_buffer(buffer: &mut AmbiguityBuffer) -> Vec<BufferEntry> {
    buffer.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    pub prediction: usize,
    pub label: usize,
    pub route: Route,
    pub score: f64,
    pub cost: CostReport,
}

impl InferenceOutcome {
    pub fn correct(&self) -> bool {
        self.prediction == self.label
    }
}

fn check_label_space(edge: &SnnModel, cloud: &CloudModel) -> Result<()> {
    if edge.input_dim() != cloud.mlp().input_dim() {
        return arg_err("edge and cloud models disagree on the input dimension");
    }
    if let Some(c) = edge.classes.iter().find(|&&c| c >= cloud.num_classes()) {
        return arg_err(format!("edge class {c} is unknown to the cloud model"));
    }
    Ok(())
}

/// Runs one sample through the edge model and, when the filter rejects it, the cloud.
pub fn infer_one(
    sample: &Sample,
    edge: &SnnModel,
    cloud: &CloudModel,
    filter: &FilterConfig,
    buffer: &mut AmbiguityBuffer,
    costs: &CostConstants,
) -> Result<InferenceOutcome> {
    check_label_space(edge, cloud)?;
    let x = features_matrix(std::slice::from_ref(sample), sample.features.len());
    let (logits, trace) = edge.forward(x.view(), true)?;
    let row = logits.row(0);
    let decision = route(row.as_slice().expect("contiguous"), filter)?;
    let prediction = match decision.route {
        Route::Edge => edge.classes[argmax(row)],
        Route::Cloud => {
            let cloud_logits = cloud.logits(x.view(), Some(&[sample.label]))?;
            let y_hat = argmax(cloud_logits.row(0));
            buffer.push(BufferEntry {
                features: sample.features.clone(),
                cloud_logits: cloud_logits.row(0).to_vec(),
                label: y_hat,
            });
            y_hat
        }
    };
    let cost = route_cost(
        decision.route,
        edge,
        trace.as_ref(),
        cloud.mlp(),
        sample.features.len(),
        costs,
    )?;
    Ok(InferenceOutcome {
        prediction,
        label: sample.label,
        route: decision.route,
        score: decision.score,
        cost,
    })
}

#[derive(Debug, Clone)]
pub struct ExecutionReport {
    pub outcomes: Vec<InferenceOutcome>,
    pub accuracy: f64,
    pub cur: f64,
    pub total_cost: CostReport,
    pub mean_energy_mj: f64,
    pub mean_latency_ms: f64,
    pub buffer_len: usize,
}

/// Processes a stream in order, appending uploads to `buffer`.
pub fn run_execution_stage(
    stream: &[Sample],
    edge: &SnnModel,
    cloud: &CloudModel,
    filter: &FilterConfig,
    buffer: &mut AmbiguityBuffer,
    costs: &CostConstants,
) -> Result<ExecutionReport> {
    if stream.is_empty() {
        return arg_err("execution stage over an empty stream");
    }
    let outcomes = stream
        .iter()
        .map(|s| infer_one(s, edge, cloud, filter, buffer, costs))
        .collect::<Result<Vec<_>>>()?;
    let n = outcomes.len() as f64;
    let total_cost = outcomes
        .iter()
        .fold(CostReport::default(), |acc, o| acc + o.cost);
    let correct = outcomes.iter().filter(|o| o.correct()).count();
    let uploads = outcomes.iter().filter(|o| o.route == Route::Cloud).count();
    Ok(ExecutionReport {
        accuracy: correct as f64 / n,
        cur: uploads as f64 / n,
        mean_energy_mj: total_cost.total_energy_mj() / n,
        mean_latency_ms: total_cost.total_latency_ms() / n,
        total_cost,
        buffer_len: buffer.len(),
        outcomes,
    })
}

/// Standalone edge accuracy over labelled samples.
pub fn edge_accuracy(edge: &SnnModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return arg_err("accuracy over an empty sample set");
    }
    let x = features_matrix(samples, edge.input_dim());
    let (logits, _) = edge.forward(x.view(), false)?;
    let hits = edge
        .predict(logits.view())
        .into_iter()
        .zip(samples)
        .filter(|(p, s)| *p == s.label)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Accuracy of the cloud model's own predictions.
pub fn cloud_accuracy(cloud: &CloudModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return arg_err("accuracy over an empty sample set");
    }
    let x = features_matrix(samples, cloud.mlp().input_dim());
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let logits = cloud.logits(x.view(), Some(&labels))?;
    let hits = logits
        .rows()
        .into_iter()
        .zip(&labels)
        .filter(|(row, &y)| argmax(*row) == y)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Routing scores of the edge model for each sample.
pub fn edge_scores(edge: &SnnModel, samples: &[Sample]) -> Result<Vec<f64>> {
    let x = features_matrix(samples, edge.input_dim());
    let (logits, _) = edge.forward(x.view(), false)?;
    scores_of(logits.view())
}

pub fn scores_of(logits: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    logits
        .rows()
        .into_iter()
        .map(|r| normalized_entropy(r.as_slice().expect("contiguous"), r.len()))
        .collect()
}

/// Buffer entries as a feature matrix.
pub fn buffer_features(entries: &[BufferEntry]) -> Array2<f64> {
    let dim = entries.first().map_or(0, |e| e.features.len());
    let mut m = Array2::zeros((entries.len(), dim));
    for (mut row, e) in m.rows_mut().into_iter().zip(entries) {
        for (d, &v) in row.iter_mut().zip(&e.features) {
            *d = v;
        }
    }
    m
}

/// Per-sample log: `index,route,score,prediction,label,energy_mJ,latency_ms`.
pub fn write_outcomes<W: Write>(writer: W, outcomes: &[InferenceOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "route", "score", "prediction", "label", "energy_mJ", "latency_ms"])?;
    for (i, o) in outcomes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            o.route.as_str().to_string(),
            o.score.to_string(),
            o.prediction.to_string(),
            o.label.to_string(),
            o.cost.total_energy_mj().to_string(),
            o.cost.total_latency_ms().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

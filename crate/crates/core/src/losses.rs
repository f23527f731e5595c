//! Training objectives: cross-entropy plus logit distillation, spike-feature
//! alignment, and the old-model distillation term used by incremental updates.
//!
//! Every function returns the gradient with respect to the student logits next to
//! the value, so the trainers never differentiate anything themselves.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::nn::math::{affine_backward, cross_entropy, softmax_rows, PROB_FLOOR};
use crate::nn::{Activation, DenseGrad, DenseLayer};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Logit distillation from the cloud model.
    pub lambda1: f64,
    /// Spike-feature alignment.
    pub lambda2: f64,
    /// Distillation from the pre-update edge snapshot.
    pub lambda3: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 1.0,
            temperature: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return arg_err(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return arg_err("temperature must be positive");
        }
        Ok(())
    }
}

/// `T²·KL(softmax(reference/T) ‖ softmax(student/T))`, batch mean, and its
/// gradient with respect to `student`.
fn kd_term(student: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, temperature: f64) -> Result<(f64, Array2<f64>)> {
    if student.dim() != reference.dim() {
        return arg_err(format!(
            "student logits {:?} and reference logits {:?} differ in shape",
            student.dim(),
            reference.dim()
        ));
    }
    if student.nrows() == 0 {
        return arg_err("distillation over an empty batch");
    }
    if !(temperature > 0.0) {
        return arg_err("temperature must be positive");
    }
    let p = softmax_rows(reference, temperature)?;
    let q = softmax_rows(student, temperature)?;
    let n = student.nrows() as f64;
    let mut kl = 0.0;
    for (pr, qr) in p.rows().into_iter().zip(q.rows()) {
        for (&pi, &qi) in pr.iter().zip(qr.iter()) {
            if pi > 0.0 {
                kl += pi * (pi.ln() - qi.max(PROB_FLOOR).ln());
            }
        }
    }
    let value = (kl / n * temperature * temperature).max(0.0);
    let grad = (q - p) * (temperature / n);
    Ok((value, grad))
}

/// Logit distillation, teacher as reference distribution.
pub fn logit_distill(student: ArrayView2<'_, f64>, teacher: ArrayView2<'_, f64>, temperature: f64) -> Result<f64> {
    Ok(kd_term(student, teacher, temperature)?.0)
}

/// Batch standardization mode of the alignment head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Eval,
}

/// Linear projection plus batch standardization mapping summed spikes into the
/// cloud model's feature space. Only used while training.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHead {
    pub projection: DenseLayer,
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub projection: DenseGrad,
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl HeadGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let [w, b] = self.projection.slices();
        vec![
            w,
            b,
            self.scale.as_slice().expect("contiguous"),
            self.shift.as_slice().expect("contiguous"),
        ]
    }
}

/// Value and gradients of one alignment evaluation.
#[derive(Debug, Clone)]
pub struct AlignOutput {
    pub value: f64,
    /// Gradient with respect to the summed spikes.
    pub d_summed: Array2<f64>,
    pub head: HeadGrads,
}

struct AlignForward {
    normalized: Array2<f64>,
    out: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl AlignmentHead {
    pub fn new(spike_dim: usize, feature_dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        Self {
            projection: DenseLayer::init(spike_dim, feature_dim, Activation::Identity, &mut rng),
            scale: Array1::ones(feature_dim),
            shift: Array1::zeros(feature_dim),
            running_mean: Array1::zeros(feature_dim),
            running_var: Array1::ones(feature_dim),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.out_dim()
    }

    fn forward(&self, summed: ArrayView2<'_, f64>, mode: NormMode) -> Result<AlignForward> {
        let z = self.projection.linear(summed)?;
        let (mean, var) = match mode {
            NormMode::Train => {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &z - &mean;
                let var = (&centered * &centered).mean_axis(Axis(0)).expect("non-empty batch");
                (mean, var)
            }
            NormMode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let normalized = (&z - &mean) * &inv_std;
        let out = &normalized * &self.scale + &self.shift;
        Ok(AlignForward {
            normalized,
            out,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        })
    }

    /// Aligned features `F'`.
    pub fn project(&self, summed: ArrayView2<'_, f64>, mode: NormMode) -> Result<Array2<f64>> {
        check_shapes(summed, self, None)?;
        Ok(self.forward(summed, mode)?.out)
    }

    /// Alignment loss and gradients; in [`NormMode::Train`] the running
    /// statistics are updated.
    pub fn train_step(
        &mut self,
        summed: ArrayView2<'_, f64>,
        ann_features: ArrayView2<'_, f64>,
        mode: NormMode,
    ) -> Result<AlignOutput> {
        check_shapes(summed, self, Some(ann_features))?;
        let fwd = self.forward(summed, mode)?;
        let n = summed.nrows() as f64;
        let diff = &fwd.out - &ann_features;
        let mut value = 0.0;
        let mut d_out = Array2::zeros(diff.raw_dim());
        for (row, mut d_row) in diff.rows().into_iter().zip(d_out.rows_mut()) {
            let dist = row.dot(&row).sqrt();
            value += dist;
            if dist > 0.0 {
                d_row.assign(&(&row / (n * dist)));
            }
        }
        value /= n;

        let d_shift = d_out.sum_axis(Axis(0));
        let d_scale = (&d_out * &fwd.normalized).sum_axis(Axis(0));
        let d_norm = &d_out * &self.scale;
        let d_z = match mode {
            NormMode::Train => {
                let sum_d = d_norm.sum_axis(Axis(0));
                let sum_dx = (&d_norm * &fwd.normalized).sum_axis(Axis(0));
                ((&d_norm * n - &sum_d) - &fwd.normalized * &sum_dx) * &fwd.inv_std / n
            }
            NormMode::Eval => &d_norm * &fwd.inv_std,
        };
        let (d_w, d_b, d_summed) = affine_backward(summed, self.projection.weights.view(), d_z.view());

        if mode == NormMode::Train {
            let unbiased = if summed.nrows() > 1 {
                &fwd.batch_var * (n / (n - 1.0))
            } else {
                fwd.batch_var.clone()
            };
            let m = self.momentum;
            self.running_mean = &self.running_mean * (1.0 - m) + &fwd.batch_mean * m;
            self.running_var = &self.running_var * (1.0 - m) + unbiased * m;
        }
        Ok(AlignOutput {
            value,
            d_summed,
            head: HeadGrads {
                projection: DenseGrad {
                    weights: d_w,
                    bias: d_b,
                },
                scale: d_scale,
                shift: d_shift,
            },
        })
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let [w, b] = self.projection.slices_mut();
        vec![
            w,
            b,
            self.scale.as_slice_mut().expect("contiguous"),
            self.shift.as_slice_mut().expect("contiguous"),
        ]
    }
}

fn check_shapes(summed: ArrayView2<'_, f64>, head: &AlignmentHead, ann: Option<ArrayView2<'_, f64>>) -> Result<()> {
    if summed.nrows() == 0 {
        return arg_err("alignment over an empty batch");
    }
    if summed.ncols() != head.projection.in_dim() {
        return arg_err(format!(
            "summed spikes have {} columns, head expects {}",
            summed.ncols(),
            head.projection.in_dim()
        ));
    }
    if let Some(ann) = ann {
        if ann.nrows() != summed.nrows() {
            return arg_err("spike and cloud feature batches differ in size");
        }
        if ann.ncols() != head.feature_dim() {
            return arg_err(format!(
                "cloud features have {} columns, head produces {}",
                ann.ncols(),
                head.feature_dim()
            ));
        }
    }
    Ok(())
}

/// Mean per-row Euclidean distance between the aligned spike features and the
/// cloud features. Does not touch the running statistics.
pub fn align_features(
    summed: ArrayView2<'_, f64>,
    head: &AlignmentHead,
    ann_features: ArrayView2<'_, f64>,
    mode: NormMode,
) -> Result<f64> {
    check_shapes(summed, head, Some(ann_features))?;
    let out = head.forward(summed, mode)?.out;
    let total: f64 = (&out - &ann_features)
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .sum();
    Ok(total / summed.nrows() as f64)
}

/// What the alignment term needs besides the logits.
pub struct AlignmentInputs<'a> {
    pub head: &'a mut AlignmentHead,
    pub summed_spikes: ArrayView2<'a, f64>,
    pub ann_features: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: f64,
    pub ce: f64,
    pub logit: f64,
    pub align: Option<f64>,
    pub d_logits: Array2<f64>,
    /// Unweighted alignment gradients; callers scale them by λ₂.
    pub align_grads: Option<AlignOutput>,
}

/// Cross-entropy + λ₁·logit distillation (+ λ₂·feature alignment).
///
/// `labels` index readout columns; `teacher` must already be restricted to the
/// student's classes.
pub fn joint_loss(
    student: ArrayView2<'_, f64>,
    labels: &[usize],
    teacher: ArrayView2<'_, f64>,
    alignment: Option<AlignmentInputs<'_>>,
    weights: &LossWeights,
) -> Result<JointLoss> {
    weights.validate()?;
    if (weights.lambda2 > 0.0) != alignment.is_some() {
        return arg_err("alignment inputs must be given exactly when lambda2 > 0");
    }
    let probs = softmax_rows(student, 1.0)?;
    let ce = cross_entropy(probs.view(), labels)?;
    let mut d_logits = crate::nn::mlp::ce_grad(probs, labels);
    let (logit, d_kd) = kd_term(student, teacher, weights.temperature)?;
    let mut total = ce;
    if weights.lambda1 > 0.0 {
        total += weights.lambda1 * logit;
        d_logits.scaled_add(weights.lambda1, &d_kd);
    }
    let mut align = None;
    let mut align_grads = None;
    if let Some(inputs) = alignment {
        let out = inputs
            .head
            .train_step(inputs.summed_spikes, inputs.ann_features, NormMode::Train)?;
        total += weights.lambda2 * out.value;
        align = Some(out.value);
        align_grads = Some(out);
    }
    Ok(JointLoss {
        total,
        ce,
        logit,
        align,
        d_logits,
        align_grads,
    })
}

#[derive(Debug, Clone)]
pub struct LwfLoss {
    pub total: f64,
    /// Cross-entropy on buffer labels plus λ₁-weighted cloud distillation.
    pub new: f64,
    /// Distillation from the pre-update snapshot on the old-class slice.
    pub old: f64,
    pub d_logits: Array2<f64>,
}

/// `ℒ_new + λ₃·ℒ_old` for exemplar-free incremental updates.
///
/// `old_logits` holds the snapshot's outputs; its width is the old class count,
/// and it is compared against the leading columns of `new_logits`.
pub fn lwf_loss(
    new_logits: ArrayView2<'_, f64>,
    labels: &[usize],
    cloud_logits: ArrayView2<'_, f64>,
    old_logits: ArrayView2<'_, f64>,
    weights: &LossWeights,
) -> Result<LwfLoss> {
    weights.validate()?;
    if new_logits.nrows() == 0 {
        return arg_err("incremental loss over an empty buffer batch");
    }
    if old_logits.nrows() != new_logits.nrows() || old_logits.ncols() > new_logits.ncols() {
        return arg_err("old-model logits must cover a prefix of the new classes for the same batch");
    }
    let probs = softmax_rows(new_logits, 1.0)?;
    let ce = cross_entropy(probs.view(), labels)?;
    let mut d_logits = crate::nn::mlp::ce_grad(probs, labels);
    let (cloud_kd, d_cloud) = kd_term(new_logits, cloud_logits, weights.temperature)?;
    let mut new = ce;
    if weights.lambda1 > 0.0 {
        new += weights.lambda1 * cloud_kd;
        d_logits.scaled_add(weights.lambda1, &d_cloud);
    }
    let old_width = old_logits.ncols();
    let (old, d_old) = if old_width == 0 {
        (0.0, Array2::zeros((new_logits.nrows(), 0)))
    } else {
        kd_term(new_logits.slice(s![.., ..old_width]), old_logits, weights.temperature)?
    };
    let mut total = new;
    if weights.lambda3 > 0.0 {
        total += weights.lambda3 * old;
        d_logits
            .slice_mut(s![.., ..old_width])
            .scaled_add(weights.lambda3, &d_old);
    }
    Ok(LwfLoss {
        total,
        new,
        old,
        d_logits,
    })
}

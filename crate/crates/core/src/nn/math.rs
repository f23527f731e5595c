//! Shared numerics: softmax, cross-entropy, argmax and a batch-invariant affine map.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{arg_err, EccError, Result};

/// Probabilities below this are clamped before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_finite(values: ArrayView1<'_, f64>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EccError::Numeric("non-finite logit".into()))
    }
}

/// Max-subtracted softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return arg_err("softmax of an empty vector");
    }
    let view = ArrayView1::from(logits);
    check_finite(view)?;
    Ok(softmax_unchecked(view).to_vec())
}

pub(crate) fn softmax_unchecked(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// Row-wise softmax of `logits / temperature`.
pub fn softmax_rows(logits: ArrayView2<'_, f64>, temperature: f64) -> Result<Array2<f64>> {
    if logits.ncols() == 0 {
        return arg_err("softmax of zero-width logits");
    }
    let mut out = Array2::zeros(logits.raw_dim());
    for (row, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        check_finite(row)?;
        let scaled = row.mapv(|v| v / temperature);
        dst.assign(&softmax_unchecked(scaled.view()));
    }
    Ok(out)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean over the batch of `-ln p[label]`, with probabilities clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return arg_err(format!(
            "{} probability rows but {} labels",
            probs.nrows(),
            labels.len()
        ));
    }
    if labels.is_empty() {
        return arg_err("cross-entropy of an empty batch");
    }
    let mut total = 0.0;
    for (row, &label) in probs.rows().into_iter().zip(labels) {
        if label >= row.len() {
            return arg_err(format!("label {label} out of range for {} classes", row.len()));
        }
        if (row.sum() - 1.0).abs() > 1e-6 {
            return arg_err("probability row does not sum to 1");
        }
        total -= row[label].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// `x · wᵀ + b`, one dot product per output entry so that a sample's result does
/// not depend on the rest of the batch.
pub fn affine(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.nrows()));
    for (xr, mut orow) in x.rows().into_iter().zip(out.rows_mut()) {
        for ((o, wr), &bias) in orow.iter_mut().zip(w.rows()).zip(b.iter()) {
            *o = bias + xr.dot(&wr);
        }
    }
    out
}

/// Gradients of `x · wᵀ + b` given the upstream gradient `d_out`.
pub(crate) fn affine_backward(
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    d_out: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let d_w = d_out.t().dot(&x);
    let d_b = d_out.sum_axis(Axis(0));
    let d_x = d_out.dot(&w);
    (d_w, d_b, d_x)
}

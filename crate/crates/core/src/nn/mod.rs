//! Dense network engine: layers, the cloud MLP, shared numerics and optimizers.

pub mod dense;
pub mod math;
pub mod mlp;
pub mod optim;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

pub use dense::{Activation, DenseGrad, DenseLayer};
pub use math::{argmax, cross_entropy, softmax, softmax_rows};
pub use mlp::{train_ann, train_ann_logged, CloudModel, FitConfig, MlpGrads, MlpModel};
pub use optim::{Optimizer, OptimizerKind};

/// Shuffled index batches covering `0..n` once.
pub fn minibatches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn gather_rows(x: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (mut dst, &r) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&x.row(r));
    }
    out
}

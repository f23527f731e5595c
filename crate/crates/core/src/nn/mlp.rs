use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseGrad, DenseLayer};
use super::math::{affine_backward, cross_entropy, softmax_rows};
use super::optim::{Optimizer, OptimizerKind};
use super::{gather_rows, minibatches};
use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::rng::{derive_seed, purpose, seeded};

/// Dense classifier with ReLU hidden layers and an identity output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    /// Layer whose post-activation output is exposed as the feature tap.
    pub feature_tap: usize,
}

pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|g| g.slices()).collect()
    }
}

/// Mini-batch training hyper-parameters shared by the dense and spiking trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return arg_err("batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return arg_err("learning rate must be positive");
        }
        Ok(())
    }
}

impl MlpModel {
    /// Seeded model for `arch = [input, hidden..., classes]`.
    pub fn new(arch: &[usize], feature_tap: usize, seed: u64) -> Result<Self> {
        if arch.len() < 3 {
            return arg_err("an MLP needs at least one hidden layer to expose a feature tap");
        }
        if arch.contains(&0) {
            return arg_err("layer sizes must be positive");
        }
        let n_layers = arch.len() - 1;
        if feature_tap >= n_layers - 1 {
            return arg_err(format!(
                "feature tap {feature_tap} must index a hidden layer (< {})",
                n_layers - 1
            ));
        }
        let mut rng = seeded(seed);
        let layers = arch
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::init(w[0], w[1], act, &mut rng)
            })
            .collect();
        Ok(Self { layers, feature_tap })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, feature_tap: usize) -> Result<Self> {
        if layers.is_empty() {
            return arg_err("model has no layers");
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return arg_err("consecutive layer dimensions disagree");
            }
        }
        if layers.len() > 1 && feature_tap >= layers.len() - 1 {
            return arg_err("feature tap must index a hidden layer");
        }
        Ok(Self { layers, feature_tap })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.feature_tap].out_dim()
    }

    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.input_dim()];
        arch.extend(self.layers.iter().map(DenseLayer::out_dim));
        arch
    }

    /// Multiply-accumulates for one sample.
    pub fn macs(&self) -> usize {
        self.layers.iter().map(DenseLayer::macs).sum()
    }

    /// Returns `(logits, tap_features)`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let (logits, cache) = self.forward_cached(x)?;
        let tap = cache.pre[self.feature_tap].mapv(|v| self.layers[self.feature_tap].activation.apply(v));
        Ok((logits, tap))
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.layers[0].check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &self.layers {
            let z = layer.linear(a.view())?;
            let act = layer.activation;
            let next = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, MlpCache { inputs, pre }))
    }

    pub fn backward(&self, cache: &MlpCache, d_logits: ArrayView2<'_, f64>) -> MlpGrads {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d_a = d_logits.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut d_z = d_a;
            d_z.zip_mut_with(&cache.pre[l], |d, &z| *d *= act.derivative(z));
            let (d_w, d_b, d_x) = affine_backward(cache.inputs[l].view(), layer.weights.view(), d_z.view());
            grads.push(DenseGrad {
                weights: d_w,
                bias: d_b,
            });
            d_a = d_x;
        }
        grads.reverse();
        MlpGrads { layers: grads }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

/// Cross-entropy over all classes; returns the model and its per-epoch mean loss.
pub fn train_ann_logged(
    dataset: &Dataset,
    arch: &[usize],
    feature_tap: usize,
    fit: &FitConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<f64>)> {
    if dataset.is_empty() {
        return arg_err("cannot train on an empty dataset");
    }
    fit.validate()?;
    if arch.first() != Some(&dataset.dim()) {
        return arg_err("first layer size must equal the feature dimension");
    }
    if arch.last() != Some(&dataset.num_classes()) {
        return arg_err("last layer size must equal the dataset class count");
    }
    let mut model = MlpModel::new(arch, feature_tap, derive_seed(seed, purpose::CLOUD_INIT))?;
    let mut rng = seeded(derive_seed(seed, purpose::CLOUD_SHUFFLE));
    let mut opt = Optimizer::new(fit.optimizer, fit.learning_rate);
    let x = dataset.features();
    let labels = dataset.labels();
    let mut history = Vec::with_capacity(fit.epochs);
    for _ in 0..fit.epochs {
        let mut epoch_loss = 0.0;
        for batch in minibatches(x.nrows(), fit.batch_size, &mut rng) {
            let xb = gather_rows(x.view(), &batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = model.forward_cached(xb.view())?;
            let probs = softmax_rows(logits.view(), 1.0)?;
            epoch_loss += cross_entropy(probs.view(), &yb)? * batch.len() as f64;
            let d_logits = ce_grad(probs, &yb);
            let grads = model.backward(&cache, d_logits.view());
            opt.step(model.param_slices_mut(), grads.slices());
        }
        history.push(epoch_loss / x.nrows() as f64);
    }
    Ok((model, history))
}

pub fn train_ann(
    dataset: &Dataset,
    arch: &[usize],
    feature_tap: usize,
    fit: &FitConfig,
    seed: u64,
) -> Result<MlpModel> {
    Ok(train_ann_logged(dataset, arch, feature_tap, fit, seed)?.0)
}

/// Gradient of mean cross-entropy with respect to the logits, `(p − onehot)/N`.
pub(crate) fn ce_grad(mut probs: Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let n = labels.len() as f64;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    probs /= n;
    probs
}

/// The cloud classifier: a trained MLP, optionally overridden by a ground-truth oracle.
///
/// In oracle mode the logits are `scale · onehot(label)`; the MLP still provides
/// features and the compute-cost profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudModel {
    mlp: MlpModel,
    oracle_scale: Option<f64>,
}

impl CloudModel {
    pub fn new(mlp: MlpModel) -> Self {
        Self {
            mlp,
            oracle_scale: None,
        }
    }

    pub fn perfect_oracle(mlp: MlpModel, logit_scale: f64) -> Self {
        Self {
            mlp,
            oracle_scale: Some(logit_scale),
        }
    }

    pub fn mlp(&self) -> &MlpModel {
        &self.mlp
    }

    pub fn is_oracle(&self) -> bool {
        self.oracle_scale.is_some()
    }

    pub fn num_classes(&self) -> usize {
        self.mlp.num_classes()
    }

    /// Logits over the full label space. Oracle mode requires the true labels.
    pub fn logits(&self, x: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> Result<Array2<f64>> {
        match self.oracle_scale {
            None => self.mlp.logits(x),
            Some(scale) => {
                self.mlp.layers[0].check_input(x)?;
                let Some(labels) = labels else {
                    return arg_err("the perfect oracle needs ground-truth labels");
                };
                if labels.len() != x.nrows() {
                    return arg_err("label count does not match batch size");
                }
                let k = self.num_classes();
                let mut out = Array2::zeros((x.nrows(), k));
                for (mut row, &y) in out.rows_mut().into_iter().zip(labels) {
                    if y >= k {
                        return arg_err(format!("label {y} outside the cloud label space"));
                    }
                    row[y] = scale;
                }
                Ok(out)
            }
        }
    }

    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.mlp.forward(x)?.1)
    }
}

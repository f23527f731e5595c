use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lif::{LifConfig, SurrogateMode};
use crate::error::{arg_err, EccError, Result};
use crate::nn::dense::uniform_init;
use crate::nn::math::{affine, argmax};
use crate::nn::{Activation, DenseGrad, DenseLayer};
use crate::rng::seeded;

/// A dense projection feeding a population of LIF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingLayer {
    pub dense: DenseLayer,
    pub lif: LifConfig,
}

/// Layer sizes and neuron constants for a fresh edge model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub tap_layer: usize,
    pub lif: LifConfig,
}

/// Time-stepped spiking classifier.
///
/// `layers[0].dense` is the encoding layer: it maps real-valued features to a
/// constant input current that drives the first spiking population at every
/// time step. Deeper layers integrate the spikes of the layer below. The readout
/// is a non-spiking linear map of the last population's spikes, averaged over time.
/// Readout row `j` scores the global class `classes[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    pub layers: Vec<SpikingLayer>,
    pub readout: DenseLayer,
    pub tap_layer: usize,
    pub classes: Vec<usize>,
}

/// Recorded activity of one forward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrace {
    /// `spikes[layer][t]`, batch × neurons.
    pub spikes: Vec<Vec<Array2<f64>>>,
    /// Pre-firing membrane potential `membrane[layer][t]`.
    pub membrane: Vec<Vec<Array2<f64>>>,
    /// Total spikes per layer over the batch and all time steps.
    pub spike_counts: Vec<f64>,
    /// Σ_t spikes of the tap layer, batch × neurons.
    pub tap_sum: Array2<f64>,
    pub batch_size: usize,
    pub time_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnGrads {
    pub layers: Vec<DenseGrad>,
    pub readout: DenseGrad,
}

impl SnnGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.readout))
            .flat_map(DenseGrad::slices)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(DenseGrad::is_zero) && self.readout.is_zero()
    }
}

fn linear_no_bias(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let zero = Array1::zeros(w.nrows());
    affine(x, w, zero.view())
}

impl SnnModel {
    pub fn new(arch: &SnnArch, classes: Vec<usize>, seed: u64) -> Result<Self> {
        arch.lif.validate()?;
        if arch.input_dim == 0 || arch.hidden.is_empty() || arch.hidden.contains(&0) {
            return arg_err("the edge model needs a positive input size and at least one hidden layer");
        }
        if arch.tap_layer >= arch.hidden.len() {
            return arg_err(format!(
                "tap layer {} out of range for {} hidden layers",
                arch.tap_layer,
                arch.hidden.len()
            ));
        }
        if classes.is_empty() {
            return arg_err("the readout needs at least one class");
        }
        let mut rng = seeded(seed);
        let mut layers = Vec::with_capacity(arch.hidden.len());
        let mut fan_in = arch.input_dim;
        for &width in &arch.hidden {
            layers.push(SpikingLayer {
                dense: DenseLayer::init(fan_in, width, Activation::Identity, &mut rng),
                lif: arch.lif,
            });
            fan_in = width;
        }
        let readout = DenseLayer::init(fan_in, classes.len(), Activation::Identity, &mut rng);
        Self::from_parts(layers, readout, arch.tap_layer, classes)
    }

    pub fn from_parts(
        layers: Vec<SpikingLayer>,
        readout: DenseLayer,
        tap_layer: usize,
        classes: Vec<usize>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return arg_err("at least one spiking layer is required");
        }
        let t = layers[0].lif.time_steps;
        for (i, l) in layers.iter().enumerate() {
            l.lif.validate()?;
            if l.lif.time_steps != t {
                return arg_err("all spiking layers must share the number of time steps");
            }
            if i > 0 && layers[i - 1].dense.out_dim() != l.dense.in_dim() {
                return arg_err("consecutive layer dimensions disagree");
            }
        }
        if readout.in_dim() != layers.last().expect("non-empty").dense.out_dim() {
            return arg_err("readout input does not match the last spiking layer");
        }
        if readout.out_dim() != classes.len() {
            return arg_err("readout width must equal the class count");
        }
        if tap_layer >= layers.len() {
            return arg_err("tap layer out of range");
        }
        Ok(Self {
            layers,
            readout,
            tap_layer,
            classes,
        })
    }

    pub fn encoder(&self) -> &DenseLayer {
        &self.layers[0].dense
    }

    pub fn input_dim(&self) -> usize {
        self.encoder().in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn time_steps(&self) -> usize {
        self.layers[0].lif.time_steps
    }

    pub fn tap_dim(&self) -> usize {
        self.layers[self.tap_layer].dense.out_dim()
    }

    pub fn set_surrogate_mode(&mut self, mode: SurrogateMode) {
        for l in &mut self.layers {
            l.lif.surrogate_mode = mode;
        }
    }

    /// Readout position of a global class id.
    pub fn class_index(&self, class: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    /// Global class id predicted for each row of `logits`.
    pub fn predict(&self, logits: ArrayView2<'_, f64>) -> Vec<usize> {
        logits.rows().into_iter().map(|r| self.classes[argmax(r)]).collect()
    }

    /// Time-averaged readout logits, plus the full activity trace when requested.
    pub fn forward(&self, x: ArrayView2<'_, f64>, record_trace: bool) -> Result<(Array2<f64>, Option<SpikeTrace>)> {
        let enc_current = self.encoder().linear(x)?;
        let n = x.nrows();
        let steps = self.time_steps();
        let n_layers = self.layers.len();
        let mut h: Vec<Array2<f64>> = self
            .layers
            .iter()
            .map(|l| Array2::zeros((n, l.dense.out_dim())))
            .collect();
        let mut acc = Array2::zeros((n, self.num_classes()));
        let mut spikes: Vec<Vec<Array2<f64>>> = vec![Vec::new(); n_layers];
        let mut membrane: Vec<Vec<Array2<f64>>> = vec![Vec::new(); n_layers];
        let mut counts = vec![0.0; n_layers];
        let mut tap_sum = Array2::zeros((n, self.tap_dim()));

        for _ in 0..steps {
            let mut below: Option<Array2<f64>> = None;
            for (l, layer) in self.layers.iter().enumerate() {
                let current = match &below {
                    None => enc_current.clone(),
                    Some(s) => layer.dense.linear(s.view())?,
                };
                let lif = &layer.lif;
                let u = Zip::from(&h[l]).and(&current).map_collect(|&hp, &i| lif.charge(hp, i));
                let o = u.mapv(|v| lif.spike(v));
                Zip::from(&mut h[l]).and(&u).and(&o).for_each(|hv, &uv, &ov| *hv = lif.reset(uv, ov));
                counts[l] += o.sum();
                if l == self.tap_layer {
                    tap_sum += &o;
                }
                if record_trace {
                    membrane[l].push(u);
                    spikes[l].push(o.clone());
                }
                below = Some(o);
            }
            let top = below.expect("at least one layer");
            acc += &linear_no_bias(top.view(), self.readout.weights.view());
        }
        let mut logits = acc / steps as f64;
        logits += &self.readout.bias;
        let trace = record_trace.then(|| SpikeTrace {
            spikes,
            membrane,
            spike_counts: counts,
            tap_sum,
            batch_size: n,
            time_steps: steps,
        });
        Ok((logits, trace))
    }

    /// Backpropagation through time.
    ///
    /// `d_logits` is the loss gradient with respect to the logits; `d_tap_sum`
    /// optionally adds a gradient with respect to the summed tap-layer spikes.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        trace: Option<&SpikeTrace>,
        d_logits: ArrayView2<'_, f64>,
        d_tap_sum: Option<ArrayView2<'_, f64>>,
    ) -> Result<SnnGrads> {
        let trace = trace.ok_or_else(|| EccError::State("backward needs a recorded forward trace".into()))?;
        let steps = trace.time_steps;
        let n_layers = self.layers.len();
        if trace.spikes.len() != n_layers || trace.spikes.iter().any(|s| s.len() != steps) {
            return Err(EccError::State("trace does not match the model".into()));
        }
        if d_logits.dim() != (trace.batch_size, self.num_classes()) {
            return arg_err("logit gradient shape does not match the forward pass");
        }
        let inv_t = 1.0 / steps as f64;
        let top = n_layers - 1;

        let mut readout = DenseGrad::zeros_like(&self.readout);
        readout.bias = d_logits.sum_axis(Axis(0));
        let d_top = d_logits.dot(&self.readout.weights) * inv_t;
        let mut d_spikes: Vec<Vec<Array2<f64>>> = self
            .layers
            .iter()
            .map(|l| vec![Array2::zeros((trace.batch_size, l.dense.out_dim())); steps])
            .collect();
        for (d, s) in d_spikes[top].iter_mut().zip(&trace.spikes[top]) {
            readout.weights += &(d_logits.t().dot(s) * inv_t);
            *d += &d_top;
        }
        if let Some(d_tap) = d_tap_sum {
            if d_tap.dim() != (trace.batch_size, self.tap_dim()) {
                return arg_err("tap gradient shape does not match the tap layer");
            }
            for d in &mut d_spikes[self.tap_layer] {
                *d += &d_tap;
            }
        }

        let mut layer_grads = vec![None; n_layers];
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let lif = &layer.lif;
            let mut d_current = vec![Array2::zeros((0, 0)); steps];
            let mut d_u_next: Array2<f64> = Array2::zeros((trace.batch_size, layer.dense.out_dim()));
            for t in (0..steps).rev() {
                let u = &trace.membrane[l][t];
                let o = &trace.spikes[l][t];
                let d_h = &d_u_next * (1.0 - lif.tau);
                let mut d_u = Array2::zeros(u.raw_dim());
                Zip::from(&mut d_u)
                    .and(&d_spikes[l][t])
                    .and(&d_h)
                    .and(u)
                    .and(o)
                    .for_each(|du, &ds, &dh, &uv, &ov| {
                        let g = lif.spike_grad(uv);
                        let dh_du = match lif.surrogate_mode {
                            SurrogateMode::Hard => 1.0 - ov,
                            SurrogateMode::Soft => (1.0 - ov) + (lif.v_reset - uv) * g,
                        };
                        *du = ds * g + dh * dh_du;
                    });
                d_current[t] = &d_u * lif.tau;
                d_u_next = d_u;
            }
            let mut grad = DenseGrad::zeros_like(&layer.dense);
            if l == 0 {
                let total = d_current.iter().fold(Array2::zeros(d_current[0].raw_dim()), |acc, d| acc + d);
                grad.weights = total.t().dot(&x);
                grad.bias = total.sum_axis(Axis(0));
            } else {
                for (t, d_i) in d_current.iter().enumerate() {
                    let input = &trace.spikes[l - 1][t];
                    grad.weights += &d_i.t().dot(input);
                    grad.bias += &d_i.sum_axis(Axis(0));
                    let d_below = d_i.dot(&layer.dense.weights);
                    d_spikes[l - 1][t] += &d_below;
                }
            }
            layer_grads[l] = Some(grad);
        }
        Ok(SnnGrads {
            layers: layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
            readout,
        })
    }

    /// Adds readout rows for `new_classes`; existing rows are kept bit-exactly.
    pub fn expand_readout(&self, new_classes: &[usize], seed: u64) -> Result<SnnModel> {
        if new_classes.is_empty() {
            return arg_err("expanding the readout requires at least one new class");
        }
        for (i, c) in new_classes.iter().enumerate() {
            if self.classes.contains(c) || new_classes[..i].contains(c) {
                return arg_err(format!("class {c} is already present in the readout"));
            }
        }
        let old = self.num_classes();
        let total = old + new_classes.len();
        let fan_in = self.readout.in_dim();
        let mut rng = seeded(seed);
        let mut weights = Array2::zeros((total, fan_in));
        let mut bias = Array1::zeros(total);
        weights.slice_mut(s![..old, ..]).assign(&self.readout.weights);
        bias.slice_mut(s![..old]).assign(&self.readout.bias);
        for r in old..total {
            for w in weights.row_mut(r) {
                *w = uniform_init(&mut rng, fan_in);
            }
            bias[r] = uniform_init(&mut rng, fan_in);
        }
        let mut classes = self.classes.clone();
        classes.extend_from_slice(new_classes);
        let mut out = self.clone();
        out.readout = DenseLayer {
            weights,
            bias,
            activation: Activation::Identity,
        };
        out.classes = classes;
        Ok(out)
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.extend(l.dense.slices_mut());
        }
        out.extend(self.readout.slices_mut());
        out
    }

    /// Copies all parameters into one flat vector (encoder first, readout last).
    pub fn flat_params(&mut self) -> Vec<f64> {
        self.param_slices_mut().into_iter().flat_map(|s| s.iter().copied()).collect()
    }

    /// Random batch helper for tests and probes.
    pub fn random_input<R: Rng>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.input_dim()), || rng.random::<f64>())
    }
}

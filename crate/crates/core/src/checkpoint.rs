//! Versioned JSON checkpoints for the cloud MLP and the edge SNN.
//!
//! Weight matrices are stored row-major (`out_dim × in_dim`). The alignment head
//! is training-only and is never written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{EccError, Result};
use crate::nn::{Activation, DenseLayer, MlpModel};
use crate::snn::{LifConfig, SnnModel, SpikingLayer};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn of(layer: &DenseLayer) -> Self {
        Self {
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            activation: layer.activation,
            weights: layer.weights.iter().copied().collect(),
            bias: layer.bias.to_vec(),
        }
    }

    fn to_layer(&self) -> Result<DenseLayer> {
        let weights = Array2::from_shape_vec((self.out_dim, self.in_dim), self.weights.clone())
            .map_err(|_| EccError::State("checkpoint weight array has the wrong length".into()))?;
        DenseLayer::new(weights, Array1::from(self.bias.clone()), self.activation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub arch: Vec<usize>,
    pub feature_tap: usize,
    pub layers: Vec<LayerParams>,
}

impl MlpCheckpoint {
    pub fn from_model(model: &MlpModel, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            arch: model.arch(),
            feature_tap: model.feature_tap,
            layers: model.layers.iter().map(LayerParams::of).collect(),
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        check_version(self.version)?;
        let layers = self.layers.iter().map(LayerParams::to_layer).collect::<Result<Vec<_>>>()?;
        let model = MlpModel::from_layers(layers, self.feature_tap)?;
        if model.arch() != self.arch {
            return Err(EccError::State("checkpoint arch disagrees with its layers".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub lif: LifConfig,
    pub tap_layer: usize,
    pub classes: Vec<usize>,
    pub layers: Vec<LayerParams>,
    pub readout: LayerParams,
}

impl SnnCheckpoint {
    pub fn from_model(model: &SnnModel, seed: u64) -> Result<Self> {
        let lif = model.layers[0].lif;
        if model.layers.iter().any(|l| l.lif != lif) {
            return Err(EccError::State("checkpoints need one neuron configuration shared by all layers".into()));
        }
        Ok(Self {
            version: CHECKPOINT_VERSION,
            seed,
            lif,
            tap_layer: model.tap_layer,
            classes: model.classes.clone(),
            layers: model.layers.iter().map(|l| LayerParams::of(&l.dense)).collect(),
            readout: LayerParams::of(&model.readout),
        })
    }

    pub fn to_model(&self) -> Result<SnnModel> {
        check_version(self.version)?;
        let layers = self
            .layers
            .iter()
            .map(|p| {
                Ok(SpikingLayer {
                    dense: p.to_layer()?,
                    lif: self.lif,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SnnModel::from_parts(layers, self.readout.to_layer()?, self.tap_layer, self.classes.clone())
    }
}

fn check_version(version: u32) -> Result<()> {
    if version != CHECKPOINT_VERSION {
        return Err(EccError::State(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

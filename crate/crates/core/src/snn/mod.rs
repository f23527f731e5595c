//! The spiking edge model.

pub mod lif;
pub mod model;

pub use lif::{lif_step, LifConfig, LifState, SurrogateMode};
pub use model::{SnnArch, SnnGrads, SnnModel, SpikeTrace, SpikingLayer};

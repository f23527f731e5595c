//! Edge-cloud collaborative inference with a spiking edge model.
//!
//! The edge runs a small leaky integrate-and-fire network, the cloud a dense
//! classifier. A normalized-entropy filter decides which inputs are uploaded;
//! uploaded inputs are buffered on the device and later drive exemplar-free
//! incremental updates of the edge model.

pub mod checkpoint;
pub mod coinfer;
pub mod continual;
pub mod costs;
pub mod data;
pub mod error;
pub mod filter;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod snn;

pub use error::{EccError, Result};

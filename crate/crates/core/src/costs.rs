//! Analytic energy and latency model.
//!
//! Edge energy counts real-valued multiply-accumulates in the encoding layer and
//! spike-driven accumulates everywhere else. Cloud energy counts dense MACs.
//! Communication is charged per uploaded byte plus a round trip. Energies are
//! reported in mJ and latencies in ms.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, EccError, Result};
use crate::filter::Route;
use crate::nn::MlpModel;
use crate::snn::{SnnModel, SpikeTrace};

const PJ_TO_MJ: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConstants {
    /// Energy per multiply-accumulate, pJ.
    pub e_mac_pj: f64,
    /// Energy per accumulate, pJ.
    pub e_ac_pj: f64,
    /// Transmission energy per byte, pJ.
    pub e_byte_pj: f64,
    pub bandwidth_bytes_per_s: f64,
    pub rtt_ms: f64,
    /// Synaptic operations per second on the edge device.
    pub edge_throughput_ops_per_s: f64,
    pub cloud_throughput_macs_per_s: f64,
    pub bytes_per_feature: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            e_mac_pj: 4.6,
            e_ac_pj: 0.9,
            e_byte_pj: 50.0,
            bandwidth_bytes_per_s: 1e6,
            rtt_ms: 10.0,
            edge_throughput_ops_per_s: 1e8,
            cloud_throughput_macs_per_s: 1e10,
            bytes_per_feature: 4.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_mac_pj,
            self.e_ac_pj,
            self.e_byte_pj,
            self.bandwidth_bytes_per_s,
            self.rtt_ms,
            self.edge_throughput_ops_per_s,
            self.cloud_throughput_macs_per_s,
            self.bytes_per_feature,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return arg_err("all cost constants must be finite and strictly positive");
        }
        if self.e_mac_pj <= self.e_ac_pj {
            return arg_err("a multiply-accumulate must cost more than an accumulate");
        }
        Ok(())
    }

    /// One-line `key=value` rendering used in report headers.
    pub fn describe(&self) -> String {
        format!(
            "e_mac_pj={};e_ac_pj={};e_byte_pj={};bandwidth_bytes_per_s={};rtt_ms={};edge_throughput_ops_per_s={};cloud_throughput_macs_per_s={};bytes_per_feature={}",
            self.e_mac_pj,
            self.e_ac_pj,
            self.e_byte_pj,
            self.bandwidth_bytes_per_s,
            self.rtt_ms,
            self.edge_throughput_ops_per_s,
            self.cloud_throughput_macs_per_s,
            self.bytes_per_feature
        )
    }
}

/// Energy (mJ) and latency (ms), split into compute and communication parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub compute_energy_mj: f64,
    pub comm_energy_mj: f64,
    pub compute_latency_ms: f64,
    pub comm_latency_ms: f64,
}

impl CostReport {
    pub fn total_energy_mj(&self) -> f64 {
        self.compute_energy_mj + self.comm_energy_mj
    }

    pub fn total_latency_ms(&self) -> f64 {
        self.compute_latency_ms + self.comm_latency_ms
    }
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport {
            compute_energy_mj: self.compute_energy_mj + rhs.compute_energy_mj,
            comm_energy_mj: self.comm_energy_mj + rhs.comm_energy_mj,
            compute_latency_ms: self.compute_latency_ms + rhs.compute_latency_ms,
            comm_latency_ms: self.comm_latency_ms + rhs.comm_latency_ms,
        }
    }
}

impl AddAssign for CostReport {
    fn add_assign(&mut self, rhs: CostReport) {
        *self = *self + rhs;
    }
}

/// Operation counts of one recorded edge forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeOps {
    pub macs: f64,
    pub acs: f64,
}

impl EdgeOps {
    pub fn total(&self) -> f64 {
        self.macs + self.acs
    }
}

/// Encoding-layer MACs over all time steps plus one accumulate per spike per
/// outgoing synapse.
pub fn edge_ops(model: &SnnModel, trace: Option<&SpikeTrace>) -> Result<EdgeOps> {
    let trace = trace.ok_or_else(|| EccError::State("edge cost needs a recorded spike trace".into()))?;
    if trace.spike_counts.len() != model.layers.len() {
        return Err(EccError::State("trace does not match the model".into()));
    }
    let macs = (model.encoder().macs() * trace.time_steps * trace.batch_size) as f64;
    let acs = trace
        .spike_counts
        .iter()
        .enumerate()
        .map(|(l, &count)| {
            let fan_out = match model.layers.get(l + 1) {
                Some(next) => next.dense.out_dim(),
                None => model.readout.out_dim(),
            };
            count * fan_out as f64
        })
        .sum();
    Ok(EdgeOps { macs, acs })
}

pub fn edge_energy(model: &SnnModel, trace: Option<&SpikeTrace>, c: &CostConstants) -> Result<f64> {
    let ops = edge_ops(model, trace)?;
    Ok((c.e_mac_pj * ops.macs + c.e_ac_pj * ops.acs) * PJ_TO_MJ)
}

/// Dense MAC energy of one cloud inference; independent of the input.
pub fn cloud_energy(model: &MlpModel, c: &CostConstants) -> f64 {
    c.e_mac_pj * model.macs() as f64 * PJ_TO_MJ
}

/// Upload of `num_features` values: `(energy mJ, latency ms)`.
pub fn comm_cost(num_features: usize, c: &CostConstants) -> (f64, f64) {
    let payload = num_features as f64 * c.bytes_per_feature;
    let energy = c.e_byte_pj * payload * PJ_TO_MJ;
    let latency = c.rtt_ms + payload / c.bandwidth_bytes_per_s * 1000.0;
    (energy, latency)
}

/// Sequential latency of a route: edge compute, then upload and cloud compute
/// when the sample leaves the device.
pub fn path_latency(route: Route, edge_ops: f64, cloud_macs: f64, comm_latency_ms: f64, c: &CostConstants) -> f64 {
    let edge = edge_ops / c.edge_throughput_ops_per_s * 1000.0;
    match route {
        Route::Edge => edge,
        Route::Cloud => edge + comm_latency_ms + cloud_macs / c.cloud_throughput_macs_per_s * 1000.0,
    }
}

/// Full per-sample charge for a route.
pub fn route_cost(
    route: Route,
    edge: &SnnModel,
    trace: Option<&SpikeTrace>,
    cloud: &MlpModel,
    num_features: usize,
    c: &CostConstants,
) -> Result<CostReport> {
    let ops = edge_ops(edge, trace)?;
    let edge_mj = (c.e_mac_pj * ops.macs + c.e_ac_pj * ops.acs) * PJ_TO_MJ;
    let edge_ms = path_latency(Route::Edge, ops.total(), 0.0, 0.0, c);
    Ok(match route {
        Route::Edge => CostReport {
            compute_energy_mj: edge_mj,
            comm_energy_mj: 0.0,
            compute_latency_ms: edge_ms,
            comm_latency_ms: 0.0,
        },
        Route::Cloud => {
            let (comm_mj, comm_ms) = comm_cost(num_features, c);
            let cloud_ms = cloud.macs() as f64 / c.cloud_throughput_macs_per_s * 1000.0;
            CostReport {
                compute_energy_mj: edge_mj + cloud_energy(cloud, c),
                comm_energy_mj: comm_mj,
                compute_latency_ms: edge_ms + cloud_ms,
                comm_latency_ms: comm_ms,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    #[test]
    fn comm_reference_values() {
        let c = CostConstants::default();
        let (e0, l0) = comm_cost(0, &c);
        assert_eq!(e0, 0.0);
        assert_eq!(l0, c.rtt_ms);
        let (_, l16) = comm_cost(16, &c);
        assert!((l16 - 10.064).abs() < 1e-12);
        let (e1, l1) = comm_cost(10, &c);
        let (e2, l2) = comm_cost(20, &c);
        assert!((e2 - 2.0 * e1).abs() < 1e-24);
        assert!(((l2 - c.rtt_ms) - 2.0 * (l1 - c.rtt_ms)).abs() < 1e-12);
    }

    #[test]
    fn cloud_mac_counting() {
        let c = CostConstants::default();
        let one = MlpModel::from_layers(vec![DenseLayer::zeros(2, 2, Activation::Identity)], 0).unwrap();
        assert!((cloud_energy(&one, &c) - 4.0 * c.e_mac_pj * 1e-9).abs() < 1e-24);
        let two = MlpModel::from_layers(
            vec![
                DenseLayer::zeros(2, 2, Activation::Relu),
                DenseLayer::zeros(2, 2, Activation::Identity),
            ],
            0,
        )
        .unwrap();
        assert_eq!(cloud_energy(&two, &c), 2.0 * cloud_energy(&one, &c));
        let arch = MlpModel::new(&[16, 32, 8], 0, 0).unwrap();
        let params: usize = arch.layers.iter().map(|l| l.weights.len()).sum();
        assert_eq!(arch.macs(), params);
        assert_eq!(arch.macs(), 16 * 32 + 32 * 8);
    }

    #[test]
    fn latency_routes() {
        let c = CostConstants::default();
        let edge = path_latency(Route::Edge, 1e5, 1e6, 12.0, &c);
        assert!((edge - 1.0).abs() < 1e-12);
        let cloud = path_latency(Route::Cloud, 1e5, 1e6, 12.0, &c);
        assert!((cloud - (1.0 + 12.0 + 0.1)).abs() < 1e-12);
        let fast = CostConstants {
            rtt_ms: 1e-300,
            bandwidth_bytes_per_s: 1e300,
            ..c
        };
        let (_, comm) = comm_cost(16, &fast);
        let limit = path_latency(Route::Cloud, 1e5, 1e6, comm, &fast);
        assert!((limit - 1.1).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(CostConstants::default().validate().is_ok());
        let swapped = CostConstants {
            e_mac_pj: 0.5,
            ..CostConstants::default()
        };
        assert!(swapped.validate().is_err());
        let zero = CostConstants {
            rtt_ms: 0.0,
            ..CostConstants::default()
        };
        assert!(zero.validate().is_err());
    }
}

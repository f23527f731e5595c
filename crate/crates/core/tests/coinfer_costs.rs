use ecc_core::coinfer::{
    edge_accuracy, edge_scores, infer_one, run_execution_stage, AmbiguityBuffer,
};
use ecc_core::costs::{edge_ops, route_cost, CostConstants};
use ecc_core::data::{generate_blobs, Sample};
use ecc_core::filter::{FilterConfig, Route};
use ecc_core::nn::{train_ann, Activation, CloudModel, DenseLayer, FitConfig, MlpModel};
use ecc_core::snn::{LifConfig, SnnArch, SnnModel, SpikingLayer};
use ndarray::{array, Array1};

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Two spiking neurons: neuron 0 receives current 2 and fires every step,
/// neuron 1 stays silent. Readout weights are zero, so both classes tie.
fn two_neuron_edge() -> SnnModel {
    let lif = LifConfig {
        time_steps: 2,
        ..LifConfig::default()
    };
    let enc = DenseLayer::new(array![[2.0, 0.0], [0.0, 0.0]], Array1::zeros(2), Activation::Identity).unwrap();
    let readout = DenseLayer::zeros(2, 2, Activation::Identity);
    SnnModel::from_parts(vec![SpikingLayer { dense: enc, lif }], readout, 0, vec![0, 1]).unwrap()
}

fn two_layer_cloud() -> CloudModel {
    CloudModel::new(MlpModel::new(&[2, 3, 2], 0, 1).unwrap())
}

#[test]
fn hand_computed_edge_and_cloud_costs() {
    let c = CostConstants::default();
    let edge = two_neuron_edge();
    let cloud = two_layer_cloud();
    let sample = Sample {
        features: vec![1.0, 1.0],
        label: 0,
    };
    // 4 encoder MACs per step over 2 steps; 2 spikes fanning out to 2 readout rows.
    let (macs, acs) = (8.0, 4.0);
    let edge_mj = (4.6 * macs + 0.9 * acs) * 1e-9;
    let edge_ms = (macs + acs) / 1e8 * 1e3;
    let cloud_mj = 4.6 * 12.0 * 1e-9;
    let cloud_ms = 12.0 / 1e10 * 1e3;
    let comm_mj = 50.0 * 8.0 * 1e-9;
    let comm_ms = 10.0 + 8.0 / 1e6 * 1e3;

    let mut buffer = AmbiguityBuffer::new(None);
    let on_edge = infer_one(&sample, &edge, &cloud, &FilterConfig::new(1.0).unwrap(), &mut buffer, &c).unwrap();
    assert_eq!(on_edge.route, Route::Edge);
    assert!(rel_close(on_edge.cost.total_energy_mj(), edge_mj));
    assert!(rel_close(on_edge.cost.total_latency_ms(), edge_ms));
    assert_eq!(on_edge.cost.comm_energy_mj, 0.0);
    assert!(buffer.is_empty());

    let up = infer_one(&sample, &edge, &cloud, &FilterConfig::new(0.0).unwrap(), &mut buffer, &c).unwrap();
    assert_eq!(up.route, Route::Cloud);
    assert_eq!(up.score, 1.0);
    assert!(rel_close(up.cost.total_energy_mj(), edge_mj + cloud_mj + comm_mj));
    assert!(rel_close(up.cost.comm_energy_mj, comm_mj));
    assert!(rel_close(up.cost.total_latency_ms(), edge_ms + cloud_ms + comm_ms));
    assert_eq!(buffer.len(), 1);
}

#[test]
fn edge_op_counts_follow_spikes() {
    let edge = two_neuron_edge();
    let (_, trace) = edge.forward(array![[1.0, 1.0], [0.0, 0.0]].view(), true).unwrap();
    let ops = edge_ops(&edge, trace.as_ref()).unwrap();
    assert_eq!(ops.macs, 16.0);
    assert_eq!(ops.acs, 4.0);
    assert!(edge_ops(&edge, None).is_err());
}

struct Fixture {
    edge: SnnModel,
    cloud: CloudModel,
    stream: Vec<Sample>,
}

fn fixture(seed: u64) -> Fixture {
    let ds = generate_blobs(seed, 4, 6, 30, 0.25).unwrap();
    let mlp = train_ann(&ds, &[6, 12, 4], 0, &FitConfig::default(), seed).unwrap();
    let arch = SnnArch {
        input_dim: 6,
        hidden: vec![10],
        tap_layer: 0,
        lif: LifConfig {
            v_threshold: 0.25,
            ..LifConfig::default()
        },
    };
    let edge = SnnModel::new(&arch, vec![0, 1, 2, 3], seed).unwrap();
    Fixture {
        edge,
        cloud: CloudModel::new(mlp),
        stream: ds.samples().to_vec(),
    }
}

#[test]
fn delta_one_reproduces_standalone_edge() {
    let f = fixture(2);
    let c = CostConstants::default();
    let mut buffer = AmbiguityBuffer::new(None);
    let report = run_execution_stage(&f.stream, &f.edge, &f.cloud, &FilterConfig::new(1.0).unwrap(), &mut buffer, &c).unwrap();
    assert_eq!(report.accuracy, edge_accuracy(&f.edge, &f.stream).unwrap());
    assert_eq!(report.cur, 0.0);
    assert!(buffer.is_empty());
}

#[test]
fn delta_zero_with_oracle_errs_only_on_confident_edge_mistakes() {
    let f = fixture(3);
    let oracle = CloudModel::perfect_oracle(f.cloud.mlp().clone(), 10.0);
    let c = CostConstants::default();
    let scores = edge_scores(&f.edge, &f.stream).unwrap();
    let x = ecc_core::data::features_matrix(&f.stream, 6);
    let preds = f.edge.predict(f.edge.forward(x.view(), false).unwrap().0.view());
    let confident_misses = f
        .stream
        .iter()
        .zip(&scores)
        .zip(&preds)
        .filter(|((s, &score), &p)| score == 0.0 && p != s.label)
        .count();
    let mut buffer = AmbiguityBuffer::new(None);
    let report = run_execution_stage(&f.stream, &f.edge, &oracle, &FilterConfig::new(0.0).unwrap(), &mut buffer, &c).unwrap();
    let expected = 1.0 - confident_misses as f64 / f.stream.len() as f64;
    assert_eq!(report.accuracy, expected);

    // A saturated readout makes every score exactly zero, so nothing is uploaded.
    let mut saturated = f.edge.clone();
    saturated.readout.bias[1] = 1e4;
    let report = run_execution_stage(&f.stream, &saturated, &oracle, &FilterConfig::new(0.0).unwrap(), &mut buffer, &c).unwrap();
    assert_eq!(report.cur, 0.0);
    assert_eq!(report.accuracy, edge_accuracy(&saturated, &f.stream).unwrap());
}

#[test]
fn stage_totals_are_sums_and_cloud_path_costs_more() {
    let f = fixture(4);
    let c = CostConstants::default();
    let mut buffer = AmbiguityBuffer::new(None);
    let report = run_execution_stage(&f.stream, &f.edge, &f.cloud, &FilterConfig::new(0.5).unwrap(), &mut buffer, &c).unwrap();
    let mut energy = 0.0;
    let mut latency = 0.0;
    let mut compute = 0.0;
    for o in &report.outcomes {
        energy += o.cost.total_energy_mj();
        latency += o.cost.total_latency_ms();
        compute += o.cost.compute_energy_mj;
    }
    assert_eq!(report.total_cost.compute_energy_mj, compute);
    assert!(rel_close(report.total_cost.total_energy_mj(), energy));
    assert!(rel_close(report.total_cost.total_latency_ms(), latency));
    let uploads = report.outcomes.iter().filter(|o| o.route == Route::Cloud).count();
    assert_eq!(buffer.len(), uploads);

    for s in &f.stream {
        let x = ecc_core::data::features_matrix(std::slice::from_ref(s), 6);
        let (_, trace) = f.edge.forward(x.view(), true).unwrap();
        let e = route_cost(Route::Edge, &f.edge, trace.as_ref(), f.cloud.mlp(), 6, &c).unwrap();
        let u = route_cost(Route::Cloud, &f.edge, trace.as_ref(), f.cloud.mlp(), 6, &c).unwrap();
        assert!(u.total_energy_mj() > e.total_energy_mj());
        assert!(u.total_latency_ms() > e.total_latency_ms());
    }
}

#[test]
fn buffer_holds_cloud_labels_of_uploads() {
    let f = fixture(5);
    let c = CostConstants::default();
    let mut buffer = AmbiguityBuffer::new(None);
    let report = run_execution_stage(&f.stream, &f.edge, &f.cloud, &FilterConfig::new(0.0).unwrap(), &mut buffer, &c).unwrap();
    let uploaded: Vec<_> = report.outcomes.iter().filter(|o| o.route == Route::Cloud).collect();
    let entries: Vec<_> = buffer.entries().collect();
    assert_eq!(entries.len(), uploaded.len());
    for (e, o) in entries.iter().zip(&uploaded) {
        assert_eq!(e.label, o.prediction);
        assert_eq!(e.cloud_logits.len(), 4);
    }
}

#[test]
fn mismatched_label_space_is_rejected() {
    let f = fixture(6);
    let small = CloudModel::new(MlpModel::new(&[6, 5, 3], 0, 0).unwrap());
    let mut buffer = AmbiguityBuffer::new(None);
    let err = run_execution_stage(&f.stream, &f.edge, &small, &FilterConfig::new(0.5).unwrap(), &mut buffer, &CostConstants::default());
    assert!(err.is_err());
}

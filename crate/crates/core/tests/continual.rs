use ecc_core::coinfer::{edge_accuracy, BufferEntry};
use ecc_core::continual::{
    run_lifecycle, setup_stage, update_stage, LifecycleParams, ModelSnapshot, TrainConfig,
};
use ecc_core::costs::CostConstants;
use ecc_core::data::{generate_blobs, make_task_stream, Dataset, TaskStream};
use ecc_core::filter::FilterConfig;
use ecc_core::losses::LossWeights;
use ecc_core::metrics::avg_accuracy;
use ecc_core::nn::{train_ann, CloudModel, FitConfig, OptimizerKind};
use ecc_core::rng::{derive_seed, purpose};
use ecc_core::snn::{LifConfig, SnnArch, SnnModel};

fn arch(dim: usize) -> SnnArch {
    SnnArch {
        input_dim: dim,
        hidden: vec![24],
        tap_layer: 0,
        lif: LifConfig {
            v_threshold: 0.25,
            ..LifConfig::default()
        },
    }
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        fit: FitConfig {
            epochs: 8,
            batch_size: 32,
            learning_rate: 0.003,
            optimizer: OptimizerKind::adam(),
        },
        update_epochs: 30,
        update_lr_scale: 1.0,
        weights: LossWeights::default(),
        seed,
    }
}

fn world(seed: u64, classes: usize, base: usize, inc: usize) -> (TaskStream, CloudModel) {
    let ds = generate_blobs(seed, classes, 10, 50, 0.3).unwrap();
    let stream = make_task_stream(&ds, base, inc, 0.3, seed).unwrap();
    let train: Vec<_> = stream
        .splits
        .iter()
        .flat_map(|t| t.train.samples().iter().cloned())
        .collect();
    let all = Dataset::new("train", 10, classes, train).unwrap();
    let mlp = train_ann(&all, &[10, 24, classes], 0, &FitConfig::default(), seed).unwrap();
    (stream, CloudModel::new(mlp))
}

fn entries_for(cloud: &CloudModel, stream: &TaskStream, task: usize) -> Vec<BufferEntry> {
    let test = &stream.splits[task - 1].test;
    let x = test.features();
    let logits = cloud.logits(x.view(), Some(&test.labels())).unwrap();
    test.samples()
        .iter()
        .zip(logits.rows())
        .map(|(s, r)| BufferEntry {
            features: s.features.clone(),
            cloud_logits: r.to_vec(),
            label: s.label,
        })
        .collect()
}

#[test]
fn zero_epoch_setup_returns_initial_model() {
    let (stream, cloud) = world(1, 6, 2, 2);
    let mut cfg = config(9);
    cfg.fit.epochs = 0;
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &cfg).unwrap();
    let fresh = SnnModel::new(&arch(10), stream.splits[0].class_ids.clone(), derive_seed(9, purpose::EDGE_INIT)).unwrap();
    assert_eq!(edge, fresh);
}

#[test]
fn setup_covers_first_task_and_learns_it() {
    let (stream, cloud) = world(2, 6, 2, 2);
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &config(2)).unwrap();
    assert_eq!(edge.classes, stream.splits[0].class_ids);
    assert!(edge_accuracy(&edge, stream.splits[0].test.samples()).unwrap() > 0.6);
}

#[test]
fn without_distillation_the_teacher_is_irrelevant() {
    let (stream, cloud) = world(3, 6, 2, 2);
    let oracle = CloudModel::perfect_oracle(cloud.mlp().clone(), 10.0);
    let mut cfg = config(3);
    cfg.weights.lambda1 = 0.0;
    cfg.weights.lambda2 = 0.0;
    let a = setup_stage(&stream.splits[0], &cloud, &arch(10), &cfg).unwrap();
    let b = setup_stage(&stream.splits[0], &oracle, &arch(10), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_buffer_update_is_a_no_op() {
    let (stream, cloud) = world(4, 6, 2, 2);
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &config(4)).unwrap();
    let snap = ModelSnapshot::take(&edge);
    let out = update_stage(&edge, &[], &snap, &stream.splits[1].class_ids, &config(4), 7).unwrap();
    assert_eq!(out, edge);
}

#[test]
fn update_expands_and_leaves_snapshot_untouched() {
    let (stream, cloud) = world(5, 6, 2, 2);
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &config(5)).unwrap();
    let snap = ModelSnapshot::take(&edge);
    let before = snap.model().clone();
    let entries = entries_for(&cloud, &stream, 2);
    let out = update_stage(&edge, &entries, &snap, &stream.splits[1].class_ids, &config(5), 7).unwrap();
    assert_eq!(snap.model(), &before);
    assert_eq!(out.num_classes(), 4);
    assert_eq!(&out.classes[..2], &edge.classes[..]);
    assert_ne!(out.encoder(), edge.encoder());
}

#[test]
fn without_old_term_the_snapshot_is_irrelevant() {
    let (stream, cloud) = world(6, 6, 2, 2);
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &config(6)).unwrap();
    let other = SnnModel::new(&arch(10), edge.classes.clone(), 123).unwrap();
    let entries = entries_for(&cloud, &stream, 2);
    let mut cfg = config(6);
    cfg.weights.lambda3 = 0.0;
    let ids = &stream.splits[1].class_ids;
    let a = update_stage(&edge, &entries, &ModelSnapshot::take(&edge), ids, &cfg, 1).unwrap();
    let b = update_stage(&edge, &entries, &ModelSnapshot::take(&other), ids, &cfg, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_buffer_labels_are_skipped() {
    let (stream, cloud) = world(7, 6, 2, 2);
    let edge = setup_stage(&stream.splits[0], &cloud, &arch(10), &config(7)).unwrap();
    // task-3 labels are outside the expanded readout, so nothing is trainable
    let entries = entries_for(&cloud, &stream, 3);
    let out = update_stage(&edge, &entries, &ModelSnapshot::take(&edge), &stream.splits[1].class_ids, &config(7), 1).unwrap();
    assert_eq!(out, edge);
}

fn params<'a>(cloud: &'a CloudModel, arch: &'a SnnArch, delta: f64, train: TrainConfig) -> LifecycleParams<'a> {
    LifecycleParams {
        cloud,
        arch,
        filter: FilterConfig::new(delta).unwrap(),
        costs: CostConstants::default(),
        train,
        buffer_capacity: None,
    }
}

#[test]
fn single_task_lifecycle_has_no_update() {
    let (stream, cloud) = world(8, 6, 2, 2);
    let one = TaskStream {
        splits: stream.splits[..1].to_vec(),
        ..stream
    };
    let a = arch(10);
    let report = run_lifecycle(&one, &params(&cloud, &a, 0.3, config(8))).unwrap();
    assert_eq!(report.tasks.len(), 1);
    assert_eq!(report.accuracy.tasks(), 1);
    let setup = setup_stage(&one.splits[0], &cloud, &a, &config(8)).unwrap();
    assert_eq!(report.edge, setup);
}

#[test]
fn delta_one_lifecycle_keeps_the_frozen_edge() {
    let (stream, cloud) = world(9, 6, 2, 2);
    let a = arch(10);
    let report = run_lifecycle(&stream, &params(&cloud, &a, 1.0, config(9))).unwrap();
    let setup = setup_stage(&stream.splits[0], &cloud, &a, &config(9)).unwrap();
    assert_eq!(report.edge, setup);
    for n in 1..=3 {
        for m in 1..=n {
            let frozen = edge_accuracy(&setup, stream.splits[m - 1].test.samples()).unwrap();
            assert_eq!(report.accuracy.get(n, m), Some(frozen));
        }
        assert_eq!(report.tasks[n - 1].execution.cur, 0.0);
        assert_eq!(report.tasks[n - 1].buffer_size, 0);
    }
}

#[test]
fn lifecycle_is_deterministic() {
    let (stream, cloud) = world(10, 6, 2, 2);
    let a = arch(10);
    let r1 = run_lifecycle(&stream, &params(&cloud, &a, 0.3, config(10))).unwrap();
    let r2 = run_lifecycle(&stream, &params(&cloud, &a, 0.3, config(10))).unwrap();
    assert_eq!(r1.edge, r2.edge);
    assert_eq!(r1.accuracy, r2.accuracy);
}

#[test]
fn old_knowledge_term_helps_on_two_tasks() {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..5 {
        let (stream, cloud) = world(seed, 6, 4, 2);
        let oracle = CloudModel::perfect_oracle(cloud.mlp().clone(), 10.0);
        let a = arch(10);
        let mut cfg = config(seed);
        let r1 = run_lifecycle(&stream, &params(&oracle, &a, 0.3, cfg)).unwrap();
        cfg.weights.lambda3 = 0.0;
        let r0 = run_lifecycle(&stream, &params(&oracle, &a, 0.3, cfg)).unwrap();
        with.push(avg_accuracy(&r1.accuracy, 2).unwrap());
        without.push(avg_accuracy(&r0.accuracy, 2).unwrap());
    }
    with.sort_by(f64::total_cmp);
    without.sort_by(f64::total_cmp);
    assert!(with[2] >= without[2], "{with:?} vs {without:?}");
}

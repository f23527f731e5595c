//! Labeled datasets, the synthetic blob generator, CSV I/O and class-incremental task splits.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, EccError, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    num_classes: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        num_classes: usize,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return arg_err(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                ));
            }
            if s.label >= num_classes {
                return arg_err(format!(
                    "sample {i} has label {} >= class count {num_classes}",
                    s.label
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            num_classes,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Row-major feature matrix (samples × dim).
    pub fn features(&self) -> Array2<f64> {
        features_matrix(&self.samples, self.dim)
    }

    fn with_samples(&self, name: String, samples: Vec<Sample>) -> Self {
        Self {
            name,
            dim: self.dim,
            num_classes: self.num_classes,
            samples,
        }
    }
}

pub fn features_matrix(samples: &[Sample], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((samples.len(), dim));
    for (mut row, s) in m.rows_mut().into_iter().zip(samples) {
        for (dst, &src) in row.iter_mut().zip(&s.features) {
            *dst = src;
        }
    }
    m
}

/// Isotropic Gaussian blobs around seeded class centers, clamped to the unit cube.
pub fn generate_blobs(
    seed: u64,
    classes: usize,
    dim: usize,
    n_per_class: usize,
    spread: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return arg_err("blobs need at least 2 classes");
    }
    if dim < 1 || n_per_class < 1 {
        return arg_err("blobs need dim >= 1 and n_per_class >= 1");
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return arg_err("spread must be positive and finite");
    }
    let mut rng = seeded(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let noise = Normal::new(0.0, spread).map_err(|e| EccError::Argument(e.to_string()))?;
    let mut samples = Vec::with_capacity(classes * n_per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let features = center
                .iter()
                .map(|&c| (c + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            samples.push(Sample { features, label });
        }
    }
    samples.shuffle(&mut rng);
    Dataset::new(format!("blobs-s{seed}-k{classes}-d{dim}"), dim, classes, samples)
}

/// Reads a header-free `label,f_1,...,f_D` file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut samples = Vec::new();
    let mut dim = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() < 2 {
            return Err(EccError::Parse {
                row,
                msg: "expected a label and at least one feature".into(),
            });
        }
        let width = record.len() - 1;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(EccError::Parse {
                    row,
                    msg: format!("ragged row: {width} features, expected {d}"),
                })
            }
            _ => {}
        }
        let label: usize = record[0].parse().map_err(|_| EccError::Parse {
            row,
            msg: format!("label {:?} is not a non-negative integer", &record[0]),
        })?;
        let features = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>().map_err(|_| EccError::Parse {
                    row,
                    msg: format!("feature {f:?} is not a real number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample { features, label });
    }
    let Some(dim) = dim else {
        return arg_err(format!("{} is empty", path.display()));
    };
    let num_classes = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, dim, num_classes, samples)
}

/// Writes a dataset in the same format `load_csv` reads. Reals use the shortest
/// representation that round-trips.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in dataset.samples() {
        write!(out, "{}", s.label)?;
        for f in &s.features {
            write!(out, ",{f}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TaskSplit {
    /// 1-based task index.
    pub index: usize,
    pub class_ids: Vec<usize>,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub splits: Vec<TaskSplit>,
    pub base_classes: usize,
    pub increment: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.splits.iter().map(|s| s.class_ids.len()).sum()
    }
}

/// Partitions a dataset into a "B-u, Inc-v" class-incremental stream.
///
/// `base == 0` divides all classes equally into tasks of `increment` classes.
pub fn make_task_stream(
    dataset: &Dataset,
    base: usize,
    increment: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<TaskStream> {
    let k = dataset.num_classes();
    if increment < 1 {
        return arg_err("increment class count must be >= 1");
    }
    if base + increment > k {
        return arg_err(format!("u + v = {} exceeds class count {k}", base + increment));
    }
    if !(k - base).is_multiple_of(increment) {
        return arg_err(format!(
            "{} remaining classes are not divisible by increment {increment}",
            k - base
        ));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return arg_err("test_fraction must lie in (0, 1)");
    }
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut rest = &order[..];
    if base > 0 {
        groups.push(rest[..base].to_vec());
        rest = &rest[base..];
    }
    groups.extend(rest.chunks(increment).map(<[usize]>::to_vec));

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }

    let mut splits = Vec::with_capacity(groups.len());
    for (t, class_ids) in groups.into_iter().enumerate() {
        let mut test_idx = BTreeSet::new();
        let mut train_idx = BTreeSet::new();
        for &c in &class_ids {
            let mut idx = by_class[c].clone();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let mut n_test = (test_fraction * n as f64).round() as usize;
            if n >= 2 {
                n_test = n_test.clamp(1, n - 1);
            }
            test_idx.extend(idx[..n_test].iter().copied());
            train_idx.extend(idx[n_test..].iter().copied());
        }
        let pick = |set: &BTreeSet<usize>| -> Vec<Sample> {
            set.iter().map(|&i| dataset.samples()[i].clone()).collect()
        };
        let index = t + 1;
        splits.push(TaskSplit {
            index,
            train: dataset.with_samples(format!("{}-task{index}-train", dataset.name()), pick(&train_idx)),
            test: dataset.with_samples(format!("{}-task{index}-test", dataset.name()), pick(&test_idx)),
            class_ids,
        });
    }
    Ok(TaskStream {
        splits,
        base_classes: base,
        increment,
    })
}

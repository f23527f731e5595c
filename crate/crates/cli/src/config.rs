//! TOML experiment configuration. Every key has a default; unknown keys are errors.

use std::path::{Path, PathBuf};

use ecc_core::costs::CostConstants;
use ecc_core::filter::FilterConfig;
use ecc_core::losses::LossWeights;
use ecc_core::nn::{FitConfig, OptimizerKind};
use ecc_core::snn::LifConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub edge: EdgeConfig,
    pub cloud: CloudConfig,
    pub losses: LossWeights,
    pub filter: FilterSection,
    pub train: TrainSection,
    pub costs: CostConstants,
    pub output: OutputConfig,
    pub ablate: AblateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// CSV file for `source = "csv"`, relative to the config file.
    pub path: Option<PathBuf>,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    /// Classes in the first task (u).
    pub base: usize,
    /// Classes added by each later task (v).
    pub increment: usize,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Blobs,
            path: None,
            classes: 8,
            dim: 16,
            per_class: 60,
            spread: 0.3,
            base: 4,
            increment: 2,
            test_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeConfig {
    pub hidden: Vec<usize>,
    pub tap_layer: usize,
    pub lif: LifConfig,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            tap_layer: 0,
            lif: LifConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudConfig {
    pub hidden: Vec<usize>,
    pub feature_tap: usize,
    pub perfect_oracle: bool,
    pub oracle_logit_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for CloudConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            hidden: vec![32],
            feature_tap: 0,
            perfect_oracle: false,
            oracle_logit_scale: 10.0,
            epochs: fit.epochs,
            batch_size: fit.batch_size,
            learning_rate: fit.learning_rate,
            optimizer: fit.optimizer,
        }
    }
}

impl CloudConfig {
    pub fn fit(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub delta: f64,
    /// Thresholds for the accuracy/cost frontier.
    pub deltas: Vec<f64>,
    /// Ambiguity buffer size; 0 means unbounded.
    pub buffer_capacity: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            delta: 0.3,
            deltas: Vec::new(),
            buffer_capacity: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub update_epochs: usize,
    pub update_lr_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            seed: 0,
            epochs: fit.epochs,
            batch_size: fit.batch_size,
            learning_rate: fit.learning_rate,
            optimizer: fit.optimizer,
            update_epochs: 10,
            update_lr_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Write model checkpoints next to the reports.
    pub checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    /// Number of consecutive seeds starting at `train.seed`.
    pub seeds: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { seeds: 5 }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses TOML text; errors carry a `line:column` location.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|span| {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
                    format!("{origin}:{line}:{col}")
                })
                .unwrap_or_else(|| origin.to_string());
            invalid(format!("{location}: {}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves a relative data path against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: cannot read config: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.data.path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let core = |r: ecc_core::Result<()>, section: &str| r.map_err(|e| invalid(format!("[{section}] {e}")));
        let d = &self.data;
        if d.source == DataSource::Csv && d.path.is_none() {
            return Err(invalid("[data] source = \"csv\" needs a path"));
        }
        if d.source == DataSource::Blobs && (d.classes < 2 || d.dim == 0 || d.per_class < 2 || !(d.spread > 0.0)) {
            return Err(invalid("[data] blobs need classes >= 2, dim >= 1, per_class >= 2 and spread > 0"));
        }
        if d.increment == 0 {
            return Err(invalid("[data] increment must be >= 1"));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(invalid("[data] test_fraction must lie in (0, 1)"));
        }
        if self.edge.hidden.is_empty() || self.edge.hidden.contains(&0) {
            return Err(invalid("[edge] hidden must list at least one positive layer width"));
        }
        if self.edge.tap_layer >= self.edge.hidden.len() {
            return Err(invalid("[edge] tap_layer must index a hidden layer"));
        }
        core(self.edge.lif.validate(), "edge.lif")?;
        if self.cloud.hidden.is_empty() || self.cloud.hidden.contains(&0) {
            return Err(invalid("[cloud] hidden must list at least one positive layer width"));
        }
        if self.cloud.feature_tap >= self.cloud.hidden.len() {
            return Err(invalid("[cloud] feature_tap must index a hidden layer"));
        }
        if !(self.cloud.oracle_logit_scale > 0.0 && self.cloud.oracle_logit_scale.is_finite()) {
            return Err(invalid("[cloud] oracle_logit_scale must be positive"));
        }
        core(self.cloud.fit().validate(), "cloud")?;
        core(self.losses.validate(), "losses")?;
        for &delta in std::iter::once(&self.filter.delta).chain(&self.filter.deltas) {
            core(FilterConfig::new(delta).map(|_| ()), "filter")?;
        }
        core(self.train_config(self.train.seed).validate(), "train")?;
        core(self.costs.validate(), "costs")?;
        if self.ablate.seeds == 0 {
            return Err(invalid("[ablate] seeds must be >= 1"));
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> ecc_core::continual::TrainConfig {
        ecc_core::continual::TrainConfig {
            fit: FitConfig {
                epochs: self.train.epochs,
                batch_size: self.train.batch_size,
                learning_rate: self.train.learning_rate,
                optimizer: self.train.optimizer,
            },
            update_epochs: self.train.update_epochs,
            update_lr_scale: self.train.update_lr_scale,
            weights: self.losses,
            seed,
        }
    }

    pub fn buffer_capacity(&self) -> Option<usize> {
        (self.filter.buffer_capacity > 0).then_some(self.filter.buffer_capacity)
    }
}

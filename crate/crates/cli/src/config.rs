//! Experiment configuration: JSON file, command-line overrides, defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swag_core::nn::{Activation, ModelSpec, TrainConfig};
use swag_core::posterior::SamplingConfig;
use swag_core::trajectory::DeviationMode;
use swag_core::{Error, Result, DEFAULT_RANK_CAP};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "SWAG_OUT_DIR";

/// Hidden layers only; input width and class count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> Result<ModelSpec> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend(&self.hidden);
        sizes.push(num_classes);
        ModelSpec::new(sizes, self.activation)
    }
}

/// One experiment: a train/test pair evaluated under every seed.
///
/// `training.seed` and `sampling.seed` are replaced by the run seed for each
/// entry of `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub sampling: SamplingConfig,
    pub rank_cap: usize,
    pub deviation_mode: DeviationMode,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: PathBuf::new(),
            test: PathBuf::new(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            rank_cap: DEFAULT_RANK_CAP,
            deviation_mode: DeviationMode::default(),
            seeds: vec![0, 1, 2, 3, 4],
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.as_os_str().is_empty() || self.test.as_os_str().is_empty() {
            return Err(Error::Config("both a train and a test dataset are required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(Error::Config(format!("duplicate seeds in {:?}", self.seeds)));
        }
        if self.rank_cap < 2 {
            return Err(Error::Config(format!("rank_cap must be at least 2, got {}", self.rank_cap)));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden layer of width 0".into()));
        }
        self.training.validate()?;
        if self.training.snapshot_count() < 2 {
            return Err(Error::Config(format!(
                "{} epochs starting averaging at epoch {} collect fewer than 2 snapshots",
                self.training.epochs, self.training.swa_start_epoch
            )));
        }
        self.sampling.validate()
    }

    /// Fails if a dataset path is missing.
    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.train, &self.test] {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    /// `out`, or a hash-named directory under `$SWAG_OUT_DIR` (else `runs/`).
    pub fn out_dir(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("run-{}", &self.hash()[..12]))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub rank_cap: Option<usize>,
    pub num_samples: Option<usize>,
    pub scale: Option<f64>,
    pub diag_only: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub swa_start_epoch: Option<usize>,
    pub l2: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub deviation_mode: Option<DeviationMode>,
    pub out: Option<PathBuf>,
}

impl RunOverrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut cfg.train, self.train);
        set(&mut cfg.test, self.test);
        set(&mut cfg.seeds, self.seeds);
        set(&mut cfg.rank_cap, self.rank_cap);
        set(&mut cfg.sampling.num_samples, self.num_samples);
        set(&mut cfg.sampling.scale, self.scale);
        set(&mut cfg.sampling.diag_only, self.diag_only);
        set(&mut cfg.training.epochs, self.epochs);
        set(&mut cfg.training.batch_size, self.batch_size);
        set(&mut cfg.training.learning_rate, self.learning_rate);
        set(&mut cfg.training.swa_start_epoch, self.swa_start_epoch);
        set(&mut cfg.training.l2, self.l2);
        set(&mut cfg.model.hidden, self.hidden);
        set(&mut cfg.model.activation, self.activation);
        set(&mut cfg.deviation_mode, self.deviation_mode);
        if self.out.is_some() {
            cfg.out = self.out;
        }
    }
}

/// Defaults, then the optional file, then overrides.
pub fn resolve(file: Option<&Path>, overrides: RunOverrides) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

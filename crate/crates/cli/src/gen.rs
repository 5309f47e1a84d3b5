//! Synthetic dataset generation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swag_core::data::{generate, write_dataset, write_meta, DatasetMeta, SoftLabelExample, SynthConfig};
use swag_core::eval::{annotation_distribution, entropy};
use swag_core::rng::mix_seed;
use swag_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub family: String,
    /// Training split; the test split reuses it with a derived seed.
    pub synth: SynthConfig,
    pub num_test: usize,
    /// Offset added to every feature coordinate of an extra shifted test set.
    pub domain_shift: Option<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            family: "synth".into(),
            synth: SynthConfig::default(),
            num_test: 600,
            domain_shift: None,
        }
    }
}

impl GenConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        if self.family.is_empty() || self.family.contains('/') {
            return Err(Error::Config(format!("bad dataset family {:?}", self.family)));
        }
        if self.num_test == 0 {
            return Err(Error::Config("num_test must be positive".into()));
        }
        if let Some(s) = self.domain_shift {
            if !s.is_finite() {
                return Err(Error::Config("domain shift must be finite".into()));
            }
        }
        self.synth.validate()
    }

    fn test_config(&self) -> SynthConfig {
        SynthConfig {
            num_examples: self.num_test,
            seed: mix_seed(self.synth.seed, 1),
            ..self.synth.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub path: PathBuf,
    pub id: String,
    pub num_examples: usize,
    /// Fraction of examples per gold class.
    pub class_balance: Vec<f64>,
    pub mean_annotation_entropy: f64,
    pub unanimous_fraction: f64,
}

impl DatasetStats {
    pub fn compute(path: &Path, id: &str, data: &[SoftLabelExample]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data(format!("{}: empty dataset", path.display())));
        }
        let n = data.len() as f64;
        let mut balance = vec![0.0; data[0].num_classes()];
        let mut ent = 0.0;
        for ex in data {
            balance[ex.gold] += 1.0 / n;
            ent += entropy(&annotation_distribution(ex)?) / n;
        }
        Ok(Self {
            path: path.to_path_buf(),
            id: id.to_string(),
            num_examples: data.len(),
            class_balance: balance,
            mean_annotation_entropy: ent,
            unanimous_fraction: data.iter().filter(|e| e.is_unanimous()).count() as f64 / n,
        })
    }

    pub fn line(&self) -> String {
        let balance: Vec<String> = self.class_balance.iter().map(|b| format!("{b:.3}")).collect();
        format!(
            "{}: {} examples, class balance [{}], mean annotation entropy {:.4} nats, unanimous {:.1}%",
            self.id,
            self.num_examples,
            balance.join(", "),
            self.mean_annotation_entropy,
            100.0 * self.unanimous_fraction
        )
    }
}

/// Writes `train.jsonl`, `test.jsonl` and optionally `test-shifted.jsonl`
/// into `out_dir`, each with a `.meta.json` sidecar.
pub fn cmd_gen(cfg: &GenConfig, out_dir: &Path) -> Result<Vec<DatasetStats>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Config(format!("{}: {e}", out_dir.display())))?;

    let mut jobs = vec![
        ("train.jsonl", cfg.family.clone(), "train", cfg.synth.clone()),
        ("test.jsonl", cfg.family.clone(), "test", cfg.test_config()),
    ];
    if let Some(shift) = cfg.domain_shift {
        // Same draws as the plain test split, moved by the offset.
        let synth = SynthConfig {
            domain_shift: Some(vec![shift; cfg.synth.feature_dim]),
            ..cfg.test_config()
        };
        jobs.push(("test-shifted.jsonl", format!("{}-shifted", cfg.family), "test", synth));
    }

    let mut stats = Vec::new();
    for (name, family, split, synth) in jobs {
        let data = generate(&synth)?;
        let path = out_dir.join(name);
        write_dataset(&path, &data)?;
        let meta = DatasetMeta {
            family,
            split: split.into(),
            num_examples: data.len(),
            num_classes: synth.num_classes,
            feature_dim: synth.feature_dim,
            synth: Some(synth),
        };
        write_meta(&path, &meta)?;
        stats.push(DatasetStats::compute(&path, &meta.id(), &data)?);
    }
    Ok(stats)
}

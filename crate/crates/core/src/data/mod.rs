//! Soft-label classification data: synthetic generation with controllable
//! annotator disagreement, SNLI-style annotation ingestion and external
//! feature files.

mod annotations;
mod features;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};

pub use annotations::{
    load_annotations, nli_label_map, parse_annotations, AnnotationLoad, AnnotationRecord, LabelMap,
};
pub use features::{
    attach_features, attach_features_from_file, manifest_path, FeatureManifest, FeatureMatrix,
    FEATURE_FORMAT_VERSION, FEATURE_MAGIC,
};
pub use synth::{bayes_posterior, class_means, generate, SynthConfig};

/// Class order used in every report and file: entailment, neutral, contradiction.
pub const NLI_CLASSES: [&str; 3] = ["entailment", "neutral", "contradiction"];

/// Display names for `classes` classes.
pub fn class_names(classes: usize) -> Vec<String> {
    if classes == NLI_CLASSES.len() {
        NLI_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..classes).map(|c| format!("class{c}")).collect()
    }
}

/// Majority class with ties broken toward the lowest index; `None` when no
/// votes were cast.
pub fn majority_label(counts: &[u32]) -> Option<usize> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    counts.iter().position(|&c| c == max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelExample {
    pub example_id: String,
    #[serde(default)]
    pub features: Vec<f64>,
    /// Annotator votes per class.
    pub annotations: Vec<u32>,
    /// Majority-vote class.
    pub gold: usize,
}

impl SoftLabelExample {
    /// Builds an example and derives `gold` from the votes.
    pub fn new(example_id: impl Into<String>, features: Vec<f64>, annotations: Vec<u32>) -> Result<Self> {
        let example_id = example_id.into();
        let gold = majority_label(&annotations)
            .ok_or_else(|| Error::Data(format!("example {example_id}: no annotator votes")))?;
        Ok(Self {
            example_id,
            features,
            annotations,
            gold,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.annotations.len()
    }

    pub fn total_votes(&self) -> u32 {
        self.annotations.iter().sum()
    }

    pub fn is_unanimous(&self) -> bool {
        self.annotations.iter().filter(|&&c| c > 0).count() == 1
    }

    fn validate(&self) -> Result<()> {
        match majority_label(&self.annotations) {
            None => Err(Error::Data(format!(
                "example {}: no annotator votes",
                self.example_id
            ))),
            Some(g) if g != self.gold => Err(Error::Data(format!(
                "example {}: gold {} is not the majority class {g}",
                self.example_id, self.gold
            ))),
            Some(_) => {
                crate::trajectory::check_finite(&self.features)?;
                Ok(())
            }
        }
    }
}

/// One JSON object per line, features inline.
pub fn dataset_to_jsonl(examples: &[SoftLabelExample]) -> Result<String> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses [`dataset_to_jsonl`] output, checking the majority invariant.
pub fn dataset_from_jsonl(text: &str) -> Result<Vec<SoftLabelExample>> {
    let mut examples = Vec::new();
    let mut classes = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let ex: SoftLabelExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        ex.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match classes {
            None => classes = Some(ex.num_classes()),
            Some(c) if c != ex.num_classes() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("{} classes, previous records have {c}", ex.num_classes()),
                })
            }
            Some(_) => {}
        }
        examples.push(ex);
    }
    Ok(examples)
}

pub fn write_dataset(path: &Path, examples: &[SoftLabelExample]) -> Result<()> {
    write_atomic(path, dataset_to_jsonl(examples)?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<SoftLabelExample>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("{}: not UTF-8: {e}", path.display())))?;
    dataset_from_jsonl(&text)
}

/// Sidecar describing a dataset file's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Distribution the data comes from; differing families mark a
    /// cross-dataset evaluation.
    pub family: String,
    pub split: String,
    pub num_examples: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl DatasetMeta {
    pub fn id(&self) -> String {
        format!("{}/{}", self.family, self.split)
    }
}

/// `data/train.jsonl` -> `data/train.jsonl.meta.json`
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(meta)?;
    json.push(b'\n');
    write_atomic(&meta_path(path), &json)
}

/// Reads the sidecar if one exists.
pub fn read_meta(path: &Path) -> Result<Option<DatasetMeta>> {
    let mp = meta_path(path);
    if !mp.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&read_file(&mp)?)?))
}

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SoftLabelExample, NLI_CLASSES};
use crate::error::{Error, Result};
use crate::io::read_file;

/// Label string -> class index.
pub type LabelMap = HashMap<String, usize>;

/// Gold label marking "no majority" in SNLI/MNLI distributions.
const NO_MAJORITY: &str = "-";

/// `entailment`, `neutral`, `contradiction` in the global class order.
pub fn nli_label_map() -> LabelMap {
    NLI_CLASSES
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), i))
        .collect()
}

/// One line of an annotation JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(alias = "pairID")]
    pub example_id: String,
    pub gold_label: String,
    /// May be absent for single-label corpora; the gold label then counts
    /// as the only vote.
    #[serde(default)]
    pub annotator_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLoad {
    /// Examples with empty feature vectors.
    pub examples: Vec<SoftLabelExample>,
    /// Ids of records skipped for having no majority gold label.
    pub skipped: Vec<String>,
}

fn class_of(label_map: &LabelMap, record: &str, label: &str) -> Result<usize> {
    label_map
        .get(label)
        .copied()
        .ok_or_else(|| Error::UnknownLabel {
            record: record.to_string(),
            label: label.to_string(),
        })
}

pub fn parse_annotations(text: &str, label_map: &LabelMap) -> Result<AnnotationLoad> {
    let classes = label_map.values().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::Config("label map needs at least 2 classes".into()));
    }
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.gold_label == NO_MAJORITY {
            skipped.push(rec.example_id);
            continue;
        }
        class_of(label_map, &rec.example_id, &rec.gold_label)?;
        let mut votes = vec![0u32; classes];
        if rec.annotator_labels.is_empty() {
            votes[class_of(label_map, &rec.example_id, &rec.gold_label)?] += 1;
        }
        for label in &rec.annotator_labels {
            votes[class_of(label_map, &rec.example_id, label)?] += 1;
        }
        examples.push(SoftLabelExample::new(rec.example_id, Vec::new(), votes)?);
    }
    Ok(AnnotationLoad { examples, skipped })
}

/// Reads line-delimited [`AnnotationRecord`]s and counts votes per class.
pub fn load_annotations(path: &Path, label_map: &LabelMap) -> Result<AnnotationLoad> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("{}: not UTF-8: {e}", path.display())))?;
    parse_annotations(&text, label_map)
}

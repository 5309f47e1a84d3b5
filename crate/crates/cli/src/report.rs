//! Re-scoring stored predictions and exporting reports.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use swag_core::data::read_dataset;
use swag_core::eval::{evaluate, EvalReport, Method, RunIds};
use swag_core::io::read_file;
use swag_core::{Error, PredictionDistribution, Result};

use crate::run::dataset_id;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    example_id: String,
    probs: Vec<f64>,
}

/// Reads `{"example_id", "probs"}` JSONL, or the per-example predictions of
/// a saved report.
pub fn load_predictions(path: &Path) -> Result<HashMap<String, PredictionDistribution>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("{}: not UTF-8: {e}", path.display())))?;
    if let Ok(report) = serde_json::from_str::<EvalReport>(&text) {
        return report
            .per_example
            .into_iter()
            .map(|r| Ok((r.example_id, PredictionDistribution::new(r.predicted)?)))
            .collect();
    }
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let dist = PredictionDistribution::new(p.probs).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(p.example_id.clone(), dist).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate example id {:?}", p.example_id),
            });
        }
    }
    Ok(out)
}

/// Scores stored predictions against `data_path`; every example needs one.
pub fn cmd_eval(
    predictions: &Path,
    data_path: &Path,
    method: Method,
    train_set_id: &str,
    seed: u64,
) -> Result<EvalReport> {
    let preds = load_predictions(predictions)?;
    let data = read_dataset(data_path)?;
    let ordered = data
        .iter()
        .map(|ex| {
            preds.get(&ex.example_id).cloned().ok_or_else(|| {
                Error::Data(format!("no prediction for example {}", ex.example_id))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = RunIds {
        train_set_id: train_set_id.into(),
        test_set_id: dataset_id(data_path)?,
        seed,
    };
    evaluate(&ordered, &data, method, &ids)
}

pub fn cmd_export(report_path: &Path) -> Result<String> {
    EvalReport::load(report_path)?.to_csv()
}

//! Per-example view of a report: human votes next to the model's sampled
//! predictions.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use swag_core::data::class_names;
use swag_core::eval::EvalReport;
use swag_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectRow {
    pub example_id: String,
    pub gold: usize,
    pub predicted_class: usize,
    pub annotation: Vec<f64>,
    /// One distribution per posterior sample; a single entry for point
    /// predictions.
    pub members: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub cross_entropy: f64,
}

const LISTED_IDS: usize = 20;

pub fn cmd_inspect(report_path: &Path, example_ids: &[String]) -> Result<Vec<InspectRow>> {
    let report = EvalReport::load(report_path)?;
    let missing: Vec<&str> = example_ids
        .iter()
        .filter(|id| report.find(id).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        let available: Vec<&str> = report
            .per_example
            .iter()
            .take(LISTED_IDS)
            .map(|r| r.example_id.as_str())
            .collect();
        let more = report.per_example.len().saturating_sub(LISTED_IDS);
        let tail = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(Error::Data(format!(
            "unknown example id(s) {}; available: {}{tail}",
            missing.join(", "),
            available.join(", ")
        )));
    }
    Ok(example_ids
        .iter()
        .map(|id| {
            let r = report.find(id).expect("checked above");
            InspectRow {
                example_id: r.example_id.clone(),
                gold: r.gold,
                predicted_class: r.predicted_class(),
                annotation: r.annotation.clone(),
                members: r.members.clone().unwrap_or_else(|| vec![r.predicted.clone()]),
                mean: r.predicted.clone(),
                cross_entropy: r.cross_entropy,
            }
        })
        .collect())
}

fn fmt_dist(p: &[f64]) -> String {
    let cells: Vec<String> = p.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", cells.join(" "))
}

pub fn render_inspect_text(rows: &[InspectRow]) -> String {
    let mut s = String::new();
    for row in rows {
        let names = class_names(row.annotation.len());
        let _ = writeln!(
            s,
            "{}  gold={}  predicted={}  CE={:.4}",
            row.example_id, names[row.gold], names[row.predicted_class], row.cross_entropy
        );
        let _ = writeln!(s, "  classes     {}", names.join(" / "));
        let _ = writeln!(s, "  annotation  {}", fmt_dist(&row.annotation));
        for (i, m) in row.members.iter().enumerate() {
            let _ = writeln!(s, "  sample {i:<4} {}", fmt_dist(m));
        }
        let _ = writeln!(s, "  mean        {}", fmt_dist(&row.mean));
    }
    s
}

/// One CSV line per (example, series), series being `annotation`, `mean`
/// or `sample<i>`.
pub fn render_inspect_csv(rows: &[InspectRow]) -> Result<String> {
    let classes = rows.first().map_or(0, |r| r.annotation.len());
    let mut w = csv_writer();
    let mut header = vec!["example_id".to_string(), "series".into(), "cross_entropy".into()];
    header.extend(class_names(classes.max(1)).into_iter().take(classes));
    w.write_record(&header)?;
    for row in rows {
        let ce = format!("{}", row.cross_entropy);
        let mut emit = |series: String, p: &[f64]| -> Result<()> {
            let mut rec = vec![row.example_id.clone(), series, ce.clone()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(Error::from)
        };
        emit("annotation".into(), &row.annotation)?;
        emit("mean".into(), &row.mean)?;
        for (i, m) in row.members.iter().enumerate() {
            emit(format!("sample{i}"), m)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

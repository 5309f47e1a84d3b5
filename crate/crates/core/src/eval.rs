//! Hard-label accuracy, soft-label cross-entropy against annotation
//! distributions, and multi-seed comparison of base / SWA / SWAG.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{class_names, SoftLabelExample};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::posterior::PredictionDistribution;

/// Floor applied to predicted probabilities inside the logarithm.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Base,
    Swa,
    Swag,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Base, Method::Swa, Method::Swag];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Swa => "swa",
            Method::Swag => "swag",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Swa => "SWA",
            Method::Swag => "SWAG",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Method::Base),
            "swa" => Ok(Method::Swa),
            "swag" => Ok(Method::Swag),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Annotator votes normalized to a probability vector.
pub fn annotation_distribution(ex: &SoftLabelExample) -> Result<PredictionDistribution> {
    let total = ex.total_votes();
    if total == 0 {
        return Err(Error::Data(format!(
            "example {}: no annotator votes",
            ex.example_id
        )));
    }
    let total = f64::from(total);
    PredictionDistribution::new(
        ex.annotations
            .iter()
            .map(|&c| f64::from(c) / total)
            .collect(),
    )
}

/// `−Σ_c annot[c] · ln(max(pred[c], 1e−12))`, in nats. Classes with zero
/// annotation mass contribute nothing.
///
/// Panics if the distributions have different class counts.
pub fn cross_entropy(pred: &PredictionDistribution, annot: &PredictionDistribution) -> f64 {
    assert_eq!(
        pred.num_classes(),
        annot.num_classes(),
        "cross-entropy of distributions over different class counts"
    );
    -annot
        .probs()
        .iter()
        .zip(pred.probs())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &p)| a * p.max(CE_FLOOR).ln())
        .sum::<f64>()
}

/// Shannon entropy in nats.
pub fn entropy(dist: &PredictionDistribution) -> f64 {
    -dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub example_id: String,
    pub gold: usize,
    pub predicted: Vec<f64>,
    pub annotation: Vec<f64>,
    pub cross_entropy: f64,
    /// Per-sample predictions of an ensemble, when retained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<Vec<f64>>>,
}

impl ExampleRecord {
    /// Argmax of the prediction, ties to the lowest class.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.predicted.iter().enumerate().skip(1) {
            if p > self.predicted[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_class() == self.gold
    }
}

/// Which run produced a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIds {
    pub train_set_id: String,
    pub test_set_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub train_set_id: String,
    pub test_set_id: String,
    pub seed: u64,
    pub num_examples: usize,
    pub accuracy: f64,
    pub mean_cross_entropy: f64,
    pub per_example: Vec<ExampleRecord>,
}

fn header_stats(records: &[ExampleRecord]) -> (f64, f64) {
    let n = records.len() as f64;
    let correct = records.iter().filter(|r| r.is_correct()).count() as f64;
    let ce: f64 = records.iter().map(|r| r.cross_entropy).sum();
    (correct / n, ce / n)
}

impl EvalReport {
    /// Recomputes accuracy and mean cross-entropy from the per-example
    /// records and compares them bitwise with the header fields.
    pub fn is_consistent(&self) -> bool {
        if self.per_example.len() != self.num_examples || self.per_example.is_empty() {
            return false;
        }
        let (acc, ce) = header_stats(&self.per_example);
        acc.to_bits() == self.accuracy.to_bits() && ce.to_bits() == self.mean_cross_entropy.to_bits()
    }

    /// Stores per-sample ensemble predictions, `members[i][n]` for example `i`.
    pub fn attach_members(&mut self, members: &[Vec<PredictionDistribution>]) -> Result<()> {
        if members.len() != self.per_example.len() {
            return Err(Error::DimensionMismatch {
                what: "ensemble member rows",
                expected: self.per_example.len(),
                found: members.len(),
            });
        }
        for (rec, m) in self.per_example.iter_mut().zip(members) {
            rec.members = Some(m.iter().map(|d| d.probs().to_vec()).collect());
        }
        Ok(())
    }

    pub fn find(&self, example_id: &str) -> Option<&ExampleRecord> {
        self.per_example.iter().find(|r| r.example_id == example_id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_slice(&read_file(path)?)?;
        if !report.is_consistent() {
            return Err(Error::Data(format!(
                "{}: header fields disagree with per-example records",
                path.display()
            )));
        }
        Ok(report)
    }

    /// Per-example rows for plotting: annotation, prediction and (when
    /// present) every ensemble member's prediction.
    pub fn to_csv(&self) -> Result<String> {
        let classes = self.per_example.first().map_or(0, |r| r.annotation.len());
        let names = class_names(classes);
        let members = self
            .per_example
            .iter()
            .filter_map(|r| r.members.as_ref().map(Vec::len))
            .max()
            .unwrap_or(0);
        let mut header = vec![
            "example_id".to_string(),
            "gold".to_string(),
            "predicted".to_string(),
            "correct".to_string(),
            "cross_entropy".to_string(),
        ];
        header.extend(names.iter().map(|c| format!("annot_{c}")));
        header.extend(names.iter().map(|c| format!("pred_{c}")));
        for n in 0..members {
            header.extend(names.iter().map(|c| format!("sample{n}_{c}")));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &self.per_example {
            let mut row = vec![
                r.example_id.clone(),
                names[r.gold].clone(),
                names[r.predicted_class()].clone(),
                r.is_correct().to_string(),
                r.cross_entropy.to_string(),
            ];
            row.extend(r.annotation.iter().map(f64::to_string));
            row.extend(r.predicted.iter().map(f64::to_string));
            for n in 0..members {
                match r.members.as_ref().and_then(|m| m.get(n)) {
                    Some(p) => row.extend(p.iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), classes)),
                }
            }
            w.write_record(&row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("csv flush: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Scores `preds[i]` against `data[i]`.
pub fn evaluate(
    preds: &[PredictionDistribution],
    data: &[SoftLabelExample],
    method: Method,
    ids: &RunIds,
) -> Result<EvalReport> {
    if preds.len() != data.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction batch",
            expected: data.len(),
            found: preds.len(),
        });
    }
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty test set".into()));
    }
    let per_example = preds
        .iter()
        .zip(data)
        .map(|(pred, ex)| {
            let annot = annotation_distribution(ex)?;
            if pred.num_classes() != annot.num_classes() {
                return Err(Error::DimensionMismatch {
                    what: "prediction classes",
                    expected: annot.num_classes(),
                    found: pred.num_classes(),
                });
            }
            Ok(ExampleRecord {
                example_id: ex.example_id.clone(),
                gold: ex.gold,
                predicted: pred.probs().to_vec(),
                cross_entropy: cross_entropy(pred, &annot),
                annotation: annot.into(),
                members: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (accuracy, mean_cross_entropy) = header_stats(&per_example);
    Ok(EvalReport {
        method,
        train_set_id: ids.train_set_id.clone(),
        test_set_id: ids.test_set_id.clone(),
        seed: ids.seed,
        num_examples: per_example.len(),
        accuracy,
        mean_cross_entropy,
        per_example,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub cross_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1); 0 for a single seed.
    pub sd_accuracy: f64,
    pub mean_cross_entropy: f64,
    pub sd_cross_entropy: f64,
    /// `method − base`; positive is better.
    pub delta_accuracy: f64,
    /// `method − base`; negative is better.
    pub delta_cross_entropy: f64,
    pub per_seed: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub train_set_id: String,
    pub test_set_id: String,
    /// Train and test sets come from different dataset families.
    pub cross_dataset: bool,
    pub seeds: Vec<u64>,
    /// Only one seed: standard deviations are reported as 0.
    pub single_seed: bool,
    pub methods: Vec<MethodSummary>,
}

fn family(set_id: &str) -> &str {
    set_id.split('/').next().unwrap_or(set_id)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Aggregates reports over seeds. Every method must cover the same seeds
/// and a base method must be present.
pub fn summarize(reports: &[EvalReport]) -> Result<ComparisonSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Data("no reports to summarize".into()))?;
    let mut by_method: BTreeMap<Method, BTreeMap<u64, &EvalReport>> = BTreeMap::new();
    for r in reports {
        if r.train_set_id != first.train_set_id || r.test_set_id != first.test_set_id {
            return Err(Error::Data(format!(
                "reports mix datasets: {} -> {} and {} -> {}",
                first.train_set_id, first.test_set_id, r.train_set_id, r.test_set_id
            )));
        }
        if by_method
            .entry(r.method)
            .or_default()
            .insert(r.seed, r)
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate report for method {} seed {}",
                r.method, r.seed
            )));
        }
    }
    let base = by_method
        .get(&Method::Base)
        .ok_or_else(|| Error::Data("summary needs base-method reports".into()))?;
    let seeds: BTreeSet<u64> = base.keys().copied().collect();
    for (method, runs) in &by_method {
        let s: BTreeSet<u64> = runs.keys().copied().collect();
        if s != seeds {
            return Err(Error::Data(format!(
                "method {method} covers seeds {s:?}, base covers {seeds:?}"
            )));
        }
    }

    let stats = |runs: &BTreeMap<u64, &EvalReport>| {
        let acc: Vec<f64> = runs.values().map(|r| r.accuracy).collect();
        let ce: Vec<f64> = runs.values().map(|r| r.mean_cross_entropy).collect();
        (mean_sd(&acc), mean_sd(&ce))
    };
    let ((base_acc, _), (base_ce, _)) = stats(base);
    let methods = by_method
        .iter()
        .map(|(&method, runs)| {
            let ((mean_accuracy, sd_accuracy), (mean_cross_entropy, sd_cross_entropy)) =
                stats(runs);
            MethodSummary {
                method,
                mean_accuracy,
                sd_accuracy,
                mean_cross_entropy,
                sd_cross_entropy,
                delta_accuracy: mean_accuracy - base_acc,
                delta_cross_entropy: mean_cross_entropy - base_ce,
                per_seed: runs
                    .values()
                    .map(|r| SeedResult {
                        seed: r.seed,
                        accuracy: r.accuracy,
                        cross_entropy: r.mean_cross_entropy,
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(ComparisonSummary {
        train_set_id: first.train_set_id.clone(),
        test_set_id: first.test_set_id.clone(),
        cross_dataset: family(&first.train_set_id) != family(&first.test_set_id),
        single_seed: seeds.len() == 1,
        seeds: seeds.into_iter().collect(),
        methods,
    })
}

impl ComparisonSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn dataset_label(&self) -> String {
        if self.cross_dataset {
            format!("{} -> {}", self.train_set_id, self.test_set_id)
        } else {
            self.test_set_id.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>], right_from: usize) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let mut parts = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            if c >= right_from {
                parts.push(format!("{cell:>w$}", w = widths[c]));
            } else {
                parts.push(format!("{cell:<w$}", w = widths[c]));
            }
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in rows {
        line(&mut out, r);
    }
    out
}

fn signed(v: f64, decimals: usize) -> String {
    format!("{v:+.decimals$}")
}

/// Dataset / Method / Acc (%) / SD / Δ, one block per summary.
pub fn render_accuracy_table(summaries: &[ComparisonSummary]) -> String {
    let mut rows = Vec::new();
    for s in summaries {
        for m in &s.methods {
            rows.push(vec![
                s.dataset_label(),
                m.method.label().to_string(),
                format!("{:.2}", 100.0 * m.mean_accuracy),
                format!("{:.2}", 100.0 * m.sd_accuracy),
                if m.method == Method::Base {
                    "-".into()
                } else {
                    signed(100.0 * m.delta_accuracy, 2)
                },
            ]);
        }
    }
    render_table(&["Dataset", "Method", "Acc (%)", "SD", "Δ"], &rows, 2)
}

/// Dataset / Method / Cross Entropy / Δ, one block per summary.
pub fn render_cross_entropy_table(summaries: &[ComparisonSummary]) -> String {
    let mut rows = Vec::new();
    for s in summaries {
        for m in &s.methods {
            rows.push(vec![
                s.dataset_label(),
                m.method.label().to_string(),
                format!("{:.4}", m.mean_cross_entropy),
                if m.method == Method::Base {
                    "-".into()
                } else {
                    signed(m.delta_cross_entropy, 4)
                },
            ]);
        }
    }
    render_table(&["Dataset", "Method", "Cross Entropy", "Δ"], &rows, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> PredictionDistribution {
        PredictionDistribution::new(v.to_vec()).unwrap()
    }

    fn ex(id: &str, votes: &[u32]) -> SoftLabelExample {
        SoftLabelExample::new(id, vec![], votes.to_vec()).unwrap()
    }

    fn ids(seed: u64) -> RunIds {
        RunIds {
            train_set_id: "synth/train".into(),
            test_set_id: "synth/test".into(),
            seed,
        }
    }

    fn report(method: Method, seed: u64, acc: f64, ce: f64) -> EvalReport {
        EvalReport {
            method,
            train_set_id: "synth/train".into(),
            test_set_id: "synth/test".into(),
            seed,
            num_examples: 0,
            accuracy: acc,
            mean_cross_entropy: ce,
            per_example: vec![],
        }
    }

    #[test]
    fn annotation_distribution_examples() {
        assert_eq!(
            annotation_distribution(&ex("a", &[2, 3, 0])).unwrap().probs(),
            &[0.4, 0.6, 0.0]
        );
        assert_eq!(
            annotation_distribution(&ex("b", &[5, 0, 0])).unwrap().probs(),
            &[1.0, 0.0, 0.0]
        );
        let u = annotation_distribution(&ex("c", &[1, 1, 1])).unwrap();
        assert!(u.probs().iter().all(|&p| p == 1.0 / 3.0));
        let mut zero = ex("d", &[1, 0, 0]);
        zero.annotations = vec![0, 0, 0];
        assert!(annotation_distribution(&zero).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let u = PredictionDistribution::uniform(3).unwrap();
        let annot = dist(&[0.4, 0.6, 0.0]);
        assert!((cross_entropy(&u, &annot) - 3f64.ln()).abs() < 1e-12);
        let own = cross_entropy(&annot, &annot);
        assert!((own - 0.673_011_667_009_256_4).abs() < 1e-12);
        assert!((own - entropy(&annot)).abs() < 1e-15);
        let wrong = cross_entropy(&dist(&[0.0, 0.0, 1.0]), &dist(&[0.6, 0.4, 0.0]));
        assert!((wrong - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!((wrong - 27.631).abs() < 1e-3);
    }

    #[test]
    fn zero_annotation_classes_are_ignored() {
        let annot = dist(&[0.5, 0.5, 0.0]);
        let a = cross_entropy(&dist(&[0.3, 0.3, 0.4]), &annot);
        let b = cross_entropy(&dist(&[0.3, 0.3, 0.4]), &annot);
        assert_eq!(a, b);
        // Zero-probability prediction on an unsupported class is harmless.
        let c = cross_entropy(&dist(&[0.5, 0.5, 0.0]), &annot);
        assert!((c - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn evaluate_examples() {
        let data = vec![ex("a", &[5, 0, 0]), ex("b", &[0, 1, 4])];
        let onehot = vec![
            PredictionDistribution::one_hot(3, 0).unwrap(),
            PredictionDistribution::one_hot(3, 2).unwrap(),
        ];
        let r = evaluate(&onehot, &data, Method::Base, &ids(1)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.is_consistent());

        let half = vec![
            PredictionDistribution::one_hot(3, 0).unwrap(),
            PredictionDistribution::one_hot(3, 1).unwrap(),
        ];
        assert_eq!(evaluate(&half, &data, Method::Base, &ids(1)).unwrap().accuracy, 0.5);

        let annots: Vec<_> = data.iter().map(|e| annotation_distribution(e).unwrap()).collect();
        let r = evaluate(&annots, &data, Method::Swag, &ids(1)).unwrap();
        let mean_h = annots.iter().map(entropy).sum::<f64>() / 2.0;
        assert!((r.mean_cross_entropy - mean_h).abs() < 1e-15);

        assert!(evaluate(&half[..1], &data, Method::Base, &ids(1)).is_err());
    }

    #[test]
    fn summary_mean_and_sd() {
        let reports = vec![
            report(Method::Base, 1, 0.90, 0.8),
            report(Method::Base, 2, 0.92, 0.7),
            report(Method::Swa, 1, 0.90, 0.8),
            report(Method::Swa, 2, 0.92, 0.7),
        ];
        let s = summarize(&reports).unwrap();
        let base = s.method(Method::Base).unwrap();
        assert!((base.mean_accuracy - 0.91).abs() < 1e-12);
        assert!((base.sd_accuracy - 0.014_142_135_623_730_963).abs() < 1e-12);
        let swa = s.method(Method::Swa).unwrap();
        assert_eq!(swa.delta_accuracy, 0.0);
        assert_eq!(swa.delta_cross_entropy, 0.0);
        assert!(!s.single_seed);
        assert!(!s.cross_dataset);
    }

    #[test]
    fn summary_single_seed_and_errors() {
        let s = summarize(&[report(Method::Base, 3, 0.5, 1.0)]).unwrap();
        assert!(s.single_seed);
        assert_eq!(s.method(Method::Base).unwrap().sd_accuracy, 0.0);

        let mismatched = vec![
            report(Method::Base, 1, 0.9, 0.8),
            report(Method::Swa, 2, 0.9, 0.8),
        ];
        assert!(summarize(&mismatched).is_err());
        assert!(summarize(&[report(Method::Swa, 1, 0.9, 0.8)]).is_err());
        assert!(summarize(&[report(Method::Base, 1, 0.9, 0.8), report(Method::Base, 1, 0.9, 0.8)]).is_err());
    }

    #[test]
    fn cross_dataset_flag_and_tables() {
        let mut a = report(Method::Base, 1, 0.9, 0.8);
        a.test_set_id = "synth-shift/test".into();
        let mut b = a.clone();
        b.method = Method::Swag;
        b.accuracy = 0.95;
        b.mean_cross_entropy = 0.7;
        let s = summarize(&[a, b]).unwrap();
        assert!(s.cross_dataset);
        let acc = render_accuracy_table(std::slice::from_ref(&s));
        assert!(acc.contains("synth/train -> synth-shift/test"));
        assert!(acc.contains("+5.00"));
        assert!(acc.contains("SWAG"));
        let ce = render_cross_entropy_table(&[s]);
        assert!(ce.contains("-0.1000"));
        let widths: BTreeSet<usize> = ce.lines().map(|l| l.chars().count()).collect();
        assert!(widths.len() <= 3, "{ce}");
    }

    #[test]
    fn csv_export_includes_members() {
        let data = vec![ex("a,1", &[2, 3, 0])];
        let members = vec![vec![dist(&[0.2, 0.8, 0.0]), dist(&[0.6, 0.4, 0.0])]];
        let mean = PredictionDistribution::mean_of(&members[0]).unwrap();
        let mut r = evaluate(&[mean], &data, Method::Swag, &ids(0)).unwrap();
        r.attach_members(&members).unwrap();
        let csv = r.to_csv().unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.contains("sample1_contradiction"));
        assert!(lines.next().unwrap().starts_with("\"a,1\",neutral,neutral,true"));
    }
}

//! Label-quality counters, downstream accuracy, and report output.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::head::{accuracy, train_head, LinearHead, TrainConfig};
use crate::io::write_file;
use crate::relabel::{ScoredSample, SweepTable};

/// Quality of a refined label set measured against ground truth.
///
/// With `noisy` the labels before refinement:
/// * `corrected`: noisy was wrong, refined equals truth
/// * `corrupted`: noisy equalled truth, refined does not
/// * `wrong_to_wrong`: noisy was wrong, refined is a different wrong class
/// * `unchanged_wrong`: noisy was wrong and refinement kept it
///
/// `changed = corrected + corrupted + wrong_to_wrong` always holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelReport {
    pub total: usize,
    pub changed: usize,
    pub corrected: usize,
    pub corrupted: usize,
    pub wrong_to_wrong: usize,
    pub unchanged_wrong: usize,
    pub label_accuracy_before: f64,
    pub label_accuracy_after: f64,
    /// `confusion[truth][refined]`.
    pub confusion: Vec<Vec<usize>>,
}

impl RelabelReport {
    pub fn wrong_after(&self) -> usize {
        self.unchanged_wrong + self.corrupted + self.wrong_to_wrong
    }
}

pub fn label_metrics(refined: &LabelSet, noisy: &LabelSet, truth: &LabelSet) -> Result<RelabelReport> {
    let m = truth.len();
    for (what, other) in [("refined vs truth labels", refined), ("noisy vs truth labels", noisy)] {
        if other.len() != m {
            return Err(Error::CardinalityMismatch { what, left: other.len(), right: m });
        }
        if other.num_classes() != truth.num_classes() {
            return Err(Error::DimensionMismatch { expected: truth.num_classes(), found: other.num_classes() });
        }
    }
    let c = truth.num_classes();
    let mut confusion = vec![vec![0usize; c]; c];
    let (mut changed, mut corrected, mut corrupted, mut wrong_to_wrong, mut unchanged_wrong) = (0, 0, 0, 0, 0);
    let mut right_before = 0usize;
    for ((&r, &n), &t) in refined.labels().iter().zip(noisy.labels()).zip(truth.labels()) {
        confusion[t][r] += 1;
        if n == t {
            right_before += 1;
        }
        if r != n {
            changed += 1;
            if n == t {
                corrupted += 1;
            } else if r == t {
                corrected += 1;
            } else {
                wrong_to_wrong += 1;
            }
        } else if n != t {
            unchanged_wrong += 1;
        }
    }
    let wrong_after = unchanged_wrong + corrupted + wrong_to_wrong;
    Ok(RelabelReport {
        total: m,
        changed,
        corrected,
        corrupted,
        wrong_to_wrong,
        unchanged_wrong,
        label_accuracy_before: right_before as f64 / m as f64,
        label_accuracy_after: 1.0 - wrong_after as f64 / m as f64,
        confusion,
    })
}

/// Trains a head on `train` (warm-started and with the fine-tuning schedule
/// when `warm_start` is given) and returns its top-1 accuracy on `heldout`.
pub fn downstream_eval(
    train: &Dataset,
    heldout: &Dataset,
    cfg: &TrainConfig,
    warm_start: Option<&LinearHead>,
) -> Result<f64> {
    if train.dim() != heldout.dim() {
        return Err(Error::DimensionMismatch { expected: train.dim(), found: heldout.dim() });
    }
    let cfg = match warm_start {
        Some(_) if !cfg.fine_tune => TrainConfig::fine_tuning(cfg.seed),
        _ => cfg.clone(),
    };
    let head = train_head(train, &cfg, warm_start)?;
    accuracy(&head, heldout)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// Anything that can be written as a JSON document or a flat CSV table.
pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl Report for RelabelReport {
    fn csv_header(&self) -> Vec<String> {
        [
            "total",
            "changed",
            "corrected",
            "corrupted",
            "wrong_to_wrong",
            "unchanged_wrong",
            "label_accuracy_before",
            "label_accuracy_after",
        ]
        .map(String::from)
        .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.total.to_string(),
            self.changed.to_string(),
            self.corrected.to_string(),
            self.corrupted.to_string(),
            self.wrong_to_wrong.to_string(),
            self.unchanged_wrong.to_string(),
            self.label_accuracy_before.to_string(),
            self.label_accuracy_after.to_string(),
        ]]
    }
}

impl Report for SweepTable {
    fn csv_header(&self) -> Vec<String> {
        ["alpha", "theta", "changed", "corrected", "corrupted", "label_accuracy"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.alpha.to_string(),
                    c.theta.to_string(),
                    c.changed.to_string(),
                    opt(c.corrected),
                    opt(c.corrupted),
                    opt(c.label_accuracy),
                ]
            })
            .collect()
    }
}

impl Report for [ScoredSample] {
    fn csv_header(&self) -> Vec<String> {
        ["id", "original", "candidate", "top_score", "refined", "decision", "similarity", "confidence", "score"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|s| {
                vec![
                    s.id.to_string(),
                    s.original.to_string(),
                    s.candidate.to_string(),
                    s.top_score.to_string(),
                    s.refined.to_string(),
                    serde_json::to_value(s.decision).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    joined(&s.similarity),
                    joined(&s.confidence),
                    joined(&s.score),
                ]
            })
            .collect()
    }
}

pub fn render_report<R: Report + ?Sized>(report: &R, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let rows = report.csv_rows();
            if rows.is_empty() {
                return Err(Error::Empty("report"));
            }
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(report.csv_header())?;
            for row in rows {
                writer.write_record(row)?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn emit_report<R: Report + ?Sized>(report: &R, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    write_file(path.as_ref(), render_report(report, format)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelKind;

    fn labels(v: &[usize], kind: LabelKind) -> LabelSet {
        LabelSet::from_labels(v.to_vec(), 3, kind).unwrap()
    }

    #[test]
    fn perfect_refinement() {
        let truth = labels(&[0, 1, 2, 1], LabelKind::Truth);
        let noisy = labels(&[1, 1, 0, 1], LabelKind::Noisy);
        let r = label_metrics(&truth, &noisy, &truth).unwrap();
        assert_eq!(r.label_accuracy_after, 1.0);
        assert_eq!(r.corrupted, 0);
        assert_eq!(r.corrected, 2);
    }

    #[test]
    fn no_refinement() {
        let truth = labels(&[0, 1, 2, 1], LabelKind::Truth);
        let noisy = labels(&[1, 1, 0, 1], LabelKind::Noisy);
        let r = label_metrics(&noisy, &noisy, &truth).unwrap();
        assert_eq!(r.changed, 0);
        assert_eq!(r.label_accuracy_before, r.label_accuracy_after);
    }

    #[test]
    fn hand_counted_instance() {
        // noisy wrong on {0,1,2}; refinement fixes {0,1}, breaks {5}.
        let truth = labels(&[0, 1, 2, 0, 1, 2], LabelKind::Truth);
        let noisy = labels(&[1, 2, 0, 0, 1, 2], LabelKind::Noisy);
        let refined = labels(&[0, 1, 0, 0, 1, 0], LabelKind::Refined);
        let r = label_metrics(&refined, &noisy, &truth).unwrap();
        assert_eq!((r.changed, r.corrected, r.corrupted), (3, 2, 1));
        assert_eq!(r.unchanged_wrong, 1);
        assert!((r.label_accuracy_before - 3.0 / 6.0).abs() < 1e-15);
        assert!((r.label_accuracy_after - (r.label_accuracy_before + 1.0 / 6.0)).abs() < 1e-12);
        let trace: usize = (0..3).map(|c| r.confusion[c][c]).sum();
        assert_eq!(trace, 6 - r.wrong_after());
    }

    #[test]
    fn length_mismatch() {
        let truth = labels(&[0, 1, 2], LabelKind::Truth);
        let short = labels(&[0, 1], LabelKind::Noisy);
        assert!(label_metrics(&short, &truth, &truth).is_err());
    }

    #[test]
    fn json_round_trip() {
        let truth = labels(&[0, 1, 2, 0], LabelKind::Truth);
        let noisy = labels(&[1, 1, 2, 2], LabelKind::Noisy);
        let refined = labels(&[0, 1, 1, 2], LabelKind::Refined);
        let r = label_metrics(&refined, &noisy, &truth).unwrap();
        let text = render_report(&r, ReportFormat::Json).unwrap();
        let back: RelabelReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let csv = render_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }
}

//! Confusion matrices, precision/recall/F1/accuracy and result tables.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EncodedRecord;
use crate::ingest::{ClassDistribution, DamageLabel};
use crate::nn::{predict_class, predict_probs, ModelParams, ModelSpec, NnError, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction/label length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    #[default]
    Weighted,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        })
    }
}

impl FromStr for Averaging {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(format!("unknown averaging mode {other:?} (expected macro or weighted)")),
        }
    }
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: DamageLabel, pred: DamageLabel) {
        self.counts[truth.code()][pred.code()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        self.counts.iter().map(|r| r[pred]).sum()
    }
}

pub fn confusion_matrix(preds: &[DamageLabel], labels: &[DamageLabel]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(labels) {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: DamageLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// The class was never predicted, so precision is 0/0 (reported as 0).
    pub zero_prediction: bool,
    /// The class never occurs, so recall is 0/0 (reported as 0).
    pub zero_support: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    /// Aggregate for `averaging`.
    pub aggregate: Aggregate,
    pub accuracy: f64,
    pub macro_avg: Aggregate,
    pub weighted_avg: Aggregate,
    pub per_class: Vec<ClassMetrics>,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn aggregate_for(&self, mode: Averaging) -> Aggregate {
        match mode {
            Averaging::Macro => self.macro_avg,
            Averaging::Weighted => self.weighted_avg,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix, mode: Averaging) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let per_class: Vec<ClassMetrics> = DamageLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.code();
            let tp = cm.counts[c][c];
            let support = cm.row_sum(c);
            let (precision, zero_prediction) = ratio(tp, cm.col_sum(c));
            let (recall, zero_support) = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support,
                zero_prediction,
                zero_support,
            }
        })
        .collect();

    let k = NUM_CLASSES as f64;
    let macro_avg = Aggregate {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let n = total as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / n;
    let weighted_avg = Aggregate {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };
    let aggregate = match mode {
        Averaging::Macro => macro_avg,
        Averaging::Weighted => weighted_avg,
    };
    Ok(MetricsReport {
        averaging: mode,
        aggregate,
        accuracy: cm.trace() as f64 / n,
        macro_avg,
        weighted_avg,
        per_class,
        total,
        confusion: *cm,
    })
}

/// Predicted and true labels for `records`, in order.
pub fn predict_records(
    spec: &ModelSpec,
    params: &ModelParams,
    records: &[&EncodedRecord],
) -> Result<(Vec<DamageLabel>, Vec<DamageLabel>), NnError> {
    let preds = records
        .par_iter()
        .map(|r| predict_probs(&r.sequence, spec, params).map(|p| predict_class(&p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((preds, records.iter().map(|r| r.label).collect()))
}

pub fn evaluate_records(
    spec: &ModelSpec,
    params: &ModelParams,
    records: &[&EncodedRecord],
    mode: Averaging,
) -> Result<MetricsReport, EvalError> {
    let (preds, labels) = predict_records(spec, params, records)?;
    compute_metrics(&confusion_matrix(&preds, &labels)?, mode)
}

/// Accuracy of always predicting the most frequent class.
pub fn majority_baseline(dist: &ClassDistribution) -> Result<f64, EvalError> {
    dist.majority_share().ok_or(EvalError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PercentStyle {
    pub metric_decimals: usize,
    pub accuracy_decimals: usize,
}

impl Default for PercentStyle {
    /// Integer percent for precision/recall/F1, one decimal for accuracy.
    fn default() -> Self {
        Self {
            metric_decimals: 0,
            accuracy_decimals: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

const HEADERS: [&str; 5] = ["Model", "Precision(%)", "Recall(%)", "F1(%)", "Accuracy(%)"];

/// Text table of the aggregates of each report plus an unrounded CSV.
/// `baseline`, when given, is appended as a footer line.
pub fn render_results_table(
    rows: &[(String, MetricsReport)],
    style: PercentStyle,
    baseline: Option<f64>,
) -> Result<RenderedTable, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let pct = |v: f64, d: usize| format!("{:.*}", d, v * 100.0);
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.clone(),
                pct(r.aggregate.precision, style.metric_decimals),
                pct(r.aggregate.recall, style.metric_decimals),
                pct(r.aggregate.f1, style.metric_decimals),
                pct(r.accuracy, style.accuracy_decimals),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: &[String; 5]| {
        let mut s = format!("{:<w$}", row[0], w = widths[0]);
        for (c, w) in row.iter().zip(widths).skip(1) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.push('\n');
        s
    };
    let mut text = line(&HEADERS.map(String::from));
    let rule_len = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    text.push_str(&"-".repeat(rule_len));
    text.push('\n');
    for row in &cells {
        text.push_str(&line(row));
    }
    if let Some(b) = baseline {
        let _ = writeln!(text, "Majority baseline accuracy(%): {}", pct(b, style.accuracy_decimals));
    }
    Ok(RenderedTable {
        text,
        csv: results_csv(rows),
    })
}

fn results_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "precision", "recall", "f1", "accuracy", "averaging"])
        .expect("in-memory write");
    for (name, r) in rows {
        w.write_record([
            name.clone(),
            r.aggregate.precision.to_string(),
            r.aggregate.recall.to_string(),
            r.aggregate.f1.to_string(),
            r.accuracy.to_string(),
            r.averaging.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

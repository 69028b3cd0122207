//! Binary classification metrics, trial aggregation and report rendering.
//!
//! The positive class is label `1`. Any metric whose denominator is zero is
//! reported as `0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Argument("no predictions to score".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == 1, g == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub mcc: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 5] = ["accuracy", "f1", "recall", "precision", "mcc"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.accuracy, self.f1, self.recall, self.precision, self.mcc]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        MetricValues {
            accuracy: a[0],
            f1: a[1],
            recall: a[2],
            precision: a[3],
            mcc: a[4],
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricValues> {
    if cm.total() == 0 {
        return Err(Error::Argument("empty confusion matrix".into()));
    }
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    // sqrt of each factor pair keeps the product inside f64 range
    let den = ((tp + fp) * (tp + fn_)).sqrt() * ((tn + fp) * (tn + fn_)).sqrt();
    Ok(MetricValues {
        accuracy: (tp + tn) / cm.total() as f64,
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
        mcc: ratio(tp * tn - fp * fn_, den).clamp(-1.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Baseline,
    Selftrain,
    Augment,
    Mtl,
}

impl Arm {
    pub fn title(&self) -> &'static str {
        match self {
            Arm::Baseline => "Baseline",
            Arm::Selftrain => "Self-training",
            Arm::Augment => "Augmentation",
            Arm::Mtl => "Multi-task",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub arm: Arm,
    pub trial: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub mcc: f64,
    pub config_digest: String,
}

impl MetricsRow {
    pub fn new(arm: Arm, trial: usize, values: MetricValues, config_digest: impl Into<String>) -> Self {
        MetricsRow {
            arm,
            trial,
            accuracy: values.accuracy,
            f1: values.f1,
            recall: values.recall,
            precision: values.precision,
            mcc: values.mcc,
            config_digest: config_digest.into(),
        }
    }

    pub fn values(&self) -> MetricValues {
        MetricValues {
            accuracy: self.accuracy,
            f1: self.f1,
            recall: self.recall,
            precision: self.precision,
            mcc: self.mcc,
        }
    }
}

/// Scores predictions against gold labels.
pub fn evaluate(preds: &[Label], golds: &[Label]) -> Result<MetricValues> {
    compute_metrics(&confusion(preds, golds)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: MetricValues,
    /// Sample standard deviation (`n − 1` denominator); zero for one row.
    pub std: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<String>,
    pub rows: Vec<MetricsRow>,
    pub aggregates: BTreeMap<Arm, Aggregate>,
}

/// Sum of values in ascending order, so the result does not depend on the
/// order rows arrive in.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean_std(mut values: Vec<f64>) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = ordered_sum(&mut values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (ordered_sum(&mut sq) / (n - 1.0)).sqrt())
}

pub fn aggregate(rows: Vec<MetricsRow>) -> MetricsReport {
    let mut by_arm: BTreeMap<Arm, Vec<MetricValues>> = BTreeMap::new();
    for row in &rows {
        by_arm.entry(row.arm).or_default().push(row.values());
    }
    let aggregates = by_arm
        .into_iter()
        .map(|(arm, values)| {
            let mut mean = [0.0; 5];
            let mut std = [0.0; 5];
            for k in 0..5 {
                (mean[k], std[k]) = mean_std(values.iter().map(|v| v.as_array()[k]).collect());
            }
            let agg = Aggregate {
                n: values.len(),
                mean: MetricValues::from_array(mean),
                std: MetricValues::from_array(std),
            };
            (arm, agg)
        })
        .collect();
    MetricsReport {
        arch: None,
        rows,
        aggregates,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub fn parse_report(json: &str) -> Result<MetricsReport> {
    serde_json::from_str(json).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

const HEADER: &str = "| Arm | Accuracy | F1 | Recall | Precision | MCC |\n|---|---|---|---|---|---|\n";

fn render_markdown(report: &MetricsReport) -> String {
    let mut out = String::new();
    if let Some(arch) = &report.arch {
        let _ = writeln!(out, "Architecture: {arch}\n");
    }
    out.push_str(HEADER);
    for (arm, agg) in &report.aggregates {
        let m = agg.mean;
        let _ = writeln!(
            out,
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
            arm.title(),
            m.accuracy,
            m.f1,
            m.recall,
            m.precision,
            m.mcc
        );
    }
    if report.aggregates.values().any(|a| a.n > 1) {
        out.push_str("\nStandard deviation over trials:\n\n");
        out.push_str(HEADER);
        for (arm, agg) in &report.aggregates {
            let s = agg.std;
            let _ = writeln!(
                out,
                "| {} (n={}) | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                arm.title(),
                agg.n,
                s.accuracy,
                s.f1,
                s.recall,
                s.precision,
                s.mcc
            );
        }
    }
    out
}

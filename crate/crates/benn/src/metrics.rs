//! CSV rows for every report the command line emits. Column names are part
//! of the interface.

use std::path::Path;

use serde::Serialize;

use crate::error::{BennError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub member: usize,
    pub seed: u64,
    pub accepted: bool,
    pub alpha: Option<f64>,
    pub weighted_error: Option<f64>,
    pub member_test_accuracy: Option<f64>,
    pub ensemble_test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbRow {
    pub sigma2: f64,
    pub target: String,
    pub metric: String,
    pub estimate: f64,
    pub std_err: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BTableRow {
    pub sigma: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "B_over_R")]
    pub b_over_r: f64,
    #[serde(rename = "B_monte_carlo")]
    pub b_monte_carlo: f64,
    #[serde(rename = "B_mc_std_err")]
    pub b_mc_std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Row {
    pub sigma: f64,
    pub regime: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub measured: f64,
    pub std_err: f64,
    pub closed_form: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Row {
    pub depth: usize,
    pub regime: String,
    pub bound: f64,
    pub mean_measured: f64,
    pub std_err: f64,
    pub satisfaction_rate: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportRow {
    pub float_bytes: u64,
    pub packed_bytes: u64,
    pub ratio: f64,
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| BennError::Format(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    crate::error::write(path, &csv_bytes(rows)?)
}

/// Confusion matrix with one row per true class and one `pred_<c>` column
/// per predicted class.
pub fn confusion_csv(pred: &[usize], labels: &[usize], classes: usize) -> Result<Vec<u8>> {
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(labels) {
        counts[t][p] += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true_class".to_string()];
    header.extend((0..classes).map(|c| format!("pred_{c}")));
    w.write_record(&header)?;
    for (t, row) in counts.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| BennError::Format(e.to_string()))
}

//! Classification and crisis early-warning metrics.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[predicted][actual]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let j = counts.len();
        if j == 0 || counts.iter().any(|row| row.len() != j) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_labels(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&p, &a) in predicted.iter().zip(actual) {
            cm.record(p, a)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, predicted: usize, actual: usize) -> Result<()> {
        let j = self.classes();
        if predicted >= j || actual >= j {
            return Err(Error::Shape(format!("class index out of range for {j} classes")));
        }
        self.counts[predicted][actual] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted][actual]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    /// Rows are predicted classes, columns actual.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.classes()).map(|k| format!("actual_{k}")).collect();
        writeln!(out, "predicted,{}", header.join(","))?;
        for (k, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(out, "{k},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Fraction of correct predictions; 0 for an empty matrix.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    cm.trace() as f64 / total as f64
}

/// Matthews correlation. With two classes this is
/// `(TP·TN − FP·FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN))`, class 1 positive;
/// otherwise Gorodkin's R_K statistic. A zero denominator yields 0.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    if cm.classes() == 2 {
        binary_mcc(cm)
    } else {
        multiclass_mcc(cm)
    }
}

fn binary_mcc(cm: &ConfusionMatrix) -> f64 {
    let tp = cm.get(1, 1) as f64;
    let tn = cm.get(0, 0) as f64;
    let fp = cm.get(1, 0) as f64;
    let fn_ = cm.get(0, 1) as f64;
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

pub(crate) fn multiclass_mcc(cm: &ConfusionMatrix) -> f64 {
    let j = cm.classes();
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let predicted: Vec<f64> = (0..j).map(|k| cm.counts[k].iter().sum::<u64>() as f64).collect();
    let actual: Vec<f64> = (0..j)
        .map(|k| cm.counts.iter().map(|r| r[k]).sum::<u64>() as f64)
        .collect();
    let pt: f64 = predicted.iter().zip(&actual).map(|(p, t)| p * t).sum();
    let pp: f64 = predicted.iter().map(|p| p * p).sum();
    let tt: f64 = actual.iter().map(|t| t * t).sum();
    let denom = (s * s - pp) * (s * s - tt);
    if denom <= 0.0 {
        return 0.0;
    }
    (c * s - pt) / denom.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForewarnedOnset {
    pub onset_index: usize,
    pub onset_date: Option<NaiveDate>,
    pub warning_date: Option<NaiveDate>,
    pub days_ahead: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetReport {
    pub lookahead: usize,
    pub total_onsets: usize,
    pub forewarned_onsets: usize,
    /// `None` when there are no onsets.
    pub percent_forewarned: Option<f64>,
    /// Trading days, averaged over forewarned onsets; `None` when none.
    pub avg_days_ahead: Option<f64>,
    pub onsets: Vec<usize>,
    pub forewarned: Vec<ForewarnedOnset>,
}

/// Onsets are 0→1 transitions in `truth`. An onset at `t` is forewarned if
/// `predicted` is 1 on some day in `[t − lookahead, t − 1]`; days ahead are
/// measured to the earliest such day. `dates` is optional decoration.
pub fn onset_metrics(
    truth: &[u8],
    predicted: &[u8],
    dates: Option<&[NaiveDate]>,
    lookahead: usize,
) -> Result<OnsetReport> {
    if truth.len() != predicted.len() || dates.is_some_and(|d| d.len() != truth.len()) {
        return Err(Error::Shape("label and date series must be aligned".into()));
    }
    let onsets: Vec<usize> = (1..truth.len())
        .filter(|&t| truth[t - 1] == 0 && truth[t] == 1)
        .collect();
    let date = |i: usize| dates.map(|d| d[i]);
    let mut forewarned = Vec::new();
    for &t in &onsets {
        let from = t.saturating_sub(lookahead);
        if let Some(k) = (from..t).find(|&k| predicted[k] == 1) {
            forewarned.push(ForewarnedOnset {
                onset_index: t,
                onset_date: date(t),
                warning_date: date(k),
                days_ahead: t - k,
            });
        }
    }
    let total = onsets.len();
    let hits = forewarned.len();
    Ok(OnsetReport {
        lookahead,
        total_onsets: total,
        forewarned_onsets: hits,
        percent_forewarned: (total > 0).then(|| 100.0 * hits as f64 / total as f64),
        avg_days_ahead: (hits > 0).then(|| forewarned.iter().map(|f| f.days_ahead as f64).sum::<f64>() / hits as f64),
        onsets,
        forewarned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub classes: usize,
    pub accuracy: f64,
    pub mcc: f64,
    pub confusion: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onsets: Option<OnsetReport>,
}

impl MetricsReport {
    pub fn new(cm: &ConfusionMatrix, onsets: Option<OnsetReport>) -> Self {
        MetricsReport {
            samples: cm.total(),
            classes: cm.classes(),
            accuracy: accuracy(cm),
            mcc: mcc(cm),
            confusion: cm.counts.clone(),
            onsets,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path.display().to_string(), e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

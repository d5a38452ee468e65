//! Open set accuracy: per-class recall macro-averaged over all `C+1` classes
//! (OS) or over the known classes only (OS*).

use serde::Serialize;

use crate::dataset::{GroundTruth, LabelAssignment};
use crate::error::{DaodError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub acc_os: f64,
    /// `None` when the truth contains no known-class sample.
    pub acc_os_star: Option<f64>,
    /// Recall per class (index `C` is unknown); `None` for classes absent from
    /// the truth.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[truth][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// 1-based indices of classes with no truth samples, excluded from the
    /// averages.
    pub absent_classes: Vec<usize>,
}

pub fn open_set_metrics(pred: &LabelAssignment, truth: &GroundTruth) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(DaodError::invalid(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(DaodError::invalid("ground truth is empty"));
    }
    if pred.num_classes() != truth.num_classes() {
        return Err(DaodError::invalid(
            "predictions and ground truth disagree on the number of classes",
        ));
    }
    let k = truth.num_classes() + 1;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    let mean = |xs: &[Option<f64>]| {
        let present: Vec<f64> = xs.iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    };
    let acc_os = mean(&per_class).expect("truth is nonempty");
    let acc_os_star = mean(&per_class[..k - 1]);
    let absent_classes = per_class
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(c, _)| c + 1)
        .collect();
    Ok(MetricsReport {
        acc_os,
        acc_os_star,
        per_class,
        confusion,
        absent_classes,
    })
}

//! Open Set Nearest Neighbor for Class Verification with threshold `t`.
//!
//! A query takes the label of its nearest source sample when the two nearest
//! source samples agree, or when they disagree but the nearest is clearly
//! closer (distance ratio `≤ t`). Otherwise it is rejected as unknown.

use nalgebra::{DMatrix, DVectorView};
use serde::Serialize;

use crate::dataset::{sq_dist, LabelAssignment, LabeledDataset, UnlabeledTarget};
use crate::error::{DaodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OsnnDecision {
    /// 0-based class; `C` means unknown.
    pub label: usize,
    /// `‖v−s‖ / ‖u−s‖`; `None` when both neighbours share a label.
    pub ratio: Option<f64>,
    /// Source indices of the nearest and second-nearest samples.
    pub neighbor_indices: (usize, usize),
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(DaodError::invalid(format!("OSNN threshold {t} outside (0, 1)")))
    }
}

/// Two nearest source rows by Euclidean distance, ties to the lower index.
fn two_nearest(query: DVectorView<'_, f64>, source: &DMatrix<f64>) -> ((f64, usize), (f64, usize)) {
    let mut best = (f64::INFINITY, usize::MAX);
    let mut second = (f64::INFINITY, usize::MAX);
    for i in 0..source.nrows() {
        let d = sq_dist(query, source.row(i).transpose().as_view());
        // strict comparison keeps the earlier index on ties
        if d < best.0 {
            second = best;
            best = (d, i);
        } else if d < second.0 {
            second = (d, i);
        }
    }
    (best, second)
}

pub fn osnn_classify(query: DVectorView<'_, f64>, source: &LabeledDataset, t: f64) -> Result<OsnnDecision> {
    check_threshold(t)?;
    if source.len() < 2 {
        return Err(DaodError::invalid("OSNN needs at least 2 source samples"));
    }
    if query.len() != source.dim() {
        return Err(DaodError::DimensionMismatch {
            source_dim: source.dim(),
            target_dim: query.len(),
        });
    }
    Ok(decide(query, source, t))
}

fn decide(query: DVectorView<'_, f64>, source: &LabeledDataset, t: f64) -> OsnnDecision {
    let ((dv, v), (du, u)) = two_nearest(query, source.features());
    let labels = source.labels();
    if labels[v] == labels[u] {
        return OsnnDecision {
            label: labels[v],
            ratio: None,
            neighbor_indices: (v, u),
        };
    }
    let (dv, du) = (dv.sqrt(), du.sqrt());
    let ratio = if dv == 0.0 { 0.0 } else { dv / du };
    let label = if ratio <= t { labels[v] } else { source.num_classes() };
    OsnnDecision {
        label,
        ratio: Some(ratio),
        neighbor_indices: (v, u),
    }
}

/// OSNN-cv-t decisions for every target row.
pub fn label_targets(target: &UnlabeledTarget, source: &LabeledDataset, t: f64) -> Result<LabelAssignment> {
    check_threshold(t)?;
    if source.len() < 2 {
        return Err(DaodError::invalid("OSNN needs at least 2 source samples"));
    }
    if target.dim() != source.dim() {
        return Err(DaodError::DimensionMismatch {
            source_dim: source.dim(),
            target_dim: target.dim(),
        });
    }
    let x = target.features();
    let labels = (0..x.nrows())
        .map(|i| decide(x.row(i).transpose().as_view(), source, t).label)
        .collect();
    LabelAssignment::new(labels, source.num_classes())
}

//! `report.json` contents.
//!
//! The report is a pure function of the configuration and the data, so two
//! runs of the same config produce byte-identical files. Wall-clock values go
//! to `metadata.json` instead.

use daod_core::eval::MetricsReport;
use daod_core::risk::RiskReport;
use daod_core::solver::IterationRecord;
use daod_core::Hyperparams;
use serde::Serialize;

use crate::config::{Input, Mode};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub input: Input,
    pub hyperparams: Hyperparams,
    pub num_classes: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub dim: usize,
    /// Present when the target has ground truth.
    pub metrics: Option<MetricsReport>,
    /// Targets predicted as unknown.
    pub unknown_predicted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

/// Per-iteration record of a DAOD run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub bandwidth: f64,
    /// Targets the initial pseudo-labeler rejected as unknown.
    pub initial_unknown: usize,
    pub mu: Vec<f64>,
    pub objective: Vec<f64>,
    /// Pseudo-label changes per iteration.
    pub changes: Vec<usize>,
    pub risk: RiskReport,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: &'static str,
    pub version: &'static str,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
}

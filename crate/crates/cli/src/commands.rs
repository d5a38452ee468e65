use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use daod_core::data::{generate_synthetic, load_features, write_features, FeatureTable, SyntheticConfig};
use daod_core::eval::open_set_metrics;
use daod_core::pseudolabel::label_targets;
use daod_core::{daod_fit, LabelAssignment, LabeledDataset, TargetDataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{apply_point, GridPoint, Input, Mode, RunConfig, SweepGrid};
use crate::error::{CliError, CliResult};
use crate::report::{Metadata, Report, Trace};

pub fn load_input(input: &Input) -> CliResult<(LabeledDataset, TargetDataset)> {
    match input {
        Input::Files {
            source,
            target,
            target_labeled,
        } => {
            let source = load_features(source, true)?.into_labeled()?;
            let target = load_features(target, *target_labeled)?.into_target(source.num_classes())?;
            Ok((source, target))
        }
        Input::Synthetic { config } => Ok(generate_synthetic(config)?),
    }
}

/// Runs the configured method and builds the report without touching the
/// output directory.
pub fn execute(cfg: &RunConfig) -> CliResult<(Report, LabelAssignment)> {
    let (source, target) = load_input(&cfg.input)?;
    let hp = &cfg.hyperparams;
    let (predictions, trace) = match cfg.mode {
        Mode::Daod => {
            let r = daod_fit(&source, target.unlabeled(), hp)?;
            let initial_unknown = r
                .initial_pseudo_labels
                .labels()
                .iter()
                .filter(|&&l| l == source.num_classes())
                .count();
            let trace = Trace {
                bandwidth: r.bandwidth,
                initial_unknown,
                mu: r.iterations.iter().map(|i| i.mu).collect(),
                objective: r.iterations.iter().map(|i| i.objective).collect(),
                changes: r.iterations.iter().map(|i| i.changed).collect(),
                risk: r.risk,
                iterations: r.iterations,
            };
            (r.predictions, Some(trace))
        }
        Mode::OsnnBaseline => (label_targets(target.unlabeled(), &source, hp.threshold())?, None),
    };
    let metrics = target
        .ground_truth()
        .map(|truth| open_set_metrics(&predictions, truth))
        .transpose()?;
    let report = Report {
        mode: cfg.mode,
        input: cfg.input.clone(),
        hyperparams: *hp,
        num_classes: source.num_classes(),
        n_source: source.len(),
        n_target: target.len(),
        dim: source.dim(),
        metrics,
        unknown_predicted: (0..predictions.len()).filter(|&j| predictions.is_unknown(j)).count(),
        trace,
    };
    Ok((report, predictions))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> CliResult<()> {
    let mut text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn predictions_csv(pred: &LabelAssignment) -> String {
    let c = pred.num_classes();
    let mut out = format!(
        "# predicted class per target row: 1..{c} are the known classes, {} is unknown\n",
        c + 1
    );
    for l in pred.to_one_based() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_run(dir: &Path, cfg: &RunConfig, report: &Report, pred: &LabelAssignment, meta: &Metadata) -> CliResult<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), report, cfg.pretty)?;
    write_text(&dir.join("predictions.csv"), &predictions_csv(pred))?;
    write_json(&dir.join("metadata.json"), meta, true)
}

/// Writes `report.json`, `predictions.csv` and `metadata.json` to `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<Report> {
    let started = unix_now();
    let t0 = Instant::now();
    let (report, pred) = execute(cfg)?;
    let meta = Metadata {
        command: "run",
        version: env!("CARGO_PKG_VERSION"),
        started_unix_seconds: started,
        elapsed_seconds: t0.elapsed().as_secs_f64(),
    };
    write_run(&cfg.out, cfg, &report, &pred, &meta)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    pub acc_os: Option<f64>,
    pub acc_os_star: Option<f64>,
    pub seconds: f64,
    /// `ok`, or the error that stopped this point.
    pub status: String,
}

fn run_point(base: &RunConfig, index: usize, point: &GridPoint) -> SweepRow {
    let started = unix_now();
    let t0 = Instant::now();
    let outcome = apply_point(base, point).map_err(CliError::Config).and_then(|mut cfg| {
        cfg.out = base.out.join(format!("point-{index:04}"));
        let (report, pred) = execute(&cfg)?;
        let meta = Metadata {
            command: "sweep",
            version: env!("CARGO_PKG_VERSION"),
            started_unix_seconds: started,
            elapsed_seconds: t0.elapsed().as_secs_f64(),
        };
        write_run(&cfg.out, &cfg, &report, &pred, &meta)?;
        Ok(report)
    });
    let seconds = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(report) => SweepRow {
            point: point.clone(),
            acc_os: report.metrics.as_ref().map(|m| m.acc_os),
            acc_os_star: report.metrics.as_ref().and_then(|m| m.acc_os_star),
            seconds,
            status: "ok".into(),
        },
        Err(e) => SweepRow {
            point: point.clone(),
            acc_os: None,
            acc_os_star: None,
            seconds,
            status: format!("error: {e}"),
        },
    }
}

/// Runs every grid point (concurrently), writing `point-NNNN/` directories
/// and `summary.csv` under `base.out`. Point failures are recorded in the
/// summary; only an invalid grid or an unwritable summary is an error.
pub fn cmd_sweep(base: &RunConfig, grid: &SweepGrid) -> CliResult<Vec<SweepRow>> {
    let points = grid.points()?;
    create_dir(&base.out)?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_point(base, i + 1, p))
        .collect();
    let path = base.out.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut header = grid.columns();
    header.extend(["acc_os", "acc_os_star", "seconds", "status"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        let mut rec: Vec<String> = r.point.iter().map(|(_, v)| v.to_string()).collect();
        rec.extend([
            opt(r.acc_os),
            opt(r.acc_os_star),
            format!("{:.6}", r.seconds),
            r.status.clone(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

/// Writes `source.csv`, `target.csv` (with the ground-truth column) and the
/// generator config to `out`.
pub fn cmd_synth(cfg: &SyntheticConfig, out: &Path) -> CliResult<()> {
    let (source, target) = generate_synthetic(cfg)?;
    create_dir(out)?;
    let c = source.num_classes();
    let src = FeatureTable {
        features: source.features().clone(),
        labels: Some(source.labels_one_based()),
    };
    let tgt = FeatureTable {
        features: target.features().clone(),
        labels: target
            .ground_truth()
            .map(|g| g.labels().iter().map(|l| l + 1).collect()),
    };
    write_features(
        &out.join("source.csv"),
        &src,
        Some(&format!(
            "synthetic source, seed {}; last column is the class in 1..{c}",
            cfg.seed
        )),
    )?;
    write_features(
        &out.join("target.csv"),
        &tgt,
        Some(&format!(
            "synthetic target, seed {}; last column is the true class, {} means unknown",
            cfg.seed,
            c + 1
        )),
    )?;
    write_json(&out.join("synthetic.json"), cfg, true)
}

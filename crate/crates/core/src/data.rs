//! Feature files and the synthetic open set benchmark.
//!
//! # Feature file format
//!
//! UTF-8 text, one sample per line, comma-separated finite decimal floats.
//! When labeled, the last column is an integer class index `>= 1`. Lines
//! starting with `#` are comments and blank lines are skipped. There is no
//! header row.
//!
//! # Synthetic generator
//!
//! Randomness comes from a ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`; normal variates use `rand_distr`'s
//! `StandardNormal`. Draw order: per-class shift directions, then source
//! samples class by class, then target known-class samples class by class,
//! then the unknown clusters. The same seed yields the same data on every
//! platform.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{GroundTruth, LabeledDataset, TargetDataset};
use crate::error::{DaodError, Result};

/// Parsed contents of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: DMatrix<f64>,
    /// 1-based labels, present when the file was read with labels.
    pub labels: Option<Vec<usize>>,
}

impl FeatureTable {
    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Source dataset; `C` is the largest label present.
    pub fn into_labeled(self) -> Result<LabeledDataset> {
        let labels = self
            .labels
            .ok_or_else(|| DaodError::invalid("source features need a label column"))?;
        LabeledDataset::with_inferred_classes(self.features, &labels)
    }

    /// Target dataset; labels, when present, become ground truth in
    /// `1..=num_classes+1`.
    pub fn into_target(self, num_classes: usize) -> Result<TargetDataset> {
        match self.labels {
            None => Ok(TargetDataset::new(self.features)),
            Some(l) => TargetDataset::with_ground_truth(self.features, GroundTruth::from_one_based(&l, num_classes)?),
        }
    }
}

pub fn parse_features(text: &str, has_labels: bool, origin: &str) -> Result<FeatureTable> {
    let err = |line: usize, message: String| DaodError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let n_feat = if has_labels {
            if cells.len() < 2 {
                return Err(err(
                    line_no,
                    "expected feature columns followed by a label column".into(),
                ));
            }
            cells.len() - 1
        } else {
            cells.len()
        };
        match width {
            None => width = Some(n_feat),
            Some(w) if w != n_feat => {
                return Err(err(line_no, format!("expected {w} feature columns, found {n_feat}")));
            }
            Some(_) => {}
        }
        for (col, cell) in cells[..n_feat].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(line_no, format!("column {}: `{cell}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("column {}: `{cell}` is not finite", col + 1)));
            }
            values.push(v);
        }
        if has_labels {
            let cell = cells[n_feat];
            let l: usize = cell
                .parse()
                .map_err(|_| err(line_no, format!("label `{cell}` is not a positive integer")))?;
            if l == 0 {
                return Err(err(line_no, "labels start at 1".into()));
            }
            labels.push(l);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    Ok(FeatureTable {
        features: DMatrix::from_row_slice(rows, d, &values),
        labels: has_labels.then_some(labels),
    })
}

pub fn load_features(path: &Path, has_labels: bool) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|source| DaodError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_features(&text, has_labels, &path.display().to_string())
}

/// Renders a table in the feature file format. Floats use the shortest
/// representation that parses back to the same value.
pub fn format_features(table: &FeatureTable, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        for line in h.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for i in 0..table.rows() {
        for j in 0..table.dim() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", table.features[(i, j)]);
        }
        if let Some(l) = &table.labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: &Path, table: &FeatureTable, header: Option<&str>) -> Result<()> {
    std::fs::write(path, format_features(table, header)).map_err(|source| DaodError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Gaussian clusters for an open set shift benchmark.
///
/// Known class `c` is centred at `class_separation · e_c` in the source and at
/// that point plus `shift · u_c` in the target, where `u_c` is a random unit
/// direction. Unknown cluster `k` is centred at `unknown_offset · e_{C+k}`
/// and exists in the target only. When `dim` is too small for distinct axes,
/// random unit directions are used instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub known_classes: usize,
    pub source_per_class: usize,
    pub target_per_class: usize,
    /// Size of each target-only unknown cluster.
    pub unknown_clusters: Vec<usize>,
    pub dim: usize,
    pub class_separation: f64,
    pub unknown_offset: f64,
    /// Distance between a class's source and target means.
    pub shift: f64,
    /// Per-coordinate standard deviation of every cluster.
    pub spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            known_classes: 3,
            source_per_class: 50,
            target_per_class: 50,
            unknown_clusters: vec![50],
            dim: 10,
            class_separation: 2.0,
            unknown_offset: 20.0,
            shift: 1.5,
            spread: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.known_classes == 0 || self.dim == 0 {
            return Err(DaodError::invalid(
                "synthetic config needs known_classes >= 1 and dim >= 1",
            ));
        }
        if self.source_per_class < 2 || self.target_per_class == 0 {
            return Err(DaodError::invalid(
                "synthetic config needs source_per_class >= 2 and target_per_class >= 1",
            ));
        }
        if self.unknown_clusters.contains(&0) {
            return Err(DaodError::invalid("unknown cluster sizes must be positive"));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("unknown_offset", self.unknown_offset),
            ("shift", self.shift),
            ("spread", self.spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DaodError::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn axis_or_random(rng: &mut ChaCha8Rng, dim: usize, axis: usize, total_axes: usize) -> DVector<f64> {
    if total_axes <= dim {
        let mut e = DVector::zeros(dim);
        e[axis] = 1.0;
        e
    } else {
        random_unit(rng, dim)
    }
}

fn push_cluster(rng: &mut ChaCha8Rng, rows: &mut Vec<f64>, mean: &DVector<f64>, count: usize, spread: f64) {
    for _ in 0..count {
        for &m in mean.iter() {
            let z: f64 = StandardNormal.sample(rng);
            rows.push(m + spread * z);
        }
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(LabeledDataset, TargetDataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c, d) = (cfg.known_classes, cfg.dim);
    let total_axes = c + cfg.unknown_clusters.len();

    let shifts: Vec<DVector<f64>> = (0..c).map(|_| random_unit(&mut rng, d) * cfg.shift).collect();
    let means: Vec<DVector<f64>> = (0..c)
        .map(|k| axis_or_random(&mut rng, d, k, total_axes) * cfg.class_separation)
        .collect();
    let unknown_means: Vec<DVector<f64>> = (0..cfg.unknown_clusters.len())
        .map(|k| axis_or_random(&mut rng, d, c + k, total_axes) * cfg.unknown_offset)
        .collect();

    let mut src = Vec::new();
    let mut src_labels = Vec::new();
    for (k, mean) in means.iter().enumerate() {
        push_cluster(&mut rng, &mut src, mean, cfg.source_per_class, cfg.spread);
        src_labels.extend(std::iter::repeat_n(k + 1, cfg.source_per_class));
    }
    let mut tgt = Vec::new();
    let mut truth = Vec::new();
    for (k, mean) in means.iter().enumerate() {
        push_cluster(
            &mut rng,
            &mut tgt,
            &(mean + &shifts[k]),
            cfg.target_per_class,
            cfg.spread,
        );
        truth.extend(std::iter::repeat_n(k + 1, cfg.target_per_class));
    }
    for (mean, &size) in unknown_means.iter().zip(&cfg.unknown_clusters) {
        push_cluster(&mut rng, &mut tgt, mean, size, cfg.spread);
        truth.extend(std::iter::repeat_n(c + 1, size));
    }

    let source = LabeledDataset::new(DMatrix::from_row_slice(src_labels.len(), d, &src), &src_labels, c)?;
    let target = TargetDataset::with_ground_truth(
        DMatrix::from_row_slice(truth.len(), d, &tgt),
        GroundTruth::from_one_based(&truth, c)?,
    )?;
    Ok((source, target))
}

//! Run configuration: a JSON file, overridden by command-line flags.
//!
//! ```json
//! {
//!   "mode": "daod",
//!   "source": "source.csv",
//!   "target": "target.csv",
//!   "target_labeled": true,
//!   "hyperparams": { "lambda": 50.0 },
//!   "out": "results",
//!   "pretty": true
//! }
//! ```
//!
//! Give either `source` and `target` or a `synthetic` object (a
//! [`SyntheticConfig`]; `{}` means the defaults), never both. Relative paths
//! are resolved against the directory of the config file. Missing
//! hyperparameters take their defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use daod_core::data::SyntheticConfig;
use daod_core::{Hyperparams, HyperparamsBuilder, UnknownPush};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Daod,
    OsnnBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    Files {
        source: PathBuf,
        target: PathBuf,
        /// The target file carries a ground-truth label column.
        target_labeled: bool,
    },
    Synthetic {
        config: SyntheticConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: Input,
    pub hyperparams: Hyperparams,
    pub out: PathBuf,
    pub pretty: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    #[serde(default)]
    mode: Mode,
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    #[serde(default)]
    target_labeled: bool,
    synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    hyperparams: HyperparamsBuilder,
    out: Option<PathBuf>,
    pretty: Option<bool>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub target_labeled: bool,
    pub synthetic: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub compact: bool,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub neighbors: Option<usize>,
    pub threshold: Option<f64>,
    pub iterations: Option<usize>,
    pub jitter: Option<f64>,
    pub unknown_push: Option<UnknownPush>,
    pub bandwidth: Option<f64>,
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn resolve(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl RunConfig {
    /// Reads the optional config file and applies the overrides.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> CliResult<Self> {
        let (file, base) = match path {
            Some(p) => (read_json_file::<RunConfigFile>(p)?, p.parent().map(Path::to_path_buf)),
            None => (RunConfigFile::default(), None),
        };
        let base = base.as_deref();

        let mut source = file.source.map(|p| resolve(base, p));
        let mut target = file.target.map(|p| resolve(base, p));
        let mut target_labeled = file.target_labeled;
        let mut synthetic = file.synthetic;
        if ov.source.is_some() || ov.target.is_some() {
            if ov.synthetic {
                return Err(CliError::config("--synthetic conflicts with --source/--target"));
            }
            source = ov.source.clone().or(source);
            target = ov.target.clone().or(target);
            synthetic = None;
        }
        if ov.target_labeled {
            target_labeled = true;
        }
        if ov.synthetic {
            source = None;
            target = None;
            synthetic = Some(synthetic.unwrap_or_default());
        }
        let mut input = match (source, target, synthetic) {
            (Some(source), Some(target), None) => Input::Files {
                source,
                target,
                target_labeled,
            },
            (None, None, Some(config)) => Input::Synthetic { config },
            (None, None, None) => {
                return Err(CliError::config(
                    "no input: give source and target files or a synthetic config",
                ))
            }
            (_, _, Some(_)) => {
                return Err(CliError::config(
                    "give either input files or a synthetic config, not both",
                ))
            }
            _ => return Err(CliError::config("input files need both a source and a target")),
        };
        if let Some(seed) = ov.seed {
            match &mut input {
                Input::Synthetic { config } => config.seed = seed,
                Input::Files { .. } => return Err(CliError::config("--seed only applies to synthetic input")),
            }
        }

        let mut b = file.hyperparams;
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = ov.$f { b.$f = v; })* };
        }
        apply!(
            lambda,
            rho,
            sigma,
            alpha,
            gamma,
            neighbors,
            threshold,
            iterations,
            jitter,
            unknown_push
        );
        if ov.bandwidth.is_some() {
            b.bandwidth = ov.bandwidth;
        }
        let hyperparams = b.build()?;

        let out = ov
            .out
            .clone()
            .or_else(|| file.out.map(|p| resolve(base, p)))
            .ok_or_else(|| CliError::config("no output directory: pass --out or set \"out\""))?;
        Ok(RunConfig {
            mode: ov.mode.unwrap_or(file.mode),
            input,
            hyperparams,
            out,
            pretty: !ov.compact && file.pretty.unwrap_or(true),
        })
    }
}

/// Hyperparameter grid for `sweep`.
///
/// ```json
/// { "params": { "lambda": [0, 50, 500] }, "alpha_delta": [[0.4, 0.15]] }
/// ```
///
/// Points are the cartesian product of every `params` list and, when given,
/// the `alpha_delta` pairs, which set `alpha` and `gamma = alpha − delta`.
/// `seed` may be swept for synthetic input.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub params: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub alpha_delta: Vec<[f64; 2]>,
}

pub const SWEEPABLE: &[&str] = &[
    "lambda",
    "rho",
    "sigma",
    "alpha",
    "gamma",
    "neighbors",
    "threshold",
    "iterations",
    "jitter",
    "bandwidth",
    "seed",
];

/// One grid point: parameter names and values in column order.
pub type GridPoint = Vec<(String, f64)>;

impl SweepGrid {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_json_file(path)
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.params.keys().cloned().collect();
        if !self.alpha_delta.is_empty() {
            cols.extend(["alpha".to_string(), "delta".to_string()]);
        }
        cols
    }

    pub fn points(&self) -> CliResult<Vec<GridPoint>> {
        if self.params.is_empty() && self.alpha_delta.is_empty() {
            return Err(CliError::config("sweep grid is empty"));
        }
        for (name, values) in &self.params {
            if !SWEEPABLE.contains(&name.as_str()) {
                return Err(CliError::config(format!("`{name}` cannot be swept")));
            }
            if values.is_empty() {
                return Err(CliError::config(format!("sweep grid lists no values for `{name}`")));
            }
        }
        if !self.alpha_delta.is_empty() && (self.params.contains_key("alpha") || self.params.contains_key("gamma")) {
            return Err(CliError::config(
                "alpha_delta cannot be combined with alpha or gamma lists",
            ));
        }
        let mut points: Vec<GridPoint> = vec![Vec::new()];
        for (name, values) in &self.params {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        if !self.alpha_delta.is_empty() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    self.alpha_delta.iter().map(move |&[a, d]| {
                        let mut q = p.clone();
                        q.push(("alpha".into(), a));
                        q.push(("delta".into(), d));
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

fn as_count(name: &str, v: f64) -> Result<usize, String> {
    if v.fract() == 0.0 && v >= 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("`{name}` must be a nonnegative integer, got {v}"))
    }
}

/// The run configuration of one grid point. Errors are per-point failures.
pub fn apply_point(base: &RunConfig, point: &GridPoint) -> Result<RunConfig, String> {
    let mut cfg = base.clone();
    let mut b = base.hyperparams.to_builder();
    let alpha = point.iter().find(|(n, _)| n == "alpha").map(|&(_, v)| v);
    for (name, v) in point {
        let v = *v;
        match name.as_str() {
            "lambda" => b.lambda = v,
            "rho" => b.rho = v,
            "sigma" => b.sigma = v,
            "alpha" => b.alpha = v,
            "gamma" => b.gamma = v,
            "delta" => b.gamma = alpha.expect("delta always follows alpha") - v,
            "neighbors" => b.neighbors = as_count(name, v)?,
            "iterations" => b.iterations = as_count(name, v)?,
            "threshold" => b.threshold = v,
            "jitter" => b.jitter = v,
            "bandwidth" => b.bandwidth = Some(v),
            "seed" => match &mut cfg.input {
                Input::Synthetic { config } => config.seed = as_count(name, v)? as u64,
                Input::Files { .. } => return Err("`seed` only applies to synthetic input".into()),
            },
            other => return Err(format!("`{other}` cannot be swept")),
        }
    }
    cfg.hyperparams = b.build().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(json: &str) -> SweepGrid {
        serde_json::from_str(json).unwrap()
    }

    fn synthetic_base() -> RunConfig {
        let ov = Overrides {
            synthetic: true,
            out: Some("o".into()),
            ..Overrides::default()
        };
        RunConfig::load(None, &ov).unwrap()
    }

    #[test]
    fn cartesian_product_with_pairs() {
        let g = grid(r#"{"params": {"lambda": [0, 50], "sigma": [1, 2, 3]}, "alpha_delta": [[0.4, 0.1], [0.3, 0.0]]}"#);
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(g.columns(), ["lambda", "sigma", "alpha", "delta"]);
        let cfg = apply_point(&synthetic_base(), &pts[0]).unwrap();
        assert_eq!(cfg.hyperparams.alpha(), 0.4);
        assert!((cfg.hyperparams.gamma() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn invalid_grids() {
        assert!(grid("{}").points().is_err());
        assert!(grid(r#"{"params": {"lambda": []}}"#).points().is_err());
        assert!(grid(r#"{"params": {"colour": [1]}}"#).points().is_err());
        assert!(grid(r#"{"params": {"gamma": [0.1]}, "alpha_delta": [[0.4, 0.1]]}"#)
            .points()
            .is_err());
        assert!(serde_json::from_str::<SweepGrid>(r#"{"param": {}}"#).is_err());
    }

    #[test]
    fn point_errors_are_values() {
        let base = synthetic_base();
        assert!(apply_point(&base, &vec![("neighbors".into(), 2.5)]).is_err());
        assert!(apply_point(&base, &vec![("gamma".into(), 1.0)]).is_err());
        let cfg = apply_point(&base, &vec![("seed".into(), 9.0)]).unwrap();
        assert!(matches!(cfg.input, Input::Synthetic { ref config } if config.seed == 9));
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"source": "s.csv", "target": "t.csv", "hyperparams": {"lambda": 5, "rho": 0}, "out": "res"}"#,
        )
        .unwrap();
        let ov = Overrides {
            lambda: Some(7.0),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &ov).unwrap();
        assert_eq!(cfg.hyperparams.lambda(), 7.0);
        assert_eq!(cfg.hyperparams.rho(), 0.0);
        assert_eq!(cfg.out, dir.path().join("res"));
        match cfg.input {
            Input::Files { source, .. } => assert_eq!(source, dir.path().join("s.csv")),
            Input::Synthetic { .. } => panic!("expected file input"),
        }
        let seeded = Overrides {
            seed: Some(1),
            ..Overrides::default()
        };
        assert!(RunConfig::load(Some(&path), &seeded).is_err());
    }
}

//! Distribution Alignment with Open Difference (DAOD).
//!
//! A closed-form kernel method for unsupervised open set domain adaptation.
//! Source samples carry labels in `1..=C`; target samples are unlabeled and may
//! contain classes never seen in the source, all of which collapse into a
//! single "unknown" class `C+1`.
//!
//! The learned scoring function is a kernel expansion `h(x) = Σ_i β_i k(x_i, x)`
//! over the union of source and target samples. Its coefficients minimize a
//! regularized squared-loss objective that combines
//!
//! * the source risk,
//! * a positive term pushing target samples toward the unknown class and a
//!   negative term keeping source samples away from it (the open set
//!   difference),
//! * a μ-weighted marginal/conditional MMD alignment penalty,
//! * a graph-Laplacian manifold penalty, and
//! * an RKHS norm penalty,
//!
//! and is obtained by a single linear solve per refinement iteration.
//!
//! Class indices are 1-based at the I/O boundary (files, reports) and 0-based
//! inside the library, where index `C` denotes the unknown class.

pub mod alignment;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernel;
pub mod pseudolabel;
pub mod risk;
pub mod solver;

pub use dataset::{
    partition_by_class, stack_features, validate_pair, ClassPartition, GroundTruth, Hyperparams, HyperparamsBuilder,
    LabelAssignment, LabeledDataset, TargetDataset, UnknownPush, UnlabeledTarget,
};
pub use error::{DaodError, Result};
pub use solver::{daod_fit, RunReport};

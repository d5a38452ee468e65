//! Distribution alignment: the marginal and class-conditional MMD matrices,
//! their μ-weighted combination, the projected MMD diagnostic, and the
//! A-distance estimate that drives μ.
//!
//! All MMD matrices are indexed over the stacked samples (source rows
//! `0..n_s`, then target rows `n_s..n_s+n_t`). Each one is the outer product
//! `e eᵀ` of a signed mean-indicator vector, with `e_i = 1/|A|` on group A,
//! `-1/|B|` on group B and 0 elsewhere, so `tr(Hᵀ M H)` is the squared distance
//! between the group means of the rows of `H`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{ClassPartition, LabeledDataset, UnlabeledTarget};
use crate::error::{DaodError, Result};

/// Seed of the fold permutation used by [`a_distance`].
pub const FOLD_SEED: u64 = 0x0DA0_D5EE_D000_0001;

/// Ridge penalty of the domain classifier used by [`a_distance`].
pub const DOMAIN_CLASSIFIER_RIDGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrices {
    pub m0: DMatrix<f64>,
    pub mc: Vec<DMatrix<f64>>,
    pub combined: DMatrix<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveFactorReport {
    /// Marginal A-distance between all source samples and the pseudo-known
    /// targets; `None` when no target is pseudo-known.
    pub d0: Option<f64>,
    /// Per-class A-distance; `None` for classes empty on either side.
    pub dc: Vec<Option<f64>>,
    pub mu: f64,
    pub warnings: Vec<String>,
}

/// Result of [`a_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ADistance {
    pub value: f64,
    /// Cross-validated balanced error of the domain classifier.
    pub error: f64,
    /// Set when a side had fewer than 2 samples and `value` defaulted to 2.
    pub degenerate: bool,
}

/// `e eᵀ` for the signed mean-indicator vector of two disjoint index groups.
fn mean_difference_matrix(n: usize, group_a: &[usize], group_b: &[usize]) -> DMatrix<f64> {
    let mut e = DVector::zeros(n);
    let wa = 1.0 / group_a.len() as f64;
    let wb = 1.0 / group_b.len() as f64;
    for &i in group_a {
        e[i] = wa;
    }
    for &j in group_b {
        e[j] = -wb;
    }
    &e * e.transpose()
}

fn target_global(part: &ClassPartition, local: &[usize]) -> Vec<usize> {
    local.iter().map(|j| part.n_source + j).collect()
}

/// Marginal MMD matrix `M₀` between all source samples and the pseudo-known
/// targets. Rows and columns of pseudo-unknown targets are zero.
pub fn mmd_marginal(part: &ClassPartition) -> Result<DMatrix<f64>> {
    if part.target_known.is_empty() {
        return Err(DaodError::EmptyKnownTargets);
    }
    mmd_marginal_over(part, &part.target_known)
}

/// `M₀` with an explicit set of target indices standing in for the
/// pseudo-known targets. Used for the all-targets fallback.
pub fn mmd_marginal_over(part: &ClassPartition, targets: &[usize]) -> Result<DMatrix<f64>> {
    if part.n_source == 0 || targets.is_empty() {
        return Err(DaodError::EmptyKnownTargets);
    }
    let n = part.n_source + part.n_target;
    let source: Vec<usize> = (0..part.n_source).collect();
    Ok(mean_difference_matrix(n, &source, &target_global(part, targets)))
}

/// Conditional MMD matrix `M_c` for 0-based class `c`; zero when the class is
/// empty on either side.
pub fn mmd_conditional(part: &ClassPartition, c: usize) -> DMatrix<f64> {
    let n = part.n_source + part.n_target;
    let (s, t) = (&part.source_by_class[c], &part.target_by_class[c]);
    if s.is_empty() || t.is_empty() {
        return DMatrix::zeros(n, n);
    }
    mean_difference_matrix(n, s, &target_global(part, t))
}

/// `M = μ·M₀ + (1−μ)·Σ_c M_c`.
pub fn combine(m0: DMatrix<f64>, mc: Vec<DMatrix<f64>>, mu: f64) -> Result<AlignmentMatrices> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(DaodError::invalid(format!("adaptive factor mu = {mu} outside [0, 1]")));
    }
    let mut combined = &m0 * mu;
    for m in &mc {
        if m.shape() != m0.shape() {
            return Err(DaodError::invalid("MMD matrices differ in shape"));
        }
        combined += m * (1.0 - mu);
    }
    Ok(AlignmentMatrices { m0, mc, combined, mu })
}

/// Distance between the mean score rows of two index groups.
pub fn projected_mmd(scores: &DMatrix<f64>, group_a: &[usize], group_b: &[usize]) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(DaodError::invalid("projected MMD needs two nonempty groups"));
    }
    let mean = |g: &[usize]| {
        let mut m = nalgebra::RowDVector::zeros(scores.ncols());
        for &i in g {
            m += scores.row(i);
        }
        m / g.len() as f64
    };
    Ok((mean(group_a) - mean(group_b)).norm())
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Splits `0..n` into two folds with a fixed permutation.
fn two_folds(n: usize) -> [Vec<usize>; 2] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(FOLD_SEED));
    let half = n.div_ceil(2);
    let second = idx.split_off(half);
    [idx, second]
}

/// Weighted ridge regression onto ±1 domain labels, bias column appended.
/// Returns the weight vector (length d+1).
fn fit_domain_classifier(pos: &DMatrix<f64>, neg: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (np, nn, d) = (pos.nrows(), neg.nrows(), pos.ncols());
    let n = np + nn;
    let x = DMatrix::from_fn(n, d + 1, |i, j| match (i < np, j == d) {
        (_, true) => 1.0,
        (true, false) => pos[(i, j)],
        (false, false) => neg[(i - np, j)],
    });
    // balanced weights, total weight n
    let wp = n as f64 / (2.0 * np as f64);
    let wn = n as f64 / (2.0 * nn as f64);
    let sqrt_w = DVector::from_fn(n, |i, _| if i < np { wp.sqrt() } else { wn.sqrt() });
    let y = DVector::from_fn(n, |i, _| if i < np { 1.0 } else { -1.0 });
    let b = DMatrix::from_fn(n, d + 1, |i, j| sqrt_w[i] * x[(i, j)]);
    let vy = sqrt_w.component_mul(&y);
    if d < n {
        let mut gram = b.transpose() * &b;
        for i in 0..=d {
            gram[(i, i)] += DOMAIN_CLASSIFIER_RIDGE;
        }
        let chol = gram.cholesky()?;
        Some(chol.solve(&(b.transpose() * vy)))
    } else {
        let mut gram = &b * b.transpose();
        for i in 0..n {
            gram[(i, i)] += DOMAIN_CLASSIFIER_RIDGE;
        }
        let chol = gram.cholesky()?;
        Some(b.transpose() * chol.solve(&vy))
    }
}

fn misclassified(rows: &DMatrix<f64>, w: &DVector<f64>, positive: bool) -> usize {
    let d = rows.ncols();
    (0..rows.nrows())
        .filter(|&i| {
            let s: f64 = (0..d).map(|j| rows[(i, j)] * w[j]).sum::<f64>() + w[d];
            (s >= 0.0) != positive
        })
        .count()
}

/// A-distance proxy `2(1 − ε)` where ε is the 2-fold cross-validated balanced
/// error of a linear domain classifier separating `a` from `b`.
pub fn a_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ADistance> {
    if a.ncols() != b.ncols() {
        return Err(DaodError::invalid("A-distance inputs differ in dimension"));
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Ok(ADistance {
            value: 2.0,
            error: 0.0,
            degenerate: true,
        });
    }
    let folds_a = two_folds(a.nrows());
    let folds_b = two_folds(b.nrows());
    let mut err_sum = 0.0;
    for k in 0..2 {
        let train_a = select_rows(a, &folds_a[1 - k]);
        let train_b = select_rows(b, &folds_b[1 - k]);
        let test_a = select_rows(a, &folds_a[k]);
        let test_b = select_rows(b, &folds_b[k]);
        let w = fit_domain_classifier(&train_a, &train_b).ok_or(DaodError::NumericalFailure {
            condition: f64::INFINITY,
            jitter: 0.0,
        })?;
        let err_a = misclassified(&test_a, &w, true) as f64 / test_a.nrows() as f64;
        let err_b = misclassified(&test_b, &w, false) as f64 / test_b.nrows() as f64;
        err_sum += 0.5 * (err_a + err_b);
    }
    let error = err_sum / 2.0;
    Ok(ADistance {
        value: a_distance_from_error(error),
        error,
        degenerate: false,
    })
}

/// `2(1 − ε)` clamped to `[0, 2]`.
pub fn a_distance_from_error(error: f64) -> f64 {
    (2.0 * (1.0 - error)).clamp(0.0, 2.0)
}

/// `μ = 1 − d0 / (d0 + Σ d_c)`, or 0.5 when the denominator vanishes.
pub fn mu_from_distances(d0: f64, dc_sum: f64) -> f64 {
    let denom = d0 + dc_sum;
    if denom > 0.0 {
        (1.0 - d0 / denom).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn adaptive_factor(
    source: &LabeledDataset,
    target: &UnlabeledTarget,
    part: &ClassPartition,
) -> Result<AdaptiveFactorReport> {
    let mut warnings = Vec::new();
    let c = part.num_classes();
    if part.target_known.is_empty() {
        warnings.push("no pseudo-known targets; marginal-only alignment (mu = 1)".to_string());
        return Ok(AdaptiveFactorReport {
            d0: None,
            dc: vec![None; c],
            mu: 1.0,
            warnings,
        });
    }
    let xs = source.features();
    let xt = target.features();
    let d0 = a_distance(xs, &select_rows(xt, &part.target_known))?;
    if d0.degenerate {
        warnings.push("marginal A-distance computed from fewer than 2 samples".to_string());
    }
    let mut dc = Vec::with_capacity(c);
    for k in 0..c {
        let (s, t) = (&part.source_by_class[k], &part.target_by_class[k]);
        if s.is_empty() || t.is_empty() {
            dc.push(None);
            continue;
        }
        let dk = a_distance(&select_rows(xs, s), &select_rows(xt, t))?;
        if dk.degenerate {
            warnings.push(format!("class {} A-distance computed from fewer than 2 samples", k + 1));
        }
        dc.push(Some(dk.value));
    }
    let dc_sum: f64 = dc.iter().flatten().sum();
    Ok(AdaptiveFactorReport {
        d0: Some(d0.value),
        mu: mu_from_distances(d0.value, dc_sum),
        dc,
        warnings,
    })
}

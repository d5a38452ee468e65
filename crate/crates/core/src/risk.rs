//! Squared-loss empirical risks and the empirical open set difference.

use nalgebra::{DMatrix, RowDVector};
use serde::Serialize;

use crate::error::{DaodError, Result};

/// Where the `1 − π` weight of the open set difference came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorWeighting {
    /// No estimate supplied; the weight is 1.
    Unweighted,
    /// Supplied by the caller.
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    /// Source risk against the true labels.
    pub r_s_hat: f64,
    /// Source risk of being scored as unknown.
    pub r_s_u: f64,
    /// Target risk of being scored as unknown.
    pub r_t_u: f64,
    /// `r_t_u / prior_complement − r_s_u`. Not clamped; may be negative.
    pub delta_o_hat: f64,
    pub prior_complement: f64,
    pub prior_weighting: PriorWeighting,
}

pub fn squared_loss(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(DaodError::invalid(format!(
            "loss operands have lengths {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Squared loss of one score row against the one-hot vector of `class`.
pub fn loss_to_one_hot(row: &RowDVector<f64>, class: usize) -> f64 {
    row.iter()
        .enumerate()
        .map(|(k, &v)| {
            let target = if k == class { 1.0 } else { 0.0 };
            (v - target) * (v - target)
        })
        .sum()
}

/// Empirical risks of a score matrix whose rows are the stacked samples
/// (source rows first) and whose `C+1` columns are class scores.
///
/// `source_labels` are 0-based. `prior_complement` is the `1 − π` weight;
/// `None` means unweighted (1).
pub fn empirical_risks(
    scores: &DMatrix<f64>,
    source_labels: &[usize],
    prior_complement: Option<f64>,
) -> Result<RiskReport> {
    let ns = source_labels.len();
    let n = scores.nrows();
    if ns == 0 {
        return Err(DaodError::invalid("empirical risks need at least one source sample"));
    }
    if n <= ns {
        return Err(DaodError::invalid("empirical risks need at least one target sample"));
    }
    let unknown = scores
        .ncols()
        .checked_sub(1)
        .ok_or_else(|| DaodError::invalid("score matrix has no columns"))?;
    if let Some(&l) = source_labels.iter().find(|&&l| l >= unknown) {
        return Err(DaodError::invalid(format!("source label {l} is not a known class")));
    }
    let (prior_complement, prior_weighting) = match prior_complement {
        None => (1.0, PriorWeighting::Unweighted),
        Some(p) if p > 0.0 && p <= 1.0 => (p, PriorWeighting::Supplied),
        Some(p) => return Err(DaodError::invalid(format!("prior complement {p} outside (0, 1]"))),
    };

    let mut r_s_hat = 0.0;
    let mut r_s_u = 0.0;
    for (i, &l) in source_labels.iter().enumerate() {
        let row = scores.row(i).into_owned();
        r_s_hat += loss_to_one_hot(&row, l);
        r_s_u += loss_to_one_hot(&row, unknown);
    }
    let nt = n - ns;
    let r_t_u: f64 = (ns..n)
        .map(|j| loss_to_one_hot(&scores.row(j).into_owned(), unknown))
        .sum();
    let (r_s_hat, r_s_u, r_t_u) = (r_s_hat / ns as f64, r_s_u / ns as f64, r_t_u / nt as f64);
    Ok(RiskReport {
        r_s_hat,
        r_s_u,
        r_t_u,
        delta_o_hat: r_t_u / prior_complement - r_s_u,
        prior_complement,
        prior_weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_scores(n: usize, row: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, row.len(), |_, j| row[j])
    }

    #[test]
    fn squared_loss_examples() {
        assert_eq!(squared_loss(&[0.2, 0.3], &[0.2, 0.3]).unwrap(), 0.0);
        assert_eq!(squared_loss(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(squared_loss(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(squared_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn all_unknown_scorer() {
        // C = 2, h ≡ y_{C+1}
        let s = constant_scores(5, &[0.0, 0.0, 1.0]);
        let r = empirical_risks(&s, &[0, 0, 0], None).unwrap();
        assert_eq!(r.r_t_u, 0.0);
        assert_eq!(r.r_s_u, 0.0);
        assert_eq!(r.delta_o_hat, 0.0);
        assert_eq!(r.r_s_hat, 2.0);
        assert_eq!(r.prior_weighting, PriorWeighting::Unweighted);
    }

    #[test]
    fn first_class_scorer_with_prior() {
        let s = constant_scores(6, &[1.0, 0.0, 0.0]);
        let r = empirical_risks(&s, &[0, 1, 0], Some(0.5)).unwrap();
        assert_eq!(r.r_t_u, 2.0);
        assert_eq!(r.r_s_u, 2.0);
        assert_eq!(r.delta_o_hat, 2.0);
        assert_eq!(r.prior_weighting, PriorWeighting::Supplied);
    }

    #[test]
    fn unweighted_delta_is_plain_difference() {
        let s = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let r = empirical_risks(&s, &[0, 1, 1], None).unwrap();
        assert_eq!(r.delta_o_hat, r.r_t_u - r.r_s_u);
    }

    #[test]
    fn delta_not_clamped() {
        // targets scored unknown, sources scored class 1: r_t_u = 0, r_s_u = 2
        let mut s = constant_scores(4, &[1.0, 0.0]);
        s.row_mut(2).copy_from_slice(&[0.0, 1.0]);
        s.row_mut(3).copy_from_slice(&[0.0, 1.0]);
        let r = empirical_risks(&s, &[0, 0], None).unwrap();
        assert_eq!(r.delta_o_hat, -2.0);
    }

    #[test]
    fn opposing_risks_along_score_path() {
        // targets move toward y_{C+1}, sources move away from it
        let mut last: Option<RiskReport> = None;
        for step in 0..=10 {
            let a = step as f64 / 10.0;
            let mut s = DMatrix::zeros(6, 2);
            for i in 0..3 {
                s.row_mut(i).copy_from_slice(&[0.5 + 0.5 * a, 0.5 - 0.5 * a]);
            }
            for j in 3..6 {
                s.row_mut(j).copy_from_slice(&[1.0 - a, a]);
            }
            let r = empirical_risks(&s, &[0, 0, 0], None).unwrap();
            if let Some(prev) = last {
                assert!(r.r_t_u < prev.r_t_u);
                assert!(r.r_s_u > prev.r_s_u);
            }
            last = Some(r);
        }
        assert_eq!(last.unwrap().r_t_u, 0.0);
    }

    #[test]
    fn input_errors() {
        let s = constant_scores(3, &[1.0, 0.0]);
        assert!(empirical_risks(&s, &[], None).is_err());
        assert!(empirical_risks(&s, &[0, 0, 0], None).is_err());
        assert!(empirical_risks(&s, &[0], Some(0.0)).is_err());
        assert!(empirical_risks(&s, &[1], None).is_err());
    }
}

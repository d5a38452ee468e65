//! Gaussian kernel with a median-distance bandwidth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::sq_dist;
use crate::error::{DaodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    bandwidth: f64,
}

impl KernelConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if bandwidth.is_finite() && bandwidth > 0.0 {
            Ok(Self { bandwidth })
        } else {
            Err(DaodError::invalid(format!(
                "kernel bandwidth {bandwidth} must be finite and > 0"
            )))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `exp(-‖a−b‖² / (2r²))` given the squared distance.
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Gram matrix over the stacked samples, source rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    /// Wraps an arbitrary symmetric matrix. Intended for tests that need a
    /// hand-chosen Gram matrix.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

/// Median of the Euclidean distances over all pairs `i < j`.
///
/// Self-pairs are excluded. For an even number of pairs the two middle values
/// are averaged.
pub fn median_bandwidth(points: &DMatrix<f64>) -> Result<KernelConfig> {
    let n = points.nrows();
    if n < 2 {
        return Err(DaodError::invalid("median bandwidth needs at least 2 points"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(points.row(i).transpose().as_view(), points.row(j).transpose().as_view()).sqrt();
            if !d.is_finite() {
                return Err(DaodError::invalid(format!(
                    "non-finite distance between rows {i} and {j}"
                )));
            }
            dists.push(d);
        }
    }
    let m = dists.len();
    let mid = m / 2;
    let (lower, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if m % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    };
    if median <= 0.0 {
        return Err(DaodError::Degenerate(
            "median pairwise distance is 0 (points coincide)".into(),
        ));
    }
    KernelConfig::new(median)
}

pub fn kernel_matrix(points: &DMatrix<f64>, cfg: &KernelConfig) -> Result<KernelMatrix> {
    if let Some(r) = (0..points.nrows()).find(|&r| points.row(r).iter().any(|v| !v.is_finite())) {
        return Err(DaodError::invalid(format!("row {r} contains a non-finite value")));
    }
    let n = points.nrows();
    let rows: Vec<_> = (0..n).map(|i| points.row(i).transpose()).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = cfg.eval_sq_dist(sq_dist(rows[i].as_view(), rows[j].as_view()));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn median_of_three_collinear_points() {
        let cfg = median_bandwidth(&pts(&[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert_eq!(cfg.bandwidth(), 1.0);
    }

    #[test]
    fn median_of_single_pair() {
        let cfg = median_bandwidth(&pts(&[&[0.0, 0.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(cfg.bandwidth(), 5.0);
    }

    #[test]
    fn median_even_pair_count_averages_middle() {
        // 4 points on a line: pairs {1,2,3,1,2,1} -> sorted 1,1,1,2,2,3 -> (1+2)/2
        let cfg = median_bandwidth(&pts(&[&[0.0], &[1.0], &[2.0], &[3.0]])).unwrap();
        assert_eq!(cfg.bandwidth(), 1.5);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let err = median_bandwidth(&pts(&[&[1.0, 2.0], &[1.0, 2.0]])).unwrap_err();
        assert!(matches!(err, DaodError::Degenerate(_)));
        assert!(median_bandwidth(&pts(&[&[1.0]])).is_err());
    }

    #[test]
    fn kernel_values_at_known_distances() {
        let cfg = KernelConfig::new(2.0).unwrap();
        let k = kernel_matrix(&pts(&[&[0.0], &[2.0], &[4.0]]), &cfg).unwrap();
        let k = k.as_matrix();
        for i in 0..3 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert_relative_eq!(k[(0, 1)], 0.606_530_659_712_633, epsilon = 1e-12);
        assert_relative_eq!(k[(0, 2)], 0.135_335_283_236_613, epsilon = 1e-12);
        assert_eq!(k[(0, 2)], k[(2, 0)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KernelConfig::new(0.0).is_err());
        assert!(KernelConfig::new(f64::INFINITY).is_err());
        let cfg = KernelConfig::new(1.0).unwrap();
        assert!(kernel_matrix(&pts(&[&[0.0], &[f64::NAN]]), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn kernel_matrix_is_symmetric_psd(
            data in proptest::collection::vec(-5.0f64..5.0, 6..90),
            perm_seed in any::<u64>(),
        ) {
            let d = 3;
            let n = data.len() / d;
            prop_assume!(n >= 2);
            let x = DMatrix::from_fn(n, d, |i, j| data[i * d + j]);
            let cfg = match median_bandwidth(&x) { Ok(c) => c, Err(_) => return Ok(()) };
            let k = kernel_matrix(&x, &cfg).unwrap().into_matrix();
            for i in 0..n {
                prop_assert_eq!(k[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert_eq!(k[(i, j)], k[(j, i)]);
                    prop_assert!(k[(i, j)] > 0.0 || k[(i, j)] == 0.0 && i != j);
                    prop_assert!(k[(i, j)] <= 1.0);
                }
            }
            let min_eig = k.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= -1e-10 * n as f64, "min eigenvalue {}", min_eig);

            // permuting rows permutes the Gram matrix
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let xp = DMatrix::from_fn(n, d, |i, j| x[(perm[i], j)]);
            let kp = kernel_matrix(&xp, &cfg).unwrap().into_matrix();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(kp[(i, j)], k[(perm[i], perm[j])]);
                }
            }
        }
    }
}

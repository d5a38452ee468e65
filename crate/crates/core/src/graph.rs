//! p-nearest-neighbour affinity graph and its unnormalized Laplacian.
//!
//! Neighbourhoods are Euclidean; edge weights are cosine similarities clamped
//! at zero. An edge exists when either endpoint is among the other's `p`
//! nearest neighbours. Distance ties go to the lower index.

use nalgebra::DMatrix;

use crate::dataset::sq_dist;
use crate::error::{DaodError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: DMatrix<f64>,
    neighbor_count: usize,
}

impl AffinityGraph {
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    /// Wraps a symmetric nonnegative zero-diagonal weight matrix.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(DaodError::invalid("affinity matrix must be square"));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(DaodError::invalid(format!("affinity diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !(w.is_finite() && w >= 0.0) || w != weights[(j, i)] {
                    return Err(DaodError::invalid(format!(
                        "affinity entry ({i},{j}) must be finite, nonnegative and symmetric"
                    )));
                }
            }
        }
        Ok(Self {
            weights,
            neighbor_count: 0,
        })
    }
}

/// `L = D − W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }
}

pub fn knn_affinity(points: &DMatrix<f64>, p: usize) -> Result<AffinityGraph> {
    let n = points.nrows();
    if p == 0 || p >= n {
        return Err(DaodError::invalid(format!(
            "neighbour count p = {p} must satisfy 1 <= p < {n}"
        )));
    }
    let rows: Vec<_> = (0..n).map(|i| points.row(i).transpose()).collect();
    let norms: Vec<f64> = rows.iter().map(|r| r.norm()).collect();
    if let Some(i) = norms.iter().position(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(DaodError::Degenerate(format!(
            "row {i} has zero or non-finite norm; cosine similarity is undefined"
        )));
    }

    let mut linked = vec![false; n * n];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(rows[i].as_view(), rows[j].as_view()), j)),
        );
        order.select_nth_unstable_by(p - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &order[..p] {
            linked[i * n + j] = true;
            linked[j * n + i] = true;
        }
    }

    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if linked[i * n + j] {
                let cos = rows[i].dot(&rows[j]) / (norms[i] * norms[j]);
                let v = cos.clamp(0.0, 1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Ok(AffinityGraph {
        weights: w,
        neighbor_count: p,
    })
}

pub fn laplacian(g: &AffinityGraph) -> LaplacianMatrix {
    let mut l = -g.weights.clone();
    for i in 0..l.nrows() {
        l[(i, i)] = g.weights.row(i).sum();
    }
    LaplacianMatrix(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn three_points() -> DMatrix<f64> {
        pts(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0]])
    }

    #[test]
    fn three_node_example() {
        let g = knn_affinity(&three_points(), 1).unwrap();
        let w = g.weights();
        assert_relative_eq!(w[(0, 1)], 0.9 / 0.82f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(w[(0, 1)], 0.99388, epsilon = 1e-5);
        assert_relative_eq!(w[(2, 1)], 0.11043, epsilon = 1e-5);
        assert_eq!(w[(0, 2)], 0.0);
        assert_eq!(w[(1, 2)], w[(2, 1)]);
        for i in 0..3 {
            assert_eq!(w[(i, i)], 0.0);
        }
    }

    #[test]
    fn parallel_vectors_fully_connected() {
        let x = pts(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0], &[0.5, 0.5]]);
        let g = knn_affinity(&x, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.0 } else { 1.0 };
                assert_relative_eq!(g.weights()[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_norm_row_is_rejected() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]);
        let err = knn_affinity(&x, 1).unwrap_err();
        assert!(err.to_string().contains("row 1"));
        assert!(knn_affinity(&three_points(), 3).is_err());
    }

    #[test]
    fn negative_cosine_clamped() {
        let x = pts(&[&[1.0, 0.0], &[-1.0, 0.1], &[5.0, 5.0]]);
        let g = knn_affinity(&x, 2).unwrap();
        assert_eq!(g.weights()[(0, 1)], 0.0);
    }

    #[test]
    fn two_node_laplacian() {
        let g = AffinityGraph::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let l = laplacian(&g);
        assert_eq!(l.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn three_node_quadratic_form_matches_pair_sum() {
        let g = knn_affinity(&three_points(), 1).unwrap();
        let l = laplacian(&g);
        let x = nalgebra::DVector::from_vec(vec![0.3, -1.2, 2.5]);
        let quad = (x.transpose() * l.as_matrix() * &x)[(0, 0)];
        let w = g.weights();
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                brute += w[(i, j)] * (x[i] - x[j]).powi(2);
            }
        }
        assert_relative_eq!(quad, 0.5 * brute, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn laplacian_invariants(
            data in proptest::collection::vec(0.1f64..5.0, 12..120),
            p in 1usize..6,
            h in proptest::collection::vec(-3.0f64..3.0, 120 * 3),
        ) {
            let d = 3;
            let n = data.len() / d;
            prop_assume!(p < n);
            let x = DMatrix::from_fn(n, d, |i, j| data[i * d + j]);
            let g = knn_affinity(&x, p).unwrap();
            let w = g.weights();
            // edges only between p-NN related pairs (brute-force full sort)
            let nn: Vec<Vec<usize>> = (0..n).map(|i| {
                let mut o: Vec<(f64, usize)> = (0..n).filter(|&j| j != i)
                    .map(|j| ((x.row(i) - x.row(j)).norm_squared(), j)).collect();
                o.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                o[..p].iter().map(|e| e.1).collect()
            }).collect();
            for i in 0..n {
                for j in 0..n {
                    if w[(i, j)] > 0.0 {
                        prop_assert!(nn[i].contains(&j) || nn[j].contains(&i));
                    }
                }
            }
            let l = laplacian(&g);
            let lm = l.as_matrix();
            for i in 0..n {
                prop_assert!(lm.row(i).sum().abs() < 1e-12);
                for j in 0..n {
                    prop_assert_eq!(lm[(i, j)], lm[(j, i)]);
                    if i != j { prop_assert!(lm[(i, j)] <= 0.0); }
                }
            }
            let min_eig = lm.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= -1e-10, "min eigenvalue {}", min_eig);

            // Σ_c H_cᵀ L H_c = ½ Σ_ij W_ij ‖H_i − H_j‖²
            let scores = DMatrix::from_fn(n, 3, |i, c| h[i * 3 + c]);
            let trace = (scores.transpose() * lm * &scores).trace();
            let mut brute = 0.0;
            for i in 0..n {
                for j in 0..n {
                    brute += w[(i, j)] * (scores.row(i) - scores.row(j)).norm_squared();
                }
            }
            prop_assert!((trace - 0.5 * brute).abs() <= 1e-10 * brute.abs().max(1e-300) + 1e-14);
        }
    }
}

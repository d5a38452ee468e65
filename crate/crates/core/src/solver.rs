//! Label and weight matrices, the reformulated objective, its closed-form
//! minimizer, and the pseudo-label refinement loop.
//!
//! With `n = n_s + n_t` stacked samples, `C` known classes and coefficients
//! `β ∈ R^{n×(C+1)}`, the objective is
//!
//! ```text
//! L(β) = ‖(Y − βᵀK)A‖²_F − γ‖(Ỹ − βᵀK)Ã‖²_F + tr(βᵀK(λM + 2ρL)Kβ) + σ tr(βᵀKβ)
//! ```
//!
//! The Laplacian enters as `2L` so that the manifold term equals
//! `Σ_ij W_ij ‖h(x_i) − h(x_j)‖²` exactly. Setting the gradient
//! `2K[(A² − γÃ² + λM + 2ρL)Kβ + σβ − (A²Yᵀ − γÃ²Ỹᵀ)]` to zero and cancelling
//! the invertible `K` gives the linear system solved by [`solve_beta`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::alignment::{adaptive_factor, combine, mmd_conditional, mmd_marginal, mmd_marginal_over, AlignmentMatrices};
use crate::dataset::{
    partition_by_class, stack_features, validate_pair, Hyperparams, LabelAssignment, LabeledDataset, UnknownPush,
    UnlabeledTarget,
};
use crate::error::{DaodError, Result};
use crate::graph::{knn_affinity, laplacian, LaplacianMatrix};
use crate::kernel::{kernel_matrix, median_bandwidth, KernelConfig, KernelMatrix};
use crate::pseudolabel::label_targets;
use crate::risk::{empirical_risks, RiskReport};

/// Largest jitter tried before [`solve_beta`] gives up.
pub const MAX_JITTER: f64 = 1e-4;

/// Coefficients of `h(x) = Σ_i β_i k(x_i, x)`, one row per stacked sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCoefficients(DMatrix<f64>);

impl ScoreCoefficients {
    pub fn new(beta: DMatrix<f64>) -> Result<Self> {
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(DaodError::invalid("coefficients must be finite"));
        }
        Ok(Self(beta))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Everything the objective and its minimizer need for one iteration.
#[derive(Debug, Clone)]
pub struct SolveSystem<'a> {
    /// `(C+1) × n` label matrix.
    pub y: DMatrix<f64>,
    /// `(C+1) × n`; ones in the unknown row for source columns.
    pub y_tilde: DMatrix<f64>,
    /// Diagonal of `A²`.
    pub a_sq: DVector<f64>,
    /// Diagonal of `Ã²`.
    pub a_tilde_sq: DVector<f64>,
    pub k: &'a KernelMatrix,
    pub m: DMatrix<f64>,
    pub l: &'a LaplacianMatrix,
    pub hp: Hyperparams,
    pub n_source: usize,
}

/// The four pieces of the objective, each already multiplied by its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    /// `‖(Y − βᵀK)A‖²_F`.
    pub weighted_loss: f64,
    /// `γ‖(Ỹ − βᵀK)Ã‖²_F` (subtracted).
    pub open_set_penalty: f64,
    /// `λ tr(βᵀKMKβ)`.
    pub alignment: f64,
    /// `ρ tr(βᵀK(2L)Kβ)`.
    pub manifold: f64,
    /// `σ tr(βᵀKβ)`.
    pub ridge: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.weighted_loss - self.open_set_penalty + self.alignment + self.manifold + self.ridge
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: ScoreCoefficients,
    /// Jitter added to the diagonal of `K` for the solve (0 when none was
    /// needed).
    pub jitter: f64,
    /// Frobenius norm of `((…)K + σI)β − RHS`.
    pub residual: f64,
}

pub fn build_system<'a>(
    source: &LabeledDataset,
    pseudo: &LabelAssignment,
    k: &'a KernelMatrix,
    m: DMatrix<f64>,
    l: &'a LaplacianMatrix,
    hp: &Hyperparams,
) -> Result<SolveSystem<'a>> {
    let (ns, nt, c) = (source.len(), pseudo.len(), source.num_classes());
    let n = ns + nt;
    if pseudo.num_classes() != c {
        return Err(DaodError::invalid(
            "pseudo-labels and source disagree on the number of classes",
        ));
    }
    if k.size() != n || l.size() != n || m.shape() != (n, n) {
        return Err(DaodError::invalid(format!(
            "matrices must be {n}×{n} (K {0}×{0}, L {1}×{1}, M {2}×{3})",
            k.size(),
            l.size(),
            m.nrows(),
            m.ncols()
        )));
    }
    let mut y = DMatrix::zeros(c + 1, n);
    for (i, &lab) in source.labels().iter().enumerate() {
        y[(lab, i)] = 1.0;
    }
    for j in 0..nt {
        let push = match hp.unknown_push() {
            UnknownPush::PseudoUnknownOnly => pseudo.is_unknown(j),
            UnknownPush::AllTargets => true,
        };
        if push {
            y[(c, ns + j)] = 1.0;
        }
    }
    let mut y_tilde = DMatrix::zeros(c + 1, n);
    for i in 0..ns {
        y_tilde[(c, i)] = 1.0;
    }
    let a_sq = DVector::from_fn(n, |i, _| {
        if i < ns {
            1.0 / ns as f64
        } else {
            hp.alpha() / nt as f64
        }
    });
    let a_tilde_sq = DVector::from_fn(n, |i, _| if i < ns { 1.0 / ns as f64 } else { 0.0 });
    Ok(SolveSystem {
        y,
        y_tilde,
        a_sq,
        a_tilde_sq,
        k,
        m,
        l,
        hp: *hp,
        n_source: ns,
    })
}

impl SolveSystem<'_> {
    pub fn size(&self) -> usize {
        self.a_sq.len()
    }

    /// `λM + 2ρL`.
    pub fn regularizer(&self) -> DMatrix<f64> {
        &self.m * self.hp.lambda() + self.l.as_matrix() * (2.0 * self.hp.rho())
    }

    /// `A² − γÃ² + λM + 2ρL`.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let mut s = self.regularizer();
        let g = self.hp.gamma();
        for i in 0..self.size() {
            s[(i, i)] += self.a_sq[i] - g * self.a_tilde_sq[i];
        }
        s
    }

    /// `A²Yᵀ − γÃ²Ỹᵀ`, an `n × (C+1)` matrix.
    pub fn rhs(&self) -> DMatrix<f64> {
        let g = self.hp.gamma();
        DMatrix::from_fn(self.size(), self.y.nrows(), |i, c| {
            self.a_sq[i] * self.y[(c, i)] - g * self.a_tilde_sq[i] * self.y_tilde[(c, i)]
        })
    }

    /// `(A² − γÃ² + λM + 2ρL)K + σI` with `jitter` added to the diagonal of K.
    pub fn system_matrix(&self, jitter: f64) -> DMatrix<f64> {
        let k = self.jittered_kernel(jitter);
        let mut a = self.weight_matrix() * k;
        for i in 0..self.size() {
            a[(i, i)] += self.hp.sigma();
        }
        a
    }

    /// Hessian of the objective up to a factor 2:
    /// `K(A² − γÃ² + λM + 2ρL)K + σK`, with jittered K.
    pub fn quadratic_form_matrix(&self, jitter: f64) -> DMatrix<f64> {
        let k = self.jittered_kernel(jitter);
        let mut q = &k * self.weight_matrix() * &k + &k * self.hp.sigma();
        q = (&q + q.transpose()) * 0.5;
        q
    }

    fn jittered_kernel(&self, jitter: f64) -> DMatrix<f64> {
        let mut k = self.k.as_matrix().clone();
        if jitter > 0.0 {
            for i in 0..k.nrows() {
                k[(i, i)] += jitter;
            }
        }
        k
    }

    /// Analytic gradient `2K[(A² − γÃ² + λM + 2ρL)Kβ + σβ − RHS]`.
    pub fn gradient(&self, beta: &ScoreCoefficients) -> DMatrix<f64> {
        let b = beta.as_matrix();
        let k = self.k.as_matrix();
        let inner = self.weight_matrix() * (k * b) + b * self.hp.sigma() - self.rhs();
        k * inner * 2.0
    }
}

pub fn objective_terms(sys: &SolveSystem<'_>, beta: &ScoreCoefficients) -> ObjectiveTerms {
    let b = beta.as_matrix();
    // rows of H are h(x_j)ᵀ, i.e. H = (βᵀK)ᵀ
    let h = sys.k.as_matrix() * b;
    let ht = h.transpose();
    let a = DMatrix::from_diagonal(&sys.a_sq.map(f64::sqrt));
    let a_tilde = DMatrix::from_diagonal(&sys.a_tilde_sq.map(f64::sqrt));
    let weighted_loss = ((&sys.y - &ht) * a).norm_squared();
    let open = ((&sys.y_tilde - &ht) * a_tilde).norm_squared();
    let alignment = sys.hp.lambda() * (h.transpose() * &sys.m * &h).trace();
    let manifold = 2.0 * sys.hp.rho() * (h.transpose() * sys.l.as_matrix() * &h).trace();
    let ridge = sys.hp.sigma() * (b.transpose() * &h).trace();
    ObjectiveTerms {
        weighted_loss,
        open_set_penalty: sys.hp.gamma() * open,
        alignment,
        manifold,
        ridge,
    }
}

pub fn objective(sys: &SolveSystem<'_>, beta: &ScoreCoefficients) -> f64 {
    objective_terms(sys, beta).total()
}

fn try_solve(sys: &SolveSystem<'_>, jitter: f64, rhs: &DMatrix<f64>) -> std::result::Result<Solution, f64> {
    let a = sys.system_matrix(jitter);
    let lu = a.clone().lu();
    let diag = lu.u().diagonal().map(f64::abs);
    let condition = diag.max() / diag.min();
    let beta = lu.solve(rhs).ok_or(f64::INFINITY)?;
    if beta.iter().any(|v| !v.is_finite()) || !condition.is_finite() || condition > 1e14 {
        return Err(condition);
    }
    let residual = (&a * &beta - rhs).norm();
    let scale = rhs.norm().max(1.0);
    if residual > 1e-8 * scale {
        return Err(condition);
    }
    Ok(Solution {
        beta: ScoreCoefficients(beta),
        jitter,
        residual,
    })
}

/// Closed-form minimizer
/// `β = ((A² − γÃ² + λM + 2ρL)K + σI)⁻¹ (A²Yᵀ − γÃ²Ỹᵀ)`.
///
/// Solved by LU with partial pivoting. If the factorization is unusable the
/// solve is retried with `jitter·I` added to K, escalating ×10 up to
/// [`MAX_JITTER`].
pub fn solve_beta(sys: &SolveSystem<'_>) -> Result<Solution> {
    if sys.hp.gamma() >= 1.0 || sys.hp.gamma().is_nan() {
        return Err(DaodError::InvalidHyperparam {
            name: "gamma",
            reason: "must be < 1 for a unique minimizer".into(),
        });
    }
    let rhs = sys.rhs();
    let mut condition = match try_solve(sys, 0.0, &rhs) {
        Ok(s) => return Ok(s),
        Err(cond) => cond,
    };
    let mut jitter = sys.hp.jitter();
    while jitter > 0.0 && jitter <= MAX_JITTER * (1.0 + 1e-9) {
        match try_solve(sys, jitter, &rhs) {
            Ok(s) => return Ok(s),
            Err(cond) => condition = cond,
        }
        jitter *= 10.0;
    }
    Err(DaodError::NumericalFailure {
        condition,
        jitter: jitter.min(MAX_JITTER),
    })
}

/// Scores `Kβ` for every stacked sample and argmax labels for the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `n × (C+1)`, row `i` is `h(x_i)`.
    pub scores: DMatrix<f64>,
    pub target_labels: LabelAssignment,
}

/// Labels each target by the argmax of its score over `1..=C+1`, ties to the
/// lower class.
pub fn predict(beta: &ScoreCoefficients, k: &KernelMatrix, n_source: usize) -> Result<Prediction> {
    let b = beta.as_matrix();
    if b.nrows() != k.size() || n_source > k.size() || b.ncols() < 2 {
        return Err(DaodError::invalid("coefficients and kernel matrix are not conformable"));
    }
    let scores = k.as_matrix() * b;
    let labels = (n_source..scores.nrows())
        .map(|j| argmax(scores.row(j).iter().copied()))
        .collect();
    let target_labels = LabelAssignment::new(labels, b.ncols() - 1)?;
    Ok(Prediction { scores, target_labels })
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in values.enumerate() {
        if i == 0 || v > best.0 || (best.0.is_nan() && !v.is_nan()) {
            best = (v, i);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    pub d0: Option<f64>,
    pub dc: Vec<Option<f64>>,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    /// Pseudo-labels that changed in this iteration.
    pub changed: usize,
    pub unknown_count: usize,
    /// No target was pseudo-known; `M₀` used all targets and μ was 1.
    pub empty_known_fallback: bool,
    pub jitter: f64,
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// Outcome of [`daod_fit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub num_classes: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub bandwidth: f64,
    pub initial_pseudo_labels: LabelAssignment,
    pub iterations: Vec<IterationRecord>,
    /// Pseudo-labels after each iteration.
    pub pseudo_history: Vec<LabelAssignment>,
    pub predictions: LabelAssignment,
    pub risk: RiskReport,
    #[serde(skip)]
    pub beta: ScoreCoefficients,
    #[serde(skip)]
    pub scores: DMatrix<f64>,
}

/// Kernel, Laplacian and bandwidth for the stacked samples. None of these
/// depend on the pseudo-labels.
pub struct StaticMatrices {
    pub bandwidth: KernelConfig,
    pub k: KernelMatrix,
    pub l: LaplacianMatrix,
}

pub fn static_matrices(source: &LabeledDataset, target: &UnlabeledTarget, hp: &Hyperparams) -> Result<StaticMatrices> {
    let x = stack_features(source.features(), target.features());
    let bandwidth = match hp.bandwidth() {
        Some(r) => KernelConfig::new(r)?,
        None => median_bandwidth(&x)?,
    };
    let k = kernel_matrix(&x, &bandwidth)?;
    let l = if hp.rho() > 0.0 {
        laplacian(&knn_affinity(&x, hp.neighbors())?)
    } else {
        laplacian(&crate::graph::AffinityGraph::from_weights(DMatrix::zeros(
            x.nrows(),
            x.nrows(),
        ))?)
    };
    Ok(StaticMatrices { bandwidth, k, l })
}

/// μ and the combined MMD matrix for the current pseudo-labels, with the
/// all-targets fallback when none is pseudo-known.
pub fn alignment_for(
    source: &LabeledDataset,
    target: &UnlabeledTarget,
    pseudo: &LabelAssignment,
) -> Result<(AlignmentMatrices, crate::alignment::AdaptiveFactorReport, bool)> {
    let part = partition_by_class(source, pseudo)?;
    let factor = adaptive_factor(source, target, &part)?;
    let c = source.num_classes();
    match mmd_marginal(&part) {
        Ok(m0) => {
            let mc = (0..c).map(|k| mmd_conditional(&part, k)).collect();
            Ok((combine(m0, mc, factor.mu)?, factor, false))
        }
        Err(DaodError::EmptyKnownTargets) => {
            let all: Vec<usize> = (0..part.n_target).collect();
            let m0 = mmd_marginal_over(&part, &all)?;
            let mc = (0..c).map(|k| mmd_conditional(&part, k)).collect();
            Ok((combine(m0, mc, 1.0)?, factor, true))
        }
        Err(e) => Err(e),
    }
}

/// Full refinement loop: OSNN pseudo-labels, then `T` rounds of
/// align → solve → relabel.
pub fn daod_fit(source: &LabeledDataset, target: &UnlabeledTarget, hp: &Hyperparams) -> Result<RunReport> {
    validate_pair(source, target)?;
    let initial = label_targets(target, source, hp.threshold())?;
    let statics = static_matrices(source, target, hp)?;
    let ns = source.len();

    let mut pseudo = initial.clone();
    let mut iterations = Vec::with_capacity(hp.iterations());
    let mut history = Vec::with_capacity(hp.iterations());
    let mut last = None;
    for it in 1..=hp.iterations() {
        let (align, factor, fallback) = alignment_for(source, target, &pseudo)?;
        let mut warnings = factor.warnings.clone();
        if fallback {
            warnings.push("empty pseudo-known target set: M0 built over all targets".into());
        }
        let sys = build_system(source, &pseudo, &statics.k, align.combined, &statics.l, hp)?;
        let sol = solve_beta(&sys)?;
        let terms = objective_terms(&sys, &sol.beta);
        let pred = predict(&sol.beta, &statics.k, ns)?;
        let changed = pred.target_labels.changes_from(&pseudo);
        pseudo = pred.target_labels.clone();
        iterations.push(IterationRecord {
            iteration: it,
            mu: align.mu,
            d0: factor.d0,
            dc: factor.dc,
            objective: terms.total(),
            terms,
            changed,
            unknown_count: (0..pseudo.len()).filter(|&j| pseudo.is_unknown(j)).count(),
            empty_known_fallback: fallback,
            jitter: sol.jitter,
            residual: sol.residual,
            warnings,
        });
        history.push(pseudo.clone());
        last = Some((sol.beta, pred.scores));
    }
    let (beta, scores) = last.expect("at least one iteration");
    let risk = empirical_risks(&scores, source.labels(), None)?;
    Ok(RunReport {
        num_classes: source.num_classes(),
        n_source: ns,
        n_target: target.len(),
        bandwidth: statics.bandwidth.bandwidth(),
        initial_pseudo_labels: initial,
        iterations,
        pseudo_history: history,
        predictions: pseudo,
        risk,
        beta,
        scores,
    })
}

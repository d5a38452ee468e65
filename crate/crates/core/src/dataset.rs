//! Domain types shared by every stage of the pipeline.
//!
//! Labels enter and leave the library 1-based (`1..=C`, with `C+1` meaning
//! unknown). Internally they are stored 0-based, so the unknown class is `C`.

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{DaodError, Result, Side};

/// Labeled source samples: `n_s × d` features and a class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Builds a dataset from 1-based labels in `1..=num_classes`.
    pub fn new(features: DMatrix<f64>, labels_one_based: &[usize], num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(DaodError::invalid("number of known classes must be at least 1"));
        }
        if labels_one_based.len() != features.nrows() {
            return Err(DaodError::invalid(format!(
                "{} labels for {} feature rows",
                labels_one_based.len(),
                features.nrows()
            )));
        }
        let labels = labels_one_based
            .iter()
            .enumerate()
            .map(|(row, &l)| {
                if (1..=num_classes).contains(&l) {
                    Ok(l - 1)
                } else {
                    Err(DaodError::invalid(format!(
                        "source row {row}: label {l} outside 1..={num_classes}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    /// Like [`LabeledDataset::new`], taking `C` as the largest label present.
    pub fn with_inferred_classes(features: DMatrix<f64>, labels_one_based: &[usize]) -> Result<Self> {
        let c = labels_one_based.iter().copied().max().unwrap_or(0);
        Self::new(features, labels_one_based, c)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// 0-based class of each row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labels_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Target features with no labels attached. Training operations only ever see
/// this type.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledTarget {
    features: DMatrix<f64>,
}

impl UnlabeledTarget {
    pub fn new(features: DMatrix<f64>) -> Self {
        Self { features }
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Held-out target labels, 0-based with `C` meaning unknown. Used only by
/// evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Vec<usize>,
    num_classes: usize,
}

impl GroundTruth {
    pub fn from_one_based(labels: &[usize], num_classes: usize) -> Result<Self> {
        let labels = labels
            .iter()
            .enumerate()
            .map(|(row, &l)| {
                if (1..=num_classes + 1).contains(&l) {
                    Ok(l - 1)
                } else {
                    Err(DaodError::invalid(format!(
                        "ground truth row {row}: label {l} outside 1..={}",
                        num_classes + 1
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, num_classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Target samples plus optional ground truth for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDataset {
    unlabeled: UnlabeledTarget,
    ground_truth: Option<GroundTruth>,
}

impl TargetDataset {
    pub fn new(features: DMatrix<f64>) -> Self {
        Self {
            unlabeled: UnlabeledTarget::new(features),
            ground_truth: None,
        }
    }

    pub fn with_ground_truth(features: DMatrix<f64>, truth: GroundTruth) -> Result<Self> {
        if truth.len() != features.nrows() {
            return Err(DaodError::invalid(format!(
                "ground truth has {} entries for {} target rows",
                truth.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            unlabeled: UnlabeledTarget::new(features),
            ground_truth: Some(truth),
        })
    }

    pub fn unlabeled(&self) -> &UnlabeledTarget {
        &self.unlabeled
    }

    pub fn features(&self) -> &DMatrix<f64> {
        self.unlabeled.features()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unlabeled.is_empty()
    }
}

/// Target label per row, 0-based; the value `num_classes` marks unknown.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelAssignment {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelAssignment {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l > num_classes) {
            return Err(DaodError::invalid(format!(
                "assignment row {row}: class {l} outside 0..={num_classes}"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn from_one_based(labels: &[usize], num_classes: usize) -> Result<Self> {
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l > num_classes + 1) {
            return Err(DaodError::invalid(format!(
                "assignment row {row}: label {l} outside 1..={}",
                num_classes + 1
            )));
        }
        Ok(Self {
            labels: labels.iter().map(|l| l - 1).collect(),
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// 0-based index of the unknown class.
    pub fn unknown(&self) -> usize {
        self.num_classes
    }

    pub fn is_unknown(&self, i: usize) -> bool {
        self.labels[i] == self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of positions where the two assignments differ.
    pub fn changes_from(&self, other: &LabelAssignment) -> usize {
        self.labels.iter().zip(&other.labels).filter(|(a, b)| a != b).count()
    }
}

impl Serialize for LabelAssignment {
    /// Serialized 1-based, `C+1` meaning unknown.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.labels.iter().map(|l| l + 1))
    }
}

/// Which target columns receive a 1 in the unknown row of the label matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPush {
    /// Only targets currently pseudo-labeled unknown.
    #[default]
    PseudoUnknownOnly,
    /// Every target sample.
    AllTargets,
}

/// Every tunable of the objective and the refinement loop.
///
/// Construct through [`Hyperparams::builder`]; `build` rejects invalid values,
/// so a `Hyperparams` in hand always satisfies `gamma < 1`, `sigma > 0` and
/// `0 < t < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperparamsBuilder", into = "HyperparamsBuilder")]
pub struct Hyperparams {
    lambda: f64,
    rho: f64,
    sigma: f64,
    alpha: f64,
    gamma: f64,
    neighbors: usize,
    threshold: f64,
    iterations: usize,
    jitter: f64,
    unknown_push: UnknownPush,
    bandwidth: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        HyperparamsBuilder::default()
            .build()
            .expect("default hyperparameters are valid")
    }
}

impl Hyperparams {
    pub fn builder() -> HyperparamsBuilder {
        HyperparamsBuilder::default()
    }

    pub fn to_builder(&self) -> HyperparamsBuilder {
        HyperparamsBuilder::from(*self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Number of nearest neighbours `p` of the affinity graph.
    pub fn neighbors(&self) -> usize {
        self.neighbors
    }
    /// OSNN distance-ratio threshold `t`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
    /// Number of refinement iterations `T`.
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
    pub fn unknown_push(&self) -> UnknownPush {
        self.unknown_push
    }
    /// Fixed kernel bandwidth; `None` selects the median heuristic.
    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }
}

/// Unvalidated hyperparameters. Also the serialized form of [`Hyperparams`];
/// missing fields take the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamsBuilder {
    pub lambda: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub neighbors: usize,
    pub threshold: f64,
    pub iterations: usize,
    pub jitter: f64,
    pub unknown_push: UnknownPush,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

impl Default for HyperparamsBuilder {
    fn default() -> Self {
        Self {
            lambda: 500.0,
            rho: 1.0,
            sigma: 1.0,
            alpha: 0.4,
            gamma: 0.25,
            neighbors: 10,
            threshold: 0.5,
            iterations: 10,
            jitter: 1e-8,
            unknown_push: UnknownPush::PseudoUnknownOnly,
            bandwidth: None,
        }
    }
}

impl From<Hyperparams> for HyperparamsBuilder {
    fn from(h: Hyperparams) -> Self {
        Self {
            lambda: h.lambda,
            rho: h.rho,
            sigma: h.sigma,
            alpha: h.alpha,
            gamma: h.gamma,
            neighbors: h.neighbors,
            threshold: h.threshold,
            iterations: h.iterations,
            jitter: h.jitter,
            unknown_push: h.unknown_push,
            bandwidth: h.bandwidth,
        }
    }
}

impl TryFrom<HyperparamsBuilder> for Hyperparams {
    type Error = DaodError;

    fn try_from(b: HyperparamsBuilder) -> Result<Self> {
        b.build()
    }
}

macro_rules! setter {
    ($name:ident: $ty:ty) => {
        pub fn $name(mut self, v: $ty) -> Self {
            self.$name = v;
            self
        }
    };
}

impl HyperparamsBuilder {
    setter!(lambda: f64);
    setter!(rho: f64);
    setter!(sigma: f64);
    setter!(alpha: f64);
    setter!(gamma: f64);
    setter!(neighbors: usize);
    setter!(threshold: f64);
    setter!(iterations: usize);
    setter!(jitter: f64);
    setter!(unknown_push: UnknownPush);
    setter!(bandwidth: Option<f64>);

    pub fn build(self) -> Result<Hyperparams> {
        fn bad(name: &'static str, reason: impl Into<String>) -> DaodError {
            DaodError::InvalidHyperparam {
                name,
                reason: reason.into(),
            }
        }
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(bad(name, format!("{v} must be finite and >= 0")))
            }
        };
        nonneg("lambda", self.lambda)?;
        nonneg("rho", self.rho)?;
        nonneg("alpha", self.alpha)?;
        nonneg("jitter", self.jitter)?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(bad("sigma", format!("{} must be > 0", self.sigma)));
        }
        if !(self.gamma.is_finite() && (0.0..1.0).contains(&self.gamma)) {
            return Err(bad("gamma", format!("{} must lie in [0, 1)", self.gamma)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(bad("threshold", format!("{} must lie in (0, 1)", self.threshold)));
        }
        if self.neighbors == 0 {
            return Err(bad("neighbors", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(bad("iterations", "must be at least 1"));
        }
        if let Some(r) = self.bandwidth {
            if !(r.is_finite() && r > 0.0) {
                return Err(bad("bandwidth", format!("{r} must be finite and > 0")));
            }
        }
        Ok(Hyperparams {
            lambda: self.lambda,
            rho: self.rho,
            sigma: self.sigma,
            alpha: self.alpha,
            gamma: self.gamma,
            neighbors: self.neighbors,
            threshold: self.threshold,
            iterations: self.iterations,
            jitter: self.jitter,
            unknown_push: self.unknown_push,
            bandwidth: self.bandwidth,
        })
    }
}

/// Index sets induced by the source labels and the current pseudo-labels.
///
/// Source indices run over `0..n_s`, target indices over `0..n_t` (local to
/// the target set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub source_by_class: Vec<Vec<usize>>,
    pub target_known: Vec<usize>,
    pub target_by_class: Vec<Vec<usize>>,
    pub target_unknown: Vec<usize>,
    pub n_source: usize,
    pub n_target: usize,
}

impl ClassPartition {
    pub fn num_classes(&self) -> usize {
        self.source_by_class.len()
    }

    pub fn source_count(&self, c: usize) -> usize {
        self.source_by_class[c].len()
    }

    pub fn target_count(&self, c: usize) -> usize {
        self.target_by_class[c].len()
    }
}

pub fn partition_by_class(source: &LabeledDataset, pseudo: &LabelAssignment) -> Result<ClassPartition> {
    let c = source.num_classes();
    if pseudo.num_classes() != c {
        return Err(DaodError::invalid(format!(
            "pseudo-labels use {} known classes, source has {c}",
            pseudo.num_classes()
        )));
    }
    let mut source_by_class = vec![Vec::new(); c];
    for (i, &l) in source.labels().iter().enumerate() {
        source_by_class[l].push(i);
    }
    let mut target_by_class = vec![Vec::new(); c];
    let mut target_known = Vec::new();
    let mut target_unknown = Vec::new();
    for (j, &l) in pseudo.labels().iter().enumerate() {
        match l.cmp(&c) {
            std::cmp::Ordering::Less => {
                target_by_class[l].push(j);
                target_known.push(j);
            }
            std::cmp::Ordering::Equal => target_unknown.push(j),
            std::cmp::Ordering::Greater => {
                return Err(DaodError::invalid(format!("pseudo-label {l} at row {j} out of range")))
            }
        }
    }
    Ok(ClassPartition {
        source_by_class,
        target_known,
        target_by_class,
        target_unknown,
        n_source: source.len(),
        n_target: pseudo.len(),
    })
}

fn first_non_finite_row(m: &DMatrix<f64>) -> Option<usize> {
    (0..m.nrows()).find(|&r| m.row(r).iter().any(|v| !v.is_finite()))
}

/// Checks that the pair is usable for training: both sides nonempty, same
/// feature dimension, all features finite.
pub fn validate_pair(source: &LabeledDataset, target: &UnlabeledTarget) -> Result<()> {
    if source.is_empty() || source.dim() == 0 {
        return Err(DaodError::EmptyDataset { side: Side::Source });
    }
    if target.is_empty() || target.dim() == 0 {
        return Err(DaodError::EmptyDataset { side: Side::Target });
    }
    if source.dim() != target.dim() {
        return Err(DaodError::DimensionMismatch {
            source_dim: source.dim(),
            target_dim: target.dim(),
        });
    }
    if let Some(row) = first_non_finite_row(source.features()) {
        return Err(DaodError::NonFinite {
            side: Side::Source,
            row,
        });
    }
    if let Some(row) = first_non_finite_row(target.features()) {
        return Err(DaodError::NonFinite {
            side: Side::Target,
            row,
        });
    }
    Ok(())
}

/// Source rows followed by target rows.
pub fn stack_features(source: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let (ns, nt, d) = (source.nrows(), target.nrows(), source.ncols());
    DMatrix::from_fn(
        ns + nt,
        d,
        |i, j| if i < ns { source[(i, j)] } else { target[(i - ns, j)] },
    )
}

pub(crate) fn sq_dist(a: DVectorView<'_, f64>, b: DVectorView<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn source(labels: &[usize], c: usize) -> LabeledDataset {
        let n = labels.len();
        LabeledDataset::new(DMatrix::from_fn(n, 2, |i, j| (i + j) as f64), labels, c).unwrap()
    }

    #[test]
    fn partition_small_example() {
        let s = source(&[1, 1, 2], 2);
        let pseudo = LabelAssignment::from_one_based(&[2, 3], 2).unwrap();
        let p = partition_by_class(&s, &pseudo).unwrap();
        assert_eq!(p.source_count(0), 2);
        assert_eq!(p.source_count(1), 1);
        assert_eq!(p.target_by_class[1], vec![0]);
        assert!(p.target_by_class[0].is_empty());
        assert_eq!(p.target_unknown, vec![1]);
        assert_eq!(p.target_known.len(), 1);
    }

    #[test]
    fn partition_all_unknown() {
        let s = source(&[1, 2], 2);
        let pseudo = LabelAssignment::from_one_based(&[3, 3, 3], 2).unwrap();
        let p = partition_by_class(&s, &pseudo).unwrap();
        assert!(p.target_known.is_empty());
        assert_eq!(p.target_unknown.len(), 3);
    }

    #[test]
    fn out_of_range_labels_rejected() {
        assert!(LabelAssignment::from_one_based(&[1, 4], 2).is_err());
        assert!(LabelAssignment::from_one_based(&[0], 2).is_err());
        assert!(LabeledDataset::new(DMatrix::zeros(1, 1), &[3], 2).is_err());
        let s = source(&[1, 2], 2);
        let wrong_c = LabelAssignment::from_one_based(&[1], 3).unwrap();
        assert!(partition_by_class(&s, &wrong_c).is_err());
    }

    #[test]
    fn validate_pair_cases() {
        let s = LabeledDataset::new(DMatrix::zeros(3, 4), &[1, 1, 1], 1).unwrap();
        assert!(validate_pair(&s, &UnlabeledTarget::new(DMatrix::zeros(2, 4))).is_ok());
        assert!(matches!(
            validate_pair(&s, &UnlabeledTarget::new(DMatrix::zeros(2, 5))),
            Err(DaodError::DimensionMismatch {
                source_dim: 4,
                target_dim: 5
            })
        ));
        let mut t = DMatrix::zeros(5, 4);
        t[(3, 2)] = f64::NAN;
        let err = validate_pair(&s, &UnlabeledTarget::new(t)).unwrap_err();
        assert!(matches!(
            err,
            DaodError::NonFinite {
                side: Side::Target,
                row: 3
            }
        ));
        assert!(err.to_string().contains("row 3"));
        assert!(matches!(
            validate_pair(&s, &UnlabeledTarget::new(DMatrix::zeros(0, 4))),
            Err(DaodError::EmptyDataset { side: Side::Target })
        ));
    }

    #[test]
    fn hyperparams_reject_gamma_at_least_one() {
        assert!(Hyperparams::builder().gamma(1.0).build().is_err());
        assert!(Hyperparams::builder().gamma(1.5).build().is_err());
        assert!(Hyperparams::builder().sigma(0.0).build().is_err());
        assert!(Hyperparams::builder().threshold(1.0).build().is_err());
        let raw = HyperparamsBuilder {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(Hyperparams::try_from(raw).is_err());
    }

    #[test]
    fn defaults() {
        let h = Hyperparams::default();
        assert_eq!(h.neighbors(), 10);
        assert_eq!(h.rho(), 1.0);
        assert_eq!(h.sigma(), 1.0);
        assert_eq!(h.iterations(), 10);
        assert_eq!(h.threshold(), 0.5);
        assert_eq!(h.alpha(), 0.4);
        assert_eq!(h.gamma(), 0.25);
        assert_eq!(h.lambda(), 500.0);
        assert_eq!(h.unknown_push(), UnknownPush::PseudoUnknownOnly);
    }

    proptest! {
        #[test]
        fn partition_is_a_bijection(
            src in proptest::collection::vec(1usize..=3, 1..50),
            tgt in proptest::collection::vec(1usize..=4, 1..50),
        ) {
            let s = source(&src, 3);
            let pseudo = LabelAssignment::from_one_based(&tgt, 3).unwrap();
            let p = partition_by_class(&s, &pseudo).unwrap();

            let mut all_s: Vec<usize> = p.source_by_class.concat();
            all_s.sort_unstable();
            prop_assert_eq!(all_s, (0..src.len()).collect::<Vec<_>>());

            let mut known: Vec<usize> = p.target_by_class.concat();
            known.sort_unstable();
            prop_assert_eq!(&known, &p.target_known);
            let mut all_t = [known, p.target_unknown.clone()].concat();
            all_t.sort_unstable();
            prop_assert_eq!(all_t, (0..tgt.len()).collect::<Vec<_>>());

            // brute-force recount
            for c in 0..3 {
                prop_assert_eq!(p.source_count(c), src.iter().filter(|&&l| l == c + 1).count());
                prop_assert_eq!(p.target_count(c), tgt.iter().filter(|&&l| l == c + 1).count());
            }
            prop_assert_eq!(p.target_unknown.len(), tgt.iter().filter(|&&l| l == 4).count());
        }
    }
}

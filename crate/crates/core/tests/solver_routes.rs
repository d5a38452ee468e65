use daod_core::pseudolabel::label_targets;
use daod_core::solver::{
    alignment_for, build_system, objective, predict, solve_beta, static_matrices, ScoreCoefficients,
};
use daod_core::{daod_fit, Hyperparams, LabeledDataset, UnknownPush, UnlabeledTarget};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn instance(seed: u64) -> (LabeledDataset, UnlabeledTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..=3);
    let d = rng.random_range(1..=5);
    let ns = rng.random_range(8..=30);
    let nt = rng.random_range(8..=30);
    let labels: Vec<usize> = (0..ns).map(|i| i % c + 1).collect();
    let xs = DMatrix::from_fn(ns, d, |i, j| {
        rng.sample::<f64, _>(StandardNormal) + 3.0 * ((labels[i] - 1 == j) as u8 as f64)
    });
    let xt = DMatrix::from_fn(nt, d, |_, _| rng.sample::<f64, _>(StandardNormal) * 1.5 + 0.5);
    (LabeledDataset::new(xs, &labels, c).unwrap(), UnlabeledTarget::new(xt))
}

fn first_scores(source: &LabeledDataset, target: &UnlabeledTarget, hp: &Hyperparams) -> DMatrix<f64> {
    let statics = static_matrices(source, target, hp).unwrap();
    let pseudo = label_targets(target, source, hp.threshold()).unwrap();
    let (align, _, _) = alignment_for(source, target, &pseudo).unwrap();
    let sys = build_system(source, &pseudo, &statics.k, align.combined, &statics.l, hp).unwrap();
    let sol = solve_beta(&sys).unwrap();
    predict(&sol.beta, &statics.k, source.len()).unwrap().scores
}

#[test]
fn closed_form_agrees_with_hessian_route() {
    // (KSK + σK)β = K·RHS solved by Cholesky, independent of the LU path; K is
    // jittered there because low-dimensional instances make it numerically singular
    for seed in 0..10 {
        let (s, t) = instance(seed);
        let hp = Hyperparams::builder().neighbors(5).build().unwrap();
        let statics = static_matrices(&s, &t, &hp).unwrap();
        let pseudo = label_targets(&t, &s, hp.threshold()).unwrap();
        let (align, _, _) = alignment_for(&s, &t, &pseudo).unwrap();
        let sys = build_system(&s, &pseudo, &statics.k, align.combined, &statics.l, &hp).unwrap();
        let sol = solve_beta(&sys).unwrap();
        let q = sys.quadratic_form_matrix(sol.jitter.max(1e-8));
        let rhs = statics.k.as_matrix() * sys.rhs();
        let Some(chol) = q.cholesky() else {
            panic!("seed {seed}: quadratic form is not positive definite");
        };
        let beta = chol.solve(&rhs);
        let h_lu = statics.k.as_matrix() * sol.beta.as_matrix();
        let h_ch = statics.k.as_matrix() * beta;
        let rel = (&h_lu - &h_ch).norm() / h_lu.norm().max(1e-12);
        assert!(rel < 1e-5, "seed {seed}: relative score gap {rel}");
    }
}

#[test]
fn objective_is_minimal_along_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..5 {
        let (s, t) = instance(seed);
        let hp = Hyperparams::builder().gamma(0.9).neighbors(5).build().unwrap();
        let statics = static_matrices(&s, &t, &hp).unwrap();
        let pseudo = label_targets(&t, &s, hp.threshold()).unwrap();
        let (align, _, _) = alignment_for(&s, &t, &pseudo).unwrap();
        let sys = build_system(&s, &pseudo, &statics.k, align.combined, &statics.l, &hp).unwrap();
        let sol = solve_beta(&sys).unwrap();
        let best = objective(&sys, &sol.beta);
        let b = sol.beta.as_matrix();
        for _ in 0..5 {
            let dir = DMatrix::from_fn(b.nrows(), b.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let moved = ScoreCoefficients::new(b + dir * 1e-2).unwrap();
            assert!(objective(&sys, &moved) > best);
        }
    }
}

#[test]
fn without_open_set_terms_the_unknown_column_vanishes() {
    // γ = α = 0 leaves a plain manifold-regularized kernel regression; the
    // unknown row of Y is weighted out, so the push mode cannot matter
    for seed in 0..8 {
        let (s, t) = instance(seed);
        let base = Hyperparams::builder().gamma(0.0).alpha(0.0).neighbors(5);
        let a = first_scores(&s, &t, &base.build().unwrap());
        let b = first_scores(&s, &t, &base.unknown_push(UnknownPush::AllTargets).build().unwrap());
        let c = s.num_classes();
        assert!(a.column(c).amax() < 1e-12);
        assert!((&a - &b).amax() < 1e-12);
    }
}

#[test]
fn single_iteration_unrolls_by_hand() {
    let (s, t) = instance(5);
    let hp = Hyperparams::builder().iterations(1).neighbors(5).build().unwrap();
    let report = daod_fit(&s, &t, &hp).unwrap();
    let scores = first_scores(&s, &t, &hp);
    assert!((&report.scores - &scores).amax() < 1e-12);
    assert_eq!(report.iterations.len(), 1);
    assert_eq!(report.pseudo_history.len(), 1);
    assert_eq!(
        report.initial_pseudo_labels,
        label_targets(&t, &s, hp.threshold()).unwrap()
    );
}

#[test]
fn fit_is_deterministic() {
    let (s, t) = instance(11);
    let hp = Hyperparams::builder().neighbors(5).build().unwrap();
    let a = daod_fit(&s, &t, &hp).unwrap();
    let b = daod_fit(&s, &t, &hp).unwrap();
    assert_eq!(a, b);
}

#[test]
fn iteration_trace_is_consistent() {
    let (s, t) = instance(3);
    let hp = Hyperparams::builder().iterations(4).neighbors(5).build().unwrap();
    let r = daod_fit(&s, &t, &hp).unwrap();
    let mut prev = r.initial_pseudo_labels.clone();
    for (rec, labels) in r.iterations.iter().zip(&r.pseudo_history) {
        assert_eq!(rec.changed, labels.changes_from(&prev));
        assert_eq!(
            rec.unknown_count,
            (0..labels.len()).filter(|&j| labels.is_unknown(j)).count()
        );
        assert!((0.0..=1.0).contains(&rec.mu));
        prev = labels.clone();
    }
    assert_eq!(&r.predictions, r.pseudo_history.last().unwrap());
}

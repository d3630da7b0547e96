use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qipp_core::field::Point;
use qipp_core::gp::{BeliefModel, KernelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Posterior from a from-scratch dense solve.
fn dense_posterior(belief: &BeliefModel, xs: &[Point], ys: &[f64], query: &[Point]) -> (Vec<f64>, Vec<f64>) {
    let k = belief.kernel();
    let n = xs.len();
    let mut kxx = DMatrix::from_fn(n, n, |i, j| k.cov(xs[i], xs[j]));
    for i in 0..n {
        kxx[(i, i)] += belief.diagonal_noise();
    }
    let chol = kxx.cholesky().expect("oracle matrix is positive definite");
    let resid = DVector::from_iterator(n, ys.iter().map(|y| y - belief.prior_mean()));
    let alpha = chol.solve(&resid);
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for &q in query {
        let kq = DVector::from_iterator(n, xs.iter().map(|&x| k.cov(x, q)));
        means.push(belief.prior_mean() + kq.dot(&alpha));
        vars.push(k.cov(q, q) - kq.dot(&chol.solve(&kq)));
    }
    (means, vars)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random_range(0.0..80.0), rng.random_range(0.0..60.0)))
        .collect()
}

#[test]
fn incremental_matches_batch_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=300);
        let kernel = KernelParams::new(
            rng.random_range(2.0..20.0),
            rng.random_range(0.2..2.0),
            rng.random_range(1e-3..0.1),
        )
        .unwrap();
        let xs = random_points(&mut rng, n);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut belief = BeliefModel::new(kernel);
        let mut at = 0;
        while at < n {
            let step = rng.random_range(1..=25).min(n - at);
            belief.update(&xs[at..at + step], &ys[at..at + step]).unwrap();
            at += step;
        }
        let query = random_points(&mut rng, 20);
        let (m, v) = belief.predict(&query);
        let (om, ov) = dense_posterior(&belief, &xs, &ys, &query);
        for i in 0..query.len() {
            worst = worst.max((m[i] - om[i]).abs()).max((v[i] - ov[i]).abs());
            assert!(v[i] >= 0.0);
            assert!(v[i] <= kernel.signal_variance + 1e-9);
        }
    }
    assert!(worst < 1e-8, "max deviation {worst:e}");
}

#[test]
fn one_point_closed_form() {
    let kernel = KernelParams::new(12.0, 0.7, 0.04).unwrap();
    let (s2, n2) = (kernel.signal_variance, kernel.noise_variance);
    let x = Point::new(10.0, 20.0);
    let b = BeliefModel::new(kernel).updated(&[x], &[0.9]).unwrap();
    let (m, v) = b.predict(&[x]);
    // the model adds a tiny jitter on top of the noise
    let n2 = n2 + b.jitter();
    assert!((m[0] - (0.5 + s2 / (s2 + n2) * 0.4)).abs() < 1e-12);
    assert!((v[0] - (s2 - s2 * s2 / (s2 + n2))).abs() < 1e-12);
}

#[test]
fn duplicate_location_mean_between_values() {
    let x = Point::new(5.0, 5.0);
    let b = BeliefModel::new(KernelParams::default())
        .updated(&[x, x], &[0.2, 0.8])
        .unwrap();
    let m = b.mean_at(x);
    assert!(m > 0.2 && m < 0.8);
    assert!((m - 0.5).abs() < 1e-9);
}

#[test]
fn interpolates_with_tiny_noise() {
    // Lengthscale 1 keeps 500 points in 80 x 60 m well conditioned.
    let kernel = KernelParams::new(1.0, 1.0, 1e-12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = random_points(&mut rng, 500);
    let ys: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    let b = BeliefModel::new(kernel).updated(&xs, &ys).unwrap();
    let (m, _) = b.predict(&xs);
    for (mi, yi) in m.iter().zip(&ys) {
        assert!((mi - yi).abs() < 1e-4, "{mi} vs {yi}");
    }
}

#[test]
fn prior_far_away_and_empty_update() {
    let b = BeliefModel::new(KernelParams::default());
    let same = b.updated(&[], &[]).unwrap();
    assert_eq!(same.len(), 0);
    assert_eq!(same.predict(&[Point::new(1.0, 1.0)]), (vec![0.5], vec![1.0]));

    let b = b.updated(&[Point::new(0.0, 0.0)], &[1.0]).unwrap();
    let (m, v) = b.predict(&[Point::new(1e4, 1e4)]);
    assert!((m[0] - 0.5).abs() < 1e-12 && (v[0] - 1.0).abs() < 1e-12);
}

#[test]
fn non_finite_input_is_rejected() {
    let b = BeliefModel::new(KernelParams::default());
    assert!(b.updated(&[Point::new(0.0, 0.0)], &[f64::NAN]).is_err());
    assert!(b.updated(&[Point::new(f64::INFINITY, 0.0)], &[0.1]).is_err());
    assert!(b.updated(&[Point::new(0.0, 0.0)], &[0.1, 0.2]).is_err());
}

fn instance() -> impl Strategy<Value = (Vec<(f64, f64, f64)>, (f64, f64), (f64, f64))> {
    (
        prop::collection::vec((0.0..80.0f64, 0.0..60.0f64, 0.0..1.0f64), 1..40),
        (0.0..80.0f64, 0.0..60.0f64),
        (0.0..80.0f64, 0.0..60.0f64),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_point_never_raises_variance((data, extra, q) in instance()) {
        let xs: Vec<Point> = data.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
        let ys: Vec<f64> = data.iter().map(|d| d.2).collect();
        let q = Point::new(q.0, q.1);
        let b = BeliefModel::new(KernelParams::default()).updated(&xs, &ys).unwrap();
        let before = b.predict(&[q]).1[0];
        let after = b.updated(&[Point::new(extra.0, extra.1)], &[0.3]).unwrap().predict(&[q]).1[0];
        prop_assert!(after <= before + 1e-9);

        let mut xs2 = xs.clone();
        xs2.push(Point::new(extra.0, extra.1));
        let mut ys2 = ys.clone();
        ys2.push(0.3);
        let (_, ov) = dense_posterior(&b, &xs2, &ys2, &[q]);
        prop_assert!((ov[0] - after).abs() < 1e-8);
    }

    #[test]
    fn training_order_does_not_matter((data, _, q) in instance(), rot in 0usize..40) {
        let xs: Vec<Point> = data.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
        let ys: Vec<f64> = data.iter().map(|d| d.2).collect();
        let k = rot % xs.len();
        let mut px = xs.clone();
        let mut py = ys.clone();
        px.rotate_left(k);
        py.rotate_left(k);
        px.reverse();
        py.reverse();
        let q = [Point::new(q.0, q.1)];
        let a = BeliefModel::new(KernelParams::default()).updated(&xs, &ys).unwrap().predict(&q);
        let b = BeliefModel::new(KernelParams::default()).updated(&px, &py).unwrap().predict(&q);
        prop_assert!((a.0[0] - b.0[0]).abs() < 1e-9);
        prop_assert!((a.1[0] - b.1[0]).abs() < 1e-9);
    }
}

use super::*;
use crate::kernels::Family;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn points(xs: &[f64]) -> Vec<Measure> {
    xs.iter().map(|&x| Measure::Point(vec![x])).collect()
}

fn rbf(ell: f64) -> KernelSpec {
    KernelSpec::rbf(1.0, ell).unwrap()
}

#[test]
fn single_point_hand_solve() {
    let m = GpModel::fit(&points(&[0.0]), &[2.0], &rbf(1.0), 1.0).unwrap();
    assert!((m.alpha()[0] - 1.0).abs() < 1e-15);
    let p = m.predict(&Measure::Point(vec![0.0])).unwrap();
    assert!((p.mean - 1.0).abs() < 1e-15);
    assert!((p.variance - 0.5).abs() < 1e-15);
    assert_eq!(p.noise_variance, 1.0);
}

#[test]
fn zero_response_gives_zero_weights() {
    let m = GpModel::fit(&points(&[0.0, 0.5, 2.0]), &[0.0; 3], &rbf(0.7), 0.1).unwrap();
    assert!(m.alpha().iter().all(|a| *a == 0.0));
}

#[test]
fn lml_single_point() {
    let m = GpModel::fit(&points(&[0.0]), &[0.0], &rbf(1.0), 1.0).unwrap();
    let expected = -0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((m.log_marginal_likelihood() - expected).abs() < 1e-14);
    assert!((expected + 1.265_512_123_484_645).abs() < 1e-12);
}

#[test]
fn lml_drops_when_response_scaled_up() {
    let x = points(&[0.0, 0.3, 1.0, 1.7]);
    let y = [0.5, -0.2, 0.9, 0.1];
    let y10: Vec<f64> = y.iter().map(|v| v * 10.0).collect();
    let a = GpModel::fit(&x, &y, &rbf(0.5), 0.05).unwrap();
    let b = GpModel::fit(&x, &y10, &rbf(0.5), 0.05).unwrap();
    assert!(b.log_marginal_likelihood() < a.log_marginal_likelihood());
}

fn random_problem(n: usize, seed: u64) -> (Vec<Measure>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    (points(&xs), ys)
}

#[test]
fn factor_and_weights_match_dense_oracle() {
    for seed in 0..5 {
        let (x, y) = random_problem(20, seed);
        let noise = 0.05;
        let m = GpModel::fit(&x, &y, &rbf(0.8), noise).unwrap();
        let a = m.gram() + DMatrix::identity(20, 20) * noise;
        let l = m.cholesky_factor();
        assert!((&l * l.transpose() - &a).norm() <= 1e-8 * m.gram().norm());
        let yv = DVector::from_column_slice(&y);
        assert!((&a * m.alpha() - &yv).norm() <= 1e-8 * yv.norm());

        let inv = a.clone().try_inverse().unwrap();
        let dense = -0.5 * yv.dot(&(&inv * &yv))
            - 0.5 * a.determinant().ln()
            - 10.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((m.log_marginal_likelihood() - dense).abs() < 1e-8);
        let inf_norm = inv.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        assert!((m.inverse_inf_norm() - inf_norm).abs() < 1e-8 * inf_norm);
    }
}

#[test]
fn interpolation_and_prior_reversion() {
    let x = points(&[0.0, 1.0, 2.5]);
    let y = [0.3, -1.2, 0.8];
    let m = GpModel::fit(&x, &y, &rbf(0.6), 1e-12).unwrap();
    for (xi, yi) in x.iter().zip(y) {
        let p = m.predict(xi).unwrap();
        assert!((p.mean - yi).abs() < 1e-4);
        assert!(p.variance < 1e-6);
    }
    let far = m.predict(&Measure::Point(vec![1e3])).unwrap();
    assert!(far.mean.abs() < 1e-12);
    assert!((far.variance - 1.0).abs() < 1e-12);
}

#[test]
fn variance_never_grows_with_more_data() {
    let (x, y) = random_problem(15, 3);
    let test = Measure::Point(vec![0.4]);
    let mut prev = f64::INFINITY;
    for n in 1..=15 {
        let m = GpModel::fit(&x[..n], &y[..n], &rbf(0.9), 0.01).unwrap();
        let v = m.predict(&test).unwrap().variance;
        assert!(v <= prev + 1e-8);
        assert!(v <= 1.0 + 1e-8);
        prev = v;
    }
}

#[test]
fn permutation_invariance() {
    let (x, y) = random_problem(12, 4);
    let order: Vec<usize> = (0..12).rev().collect();
    let xp: Vec<Measure> = order.iter().map(|&i| x[i].clone()).collect();
    let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let a = GpModel::fit(&x, &y, &rbf(0.9), 0.01).unwrap();
    let b = GpModel::fit(&xp, &yp, &rbf(0.9), 0.01).unwrap();
    let test = points(&[-1.0, 0.2, 2.9]);
    for (p, q) in a.predict_many(&test).unwrap().iter().zip(b.predict_many(&test).unwrap()) {
        assert!((p.mean - q.mean).abs() < 1e-10);
        assert!((p.variance - q.variance).abs() < 1e-10);
    }
    assert!((a.log_marginal_likelihood() - b.log_marginal_likelihood()).abs() < 1e-10);
}

#[test]
fn pwa_with_vanishing_scales_reverts_to_prior_mean_scale() {
    let clouds: Vec<Measure> = (0..6)
        .map(|i| {
            let c = Cloud::from_samples(&[vec![i as f64 * 0.3], vec![i as f64 * 0.3 + 0.1]], None).unwrap();
            Measure::Cloud(c)
        })
        .collect();
    let y = [1.0, -1.0, 0.5, 0.2, -0.4, 0.9];
    let spec = KernelSpec::pwa(1.0, vec![1e-12], 1.0).unwrap();
    let m = GpModel::fit(&clouds, &y, &spec, 0.1).unwrap();
    let mean_y = y.iter().sum::<f64>() / 6.0;
    let test = Measure::Cloud(Cloud::from_samples(&[vec![10.0]], None).unwrap());
    let p = m.predict(&test).unwrap();
    // Constant kernel: the posterior mean is the shrunk sample mean everywhere.
    let shrink = 6.0 / (6.0 + 0.1);
    assert!((p.mean - shrink * mean_y).abs() < 1e-9);
}

#[test]
fn indefinite_gram_triggers_jitter_or_fails() {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let (_, jitter, esc) = factor(&k, 0.0).unwrap();
    assert!(jitter > 0.0 && esc >= 1);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(factor(&bad, 1e-6), Err(Error::Numeric(_))));
}

#[test]
fn rejects_bad_inputs() {
    assert!(matches!(GpModel::fit(&points(&[0.0]), &[f64::NAN], &rbf(1.0), 0.1), Err(Error::Input(_))));
    assert!(matches!(GpModel::fit(&points(&[0.0]), &[1.0, 2.0], &rbf(1.0), 0.1), Err(Error::Input(_))));
}

#[test]
fn aggregated_examples() {
    let c = |xs: &[f64]| Cloud::from_samples(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), None).unwrap();
    let train = vec![c(&[0.0, 0.1]), c(&[1.0, 0.9]), c(&[2.0, 2.2])];
    let y = [0.2, 0.8, -0.3];
    let test = vec![c(&[0.5, 0.6]), c(&[1.5, 1.4])];
    let spec = rbf(0.7);

    let one = aggregated_fit_predict(
        &train.iter().map(|t| c(&[t.point(0)[0]])).collect::<Vec<_>>(),
        &y,
        &spec,
        0.05,
        &test.iter().map(|t| c(&[t.point(0)[0]])).collect::<Vec<_>>(),
    )
    .unwrap();
    let single = GpModel::fit(&points(&[0.0, 1.0, 2.0]), &y, &spec, 0.05).unwrap();
    for (a, b) in one.iter().zip(single.predict_many(&points(&[0.5, 1.5])).unwrap()) {
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.variance, b.variance);
    }

    let same = vec![c(&[0.0, 0.0]), c(&[1.0, 1.0]), c(&[2.0, 2.0])];
    let same_test = vec![c(&[0.5, 0.5])];
    let agg = aggregated_fit_predict(&same, &y, &spec, 0.05, &same_test).unwrap();
    let p = single.predict(&Measure::Point(vec![0.5])).unwrap();
    assert!((agg[0].mean - p.mean).abs() < 1e-15);
    assert!((agg[0].variance - p.variance).abs() < 1e-15);

    // Between-replicate spread adds to the within variance.
    let with = aggregated_fit_predict_with(&train, &y, &test, |j, x, y| {
        let shifted: Vec<f64> = y.iter().map(|v| v + 2.0 * j as f64).collect();
        GpModel::fit(x, &shifted, &spec, 0.05)
    })
    .unwrap();
    assert_eq!(with.len(), 2);

    let ragged = vec![c(&[0.0]), c(&[1.0, 2.0])];
    assert!(matches!(
        aggregated_fit_predict(&ragged, &[0.0, 1.0], &spec, 0.1, &[]),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn law_of_total_variance_arithmetic() {
    let rep = |mean| PredictiveSummary {
        mean,
        variance: 0.3,
        noise_variance: 0.01,
        clamped: false,
    };
    let out = combine_replicates([rep(0.0), rep(2.0)].into_iter());
    assert_eq!(out.mean, 1.0);
    assert!((out.variance - 1.3).abs() < 1e-15);
    assert_eq!(out.noise_variance, 0.01);
}

#[test]
fn optimizer_recovers_lengthscale() {
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let xs: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..10.0)).collect();
        let x = points(&xs);
        let k = kernels::gram(&x, &rbf(1.0)).unwrap().entries + DMatrix::identity(40, 40) * 0.01;
        let l = k.cholesky().unwrap().l();
        let z = DVector::from_iterator(40, (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y: Vec<f64> = (l * z).iter().copied().collect();
        let cfg = SearchConfig {
            seed,
            ..SearchConfig::default()
        };
        let fitted = optimize_hyperparams(&x, &y, &rbf(1.0), &cfg).unwrap();
        ratios.push(fitted.spec.base_lengthscale);
        assert!(fitted.initial_lml.iter().all(|v| *v <= fitted.lml));
    }
    for ell in ratios {
        assert!((0.5..=2.0).contains(&ell), "recovered lengthscale {ell}");
    }
}

#[test]
fn zero_iteration_search_returns_initialization() {
    let (x, y) = random_problem(10, 9);
    let cfg = SearchConfig {
        restarts: 1,
        max_iter: 0,
        ..SearchConfig::default()
    };
    let f = optimize_hyperparams(&x, &y, &rbf(1.0), &cfg).unwrap();
    assert_eq!(f.lml, f.initial_lml[0]);
    let again = optimize_hyperparams(&x, &y, &rbf(1.0), &cfg).unwrap();
    assert_eq!(f.spec, again.spec);
}

#[test]
fn search_is_deterministic_and_searches_transport_scales() {
    let clouds: Vec<Measure> = (0..10)
        .map(|i| {
            let base = i as f64 * 0.1;
            Measure::Cloud(
                Cloud::from_samples(&[vec![base], vec![base + 0.05], vec![base - 0.03]], None).unwrap(),
            )
        })
        .collect();
    let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.6).sin()).collect();
    let template = KernelSpec::pwa(1.0, vec![1.0], 1.0).unwrap();
    let cfg = SearchConfig::default();
    let a = optimize_hyperparams(&clouds, &y, &template, &cfg).unwrap();
    let b = optimize_hyperparams(&clouds, &y, &template, &cfg).unwrap();
    assert_eq!(a.spec, b.spec);
    assert_eq!(a.noise, b.noise);
    assert_eq!(a.spec.family, Family::Pwa);
    assert_eq!(a.spec.scales.len(), 1);
}

proptest! {
    #[test]
    fn predictive_mean_is_linear_in_y(
        y1 in prop::collection::vec(-3.0f64..3.0, 6),
        y2 in prop::collection::vec(-3.0f64..3.0, 6),
        c in -2.0f64..2.0,
    ) {
        let x = points(&[0.0, 0.4, 0.9, 1.3, 2.0, 2.2]);
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + c * b).collect();
        let test = Measure::Point(vec![1.1]);
        let m = |y: &[f64]| GpModel::fit(&x, y, &rbf(0.5), 0.02).unwrap().predict(&test).unwrap().mean;
        prop_assert!((m(&combo) - (m(&y1) + c * m(&y2))).abs() < 1e-9);
    }
}

use igo_core::diagnostics::check_kl_expansion;
use igo_core::exp_family::kl_divergence;
use igo_core::oracle::FiniteDist;
use igo_core::{BernoulliParams, GaussianParams, Model, Params};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn probs(d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..0.98, d)
}

/// Random SPD matrix `A A^T + s I` together with a mean.
fn gaussian(d: usize) -> impl Strategy<Value = (Vec<f64>, DMatrix<f64>)> {
    (
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(-1.0f64..1.0, d * d),
        0.05f64..2.0,
    )
        .prop_map(move |(mean, a, s)| {
            let a = DMatrix::from_row_slice(d, d, &a);
            let mut c = &a * a.transpose() + DMatrix::identity(d, d) * s;
            c = (&c + c.transpose()) * 0.5;
            (mean, c)
        })
}

fn condition(c: &DMatrix<f64>) -> f64 {
    let ev = c.clone().symmetric_eigen().eigenvalues;
    ev.max() / ev.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bernoulli_kl_is_non_negative(p in probs(1..=6), q in probs(6..=6)) {
        let q = &q[..p.len()];
        let kl = kl_divergence(Model::bernoulli(p.len()), &p, q).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_divergence(Model::bernoulli(p.len()), &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_is_non_negative((m1, c1) in gaussian(3), (m2, c2) in gaussian(3)) {
        let a = Params::Gaussian(GaussianParams::new(m1, c1).unwrap());
        let b = Params::Gaussian(GaussianParams::new(m2, c2).unwrap());
        prop_assert!(a.kl_divergence(&b).unwrap() >= 0.0);
        prop_assert!(a.kl_divergence(&a).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn gaussian_expectation_round_trip((m, c) in gaussian(4)) {
        prop_assume!(condition(&c) <= 1e6);
        let p = Params::Gaussian(GaussianParams::new(m.clone(), c.clone()).unwrap());
        let eta = p.expectation();
        let Params::Gaussian(back) = Model::gaussian(4).params(&eta).unwrap() else {
            unreachable!()
        };
        let err_m = back.mean().iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let err_c = (back.cov() - &c).amax();
        prop_assert!(err_m <= 1e-12 && err_c <= 1e-12, "{err_m} {err_c}");
    }

    #[test]
    fn bernoulli_support_probabilities_sum_to_one(p in probs(1..=12)) {
        let params = Params::Bernoulli(BernoulliParams::new(p.clone()).unwrap());
        let dist = FiniteDist::from_eta(&p).unwrap();
        let total: f64 = dist
            .support()
            .map(|x| params.log_density(&x).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "{total}");
    }

    #[test]
    fn bernoulli_fisher_is_closed_form(p in probs(1..=5)) {
        let fim = Model::bernoulli(p.len()).fisher_information(&p).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                let want = if i == j { 1.0 / (p[i] * (1.0 - p[i])) } else { 0.0 };
                prop_assert_eq!(fim[(i, j)], want);
            }
        }
    }

    #[test]
    fn bernoulli_kl_expansion_has_cubic_remainder(
        p in probs(1..=4),
        dir in prop::collection::vec(-1.0f64..1.0, 4),
        radius in 0.005f64..0.05,
    ) {
        let delta: Vec<f64> = dir[..p.len()].to_vec();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let delta: Vec<f64> = delta.iter().map(|v| v * radius / norm).collect();
        prop_assume!(p.iter().zip(&delta).all(|(a, b)| a + b > 0.0 && a + b < 1.0));
        // Lagrange remainder of the second-order expansion: per coordinate
        // g(t) = KL(p || p + t) has g'''(t) = -2p/(p+t)^3 + 2(1-p)/(1-p-t)^3,
        // bounded on the segment [0, delta_i] by M_i below, so
        // err <= sum_i M_i |delta_i|^3 / 6 at every scale.
        // No per-halving ratio test here: when cubic terms nearly cancel,
        // single ratios exceed 1/4 (see `pre_asymptotic_ratio_can_exceed_a_quarter`).
        let errs = check_kl_expansion(Model::bernoulli(p.len()), &p, &delta, 8).unwrap();
        for (k, err) in errs.iter().enumerate() {
            let scale = 0.5f64.powi(k as i32);
            let bound: f64 = p
                .iter()
                .zip(&delta)
                .map(|(&pi, &di)| {
                    let t = di * scale;
                    let m = 2.0 * pi / (pi + t.min(0.0)).powi(3)
                        + 2.0 * (1.0 - pi) / (1.0 - pi - t.max(0.0)).powi(3);
                    m * t.abs().powi(3) / 6.0
                })
                .sum();
            prop_assert!(*err <= bound + 1e-12, "k = {k}: {err} > {bound}");
        }
    }
}

#[test]
fn pre_asymptotic_ratio_can_exceed_a_quarter() {
    let (p, delta) = ([0.5096658743215542], [-0.036135582550462196]);
    let errs = check_kl_expansion(Model::bernoulli(1), &p, &delta, 8).unwrap();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(ratios[1] > 0.25, "{ratios:?}");
    // cubic remainder once delta is small enough
    assert!((ratios[7] - 0.125).abs() < 0.01, "{ratios:?}");

    // cubic terms of two coordinates offsetting each other
    let p = [0.5733713365542862, 0.7816825093120223];
    let dir: [f64; 2] = [0.4826657876537966, -0.2439980951524242];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    let delta = dir.map(|v| v * 0.034359983449939506 / norm);
    let errs = check_kl_expansion(Model::bernoulli(2), &p, &delta, 8).unwrap();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(ratios[4] > 0.25, "{ratios:?}");
}

#[test]
fn gaussian_fisher_is_symmetric_positive_definite() {
    let c = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
    let eta = Params::Gaussian(GaussianParams::new(vec![0.4, -0.2], c).unwrap()).expectation();
    let fim = Model::gaussian(2).fisher_information(&eta).unwrap();
    let scale = fim.amax();
    for i in 0..fim.nrows() {
        for j in 0..fim.ncols() {
            assert!((fim[(i, j)] - fim[(j, i)]).abs() <= 1e-8 * scale);
        }
    }
    assert!(fim.cholesky().is_some());
}

#[test]
fn gaussian_fisher_inverts_sufficient_statistic_covariance() {
    // independent oracle: for an exponential family in expectation
    // parameters the Fisher matrix is Cov[T]^{-1}; here by Monte Carlo-free
    // Isserlis moments for a diagonal 2-d Gaussian
    let (m, s) = ([0.3, -0.7], [0.9, 1.6]);
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&s));
    let eta = Params::Gaussian(GaussianParams::new(m.to_vec(), c).unwrap()).expectation();
    // T = (x1, x2, x1^2, x1 x2, x2^2)
    let mut cov_t = DMatrix::zeros(5, 5);
    let mom = |a: &[usize], b: &[usize]| -> f64 {
        // Cov[prod_a x, prod_b x] for independent coordinates
        let e = |idx: &[usize]| -> f64 {
            let mut r = 1.0;
            for k in 0..2 {
                let n = idx.iter().filter(|&&i| i == k).count();
                r *= match n {
                    0 => 1.0,
                    1 => m[k],
                    2 => m[k] * m[k] + s[k],
                    3 => m[k].powi(3) + 3.0 * m[k] * s[k],
                    4 => m[k].powi(4) + 6.0 * m[k] * m[k] * s[k] + 3.0 * s[k] * s[k],
                    _ => unreachable!(),
                };
            }
            r
        };
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        e(&ab) - e(a) * e(b)
    };
    let stats: [&[usize]; 5] = [&[0], &[1], &[0, 0], &[0, 1], &[1, 1]];
    for i in 0..5 {
        for j in 0..5 {
            cov_t[(i, j)] = mom(stats[i], stats[j]);
        }
    }
    let want = cov_t.try_inverse().unwrap();
    let got = Model::gaussian(2).fisher_information(&eta).unwrap();
    let err = (&got - &want).amax() / want.amax();
    assert!(err < 1e-6, "relative error {err}\n{got}\n{want}");
}

#[test]
fn boundary_parameters_are_rejected() {
    assert!(Model::bernoulli(2).validate(&[0.0, 0.5]).is_err());
    assert!(Model::bernoulli(2).validate(&[0.5, 1.0]).is_err());
    assert!(Model::bernoulli(2).validate(&[0.5, 0.5]).is_ok());
}

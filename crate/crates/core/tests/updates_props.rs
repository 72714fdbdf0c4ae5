use igo_core::algorithms::{cma_rank_mu_step, pbil_step};
use igo_core::selection::sample_weights;
use igo_core::updates::{
    blockwise_igo_ml_step, igo_ml_step, igo_step, smoothed_ce_step, BlockDecomposition,
};
use igo_core::{rng, GaussianParams, Model, Params, SelectionScheme};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn bernoulli_population(
    d: usize,
    lambda: usize,
) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(0.05f64..0.95, d),
        prop::collection::vec(prop::collection::vec(prop::bool::ANY, d), lambda),
        prop::collection::vec((0i32..5).prop_map(f64::from), lambda),
    )
        .prop_map(|(theta, bits, fit)| {
            let xs = bits
                .into_iter()
                .map(|b| b.into_iter().map(|v| f64::from(u8::from(v))).collect())
                .collect();
            (theta, xs, fit)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn igo_step_is_the_pbil_formula(
        (theta, xs, fit) in bernoulli_population(5, 12),
        q in 0.05f64..0.95,
        dt in 0.0f64..=1.0,
    ) {
        let w = sample_weights(&fit, &SelectionScheme::truncation(q).unwrap()).unwrap();
        let Ok(got) = igo_step(Model::bernoulli(5), &theta, &xs, &w, dt) else {
            return Ok(());
        };
        for i in 0..5 {
            let mut drift = 0.0;
            for (x, wi) in xs.iter().zip(w.as_slice()) {
                drift += wi * (x[i] - theta[i]);
            }
            prop_assert_eq!(got[i], theta[i] + dt * drift);
        }
    }

    #[test]
    fn igo_ml_is_a_convex_combination(
        (theta, xs, fit) in bernoulli_population(4, 10),
        q in 0.05f64..0.95,
        dt in 0.0f64..=1.0,
    ) {
        let w = sample_weights(&fit, &SelectionScheme::truncation(q).unwrap()).unwrap();
        let Ok(got) = igo_ml_step(Model::bernoulli(4), &theta, &xs, &w, dt) else {
            return Ok(());
        };
        for i in 0..4 {
            let lo = xs.iter().map(|x| x[i]).fold(theta[i], f64::min);
            let hi = xs.iter().map(|x| x[i]).fold(theta[i], f64::max);
            prop_assert!(got[i] >= lo && got[i] <= hi);
        }
    }

    #[test]
    fn three_rules_agree_on_bernoulli(
        (theta, xs, fit) in bernoulli_population(4, 10),
        q in 0.05f64..0.95,
        dt in prop::sample::select(vec![0.1, 0.5, 0.9]),
    ) {
        let w = sample_weights(&fit, &SelectionScheme::truncation(q).unwrap()).unwrap();
        let m = Model::bernoulli(4);
        let (a, b, c) = (
            igo_step(m, &theta, &xs, &w, dt),
            igo_ml_step(m, &theta, &xs, &w, dt),
            smoothed_ce_step(m, &theta, &xs, &w, dt),
        );
        if let (Ok(a), Ok(b), Ok(c)) = (a, b, c) {
            for i in 0..4 {
                prop_assert!((a[i] - b[i]).abs() <= 1e-10 && (a[i] - c[i]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn pbil_step_delegates_to_igo_step() {
    let f = |x: &[f64]| -> f64 { x.iter().map(|v| 1.0 - v).sum() };
    let scheme = SelectionScheme::truncation(0.25).unwrap();
    let theta = vec![0.4, 0.5, 0.6];
    for seed in 0..10 {
        let got = pbil_step(&theta, &f, 20, &scheme, 0.3, &mut rng::master(seed)).unwrap();
        let model = Model::bernoulli(3);
        let xs = model.sample(&theta, &mut rng::master(seed), 20).unwrap();
        let fit: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        let w = sample_weights(&fit, &scheme).unwrap();
        assert_eq!(got, igo_step(model, &theta, &xs, &w, 0.3).unwrap());
    }
}

#[test]
fn cma_step_delegates_to_blockwise_igo_ml() {
    let f = |x: &[f64]| -> f64 { x.iter().map(|v| v * v).sum() };
    let scheme = SelectionScheme::truncation(0.5).unwrap();
    let start = Params::Gaussian(
        GaussianParams::new(vec![1.0, -0.5], DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]))
            .unwrap(),
    )
    .expectation();
    for seed in 0..10 {
        let got =
            cma_rank_mu_step(2, &start, &f, 40, &scheme, 0.8, 0.3, &mut rng::master(seed)).unwrap();
        let model = Model::gaussian(2);
        let xs = model.sample(&start, &mut rng::master(seed), 40).unwrap();
        let fit: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        let w = sample_weights(&fit, &scheme).unwrap();
        let want = blockwise_igo_ml_step(
            model,
            &start,
            &xs,
            &w,
            &BlockDecomposition::CovarianceThenMean,
            &[0.3, 0.8],
        )
        .unwrap();
        assert_eq!(got, want);
    }
}

use igo_core::oracle::{
    exact_expected_fitness, exact_h, exact_infinite_population_step, exact_j, exact_j_excess,
    exact_quantile, tabulate, FiniteDist,
};
use igo_core::{Objective, ObjectiveId, SelectionScheme};
use proptest::prelude::*;

/// Largest table value `m` with `P[f <= m] >= q` and `P[f >= m] >= 1 - q`,
/// by scanning every candidate.
fn brute_force_quantile(probs: &[f64], table: &[f64], q: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &m in table {
        let le: f64 = probs.iter().zip(table).filter(|(_, f)| **f <= m).map(|(p, _)| p).sum();
        let ge: f64 = probs.iter().zip(table).filter(|(_, f)| **f >= m).map(|(p, _)| p).sum();
        if le >= q && ge >= 1.0 - q && m > best {
            best = m;
        }
    }
    best
}

fn theta(d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.03f64..0.97, d)
}

fn levels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), 256)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn quantile_matches_brute_force(
        p in theta(1..=8),
        table in levels(),
        q in prop::sample::select(vec![0.1, 0.25, 0.5, 0.9]),
    ) {
        let dist = FiniteDist::from_eta(&p).unwrap();
        let table = &table[..dist.len()];
        let got = exact_quantile(&dist, table, q).unwrap();
        prop_assert_eq!(got.value, brute_force_quantile(dist.probs(), table, q));
        prop_assert!(got.lower_mass >= q - 1e-12);
        prop_assert!(got.upper_mass >= 1.0 - q - 1e-12);
    }

    #[test]
    fn j_at_base_is_one(p in theta(1..=8), table in levels(), q in 0.05f64..0.95) {
        let dist = FiniteDist::from_eta(&p).unwrap();
        let table = &table[..dist.len()];
        let scheme = SelectionScheme::truncation(q).unwrap();
        prop_assert!((exact_j(&p, &p, table, &scheme).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(exact_j_excess(&p, &p, table, &scheme).unwrap(), 0.0);
    }

    #[test]
    fn log_j_dominates_cross_entropy_gain(
        p in theta(1..=6),
        p2 in theta(6..=6),
        table in levels(),
        q in 0.05f64..0.95,
    ) {
        let eval = &p2[..p.len()];
        let dist = FiniteDist::from_eta(&p).unwrap();
        let table = &table[..dist.len()];
        let scheme = SelectionScheme::truncation(q).unwrap();
        let lhs = exact_j(eval, &p, table, &scheme).unwrap().ln();
        let gain = exact_h(eval, &p, table, &scheme).unwrap()
            - exact_h(&p, &p, table, &scheme).unwrap();
        prop_assert!(lhs >= gain - 1e-10, "{lhs} < {gain}");
    }

    #[test]
    fn excess_agrees_with_direct_difference(
        p in theta(1..=6),
        p2 in theta(6..=6),
        table in levels(),
        q in 0.05f64..0.95,
    ) {
        let eval = &p2[..p.len()];
        let dist = FiniteDist::from_eta(&p).unwrap();
        let table = &table[..dist.len()];
        let scheme = SelectionScheme::truncation(q).unwrap();
        let direct = exact_j(eval, &p, table, &scheme).unwrap() - 1.0;
        let excess = exact_j_excess(eval, &p, table, &scheme).unwrap();
        prop_assert!((direct - excess).abs() <= 1e-12, "{direct} vs {excess}");
    }

    #[test]
    fn exact_steps_do_not_raise_the_quantile(
        p in theta(1..=6),
        table in levels(),
        q in prop::sample::select(vec![0.1, 0.25, 0.5]),
        dt in prop::sample::select(vec![0.1, 0.5, 1.0]),
    ) {
        let dist = FiniteDist::from_eta(&p).unwrap();
        let table = &table[..dist.len()];
        let scheme = SelectionScheme::truncation(q).unwrap();
        // a step onto the boundary is a domain exit, not a violation
        if let Ok(next) = exact_infinite_population_step(&p, table, &scheme, dt) {
            let before = exact_quantile(&dist, table, q).unwrap().value;
            let after = exact_quantile(&FiniteDist::from_eta(&next).unwrap(), table, q)
                .unwrap()
                .value;
            prop_assert!(after <= before + 1e-12, "{before} -> {after}");
        }
    }
}

#[test]
fn expected_fitness_examples() {
    let onemax_reward = Objective::new(ObjectiveId::OneMaxReward, 2, 0).unwrap();
    let table = tabulate(2, &onemax_reward).unwrap();
    assert_eq!(exact_expected_fitness(&[0.5, 0.5], &table).unwrap(), 1.0);
    assert_eq!(exact_expected_fitness(&[0.25, 0.25], &table).unwrap(), 0.5);
    let r = [1.0, 2.0];
    assert!((exact_expected_fitness(&[0.5], &r).unwrap() - 1.5).abs() < 1e-15);
}

#[test]
fn support_is_lexicographic_with_first_coordinate_most_significant() {
    let dist = FiniteDist::from_eta(&[0.2, 0.7]).unwrap();
    let points: Vec<Vec<f64>> = dist.support().collect();
    assert_eq!(points, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    let want = [0.8 * 0.3, 0.8 * 0.7, 0.2 * 0.3, 0.2 * 0.7];
    for (p, w) in dist.probs().iter().zip(want) {
        assert!((p - w).abs() < 1e-15);
    }
}

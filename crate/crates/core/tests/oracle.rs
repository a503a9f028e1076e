mod common;

use common::one_set;
use proptest::prelude::*;
use tiltsens::chibar::chi_bar_weights;
use tiltsens::oracle::{
    chi_bar_mc, exact_distribution, exact_tail, exhaustive_worst_u, self_check, tilted_unit_scores, Objective,
};
use tiltsens::rng::Stream;
use tiltsens::{worst_case_expectation, Error, ScoreMatrix};

#[test]
fn uniform_law_at_gamma_one() {
    let d = exact_distribution(&one_set(&[0.0, 1.0, 2.0], 0), 1.0, &[0.3, 0.9, 0.0]).unwrap();
    assert_eq!(d.support.len(), 3);
    for (_, p) in &d.support {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn biased_pair_by_hand() {
    let p = exact_tail(&one_set(&[1.0, 0.0], 0), 2.0, &[1.0, 0.0], 1.0).unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn enumeration_guard_is_a_hard_error() {
    let s = ScoreMatrix::new((0..9).map(|_| (vec![0.0, 1.0, 2.0, 3.0, 4.0], 0)).collect()).unwrap();
    let u = vec![0.0; s.n_units()];
    assert!(matches!(exact_distribution(&s, 2.0, &u), Err(Error::EnumerationTooLarge { .. })));
    let wide = one_set(&[0.0; 7], 0);
    assert!(matches!(
        exhaustive_worst_u(&wide, 2.0, Objective::Expectation, false),
        Err(Error::EnumerationTooLarge { .. })
    ));
    let six = one_set(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 0);
    assert!(matches!(
        exhaustive_worst_u(&six, 2.0, Objective::Expectation, true),
        Err(Error::EnumerationTooLarge { .. })
    ));
}

#[test]
fn constant_scores_tie_at_the_mean() {
    let s = one_set(&[1.5, 1.5, 1.5], 0);
    let w = exhaustive_worst_u(&s, 3.0, Objective::Expectation, true).unwrap();
    assert!((w.expectation - 1.5).abs() < 1e-15);
    assert!((w.grid_expectation.unwrap() - 1.5).abs() < 1e-15);
    assert_eq!(w.variance, 0.0);
}

#[test]
fn chi_bar_reference_values() {
    let c95 = 1.959_963_984_540_054f64.powi(2);
    let t = chi_bar_mc(0.0, c95, 400_000, 3).unwrap();
    assert!(t > 0.05 && t < 0.10, "{t}");
    let w = chi_bar_weights(0.0).unwrap();
    let at_zero = chi_bar_mc(0.0, 0.0, 400_000, 4).unwrap();
    assert!((at_zero - (1.0 - w.w0)).abs() < 0.005);
    for c in [1.0, 2.706, c95] {
        let t = chi_bar_mc(1.0, c, 400_000, 5).unwrap();
        let exact = 0.5 * tiltsens::math::chi2_1_sf(c);
        let se = (exact * (1.0 - exact) / 4e5).sqrt();
        assert!((t - exact).abs() < 3.0 * se, "c {c}: {t} vs {exact}");
    }
}

#[test]
fn self_check_passes() {
    for c in self_check(11) {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

fn small_study() -> impl Strategy<Value = ScoreMatrix> {
    prop::collection::vec(
        prop_oneof![common::score_set(4), common::tied_set(4)].prop_flat_map(|q| {
            let n = q.len();
            (Just(q), 0..n)
        }),
        1..=3,
    )
    .prop_map(|sets| ScoreMatrix::new(sets).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn support_is_a_law(s in small_study(), gamma in common::gamma(), seed in any::<u64>()) {
        let mut rng = Stream::new(seed, 0, 0);
        let u: Vec<f64> = (0..s.n_units()).map(|_| rng.uniform()).collect();
        let d = exact_distribution(&s, gamma, &u).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        for w in d.support.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
        }
    }

    #[test]
    fn worst_expectation_matches_the_separable_algorithm(s in small_study(), gamma in common::gamma()) {
        let w = exhaustive_worst_u(&s, gamma, Objective::Expectation, false).unwrap();
        let sep: f64 = s.iter().map(|set| worst_case_expectation(set.q, gamma).unwrap().0).sum();
        prop_assert!((w.expectation - sep).abs() < 1e-10 * (1.0 + sep.abs()));
        let d = exact_distribution(&s, gamma, &w.u_star).unwrap();
        let mean: f64 = d.support.iter().map(|(v, p)| v * p).sum();
        prop_assert!((mean - w.expectation).abs() < 1e-10 * (1.0 + mean.abs()));
    }

    #[test]
    fn tilted_studies_have_zero_worst_expectation(s in small_study(), gamma in 1.01f64..20.0) {
        let tilted = ScoreMatrix::new(
            s.iter().map(|set| (tilted_unit_scores(set.q, gamma), set.treated)).collect(),
        )
        .unwrap();
        let w = exhaustive_worst_u(&tilted, gamma, Objective::Expectation, false).unwrap();
        prop_assert!(w.expectation.abs() < 1e-10);
    }

    #[test]
    fn binary_worst_tail_bounds_random_bias(q in common::score_set(5), gamma in 1.0f64..8.0, seed in any::<u64>()) {
        let s = one_set(&q, 0);
        let n = q.len();
        let mut rng = Stream::new(seed, 0, 0);
        for &threshold in &q {
            let worst = (0..1usize << n)
                .map(|mask| {
                    let u: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
                    exact_tail(&s, gamma, &u, threshold).unwrap()
                })
                .fold(0.0f64, f64::max);
            for _ in 0..100 {
                let u: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
                prop_assert!(exact_tail(&s, gamma, &u, threshold).unwrap() <= worst + 1e-12);
            }
        }
    }
}

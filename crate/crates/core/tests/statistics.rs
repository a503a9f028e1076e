mod common;

use common::study;
use proptest::prelude::*;
use tiltsens::statistics::{average_ranks, score_with, DEFAULT_TRIM};
use tiltsens::study::OutcomeTable;
use tiltsens::{score, Error, ScoreMatrix, ScoreSpec};

#[test]
fn mantel_haenszel_is_identity() {
    let s = study(&[(&[1.0, 0.0, 0.0], 0)]);
    let q = score(&s, ScoreSpec::MantelHaenszel).unwrap();
    assert_eq!(q.set(0).q, &[1.0, 0.0, 0.0]);
    assert!((q.set(0).mean - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn mantel_haenszel_needs_binary_outcomes() {
    let s = study(&[(&[1.0, 0.0], 0), (&[0.5, 0.0], 1)]);
    match score(&s, ScoreSpec::MantelHaenszel) {
        Err(Error::NonBinaryOutcome { set_id, .. }) => assert_eq!(set_id, "s2"),
        other => panic!("expected a binary-outcome error, got {other:?}"),
    }
}

#[test]
fn huber_hand_example() {
    // Pairwise |differences| {3, 4, 1}, median 3.
    let s = study(&[(&[4.0, 1.0, 0.0], 0)]);
    let q = score(&s, ScoreSpec::huber()).unwrap();
    let expect = [7.0 / 3.0, -2.0 / 3.0, -5.0 / 3.0];
    for (a, b) in q.set(0).q.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    assert!(q.set(0).mean.abs() < 1e-15);
}

#[test]
fn huber_zero_scale_is_an_error() {
    let s = study(&[(&[2.0, 2.0], 0), (&[1.0, 1.0, 1.0], 2)]);
    assert!(matches!(score(&s, ScoreSpec::huber()), Err(Error::ZeroScale)));
}

#[test]
fn untrimmed_huber_is_scaled_difference() {
    // ψ(x) = x gives q_j = n·(y_j − ȳ).
    let y = [3.0, -1.0, 0.5, 2.0];
    let q = score(&study(&[(&y, 1)]), "huber:inf".parse().unwrap()).unwrap();
    let mean = y.iter().sum::<f64>() / 4.0;
    for (a, b) in q.set(0).q.iter().zip(y) {
        assert!((a - 4.0 * (b - mean)).abs() < 1e-12);
    }
}

#[test]
fn u868_needs_a_plug_in() {
    let s = study(&[(&[1.0, 0.0], 0)]);
    assert!(matches!(score(&s, ScoreSpec::WeightedRankU868), Err(Error::MissingScorer)));
    let custom = |t: &OutcomeTable| {
        let treated = (0..t.n_sets()).map(|i| t.set(i).1).collect();
        ScoreMatrix::from_flat(t.offsets().to_vec(), average_ranks(t.outcomes()), treated)
    };
    let q = score_with(&s, &custom).unwrap();
    assert_eq!(q.set(0).q, &[2.0, 1.0]);
}

#[test]
fn spec_text_round_trips() {
    for text in ["diff", "huber:2.5", "huber:inf", "arank", "mh", "u868"] {
        let spec: ScoreSpec = text.parse().unwrap();
        assert_eq!(spec.to_string(), text);
    }
    assert_eq!("huber".parse::<ScoreSpec>().unwrap(), ScoreSpec::Huber { trim: DEFAULT_TRIM });
    for bad in ["huber:0", "huber:-1", "huber:nan", "wilcoxon"] {
        assert!(bad.parse::<ScoreSpec>().is_err(), "{bad}");
    }
}

#[test]
fn average_ranks_share_ties() {
    assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
}

fn outcome_study() -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
    prop::collection::vec(
        prop::collection::vec((-20i32..20).prop_map(|x| x as f64 * 0.25), 2..6)
            .prop_flat_map(|y| {
                let n = y.len();
                (Just(y), 0..n)
            }),
        1..8,
    )
}

fn to_study(sets: &[(Vec<f64>, usize)]) -> tiltsens::MatchedStudy {
    let refs: Vec<(&[f64], usize)> = sets.iter().map(|(y, t)| (&y[..], *t)).collect();
    study(&refs)
}

proptest! {
    #[test]
    fn huber_matches_double_loop(sets in outcome_study()) {
        let s = to_study(&sets);
        let mut diffs: Vec<f64> = Vec::new();
        for (y, _) in &sets {
            for j in 0..y.len() {
                for l in j + 1..y.len() {
                    diffs.push((y[j] - y[l]).abs());
                }
            }
        }
        diffs.sort_by(f64::total_cmp);
        let m = diffs.len();
        let shat = if m % 2 == 1 { diffs[m / 2] } else { 0.5 * (diffs[m / 2 - 1] + diffs[m / 2]) };
        prop_assume!(shat > 0.0);
        let q = score(&s, ScoreSpec::huber()).unwrap();
        for (i, (y, _)) in sets.iter().enumerate() {
            let qs = q.set(i).q;
            for j in 0..y.len() {
                let direct: f64 = (0..y.len())
                    .map(|l| {
                        let x = y[j] - y[l];
                        x.signum() * (x.abs() / shat).min(2.5) * f64::from(u8::from(x != 0.0))
                    })
                    .sum();
                prop_assert!((qs[j] - direct).abs() < 1e-12);
            }
            // Oddness of ψ.
            prop_assert!(q.set(i).mean.abs() < 1e-10);
        }
    }

    #[test]
    fn aligned_ranks_are_a_rank_permutation(sets in outcome_study()) {
        let s = to_study(&sets);
        let q = score(&s, ScoreSpec::AlignedRank).unwrap();
        let n = q.n_units() as f64;
        let total: f64 = q.scores().iter().sum();
        prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
        prop_assert!(q.scores().iter().all(|&r| (1.0..=n).contains(&r) && (2.0 * r).fract() == 0.0));
    }

    #[test]
    fn diff_means_is_translation_equivariant(sets in outcome_study(), shift in -50.0f64..50.0) {
        let a = score(&to_study(&sets), ScoreSpec::DiffMeans).unwrap();
        let mut moved = sets.clone();
        for y in moved[0].0.iter_mut() {
            *y += shift;
        }
        let b = score(&to_study(&moved), ScoreSpec::DiffMeans).unwrap();
        let centered = |m: &ScoreMatrix, i: usize| {
            let s = m.set(i);
            s.treated_score() - s.mean
        };
        for i in 0..sets.len() {
            prop_assert!((centered(&a, i) - centered(&b, i)).abs() < 1e-9);
        }
    }

    #[test]
    fn scoring_is_deterministic(sets in outcome_study()) {
        let s = to_study(&sets);
        for spec in [ScoreSpec::DiffMeans, ScoreSpec::AlignedRank] {
            prop_assert_eq!(score(&s, spec).unwrap(), score(&s, spec).unwrap());
        }
    }
}

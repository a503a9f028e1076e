mod common;

use common::{one_set, study};
use proptest::prelude::*;
use tiltsens::{statistic_total, Error, MatchedSet, MatchedStudy, ScoreMatrix, Unit};

fn unit(treated: bool, outcome: f64) -> Unit {
    Unit { treated, outcome }
}

#[test]
fn smallest_legal_study() {
    let s = study(&[(&[3.0, 1.0], 0)]);
    assert_eq!(s.n_sets(), 1);
    assert_eq!(s.sets()[0].units.len(), 2);
}

#[test]
fn two_treated_units_name_the_set() {
    let set = MatchedSet {
        set_id: "s1".into(),
        units: vec![unit(true, 1.0), unit(true, 0.0)],
    };
    match MatchedStudy::new(vec![set]) {
        Err(Error::TreatedCount { set_id, count }) => {
            assert_eq!(set_id, "s1");
            assert_eq!(count, 2);
        }
        other => panic!("expected a treated-count error, got {other:?}"),
    }
}

#[test]
fn validation_rejects_each_broken_invariant() {
    let ok = |id: &str| MatchedSet {
        set_id: id.into(),
        units: vec![unit(true, 1.0), unit(false, 0.0)],
    };
    let single = MatchedSet {
        set_id: "x".into(),
        units: vec![unit(true, 1.0)],
    };
    let untreated = MatchedSet {
        set_id: "x".into(),
        units: vec![unit(false, 1.0), unit(false, 0.0)],
    };
    let nan = MatchedSet {
        set_id: "x".into(),
        units: vec![unit(true, f64::NAN), unit(false, 0.0)],
    };
    assert!(matches!(MatchedStudy::new(vec![]), Err(Error::EmptyStudy)));
    assert!(matches!(MatchedStudy::new(vec![single]), Err(Error::SetTooSmall { .. })));
    assert!(matches!(MatchedStudy::new(vec![untreated]), Err(Error::TreatedCount { count: 0, .. })));
    assert!(matches!(MatchedStudy::new(vec![nan]), Err(Error::NonFiniteOutcome { .. })));
    assert!(matches!(MatchedStudy::new(vec![ok("a"), ok("a")]), Err(Error::DuplicateSet(_))));
    assert!(MatchedStudy::new(vec![ok("a"), ok("b")]).is_ok());
}

#[test]
fn twelve_triples() {
    let y: Vec<[f64; 3]> = (0..12).map(|i| [i as f64, 0.5 * i as f64, -1.0]).collect();
    let sets: Vec<(&[f64], usize)> = y.iter().map(|r| (&r[..], 0)).collect();
    let s = study(&sets);
    assert_eq!(s.n_sets(), 12);
    assert!(s.sets().iter().all(|x| x.units.len() == 3));
}

#[test]
fn statistic_total_examples() {
    assert_eq!(statistic_total(&one_set(&[3.0, 1.0, 0.0], 0)), 3.0);
    let two = ScoreMatrix::new(vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1)]).unwrap();
    assert_eq!(statistic_total(&two), 2.0);
}

#[test]
fn json_round_trip_validates() {
    let s = study(&[(&[0.1, 0.2, 1.0 / 3.0], 2), (&[1e-300, -7.5], 0)]);
    let text = serde_json::to_string(&s).unwrap();
    let back: MatchedStudy = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    let bad = text.replace("\"treated\":false", "\"treated\":true");
    assert!(serde_json::from_str::<MatchedStudy>(&bad).is_err());
}

#[test]
fn score_matrix_rejects_bad_treated_index() {
    assert!(ScoreMatrix::new(vec![(vec![1.0, 2.0], 2)]).is_err());
    assert!(ScoreMatrix::new(vec![(vec![1.0], 0)]).is_err());
}

proptest! {
    #[test]
    fn total_is_the_double_sum(m in common::score_matrix(8, 6)) {
        let mut brute = 0.0;
        for (i, s) in m.iter().enumerate() {
            for (j, &q) in s.q.iter().enumerate() {
                if j == m.treated()[i] {
                    brute += q;
                }
            }
        }
        prop_assert!((statistic_total(&m) - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
    }

    #[test]
    fn set_means_are_arithmetic_means(m in common::score_matrix(8, 6)) {
        for s in m.iter() {
            let mean = s.q.iter().sum::<f64>() / s.len() as f64;
            prop_assert!((s.mean - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }
}

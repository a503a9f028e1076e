#![allow(dead_code)]

use proptest::prelude::*;
use tiltsens::{MatchedSet, MatchedStudy, ScoreMatrix, Unit};

/// Builds a study from `(outcomes, treated index)` per set, ids `s1, s2, …`.
pub fn study(sets: &[(&[f64], usize)]) -> MatchedStudy {
    let sets = sets
        .iter()
        .enumerate()
        .map(|(i, (y, t))| MatchedSet {
            set_id: format!("s{}", i + 1),
            units: y
                .iter()
                .enumerate()
                .map(|(j, &outcome)| Unit {
                    treated: j == *t,
                    outcome,
                })
                .collect(),
        })
        .collect();
    MatchedStudy::new(sets).unwrap()
}

pub fn one_set(q: &[f64], treated: usize) -> ScoreMatrix {
    ScoreMatrix::new(vec![(q.to_vec(), treated)]).unwrap()
}

/// Scores of one set with `2..=max_n` units, values in `[-10, 10]`.
pub fn score_set(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..=max_n)
}

/// Scores with frequent ties: small integers.
pub fn tied_set(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-3i32..=3).prop_map(f64::from), 2..=max_n)
}

/// A study of `1..=max_sets` sets with a treated index in range.
pub fn score_matrix(max_sets: usize, max_n: usize) -> impl Strategy<Value = ScoreMatrix> {
    prop::collection::vec(
        score_set(max_n).prop_flat_map(|q| {
            let n = q.len();
            (Just(q), 0..n)
        }),
        1..=max_sets,
    )
    .prop_map(|sets| ScoreMatrix::new(sets).unwrap())
}

pub fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), 1.0f64..20.0]
}

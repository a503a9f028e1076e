//! Matched studies and per-unit score matrices.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::csum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub treated: bool,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSet {
    pub set_id: String,
    pub units: Vec<Unit>,
}

impl MatchedSet {
    /// Index of the treated unit. Only meaningful on validated sets.
    pub fn treated_index(&self) -> usize {
        self.units.iter().position(|u| u.treated).unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.units.len() < 2 {
            return Err(Error::SetTooSmall {
                set_id: self.set_id.clone(),
                size: self.units.len(),
            });
        }
        let count = self.units.iter().filter(|u| u.treated).count();
        if count != 1 {
            return Err(Error::TreatedCount {
                set_id: self.set_id.clone(),
                count,
            });
        }
        if self.units.iter().any(|u| !u.outcome.is_finite()) {
            return Err(Error::NonFiniteOutcome {
                set_id: self.set_id.clone(),
            });
        }
        Ok(())
    }
}

/// A validated collection of matched sets, each with exactly one treated
/// unit and at least one control. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStudy")]
pub struct MatchedStudy {
    sets: Vec<MatchedSet>,
}

#[derive(Deserialize)]
struct RawStudy {
    sets: Vec<MatchedSet>,
}

impl TryFrom<RawStudy> for MatchedStudy {
    type Error = Error;

    fn try_from(raw: RawStudy) -> Result<Self> {
        MatchedStudy::new(raw.sets)
    }
}

impl MatchedStudy {
    pub fn new(sets: Vec<MatchedSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyStudy);
        }
        let mut seen = BTreeSet::new();
        for set in &sets {
            set.validate()?;
            if !seen.insert(set.set_id.as_str()) {
                return Err(Error::DuplicateSet(set.set_id.clone()));
            }
        }
        Ok(MatchedStudy { sets })
    }

    pub fn sets(&self) -> &[MatchedSet] {
        &self.sets
    }

    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn n_units(&self) -> usize {
        self.sets.iter().map(|s| s.units.len()).sum()
    }

    /// Checks that every outcome is 0 or 1. Binary semantics are never
    /// inferred; callers that need them ask explicitly.
    pub fn require_binary(&self) -> Result<()> {
        for set in &self.sets {
            if let Some(u) = set
                .units
                .iter()
                .find(|u| u.outcome != 0.0 && u.outcome != 1.0)
            {
                return Err(Error::NonBinaryOutcome {
                    set_id: set.set_id.clone(),
                    value: u.outcome,
                });
            }
        }
        Ok(())
    }

    pub fn into_sets(self) -> Vec<MatchedSet> {
        self.sets
    }
}

/// Flat outcome storage used by the scoring code and the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    offsets: Vec<usize>,
    outcomes: Vec<f64>,
    treated: Vec<usize>,
}

impl OutcomeTable {
    /// Builds a table from flat parts; `offsets` has one more entry than there
    /// are sets and `treated[i]` indexes within set `i`.
    pub fn from_parts(offsets: Vec<usize>, outcomes: Vec<f64>, treated: Vec<usize>) -> Result<Self> {
        check_layout(&offsets, outcomes.len(), &treated)?;
        if outcomes.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidArgument(String::from("non-finite outcome")));
        }
        Ok(OutcomeTable {
            offsets,
            outcomes,
            treated,
        })
    }

    pub fn n_sets(&self) -> usize {
        self.treated.len()
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn set(&self, i: usize) -> (&[f64], usize) {
        (&self.outcomes[self.offsets[i]..self.offsets[i + 1]], self.treated[i])
    }

    pub fn is_binary(&self) -> bool {
        self.outcomes.iter().all(|&y| y == 0.0 || y == 1.0)
    }

    /// Converts back to a study with set ids `s1, s2, …`.
    pub fn to_study(&self) -> MatchedStudy {
        let sets = (0..self.n_sets())
            .map(|i| {
                let (ys, t) = self.set(i);
                MatchedSet {
                    set_id: alloc::format!("s{}", i + 1),
                    units: ys
                        .iter()
                        .enumerate()
                        .map(|(j, &y)| Unit {
                            treated: j == t,
                            outcome: y,
                        })
                        .collect(),
                }
            })
            .collect();
        MatchedStudy { sets }
    }
}

impl From<&MatchedStudy> for OutcomeTable {
    fn from(study: &MatchedStudy) -> Self {
        let mut offsets = Vec::with_capacity(study.n_sets() + 1);
        let mut outcomes = Vec::with_capacity(study.n_units());
        let mut treated = Vec::with_capacity(study.n_sets());
        offsets.push(0);
        for set in &study.sets {
            outcomes.extend(set.units.iter().map(|u| u.outcome));
            offsets.push(outcomes.len());
            treated.push(set.treated_index());
        }
        OutcomeTable {
            offsets,
            outcomes,
            treated,
        }
    }
}

fn check_layout(offsets: &[usize], len: usize, treated: &[usize]) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidScores(String::from(m)));
    if treated.is_empty() {
        return Err(Error::EmptyStudy);
    }
    if offsets.len() != treated.len() + 1 || offsets[0] != 0 || offsets[treated.len()] != len {
        return bad("offsets do not match the data length");
    }
    for (i, &t) in treated.iter().enumerate() {
        if offsets[i + 1] < offsets[i] + 2 {
            return bad("every set needs at least two units");
        }
        if t >= offsets[i + 1] - offsets[i] {
            return bad("treated index out of range");
        }
    }
    Ok(())
}

/// Per-unit scores `q_ij` with set means and the treated position of each set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    offsets: Vec<usize>,
    q: Vec<f64>,
    mean: Vec<f64>,
    treated: Vec<usize>,
}

/// Borrowed view of one set of a [`ScoreMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct SetScores<'a> {
    pub q: &'a [f64],
    pub mean: f64,
    pub treated: usize,
}

impl SetScores<'_> {
    #[inline]
    pub fn treated_score(&self) -> f64 {
        self.q[self.treated]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.q.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

impl ScoreMatrix {
    /// One `(scores, treated_index)` pair per set.
    pub fn new(sets: Vec<(Vec<f64>, usize)>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        let mut q = Vec::new();
        let mut treated = Vec::with_capacity(sets.len());
        offsets.push(0);
        for (scores, t) in sets {
            q.extend(scores);
            offsets.push(q.len());
            treated.push(t);
        }
        Self::from_flat(offsets, q, treated)
    }

    pub fn from_flat(offsets: Vec<usize>, q: Vec<f64>, treated: Vec<usize>) -> Result<Self> {
        check_layout(&offsets, q.len(), &treated)?;
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidScores(String::from("non-finite score")));
        }
        let mean = offsets
            .windows(2)
            .map(|w| csum(q[w[0]..w[1]].iter().copied()) / (w[1] - w[0]) as f64)
            .collect();
        Ok(ScoreMatrix {
            offsets,
            q,
            mean,
            treated,
        })
    }

    pub fn n_sets(&self) -> usize {
        self.treated.len()
    }

    pub fn n_units(&self) -> usize {
        self.q.len()
    }

    #[inline]
    pub fn set(&self, i: usize) -> SetScores<'_> {
        SetScores {
            q: &self.q[self.offsets[i]..self.offsets[i + 1]],
            mean: self.mean[i],
            treated: self.treated[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SetScores<'_>> + '_ {
        (0..self.n_sets()).map(move |i| self.set(i))
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn scores(&self) -> &[f64] {
        &self.q
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn treated(&self) -> &[usize] {
        &self.treated
    }

    /// The same scores with each set's treated unit moved to `treated[i]`.
    pub fn with_treated(&self, treated: Vec<usize>) -> Result<Self> {
        check_layout(&self.offsets, self.q.len(), &treated)?;
        Ok(ScoreMatrix {
            treated,
            ..self.clone()
        })
    }
}

/// `T = Σ_i q_i[treated_i]`.
pub fn statistic_total(scores: &ScoreMatrix) -> f64 {
    csum(scores.iter().map(|s| s.treated_score()))
}

//! Score functions `q = q(Y)` for the supported sum statistics.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::study::{MatchedStudy, OutcomeTable, ScoreMatrix};

/// Default Huber trimming constant.
pub const DEFAULT_TRIM: f64 = 2.5;

/// Which statistic to score. Text form: `diff`, `huber[:trim]`, `arank`, `mh`,
/// `u868`; `huber:inf` is the untrimmed, unscaled `ψ(x) = x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScoreSpec {
    DiffMeans,
    Huber { trim: f64 },
    AlignedRank,
    MantelHaenszel,
    /// Weighted rank statistic with a caller-supplied scorer; see [`Scorer`].
    WeightedRankU868,
}

impl ScoreSpec {
    pub fn huber() -> Self {
        ScoreSpec::Huber { trim: DEFAULT_TRIM }
    }

    /// Statistics whose per-set scores always average to zero.
    pub fn is_m_statistic(&self) -> bool {
        matches!(self, ScoreSpec::Huber { .. })
    }
}

impl fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSpec::DiffMeans => f.write_str("diff"),
            ScoreSpec::Huber { trim } if trim.is_infinite() => f.write_str("huber:inf"),
            ScoreSpec::Huber { trim } => write!(f, "huber:{trim}"),
            ScoreSpec::AlignedRank => f.write_str("arank"),
            ScoreSpec::MantelHaenszel => f.write_str("mh"),
            ScoreSpec::WeightedRankU868 => f.write_str("u868"),
        }
    }
}

impl FromStr for ScoreSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = match s {
            "diff" => ScoreSpec::DiffMeans,
            "huber" => ScoreSpec::huber(),
            "arank" => ScoreSpec::AlignedRank,
            "mh" => ScoreSpec::MantelHaenszel,
            "u868" => ScoreSpec::WeightedRankU868,
            _ => {
                let trim = s
                    .strip_prefix("huber:")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown statistic `{s}`")))?;
                // `inf` parses as +∞; NaN and non-positive values do not pass.
                if !(trim > 0.0) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "huber trim must be positive, got {trim}"
                    )));
                }
                ScoreSpec::Huber { trim }
            }
        };
        Ok(spec)
    }
}

impl From<ScoreSpec> for String {
    fn from(spec: ScoreSpec) -> String {
        spec.to_string()
    }
}

impl TryFrom<String> for ScoreSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Plug-in scorer, used for statistics whose scores are not built in.
pub trait Scorer {
    fn score(&self, outcomes: &OutcomeTable) -> Result<ScoreMatrix>;
}

impl<F> Scorer for F
where
    F: Fn(&OutcomeTable) -> Result<ScoreMatrix>,
{
    fn score(&self, outcomes: &OutcomeTable) -> Result<ScoreMatrix> {
        self(outcomes)
    }
}

/// Scores a study under the sharp null.
pub fn score(study: &MatchedStudy, spec: ScoreSpec) -> Result<ScoreMatrix> {
    if spec == ScoreSpec::MantelHaenszel {
        // Report the offending set by id.
        study.require_binary()?;
    }
    score_table(&OutcomeTable::from(study), spec)
}

/// Scores a study with a plug-in scorer (required for `u868`).
pub fn score_with(study: &MatchedStudy, scorer: &dyn Scorer) -> Result<ScoreMatrix> {
    scorer.score(&OutcomeTable::from(study))
}

/// Scores flat outcome storage directly.
pub fn score_table(table: &OutcomeTable, spec: ScoreSpec) -> Result<ScoreMatrix> {
    let offsets = table.offsets().to_vec();
    let treated = (0..table.n_sets()).map(|i| table.set(i).1).collect();
    let q = match spec {
        ScoreSpec::DiffMeans => table.outcomes().to_vec(),
        ScoreSpec::MantelHaenszel => {
            if !table.is_binary() {
                let (i, &value) = table
                    .outcomes()
                    .iter()
                    .enumerate()
                    .find(|(_, &y)| y != 0.0 && y != 1.0)
                    .expect("non-binary outcome present");
                let set = table.offsets().partition_point(|&o| o <= i) - 1;
                return Err(Error::NonBinaryOutcome {
                    set_id: alloc::format!("s{}", set + 1),
                    value,
                });
            }
            table.outcomes().to_vec()
        }
        ScoreSpec::Huber { trim } => huber_scores(table, trim, None)?,
        ScoreSpec::AlignedRank => aligned_ranks(table),
        ScoreSpec::WeightedRankU868 => return Err(Error::MissingScorer),
    };
    ScoreMatrix::from_flat(offsets, q, treated)
}

/// Pooled median of all within-set absolute pairwise differences.
pub fn huber_scale(table: &OutcomeTable) -> f64 {
    let mut diffs = Vec::new();
    for i in 0..table.n_sets() {
        let (ys, _) = table.set(i);
        for (j, &a) in ys.iter().enumerate() {
            diffs.extend(ys[j + 1..].iter().map(|&b| (a - b).abs()));
        }
    }
    median(&mut diffs)
}

fn median(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let (_, &mut hi, _) = xs.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        // The lower middle is the maximum of the left partition.
        let lo = xs[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Huber scores with a caller-fixed scale instead of the pooled median.
pub fn huber_with_scale(table: &OutcomeTable, trim: f64, scale: f64) -> Result<ScoreMatrix> {
    if !(trim > 0.0) || !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "invalid huber trim {trim} or scale {scale}"
        )));
    }
    let q = huber_scores(table, trim, Some(scale))?;
    let treated = (0..table.n_sets()).map(|i| table.set(i).1).collect();
    ScoreMatrix::from_flat(table.offsets().to_vec(), q, treated)
}

fn huber_scores(table: &OutcomeTable, trim: f64, scale: Option<f64>) -> Result<Vec<f64>> {
    let untrimmed = trim.is_infinite();
    let scale = if untrimmed {
        1.0
    } else {
        scale.unwrap_or_else(|| huber_scale(table))
    };
    if scale == 0.0 {
        return Err(Error::ZeroScale);
    }
    let psi = |x: f64| {
        if untrimmed {
            x
        } else {
            let r = x.abs() / scale;
            r.min(trim).copysign(x)
        }
    };
    let mut q = vec![0.0; table.n_units()];
    for i in 0..table.n_sets() {
        let (ys, _) = table.set(i);
        let base = table.offsets()[i];
        // ψ is odd, so each pair contributes ±ψ(d) to its two units.
        for j in 0..ys.len() {
            for l in j + 1..ys.len() {
                let d = ys[j] - ys[l];
                if d != 0.0 {
                    let v = psi(d);
                    q[base + j] += v;
                    q[base + l] -= v;
                }
            }
        }
    }
    Ok(q)
}

fn aligned_ranks(table: &OutcomeTable) -> Vec<f64> {
    let mut aligned = Vec::with_capacity(table.n_units());
    for i in 0..table.n_sets() {
        let (ys, _) = table.set(i);
        let mean = crate::math::csum(ys.iter().copied()) / ys.len() as f64;
        aligned.extend(ys.iter().map(|&y| y - mean));
    }
    average_ranks(&aligned)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_unstable_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{MatchedSet, Unit};
    use approx::assert_abs_diff_eq;

    fn study(sets: &[&[f64]]) -> MatchedStudy {
        MatchedStudy::new(
            sets.iter()
                .enumerate()
                .map(|(i, ys)| MatchedSet {
                    set_id: alloc::format!("s{i}"),
                    units: ys
                        .iter()
                        .enumerate()
                        .map(|(j, &y)| Unit {
                            treated: j == 0,
                            outcome: y,
                        })
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_cli_forms() {
        assert_eq!("diff".parse::<ScoreSpec>().unwrap(), ScoreSpec::DiffMeans);
        assert_eq!("huber:2.5".parse::<ScoreSpec>().unwrap(), ScoreSpec::huber());
        assert_eq!("huber".parse::<ScoreSpec>().unwrap(), ScoreSpec::huber());
        assert_eq!(
            "huber:inf".parse::<ScoreSpec>().unwrap(),
            ScoreSpec::Huber { trim: f64::INFINITY }
        );
        assert!("huber:0".parse::<ScoreSpec>().is_err());
        assert!("huber:-1".parse::<ScoreSpec>().is_err());
        assert!("ranks".parse::<ScoreSpec>().is_err());
        for s in ["diff", "huber:2.5", "huber:inf", "arank", "mh", "u868"] {
            assert_eq!(s.parse::<ScoreSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn mantel_haenszel_is_identity_on_binary_outcomes() {
        let s = score(&study(&[&[1.0, 0.0, 0.0]]), ScoreSpec::MantelHaenszel).unwrap();
        assert_eq!(s.set(0).q, &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(s.set(0).mean, 1.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(
            score(&study(&[&[2.0, 0.0]]), ScoreSpec::MantelHaenszel),
            Err(Error::NonBinaryOutcome { .. })
        ));
    }

    #[test]
    fn huber_hand_example() {
        let s = score(&study(&[&[4.0, 1.0, 0.0]]), ScoreSpec::huber()).unwrap();
        let q = s.set(0).q;
        assert_abs_diff_eq!(q[0], 7.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q[1], -2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q[2], -5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.set(0).mean, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn huber_trims_large_differences() {
        // Pairs: |10-0|=10, |10-1|=9, |0-1|=1 → ŝ = 9; with trim 1 every
        // difference at or above 9 is capped.
        let s = score(&study(&[&[10.0, 0.0, 1.0]]), ScoreSpec::Huber { trim: 1.0 }).unwrap();
        let q = s.set(0).q;
        assert_abs_diff_eq!(q[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q[1], -1.0 - 1.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn huber_zero_scale_is_an_error() {
        assert_eq!(
            score(&study(&[&[1.0, 1.0], &[2.0, 2.0]]), ScoreSpec::huber()),
            Err(Error::ZeroScale)
        );
    }

    #[test]
    fn aligned_ranks_use_average_ties() {
        let s = score(&study(&[&[1.0, 0.0], &[5.0, 4.0]]), ScoreSpec::AlignedRank).unwrap();
        // Aligned values: 0.5, -0.5, 0.5, -0.5.
        assert_eq!(s.scores(), &[3.5, 1.5, 3.5, 1.5]);
    }

    #[test]
    fn u868_needs_a_plugin() {
        let st = study(&[&[1.0, 0.0]]);
        assert_eq!(score(&st, ScoreSpec::WeightedRankU868), Err(Error::MissingScorer));
        let plugin = |t: &OutcomeTable| score_table(t, ScoreSpec::DiffMeans);
        assert!(score_with(&st, &plugin).is_ok());
    }

    #[test]
    fn median_of_even_count_averages_the_middle() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
    }
}

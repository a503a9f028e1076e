//! Tilted statistics.
//!
//! The tilted per-unit score `t = c − κ_Γ|c|`, with `c = q − q̄`, has
//! worst-case null expectation exactly zero for every set size, and its
//! worst-case variance has a closed form. Both are driven by whether a unit
//! sits strictly above its set mean, so the worst-case bias pattern does not
//! depend on Γ.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{norm_quantile, norm_sf, sqrt, CompensatedSum};
use crate::study::{ScoreMatrix, SetScores};
use crate::{check_alpha, check_gamma, TestResult};

/// Matched-set weights applied to the tilted contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFamily {
    Unit,
    /// Sign-score weights; for two-valued scores they recover the
    /// conventional numerator `T_i − μ_Γi`.
    #[serde(rename = "ss")]
    SignScore,
    /// Inverse-probability weights.
    Ipw,
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightFamily::Unit => "unit",
            WeightFamily::SignScore => "ss",
            WeightFamily::Ipw => "ipw",
        })
    }
}

impl FromStr for WeightFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit" => Ok(WeightFamily::Unit),
            "ss" | "sign" | "sign_score" => Ok(WeightFamily::SignScore),
            "ipw" => Ok(WeightFamily::Ipw),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown weight family `{other}`"
            ))),
        }
    }
}

/// Absolute tolerance for comparing a score with its set mean.
#[inline]
pub fn mean_tol(mean: f64) -> f64 {
    1e-12 * (1.0 + mean.abs())
}

/// Strictly above the set mean, beyond [`mean_tol`].
#[inline]
pub fn is_above(q: f64, mean: f64) -> bool {
    q - mean > mean_tol(mean)
}

/// Γ-free summary of one set from which every tilted quantity follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSummary {
    pub n: usize,
    pub n_above: usize,
    /// Centered treated score `T_i − q̄_i`.
    pub treated_centered: f64,
    pub treated_above: bool,
    /// `Σ c²` over units above and at/below the mean.
    pub ss_above: f64,
    pub ss_below: f64,
    /// Number of distinct score values (capped at 3).
    pub distinct: usize,
}

impl TiltSummary {
    pub fn new(s: &SetScores<'_>) -> Self {
        let mut n_above = 0;
        let mut above = CompensatedSum::new();
        let mut below = CompensatedSum::new();
        for &q in s.q {
            let c = q - s.mean;
            if is_above(q, s.mean) {
                n_above += 1;
                above.add(c * c);
            } else {
                below.add(c * c);
            }
        }
        TiltSummary {
            n: s.len(),
            n_above,
            treated_centered: s.treated_score() - s.mean,
            treated_above: is_above(s.treated_score(), s.mean),
            ss_above: above.value(),
            ss_below: below.value(),
            distinct: distinct_values(s.q),
        }
    }

    /// `n + (Γ − 1)·n_above`.
    #[inline]
    pub fn denominator(&self, gamma: f64) -> f64 {
        self.n as f64 + (gamma - 1.0) * self.n_above as f64
    }

    /// The tilted contribution `T_Γi` of the treated unit.
    #[inline]
    pub fn tilted(&self, gamma: f64) -> f64 {
        let g = 2.0 * gamma / (1.0 + gamma);
        if self.treated_above {
            g * self.treated_centered / gamma
        } else {
            g * self.treated_centered
        }
    }

    /// `ν̃²_Γi`.
    #[inline]
    pub fn var_tilde(&self, gamma: f64) -> f64 {
        let g = 2.0 * gamma / (1.0 + gamma);
        g * g * (self.ss_above / gamma + self.ss_below) / self.denominator(gamma)
    }

    #[inline]
    pub fn weight(&self, gamma: f64, family: WeightFamily) -> f64 {
        let n = self.n as f64;
        match family {
            WeightFamily::Unit => 1.0,
            WeightFamily::SignScore => 0.5 * (gamma + 1.0) * n / self.denominator(gamma),
            WeightFamily::Ipw => 0.5 * (gamma + 1.0) / gamma * self.denominator(gamma) / n,
        }
    }
}

fn distinct_values(q: &[f64]) -> usize {
    let scale = q.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    let mut reps: [f64; 2] = [f64::NAN; 2];
    let mut count = 0;
    for &x in q {
        if reps[..count].iter().any(|&r| (r - x).abs() <= tol) {
            continue;
        }
        if count == 2 {
            return 3;
        }
        reps[count] = x;
        count += 1;
    }
    count
}

/// Per-set tilted scores, worst-case variances and weights at one Γ.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedScores {
    gamma: f64,
    offsets: Vec<usize>,
    t: Vec<f64>,
    treated: Vec<usize>,
    n_above: Vec<usize>,
    var_tilde: Vec<f64>,
    weight: Vec<f64>,
}

impl TiltedScores {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_sets(&self) -> usize {
        self.treated.len()
    }

    /// Per-unit tilted scores of set `i`.
    pub fn unit_scores(&self, i: usize) -> &[f64] {
        &self.t[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `T_Γi`, the treated unit's tilted score.
    pub fn contribution(&self, i: usize) -> f64 {
        self.unit_scores(i)[self.treated[i]]
    }

    pub fn n_above(&self, i: usize) -> usize {
        self.n_above[i]
    }

    pub fn var_tilde(&self, i: usize) -> f64 {
        self.var_tilde[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Replaces the (default unit) weights.
    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.n_sets() || weight.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(alloc::string::String::from(
                "need one positive finite weight per set",
            )));
        }
        self.weight = weight;
        Ok(self)
    }

    /// `Σ_i w_i T_Γi`.
    pub fn statistic(&self) -> f64 {
        (0..self.n_sets())
            .map(|i| self.weight[i] * self.contribution(i))
            .collect::<CompensatedSum>()
            .value()
    }

    /// `Σ_i w_i² ν̃²_Γi`.
    pub fn variance(&self) -> f64 {
        self.weight
            .iter()
            .zip(&self.var_tilde)
            .map(|(w, v)| w * w * v)
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Tilts every set at Γ, with unit weights.
pub fn tilt(scores: &ScoreMatrix, gamma: f64) -> Result<TiltedScores> {
    check_gamma(gamma)?;
    let g = 2.0 * gamma / (1.0 + gamma);
    let mut t = Vec::with_capacity(scores.n_units());
    let mut n_above = Vec::with_capacity(scores.n_sets());
    let mut var_tilde = Vec::with_capacity(scores.n_sets());
    for s in scores.iter() {
        let summary = TiltSummary::new(&s);
        t.extend(s.q.iter().map(|&q| {
            let c = q - s.mean;
            if is_above(q, s.mean) {
                g * c / gamma
            } else {
                g * c
            }
        }));
        n_above.push(summary.n_above);
        var_tilde.push(summary.var_tilde(gamma));
    }
    Ok(TiltedScores {
        gamma,
        offsets: scores.offsets().to_vec(),
        t,
        treated: scores.treated().to_vec(),
        n_above,
        var_tilde,
        weight: alloc::vec![1.0; scores.n_sets()],
    })
}

/// Per-set weights of the requested family.
pub fn weights(scores: &ScoreMatrix, gamma: f64, family: WeightFamily) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let summary = TiltSummary::new(&s);
            if family == WeightFamily::SignScore && summary.distinct > 2 {
                return Err(Error::NotSignScore {
                    set: i,
                    distinct: summary.distinct,
                });
            }
            Ok(summary.weight(gamma, family))
        })
        .collect()
}

/// Normal-approximation test on `Σ w T_Γ / sqrt(Σ w² ν̃²)`.
pub fn tilted_pvalue(tilted: &TiltedScores, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let var = tilted.variance();
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(result(tilted.statistic() / sqrt(var), alpha))
}

fn result(deviate: f64, alpha: f64) -> TestResult {
    TestResult {
        deviate,
        pvalue: norm_sf(deviate),
        reject: deviate >= norm_quantile(1.0 - alpha),
    }
}

/// Per-set inverse-probability-weighted contribution
/// `n⁻¹ Σ_j Z_j (q_j − q̄)/ϱ̃_j`, with `ϱ̃` the worst-case assignment law.
pub fn ipw_statistic(scores: &ScoreMatrix, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    Ok(scores
        .iter()
        .map(|s| {
            let summary = TiltSummary::new(&s);
            let rho = if summary.treated_above { gamma } else { 1.0 } / summary.denominator(gamma);
            summary.treated_centered / rho / summary.n as f64
        })
        .collect())
}

/// Γ-free per-set summaries; each tilted test then costs `O(I)`.
#[derive(Debug, Clone)]
pub struct TiltPrep {
    sets: Vec<TiltSummary>,
}

impl TiltPrep {
    pub fn new(scores: &ScoreMatrix) -> Self {
        TiltPrep {
            sets: scores.iter().map(|s| TiltSummary::new(&s)).collect(),
        }
    }

    pub fn summaries(&self) -> &[TiltSummary] {
        &self.sets
    }

    /// Fails if sign-score weights are requested on a set with more than two
    /// distinct scores.
    pub fn check_family(&self, family: WeightFamily) -> Result<()> {
        if family == WeightFamily::SignScore {
            if let Some((i, s)) = self.sets.iter().enumerate().find(|(_, s)| s.distinct > 2) {
                return Err(Error::NotSignScore {
                    set: i,
                    distinct: s.distinct,
                });
            }
        }
        Ok(())
    }

    /// `(Σ w T_Γ, Σ w² ν̃²)`.
    pub fn totals(&self, gamma: f64, family: WeightFamily) -> (f64, f64) {
        let mut stat = CompensatedSum::new();
        let mut var = CompensatedSum::new();
        for s in &self.sets {
            let w = s.weight(gamma, family);
            stat.add(w * s.tilted(gamma));
            var.add(w * w * s.var_tilde(gamma));
        }
        (stat.value(), var.value())
    }

    pub fn deviate(&self, gamma: f64, family: WeightFamily) -> Result<f64> {
        check_gamma(gamma)?;
        self.check_family(family)?;
        let (stat, var) = self.totals(gamma, family);
        if !(var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(stat / sqrt(var))
    }

    pub fn test(&self, gamma: f64, family: WeightFamily, alpha: f64) -> Result<TestResult> {
        check_alpha(alpha)?;
        Ok(result(self.deviate(gamma, family)?, alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conventional::worst_case_expectation;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn one(q: &[f64], treated: usize) -> ScoreMatrix {
        ScoreMatrix::new(vec![(q.to_vec(), treated)]).unwrap()
    }

    #[test]
    fn hand_example() {
        let t = tilt(&one(&[3.0, 1.0, 0.0], 0), 2.0).unwrap();
        assert_abs_diff_eq!(t.contribution(0), 10.0 / 9.0, epsilon = 1e-14);
        assert_eq!(t.n_above(0), 1);
    }

    #[test]
    fn gamma_one_is_centering() {
        let q = [2.0, -1.0, 0.5, 4.0];
        let t = tilt(&one(&q, 2), 1.0).unwrap();
        let mean = 5.5 / 4.0;
        for (x, y) in t.unit_scores(0).iter().zip(q) {
            assert_abs_diff_eq!(*x, y - mean, epsilon = 1e-14);
        }
        let var = q.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(t.var_tilde(0), var, epsilon = 1e-13);
    }

    #[test]
    fn weight_examples() {
        let s = one(&[1.0, 0.0, 0.0], 0);
        let ss = weights(&s, 2.0, WeightFamily::SignScore).unwrap()[0];
        let ipw = weights(&s, 2.0, WeightFamily::Ipw).unwrap()[0];
        assert_abs_diff_eq!(ss, 1.125, epsilon = 1e-15);
        assert_abs_diff_eq!(ipw, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ss * ipw, 9.0 / 8.0, epsilon = 1e-15);
        for f in [WeightFamily::Unit, WeightFamily::SignScore, WeightFamily::Ipw] {
            assert_eq!(weights(&s, 1.0, f).unwrap()[0], 1.0);
        }
        let pair = one(&[0.3, 7.0], 1);
        assert_abs_diff_eq!(
            weights(&pair, 3.7, WeightFamily::SignScore).unwrap()[0],
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sign_score_numerator_matches_conventional() {
        let s = one(&[1.0, 0.0, 0.0], 0);
        let t = tilt(&s, 2.0).unwrap();
        assert_abs_diff_eq!(t.contribution(0), 4.0 / 9.0, epsilon = 1e-15);
        let w = weights(&s, 2.0, WeightFamily::SignScore).unwrap()[0];
        let (mu, _) = worst_case_expectation(&[1.0, 0.0, 0.0], 2.0).unwrap();
        assert_abs_diff_eq!(mu, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w * t.contribution(0), 1.0 - mu, epsilon = 1e-15);
    }

    #[test]
    fn sign_score_needs_two_values() {
        assert_eq!(
            weights(&one(&[1.0, 0.5, 0.0], 0), 2.0, WeightFamily::SignScore),
            Err(Error::NotSignScore { set: 0, distinct: 3 })
        );
    }

    #[test]
    fn ties_with_the_mean_count_as_below() {
        let t = tilt(&one(&[1.0, 0.0, -1.0], 1), 3.0).unwrap();
        assert_eq!(t.n_above(0), 1);
        assert_eq!(t.contribution(0), 0.0);
    }

    #[test]
    fn family_text_round_trip() {
        for f in ["unit", "ss", "ipw"] {
            assert_eq!(f.parse::<WeightFamily>().unwrap().to_string(), f);
        }
    }

    #[test]
    fn zero_variance_is_reported() {
        let t = tilt(&one(&[2.0, 2.0], 0), 2.0).unwrap();
        assert_eq!(tilted_pvalue(&t, 0.05), Err(Error::ZeroVariance));
    }
}

//! The separable algorithm: per-set worst-case null moments of a sum
//! statistic under the Γ model, and the resulting normal p-value bound.
//!
//! Within a set, the worst case puts bias `u = 1` on the `a` largest scores
//! for some `a ∈ {1, …, n−1}`. Among maximizers of the expectation the one
//! with the largest variance is used.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{csum, norm_sf, sqrt, CompensatedSum};
use crate::study::ScoreMatrix;
use crate::{check_alpha, check_gamma, kappa, TestResult};

/// Relative tolerance for ties among candidate expectations.
pub const TIE_TOL: f64 = 1e-12;

/// Worst-case moments of one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMoments {
    pub mu: f64,
    pub var: f64,
    /// Every maximizing `a` (number of units at the top carrying bias).
    pub argmax_a: Vec<usize>,
    pub m_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseMoments {
    pub gamma: f64,
    pub sets: Vec<SetMoments>,
}

impl WorstCaseMoments {
    pub fn total_mu(&self) -> f64 {
        csum(self.sets.iter().map(|s| s.mu))
    }

    pub fn total_var(&self) -> f64 {
        csum(self.sets.iter().map(|s| s.var))
    }
}

fn centered_desc(q: &[f64]) -> (f64, Vec<f64>) {
    let mean = csum(q.iter().copied()) / q.len() as f64;
    let mut c: Vec<f64> = q.iter().map(|&x| x - mean).collect();
    c.sort_unstable_by(|a, b| b.total_cmp(a));
    (mean, c)
}

fn check_set(q: &[f64]) -> Result<()> {
    if q.len() < 2 {
        return Err(Error::InvalidScores(alloc::format!(
            "a set needs at least two scores, got {}",
            q.len()
        )));
    }
    Ok(())
}

/// Candidate `a` moments on descending-sorted centered scores: returns the
/// mean and second moment of the biased distribution for each `a`.
fn candidates(c: &[f64], gamma: f64) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    let n = c.len() as f64;
    let g1 = gamma - 1.0;
    let total = csum(c.iter().copied());
    let total_sq = csum(c.iter().map(|x| x * x));
    let mut s = CompensatedSum::new();
    let mut s2 = CompensatedSum::new();
    (1..c.len()).map(move |a| {
        let x = c[a - 1];
        s.add(x);
        s2.add(x * x);
        let den = n + g1 * a as f64;
        (a, (total + g1 * s.value()) / den, (total_sq + g1 * s2.value()) / den)
    })
}

/// Worst-case centered expectation and variance for descending-sorted
/// centered scores, plus the smallest maximizing `a`. Allocation free.
#[inline]
pub(crate) fn sorted_moments(c: &[f64], gamma: f64) -> (f64, f64, usize) {
    let scale = c[0].abs().max(c[c.len() - 1].abs());
    let mut best = f64::NEG_INFINITY;
    let mut best_sq = f64::NEG_INFINITY;
    let mut best_a = 1;
    for (a, m, sq) in candidates(c, gamma) {
        let tol = TIE_TOL * best.abs().max(scale);
        if m > best + tol {
            best = m;
            best_sq = sq;
            best_a = a;
        } else if m >= best - tol {
            if sq > best_sq {
                best_sq = sq;
            }
            best = best.max(m);
        }
    }
    (best, (best_sq - best * best).max(0.0), best_a)
}

/// Maximum over `a` of the biased expectation, with every maximizing `a`.
pub fn worst_case_expectation(q: &[f64], gamma: f64) -> Result<(f64, Vec<usize>)> {
    check_gamma(gamma)?;
    check_set(q)?;
    let (mean, c) = centered_desc(q);
    let scale = c[0].abs().max(c[c.len() - 1].abs());
    let cands: Vec<(usize, f64, f64)> = candidates(&c, gamma).collect();
    let best = cands.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs().max(scale);
    let argmax = cands
        .iter()
        .filter(|t| t.1 >= best - tol)
        .map(|t| t.0)
        .collect();
    Ok((mean + best, argmax))
}

/// Largest variance over the tie set `argmax_a` at the worst-case expectation.
pub fn worst_case_variance(q: &[f64], gamma: f64, argmax_a: &[usize]) -> Result<f64> {
    check_gamma(gamma)?;
    check_set(q)?;
    if argmax_a.is_empty() || argmax_a.iter().any(|&a| a == 0 || a >= q.len()) {
        return Err(Error::InvalidArgument(alloc::string::String::from(
            "argmax set must be a nonempty subset of 1..n-1",
        )));
    }
    let (_, c) = centered_desc(q);
    let mut mu = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (a, m, sq) in candidates(&c, gamma) {
        if argmax_a.contains(&a) {
            mu = mu.max(m);
            second = second.max(sq);
        }
    }
    Ok((second - mu * mu).max(0.0))
}

/// `H_Γ(c) = ½ Σ_j |q_j − q̄ − κ_Γ c| − (n/2) c`, decreasing in `c`, positive
/// exactly when `c < M_Γ`.
pub fn h_gamma(q: &[f64], gamma: f64, c: f64) -> f64 {
    let n = q.len() as f64;
    let mean = csum(q.iter().copied()) / n;
    let k = kappa(gamma);
    0.5 * csum(q.iter().map(|&x| (x - mean - k * c).abs())) - 0.5 * n * c
}

/// The fixed point `M_Γ` of `c = n⁻¹ Σ_j |q_j − q̄ − κ_Γ c|`, so that the
/// worst-case expectation equals `q̄ + κ_Γ M_Γ`.
pub fn m_gamma_solve(q: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_set(q)?;
    let n = q.len() as f64;
    let mean = csum(q.iter().copied()) / n;
    let c: Vec<f64> = q.iter().map(|&x| x - mean).collect();
    let (lo_q, hi_q) = c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let range = hi_q - lo_q;
    if range == 0.0 {
        return Ok(0.0);
    }
    if gamma == 1.0 {
        // κ = 0: the fixed point is the mean absolute deviation.
        return Ok(csum(c.iter().map(|x| x.abs())) / n);
    }
    let k = kappa(gamma);
    let h = |m: f64| 0.5 * csum(c.iter().map(|&x| (x - k * m).abs())) - 0.5 * n * m;
    let max_abs = lo_q.abs().max(hi_q.abs());
    let mut hi = max_abs / (1.0 + k) + range;
    // The bracket above suffices for moderate Γ; widen if it does not.
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    Ok(crate::math::bisect_decreasing(h, 0.0, hi, 1e-12))
}

/// Full per-set report: expectation, variance, tie set and `M_Γ`.
pub fn worst_case_moments(scores: &ScoreMatrix, gamma: f64) -> Result<WorstCaseMoments> {
    check_gamma(gamma)?;
    let sets = scores
        .iter()
        .map(|s| {
            let (mu, argmax_a) = worst_case_expectation(s.q, gamma)?;
            let var = worst_case_variance(s.q, gamma, &argmax_a)?;
            let m_gamma = m_gamma_solve(s.q, gamma)?;
            Ok(SetMoments {
                mu,
                var,
                argmax_a,
                m_gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorstCaseMoments { gamma, sets })
}

/// Scores pre-sorted once so that the deviate at any Γ costs `O(Σ n_i)`.
#[derive(Debug, Clone)]
pub struct ConventionalPrep {
    offsets: Vec<usize>,
    sorted: Vec<f64>,
    treated_centered: Vec<f64>,
    /// `Σ_i (T_i − q̄_i)`.
    centered_total: f64,
}

impl ConventionalPrep {
    pub fn new(scores: &ScoreMatrix) -> Self {
        let mut sorted = Vec::with_capacity(scores.n_units());
        let mut treated_centered = Vec::with_capacity(scores.n_sets());
        for s in scores.iter() {
            let start = sorted.len();
            sorted.extend(s.q.iter().map(|&x| x - s.mean));
            sorted[start..].sort_unstable_by(|a, b| b.total_cmp(a));
            treated_centered.push(s.treated_score() - s.mean);
        }
        ConventionalPrep {
            offsets: scores.offsets().to_vec(),
            sorted,
            centered_total: csum(treated_centered.iter().copied()),
            treated_centered,
        }
    }

    /// Centered scores of set `i`, in descending order.
    pub fn sorted_set(&self, i: usize) -> &[f64] {
        &self.sorted[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `T_i − q̄_i` per set.
    pub fn treated_centered(&self) -> &[f64] {
        &self.treated_centered
    }

    /// `μ_Γi − q̄_i`, which equals `κ_Γ M_Γi`.
    pub fn set_excess(&self, i: usize, gamma: f64) -> f64 {
        sorted_moments(self.sorted_set(i), gamma).0
    }

    pub fn n_sets(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(Σ_i (μ_Γi − q̄_i), Σ_i ν²_Γi)`.
    pub fn totals(&self, gamma: f64) -> (f64, f64) {
        let mut mu = CompensatedSum::new();
        let mut var = CompensatedSum::new();
        for w in self.offsets.windows(2) {
            let (m, v, _) = sorted_moments(&self.sorted[w[0]..w[1]], gamma);
            mu.add(m);
            var.add(v);
        }
        (mu.value(), var.value())
    }

    /// `Σ_i (T_i − q̄_i)`.
    pub fn centered_total(&self) -> f64 {
        self.centered_total
    }

    pub fn deviate(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        let (mu, var) = self.totals(gamma);
        if !(var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok((self.centered_total - mu) / sqrt(var))
    }

    pub fn test(&self, gamma: f64, alpha: f64) -> Result<TestResult> {
        check_alpha(alpha)?;
        let deviate = self.deviate(gamma)?;
        let pvalue = norm_sf(deviate);
        Ok(TestResult {
            deviate,
            pvalue,
            reject: pvalue <= alpha,
        })
    }
}

/// Normal-approximation upper bound on the one-sided p-value at Γ.
pub fn conventional_pvalue(scores: &ScoreMatrix, gamma: f64, alpha: f64) -> Result<TestResult> {
    check_gamma(gamma)?;
    ConventionalPrep::new(scores).test(gamma, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_example_three_units() {
        let (mu, a) = worst_case_expectation(&[3.0, 1.0, 0.0], 2.0).unwrap();
        assert_abs_diff_eq!(mu, 1.75, epsilon = 1e-14);
        assert_eq!(a, vec![1]);
        let var = worst_case_variance(&[3.0, 1.0, 0.0], 2.0, &a).unwrap();
        assert_abs_diff_eq!(var, 1.6875, epsilon = 1e-13);
        assert_abs_diff_eq!(m_gamma_solve(&[3.0, 1.0, 0.0], 2.0).unwrap(), 1.25, epsilon = 1e-11);
    }

    #[test]
    fn pair_formula() {
        let (mu, a) = worst_case_expectation(&[1.0, 0.0], 2.0).unwrap();
        assert_abs_diff_eq!(mu, 2.0 / 3.0, epsilon = 1e-15);
        let var = worst_case_variance(&[1.0, 0.0], 2.0, &a).unwrap();
        assert_abs_diff_eq!(var, 2.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn gamma_one_is_the_mean_and_all_candidates_tie() {
        let q = [0.3, 2.0, -1.0, 4.5];
        let (mu, a) = worst_case_expectation(&q, 1.0).unwrap();
        assert_abs_diff_eq!(mu, 5.8 / 4.0, epsilon = 1e-14);
        assert_eq!(a, vec![1, 2, 3]);
        let mad = q.iter().map(|x| (x - 1.45f64).abs()).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(m_gamma_solve(&q, 1.0).unwrap(), mad, epsilon = 1e-11);
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let q = [2.0; 5];
        let (mu, _) = worst_case_expectation(&q, 3.0).unwrap();
        assert_eq!(mu, 2.0);
        assert_eq!(worst_case_variance(&q, 3.0, &[1]).unwrap(), 0.0);
        assert_eq!(m_gamma_solve(&q, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert_eq!(
            worst_case_expectation(&[1.0, 0.0], 0.5),
            Err(Error::InvalidGamma(0.5))
        );
        assert!(m_gamma_solve(&[1.0, 0.0], f64::NAN).is_err());
    }

    #[test]
    fn paired_binomial_deviate() {
        let i = 25;
        let scores = ScoreMatrix::new(vec![(vec![1.0, 0.0], 0); i]).unwrap();
        let r = conventional_pvalue(&scores, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(r.deviate, (i as f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn centered_statistic_gives_half() {
        // Choose the treated score so that T equals the worst-case mean.
        let scores = ScoreMatrix::new(vec![(vec![1.0, 0.0], 0), (vec![1.0, 0.0], 1)]).unwrap();
        let r = conventional_pvalue(&scores, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(r.pvalue, 0.5, epsilon = 1e-15);
        assert!(!r.reject);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let scores = ScoreMatrix::new(vec![(vec![1.0, 1.0], 0)]).unwrap();
        assert_eq!(
            conventional_pvalue(&scores, 2.0, 0.05),
            Err(Error::ZeroVariance)
        );
    }

    #[test]
    fn large_gamma_approaches_the_maximum() {
        let q = [0.5, 3.0, -2.0, 1.0];
        let gamma = 1e6;
        let (mu, _) = worst_case_expectation(&q, gamma).unwrap();
        // The gap to the maximum is at most (n − 1)·range/Γ.
        assert!(mu <= 3.0 && 3.0 - mu <= 3.0 * 5.0 / gamma);
    }
}

//! Brute-force reference computations. Everything here is exponential in the
//! set sizes and guarded by hard size limits; nothing here is used by the
//! analysis path.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::check_gamma;
use crate::error::{Error, Result};
use crate::math::{powf, sqrt};
use crate::rng::Stream;
use crate::study::{ScoreMatrix, SetScores};
use crate::tilted::WeightFamily;

/// Largest number of joint assignments `∏ n_i` that will be enumerated.
pub const MAX_ASSIGNMENTS: usize = 1_000_000;
/// Largest set size for the exhaustive bias search.
pub const MAX_SET_SIZE: usize = 6;
/// Largest per-set grid `21^n` for the interior refinement.
pub const MAX_GRID: usize = 5_000_000;
/// Largest number of joint binary patterns for the exhaustive game.
pub const MAX_GAME_PATTERNS: usize = 1 << 16;

fn too_large(size: usize, limit: usize) -> Error {
    Error::EnumerationTooLarge {
        size: size as u128,
        limit: limit as u128,
    }
}

fn unit_probs(gamma: f64, u: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = u.iter().map(|&x| powf(gamma, x)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn check_u(u: &[f64], n_units: usize) -> Result<()> {
    if u.len() != n_units {
        return Err(Error::InvalidArgument(alloc::format!(
            "u has {} entries for {} units",
            u.len(),
            n_units
        )));
    }
    if let Some(x) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidArgument(alloc::format!("u entry {x} outside [0, 1]")));
    }
    Ok(())
}

/// Law of `T = Σ_i q_{i,treated}` over all assignments with one treated unit
/// per set, under `pr(Z_ij = 1) ∝ Γ^{u_ij}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    /// `(value, probability)` sorted by value, equal values merged.
    pub support: Vec<(f64, f64)>,
    pub u_config: Vec<f64>,
}

impl ExactDistribution {
    /// `P(T ≥ threshold)`, counting values within rounding of the threshold.
    pub fn tail(&self, threshold: f64) -> f64 {
        let tol = 1e-12 * (1.0 + threshold.abs());
        self.support
            .iter()
            .filter(|(v, _)| *v >= threshold - tol)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }
}

/// Enumerates every assignment. `u` is per unit in score order.
pub fn exact_distribution(scores: &ScoreMatrix, gamma: f64, u: &[f64]) -> Result<ExactDistribution> {
    check_gamma(gamma)?;
    check_u(u, scores.n_units())?;
    let mut size = 1usize;
    for s in scores.iter() {
        size = size.saturating_mul(s.len());
        if size > MAX_ASSIGNMENTS {
            return Err(too_large(size, MAX_ASSIGNMENTS));
        }
    }
    let offsets = scores.offsets();
    // Walk every assignment like an odometer over the sets.
    let n_sets = scores.n_sets();
    let probs: Vec<Vec<f64>> = (0..n_sets)
        .map(|i| unit_probs(gamma, &u[offsets[i]..offsets[i + 1]]))
        .collect();
    let mut idx = alloc::vec![0usize; n_sets];
    let mut support = Vec::with_capacity(size);
    loop {
        let mut t = 0.0;
        let mut p = 1.0;
        for i in 0..n_sets {
            t += scores.set(i).q[idx[i]];
            p *= probs[i][idx[i]];
        }
        support.push((t, p));
        let mut k = 0;
        loop {
            if k == n_sets {
                support.sort_by(|a, b| a.0.total_cmp(&b.0));
                return Ok(ExactDistribution {
                    support: merge_equal(support),
                    u_config: u.to_vec(),
                });
            }
            idx[k] += 1;
            if idx[k] < scores.set(k).len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn merge_equal(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (v, p) in sorted {
        match out.last_mut() {
            Some(last) if v - last.0 <= 1e-12 * (1.0 + v.abs()) => last.1 += p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// `P(T ≥ threshold)` by full enumeration.
pub fn exact_tail(scores: &ScoreMatrix, gamma: f64, u: &[f64], threshold: f64) -> Result<f64> {
    Ok(exact_distribution(scores, gamma, u)?.tail(threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Expectation,
    ExpectationThenVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstU {
    /// Maximizing binary pattern, per unit in score order.
    pub u_star: Vec<f64>,
    /// `Σ_i E_u(q_{i,treated})` at `u_star`.
    pub expectation: f64,
    /// `Σ_i Var_u(q_{i,treated})` at `u_star`.
    pub variance: f64,
    /// Per-set `(expectation, variance)` at `u_star`.
    pub per_set: Vec<(f64, f64)>,
    /// Largest total expectation over the 0.05 grid, when requested.
    pub grid_expectation: Option<f64>,
}

fn moments(q: &[f64], gamma: f64, u: &[f64]) -> (f64, f64) {
    let p = unit_probs(gamma, u);
    let m: f64 = p.iter().zip(q).map(|(p, q)| p * q).sum();
    let v: f64 = p.iter().zip(q).map(|(p, q)| p * (q - m) * (q - m)).sum();
    (m, v)
}

fn bits(mask: usize, n: usize) -> Vec<f64> {
    (0..n).map(|j| ((mask >> j) & 1) as f64).collect()
}

/// Per-set search over all `2^n` binary patterns, and optionally over the
/// grid `{0, 0.05, …, 1}^n` to confirm that interior `u` never does better.
pub fn exhaustive_worst_u(
    scores: &ScoreMatrix,
    gamma: f64,
    objective: Objective,
    refine: bool,
) -> Result<WorstU> {
    check_gamma(gamma)?;
    let mut u_star = Vec::with_capacity(scores.n_units());
    let mut per_set = Vec::with_capacity(scores.n_sets());
    let mut grid_total = 0.0;
    for s in scores.iter() {
        let n = s.len();
        if n > MAX_SET_SIZE {
            return Err(too_large(n, MAX_SET_SIZE));
        }
        let scale = s.q.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let tol = 1e-12 * (1.0 + scale);
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        for mask in 0..(1usize << n) {
            let u = bits(mask, n);
            let (m, v) = moments(s.q, gamma, &u);
            let better = match &best {
                None => true,
                Some((_, bm, bv)) => {
                    m > bm + tol
                        || (objective == Objective::ExpectationThenVariance
                            && m >= bm - tol
                            && v > bv + tol)
                }
            };
            if better {
                best = Some((u, m, v));
            }
        }
        let (u, m, v) = best.expect("at least one pattern");
        u_star.extend(u);
        per_set.push((m, v));
        if refine {
            grid_total += grid_max_expectation(&s, gamma)?;
        }
    }
    Ok(WorstU {
        u_star,
        expectation: per_set.iter().map(|x| x.0).sum(),
        variance: per_set.iter().map(|x| x.1).sum(),
        per_set,
        grid_expectation: refine.then_some(grid_total),
    })
}

fn grid_max_expectation(s: &SetScores<'_>, gamma: f64) -> Result<f64> {
    const STEPS: usize = 21;
    let n = s.len();
    let size = STEPS.checked_pow(n as u32).filter(|&x| x <= MAX_GRID).ok_or(
        too_large(STEPS.saturating_pow(n as u32), MAX_GRID),
    )?;
    let levels: Vec<f64> = (0..STEPS).map(|k| powf(gamma, k as f64 / 20.0)).collect();
    let mut best = f64::NEG_INFINITY;
    for code in 0..size {
        let (mut c, mut num, mut den) = (code, 0.0, 0.0);
        for &q in s.q {
            let w = levels[c % STEPS];
            c /= STEPS;
            num += w * q;
            den += w;
        }
        best = best.max(num / den);
    }
    Ok(best)
}

/// Tilted per-unit scores `2Γ/(1+Γ) · c_j / Γ^{1{c_j > 0}}` of one set,
/// computed from the raw scores.
pub fn tilted_unit_scores(q: &[f64], gamma: f64) -> Vec<f64> {
    let n = q.len() as f64;
    let mean = q.iter().sum::<f64>() / n;
    let g = 2.0 * gamma / (1.0 + gamma);
    q.iter()
        .map(|&x| {
            let c = x - mean;
            if c > 1e-12 * (1.0 + mean.abs()) {
                g * c / gamma
            } else {
                g * c
            }
        })
        .collect()
}

fn family_weight(q: &[f64], gamma: f64, family: WeightFamily) -> f64 {
    let n = q.len() as f64;
    let mean = q.iter().sum::<f64>() / n;
    let above = q.iter().filter(|&&x| x - mean > 1e-12 * (1.0 + mean.abs())).count() as f64;
    let den = n + (gamma - 1.0) * above;
    match family {
        WeightFamily::Unit => 1.0,
        WeightFamily::SignScore => 0.5 * (gamma + 1.0) * n / den,
        WeightFamily::Ipw => 0.5 * (gamma + 1.0) / gamma * den / n,
    }
}

/// `sup_{λ ≥ 0, λ ≠ 0} max(0, λᵀd / √(λᵀΣλ))²` by the closed-form projection:
/// the unconstrained optimum `Σ⁻¹d` when it lies in the orthant, otherwise
/// the better edge.
pub fn cone_sup(d: [f64; 2], sigma: [[f64; 2]; 2]) -> f64 {
    let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    if det > 1e-12 * sigma[0][0] * sigma[1][1] {
        let x = [
            (sigma[1][1] * d[0] - sigma[0][1] * d[1]) / det,
            (sigma[0][0] * d[1] - sigma[1][0] * d[0]) / det,
        ];
        if x[0] >= 0.0 && x[1] >= 0.0 {
            return (d[0] * x[0] + d[1] * x[1]).max(0.0);
        }
    }
    let edge = |k: usize| {
        if sigma[k][k] > 0.0 && d[k] > 0.0 {
            d[k] * d[k] / sigma[k][k]
        } else {
            0.0
        }
    };
    edge(0).max(edge(1))
}

/// Monte-Carlo `P(sup_λ max(0, λᵀZ/√(λᵀΣλ))² > c)` for a bivariate normal
/// `Z` with unit variances and correlation `rho`. At `c = 0` this is the
/// probability that the projection is nonzero.
pub fn chi_bar_mc(rho: f64, c: f64, draws: u64, seed: u64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    let s = sqrt((1.0 - rho * rho).max(0.0));
    let sigma = [[1.0, rho], [rho, 1.0]];
    let mut rng = Stream::new(seed, 0, 0);
    let mut hits = 0u64;
    for _ in 0..draws {
        let x = rng.normal();
        let z = [x, rho * x + s * rng.normal()];
        if cone_sup(z, sigma) > c {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

/// Result of the exhaustive game search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOracle {
    /// Smallest `sup_λ` value over per-set sorted-threshold patterns.
    pub min_threshold: f64,
    /// Smallest `sup_λ` value over all binary per-unit patterns.
    pub min_binary: f64,
}

/// Per-set `(mean, covariance)` of `(q_j, w·t_j)` under `u`, plus the
/// treated pair.
fn game_set(q: &[f64], treated: usize, gamma: f64, family: WeightFamily, u: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let w = family_weight(q, gamma, family);
    let t = tilted_unit_scores(q, gamma);
    let a: Vec<[f64; 2]> = q.iter().zip(&t).map(|(&x, &y)| [x, w * y]).collect();
    let p = unit_probs(gamma, u);
    let mut mu = [0.0; 2];
    for (pj, aj) in p.iter().zip(&a) {
        mu[0] += pj * aj[0];
        mu[1] += pj * aj[1];
    }
    let mut cov = [[0.0; 2]; 2];
    for (pj, aj) in p.iter().zip(&a) {
        let e = [aj[0] - mu[0], aj[1] - mu[1]];
        for r in 0..2 {
            for c in 0..2 {
                cov[r][c] += pj * e[r] * e[c];
            }
        }
    }
    ([a[treated][0] - mu[0], a[treated][1] - mu[1]], cov)
}

/// Enumerates every joint pattern of the game and evaluates the inner sup.
pub fn exhaustive_game(scores: &ScoreMatrix, gamma: f64, family: WeightFamily) -> Result<GameOracle> {
    check_gamma(gamma)?;
    let mut total = 1usize;
    for s in scores.iter() {
        total = total.saturating_mul(1usize << s.len().min(63));
        if s.len() > MAX_SET_SIZE || total > MAX_GAME_PATTERNS {
            return Err(too_large(total, MAX_GAME_PATTERNS));
        }
    }
    // Per set: every binary pattern's contribution, flagged when it is a
    // sorted threshold (the top a units by score, 1 ≤ a < n, or none).
    let mut options: Vec<Vec<([f64; 2], [[f64; 2]; 2], bool)>> = Vec::new();
    for s in scores.iter() {
        let n = s.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s.q[b].total_cmp(&s.q[a]));
        let threshold_masks: Vec<usize> = (0..n)
            .map(|a| order[..a].iter().fold(0usize, |m, &j| m | (1 << j)))
            .collect();
        let opts = (0..(1usize << n))
            .map(|mask| {
                let (d, cov) = game_set(s.q, s.treated, gamma, family, &bits(mask, n));
                (d, cov, threshold_masks.contains(&mask))
            })
            .collect();
        options.push(opts);
    }
    let mut idx = alloc::vec![0usize; options.len()];
    let (mut min_threshold, mut min_binary) = (f64::INFINITY, f64::INFINITY);
    loop {
        let mut d = [0.0; 2];
        let mut cov = [[0.0; 2]; 2];
        let mut threshold = true;
        for (i, &k) in idx.iter().enumerate() {
            let (di, ci, ti) = &options[i][k];
            d[0] += di[0];
            d[1] += di[1];
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += ci[r][c];
                }
            }
            threshold &= ti;
        }
        let v = cone_sup(d, cov);
        min_binary = min_binary.min(v);
        if threshold {
            min_threshold = min_threshold.min(v);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(GameOracle {
                    min_threshold,
                    min_binary,
                });
            }
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// One self-check outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_scores(rng: &mut Stream, n_sets: usize, max_n: usize) -> ScoreMatrix {
    let sets = (0..n_sets)
        .map(|_| {
            let n = 2 + rng.below(max_n - 1);
            let q = (0..n).map(|_| rng.normal()).collect();
            (q, rng.below(n))
        })
        .collect();
    ScoreMatrix::new(sets).expect("random sets are valid")
}

/// Quick oracle suite on seeded random instances.
pub fn self_check(seed: u64) -> Vec<Check> {
    use crate::adaptive::GameSolver;
    use crate::chibar::chi_bar_weights;
    use crate::conventional::{conventional_pvalue, m_gamma_solve, worst_case_expectation};
    use crate::kappa;
    use crate::tilted::{tilt, tilted_pvalue};

    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.into(),
            passed,
            detail,
        })
    };
    let mut rng = Stream::new(seed, 0, 0);
    let gammas = [1.5, 2.0, 5.0];

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = random_scores(&mut rng, 1, 6);
        let q = s.set(0).q;
        for &g in &gammas {
            let exact = worst_case_expectation(q, g).map(|x| x.0).unwrap_or(f64::NAN);
            let brute = exhaustive_worst_u(&s, g, Objective::Expectation, false)
                .map(|w| w.expectation)
                .unwrap_or(f64::NAN);
            worst = worst.max((exact - brute).abs());
        }
    }
    push(
        "separable expectation equals exhaustive search",
        worst < 1e-10,
        alloc::format!("max abs difference {worst:.3e}"),
    );

    let mut worst = 0.0f64;
    let mut pattern_ok = true;
    for _ in 0..200 {
        let s = random_scores(&mut rng, 1, 6);
        let q = s.set(0).q;
        for &g in &gammas {
            let t = tilted_unit_scores(q, g);
            let ts = ScoreMatrix::new(alloc::vec![(t, 0)]).expect("valid");
            if let Ok(w) = exhaustive_worst_u(&ts, g, Objective::ExpectationThenVariance, false) {
                worst = worst.max(w.expectation);
                let mean = q.iter().sum::<f64>() / q.len() as f64;
                let above = q.iter().map(|&x| f64::from(u8::from(x - mean > 1e-12 * (1.0 + mean.abs()))));
                pattern_ok &= w.u_star.iter().copied().eq(above);
            }
        }
    }
    push(
        "tilted worst-case expectation is zero at the above-mean pattern",
        worst <= 1e-10 && pattern_ok,
        alloc::format!("max expectation {worst:.3e}, pattern matches: {pattern_ok}"),
    );

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = random_scores(&mut rng, 1, 6);
        let q = s.set(0).q;
        let g = 1.0 + 9.0 * rng.uniform();
        if let (Ok(m), Ok((mu, _))) = (m_gamma_solve(q, g), worst_case_expectation(q, g)) {
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            worst = worst.max((mu - mean - kappa(g) * m).abs());
        }
    }
    push(
        "worst-case excess equals kappa times M",
        worst < 1e-9,
        alloc::format!("max abs difference {worst:.3e}"),
    );

    let mut ok = true;
    for _ in 0..20 {
        let s = random_scores(&mut rng, 3, 4);
        let t_obs: f64 = s.iter().map(|x| x.treated_score()).sum();
        for &g in &gammas {
            let Ok(w) = exhaustive_worst_u(&s, g, Objective::ExpectationThenVariance, false) else {
                ok = false;
                continue;
            };
            let top = exact_tail(&s, g, &w.u_star, t_obs).unwrap_or(f64::NAN);
            let mean = exact_distribution(&s, g, &w.u_star)
                .map(|d| d.support.iter().map(|(v, p)| v * p).sum::<f64>())
                .unwrap_or(f64::NAN);
            ok &= (mean - w.expectation).abs() < 1e-10 && top.is_finite();
        }
    }
    push(
        "exact law at the worst pattern has the worst-case mean",
        ok,
        String::from("3 sets of size <= 4, 20 studies"),
    );

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pairs = (0..10)
            .map(|_| (alloc::vec![rng.normal(), rng.normal()], rng.below(2)))
            .collect();
        let s = ScoreMatrix::new(pairs).expect("valid");
        for &g in &[1.0, 1.5, 3.0, 10.0] {
            let a = conventional_pvalue(&s, g, 0.05).map(|r| r.pvalue);
            let b = tilt(&s, g).and_then(|t| tilted_pvalue(&t, 0.05)).map(|r| r.pvalue);
            if let (Ok(a), Ok(b)) = (a, b) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    push(
        "paired tilted and conventional p-values agree",
        worst < 1e-12,
        alloc::format!("max abs difference {worst:.3e}"),
    );

    let mut worst = 0.0f64;
    for (k, &rho) in [-0.5, 0.0, 0.5, 0.9].iter().enumerate() {
        if let Ok(w) = chi_bar_weights(rho) {
            for c in [1.0, 2.706, 5.0] {
                let mc = chi_bar_mc(rho, c, 100_000, seed ^ k as u64).unwrap_or(f64::NAN);
                worst = worst.max((mc - w.tail(c)).abs());
            }
        }
    }
    push(
        "chi-bar-square tail matches projection Monte Carlo",
        worst < 0.01,
        alloc::format!("max abs difference {worst:.4} (1e5 draws)"),
    );

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..30 {
        let s = random_scores(&mut rng, 3, 4);
        for &g in &gammas {
            let solver = GameSolver::new(&s);
            if let (Ok(sol), Ok(o)) = (
                solver.solve(g, WeightFamily::Unit, 0.05),
                exhaustive_game(&s, g, WeightFamily::Unit),
            ) {
                worst = worst.max(sol.b - o.min_threshold);
            }
        }
    }
    push(
        "adaptive solver reaches the exhaustive threshold minimum",
        worst <= 1e-9,
        alloc::format!("max excess over exhaustive minimum {worst:.3e}"),
    );

    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_law_at_gamma_one() {
        let s = ScoreMatrix::new(vec![(vec![1.0, 2.0, 3.0], 0)]).unwrap();
        let d = exact_distribution(&s, 1.0, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.support.len(), 3);
        for (_, p) in &d.support {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_term_normalization() {
        let s = ScoreMatrix::new(vec![(vec![1.0, 0.0], 0)]).unwrap();
        let p = exact_tail(&s, 2.0, &[1.0, 0.0], 1.0).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn guard_is_a_hard_error() {
        let sets = (0..7).map(|_| (vec![0.0; 8], 0)).collect();
        let s = ScoreMatrix::new(sets).unwrap();
        let u = vec![0.0; s.n_units()];
        assert!(matches!(
            exact_distribution(&s, 2.0, &u),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn cone_sup_cases() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(cone_sup([1.0, 2.0], id), 5.0);
        assert_eq!(cone_sup([-1.0, 2.0], id), 4.0);
        assert_eq!(cone_sup([-1.0, -2.0], id), 0.0);
    }

    #[test]
    fn self_check_passes() {
        for c in self_check(3) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}

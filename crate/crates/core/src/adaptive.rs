//! Adaptive combination of the conventional and tilted statistics.
//!
//! With `A = (Σ (T_i − q̄_i), Σ w_i T_Γi)` and `(μ(ϱ), Σ(ϱ))` its null mean and
//! covariance under an assignment law ϱ, the statistic is
//!
//! ```text
//! B_Γ = min_ϱ sup_{λ ≥ 0} max(0, λᵀ(A − μ(ϱ)))² / λᵀΣ(ϱ)λ
//! ```
//!
//! compared against a chi-bar-square critical value. The minimization runs
//! over per-set sorted-threshold bias patterns by alternating between ϱ and λ.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chibar::chi_bar_critical;
use crate::conventional::TIE_TOL;
use crate::error::{Error, Result};
use crate::math::{norm_quantile, sqrt, CompensatedSum};
use crate::study::ScoreMatrix;
use crate::tilted::{is_above, TiltSummary, WeightFamily};
use crate::{check_alpha, check_gamma};

pub const MAX_ROUNDS: usize = 100;
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// Studies with at most this many sets also try joint moves of two sets
/// when single-set descent stalls. With many sets one set moves B by
/// O(1/I) and single moves suffice.
pub const PAIR_MOVE_SETS: usize = 64;
const STARTS: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub gamma: f64,
    pub b: f64,
    /// Maximizing λ at the least favorable ϱ, scaled to sum to one.
    pub lambda_star: [f64; 2],
    pub rho_hat: f64,
    pub critical: f64,
    pub reject: bool,
    /// `A − μ(ϱ*)` and `Σ(ϱ*)`.
    pub excess: [f64; 2],
    pub sigma: [[f64; 2]; 2],
    pub warnings: Vec<String>,
}

/// Per-set data sorted once by centered score; both components are
/// nondecreasing in it, so the order is shared by every λ ≥ 0.
#[derive(Debug, Clone)]
pub struct GamePrep {
    offsets: Vec<usize>,
    c: Vec<f64>,
    treated_c: Vec<f64>,
    summaries: Vec<TiltSummary>,
    /// Position of each sorted unit relative to its set mean.
    above: Vec<bool>,
}

impl GamePrep {
    pub fn new(scores: &ScoreMatrix) -> Self {
        let mut c = Vec::with_capacity(scores.n_units());
        let mut above = Vec::with_capacity(scores.n_units());
        let mut treated_c = Vec::with_capacity(scores.n_sets());
        let mut summaries = Vec::with_capacity(scores.n_sets());
        let mut order: Vec<usize> = Vec::new();
        for s in scores.iter() {
            order.clear();
            order.extend(0..s.len());
            order.sort_unstable_by(|&a, &b| s.q[b].total_cmp(&s.q[a]));
            for &j in &order {
                c.push(s.q[j] - s.mean);
                above.push(is_above(s.q[j], s.mean));
            }
            treated_c.push(s.treated_score() - s.mean);
            summaries.push(TiltSummary::new(&s));
        }
        GamePrep {
            offsets: scores.offsets().to_vec(),
            c,
            treated_c,
            summaries,
            above,
        }
    }

    pub fn summaries(&self) -> &[TiltSummary] {
        &self.summaries
    }
}

/// Prefix sums of the five moment ingredients at one Γ.
struct Moments {
    offsets: Vec<usize>,
    /// Per unit in sorted order, inclusive prefix sums of
    /// (a₁, a₂, a₁², a₁a₂, a₂²) within the set.
    prefix: Vec<[f64; 5]>,
    gamma: f64,
    a: [f64; 2],
}

impl Moments {
    fn new(prep: &GamePrep, gamma: f64, family: WeightFamily) -> Self {
        let g = 2.0 * gamma / (1.0 + gamma);
        let mut prefix = Vec::with_capacity(prep.c.len());
        let mut a1 = CompensatedSum::new();
        let mut a2 = CompensatedSum::new();
        for (i, w) in prep.offsets.windows(2).enumerate() {
            let s = &prep.summaries[i];
            let weight = s.weight(gamma, family);
            let mut acc = [0.0; 5];
            for j in w[0]..w[1] {
                let x = prep.c[j];
                let t = if prep.above[j] { g * x / gamma } else { g * x };
                let y = weight * t;
                acc[0] += x;
                acc[1] += y;
                acc[2] += x * x;
                acc[3] += x * y;
                acc[4] += y * y;
                prefix.push(acc);
            }
            a1.add(prep.treated_c[i]);
            a2.add(weight * s.tilted(gamma));
        }
        Moments {
            offsets: prep.offsets.clone(),
            prefix,
            gamma,
            a: [a1.value(), a2.value()],
        }
    }

    fn n_sets(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Biased moments of set `i` when its top `a` units carry `u = 1`.
    #[inline]
    fn set_moments(&self, i: usize, a: usize) -> [f64; 5] {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let n = (hi - lo) as f64;
        let g1 = self.gamma - 1.0;
        let tot = &self.prefix[hi - 1];
        let den = n + g1 * a as f64;
        let mut out = [0.0; 5];
        if a == 0 {
            for k in 0..5 {
                out[k] = tot[k] / den;
            }
        } else {
            let pre = &self.prefix[lo + a - 1];
            for k in 0..5 {
                out[k] = (tot[k] + g1 * pre[k]) / den;
            }
        }
        out
    }

    /// Per-set worst case for `λ₁a₁ + λ₂a₂`: maximize the expectation, then
    /// the variance.
    fn rho_step(&self, lambda: [f64; 2], pattern: &mut [usize]) {
        let [l1, l2] = lambda;
        for (i, slot) in pattern.iter_mut().enumerate() {
            let n = self.offsets[i + 1] - self.offsets[i];
            let mut best = f64::NEG_INFINITY;
            let mut best_var = f64::NEG_INFINITY;
            let mut best_a = 1;
            let mut scale = 0.0f64;
            for a in 1..n {
                let m = self.set_moments(i, a);
                let mean = l1 * m[0] + l2 * m[1];
                let second = l1 * l1 * m[2] + 2.0 * l1 * l2 * m[3] + l2 * l2 * m[4];
                let var = second - mean * mean;
                scale = scale.max(sqrt(second.max(0.0)));
                let tol = TIE_TOL * best.abs().max(scale);
                if mean > best + tol || (mean >= best - tol && var > best_var) {
                    if mean > best + tol {
                        best = mean;
                    } else {
                        best = best.max(mean);
                    }
                    best_var = var;
                    best_a = a;
                }
            }
            *slot = best_a;
        }
    }

    /// `(μ₁, μ₂, Σ₁₁, Σ₁₂, Σ₂₂)` contributed by set `i` under threshold `a`.
    #[inline]
    fn set_contribution(&self, i: usize, a: usize) -> [f64; 5] {
        let m = self.set_moments(i, a);
        [m[0], m[1], m[2] - m[0] * m[0], m[3] - m[0] * m[1], m[4] - m[1] * m[1]]
    }

    /// Coordinate descent over per-set thresholds (including the uniform
    /// law) on `value`. Returns whether the pattern changed.
    fn polish<F>(&self, pattern: &mut [usize], value: F, stop_below: f64) -> bool
    where
        F: Fn([f64; 2], [[f64; 2]; 2]) -> f64,
    {
        let split = |t: &[f64; 5]| {
            (
                [self.a[0] - t[0], self.a[1] - t[1]],
                [[t[2].max(0.0), t[3]], [t[3], t[4].max(0.0)]],
            )
        };
        let mut total = [0.0; 5];
        for (i, &a) in pattern.iter().enumerate() {
            let c = self.set_contribution(i, a);
            for k in 0..5 {
                total[k] += c[k];
            }
        }
        let (d, sigma) = split(&total);
        let mut current = value(d, sigma);
        let mut changed = false;
        for _ in 0..MAX_ROUNDS {
            let mut improved = false;
            for i in 0..pattern.len() {
                let n = self.offsets[i + 1] - self.offsets[i];
                let old = self.set_contribution(i, pattern[i]);
                let mut best: Option<(usize, [f64; 5], f64)> = None;
                for a in 0..n {
                    if a == pattern[i] {
                        continue;
                    }
                    let c = self.set_contribution(i, a);
                    let mut t = total;
                    for k in 0..5 {
                        t[k] += c[k] - old[k];
                    }
                    let (d, sigma) = split(&t);
                    let v = value(d, sigma);
                    let bar = best.as_ref().map_or(current, |b| b.2);
                    if v < bar - 1e-12 * (1.0 + bar) {
                        best = Some((a, t, v));
                    }
                }
                if let Some((a, t, v)) = best {
                    pattern[i] = a;
                    total = t;
                    current = v;
                    improved = true;
                    changed = true;
                    if current < stop_below {
                        return true;
                    }
                }
            }
            if !improved && pattern.len() <= PAIR_MOVE_SETS {
                improved = self.pair_move(pattern, &mut total, &mut current, &value, &split);
                changed |= improved;
            }
            if !improved || current < stop_below {
                break;
            }
        }
        changed
    }

    /// Best joint change of two sets' thresholds, applied if it improves.
    fn pair_move<F, S>(
        &self,
        pattern: &mut [usize],
        total: &mut [f64; 5],
        current: &mut f64,
        value: &F,
        split: &S,
    ) -> bool
    where
        F: Fn([f64; 2], [[f64; 2]; 2]) -> f64,
        S: Fn(&[f64; 5]) -> ([f64; 2], [[f64; 2]; 2]),
    {
        let mut best: Option<(usize, usize, usize, usize, [f64; 5], f64)> = None;
        for i in 0..pattern.len() {
            let ni = self.offsets[i + 1] - self.offsets[i];
            let oi = self.set_contribution(i, pattern[i]);
            for k in i + 1..pattern.len() {
                let nk = self.offsets[k + 1] - self.offsets[k];
                let ok = self.set_contribution(k, pattern[k]);
                for ai in (0..ni).filter(|&a| a != pattern[i]) {
                    let ci = self.set_contribution(i, ai);
                    for ak in (0..nk).filter(|&a| a != pattern[k]) {
                        let ck = self.set_contribution(k, ak);
                        let mut t = *total;
                        for q in 0..5 {
                            t[q] += ci[q] - oi[q] + ck[q] - ok[q];
                        }
                        let (d, sigma) = split(&t);
                        let v = value(d, sigma);
                        let bar = best.as_ref().map_or(*current, |b| b.5);
                        if v < bar - 1e-12 * (1.0 + bar) {
                            best = Some((i, ai, k, ak, t, v));
                        }
                    }
                }
            }
        }
        match best {
            Some((i, ai, k, ak, t, v)) => {
                pattern[i] = ai;
                pattern[k] = ak;
                *total = t;
                *current = v;
                true
            }
            None => false,
        }
    }

    /// `(A − μ(ϱ), Σ(ϱ))` for a per-set pattern.
    fn evaluate(&self, pattern: &[usize]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut mu = [CompensatedSum::new(), CompensatedSum::new()];
        let mut cov = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
        for (i, &a) in pattern.iter().enumerate() {
            let m = self.set_moments(i, a);
            mu[0].add(m[0]);
            mu[1].add(m[1]);
            cov[0].add(m[2] - m[0] * m[0]);
            cov[1].add(m[3] - m[0] * m[1]);
            cov[2].add(m[4] - m[1] * m[1]);
        }
        let s11 = cov[0].value().max(0.0);
        let s22 = cov[2].value().max(0.0);
        let s12 = cov[1].value();
        (
            [self.a[0] - mu[0].value(), self.a[1] - mu[1].value()],
            [[s11, s12], [s12, s22]],
        )
    }
}

/// `λᵀd / sqrt(λᵀΣλ)` for `λ = (1 − s, s)`.
fn ratio(d: [f64; 2], sigma: [[f64; 2]; 2], s: f64) -> f64 {
    let (l1, l2) = (1.0 - s, s);
    let num = l1 * d[0] + l2 * d[1];
    let den = l1 * l1 * sigma[0][0] + 2.0 * l1 * l2 * sigma[0][1] + l2 * l2 * sigma[1][1];
    if den > 0.0 {
        num / sqrt(den)
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `sup_λ max(0, λᵀd)² / λᵀΣλ` by projection onto the orthant cone: the
/// unconstrained optimum `Σ⁻¹d` if it is nonnegative, otherwise an edge.
pub(crate) fn cone_value(d: [f64; 2], sigma: [[f64; 2]; 2]) -> f64 {
    let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[0][1];
    if det > 1e-12 * sigma[0][0] * sigma[1][1] {
        let x0 = sigma[1][1] * d[0] - sigma[0][1] * d[1];
        let x1 = sigma[0][0] * d[1] - sigma[0][1] * d[0];
        if x0 >= 0.0 && x1 >= 0.0 {
            return ((d[0] * x0 + d[1] * x1) / det).max(0.0);
        }
    }
    let edge = |k: usize| {
        if d[k] <= 0.0 {
            0.0
        } else if sigma[k][k] > 0.0 {
            d[k] * d[k] / sigma[k][k]
        } else {
            f64::INFINITY
        }
    };
    edge(0).max(edge(1))
}

/// Sup over λ on the simplex segment by golden-section search. Returns the
/// squared positive part and the maximizing `s`.
pub(crate) fn lambda_step(d: [f64; 2], sigma: [[f64; 2]; 2]) -> (f64, f64) {
    // The ratio is quasi-concave where its numerator is positive, an interval
    // of s because the numerator is affine.
    let (mut lo, mut hi) = (0.0, 1.0);
    let slope = d[1] - d[0];
    if slope != 0.0 {
        let root = -d[0] / slope;
        if slope > 0.0 {
            lo = root.max(0.0);
        } else {
            hi = root.min(1.0);
        }
    }
    if lo > hi || (d[0] <= 0.0 && d[1] <= 0.0) {
        return (0.0, if d[1] > d[0] { 1.0 } else { 0.0 });
    }
    let mut best_s = lo;
    let mut best = ratio(d, sigma, lo);
    let r_hi = ratio(d, sigma, hi);
    if r_hi > best {
        best = r_hi;
        best_s = hi;
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = ratio(d, sigma, x1);
    let mut f2 = ratio(d, sigma, x2);
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = ratio(d, sigma, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = ratio(d, sigma, x1);
        }
    }
    for (s, f) in [(x1, f1), (x2, f2)] {
        if f > best {
            best = f;
            best_s = s;
        }
    }
    let b_val = if best > 0.0 { best * best } else { 0.0 };
    (b_val, best_s)
}

/// Reusable solver for one study: holds the Γ-free preparation.
#[derive(Debug, Clone)]
pub struct GameSolver {
    prep: GamePrep,
}

struct Outcome {
    b: f64,
    s: f64,
    d: [f64; 2],
    sigma: [[f64; 2]; 2],
    pattern: Vec<usize>,
}

impl GameSolver {
    pub fn new(scores: &ScoreMatrix) -> Self {
        GameSolver {
            prep: GamePrep::new(scores),
        }
    }

    /// Runs the three-start alternation, each start followed by a descent on
    /// the pattern. Stops early once the running minimum drops below
    /// `stop_below`.
    fn minimize(&self, m: &Moments, lambda_fixed: Option<[f64; 2]>, stop_below: f64) -> Outcome {
        let starts: &[[f64; 2]] = match &lambda_fixed {
            Some(l) => core::slice::from_ref(l),
            None => &STARTS,
        };
        let fixed_s = lambda_fixed.map(|l| l[1] / (l[0] + l[1]));
        let value = |d: [f64; 2], sigma: [[f64; 2]; 2]| match fixed_s {
            Some(s) => {
                let r = ratio(d, sigma, s);
                if r > 0.0 {
                    r * r
                } else {
                    0.0
                }
            }
            None => cone_value(d, sigma),
        };
        let outcome = |pattern: &[usize]| {
            let (d, sigma) = m.evaluate(pattern);
            let (b, s) = match fixed_s {
                Some(s) => (value(d, sigma), s),
                None => lambda_step(d, sigma),
            };
            Outcome {
                b,
                s,
                d,
                sigma,
                pattern: pattern.to_vec(),
            }
        };
        let mut pattern = alloc::vec![1usize; m.n_sets()];
        let mut best: Option<Outcome> = None;
        for &start in starts {
            let mut lambda = start;
            let mut prev = f64::INFINITY;
            let mut local: Option<Outcome> = None;
            for _ in 0..MAX_ROUNDS {
                m.rho_step(lambda, &mut pattern);
                let o = outcome(&pattern);
                let (b, s) = (o.b, o.s);
                if local.as_ref().map_or(true, |l| b < l.b) {
                    local = Some(o);
                }
                if b < stop_below || fixed_s.is_some() || (prev - b).abs() < CONVERGENCE_TOL {
                    break;
                }
                prev = b;
                lambda = [1.0 - s, s];
            }
            let mut local = local.expect("at least one round runs");
            // The alternation can stall at a pattern that no single λ step
            // leaves; descend on B directly, one set at a time.
            if local.b >= stop_below {
                let mut p = local.pattern.clone();
                if m.polish(&mut p, value, stop_below) {
                    let o = outcome(&p);
                    if o.b < local.b {
                        local = o;
                    }
                }
            }
            if best.as_ref().map_or(true, |o| local.b < o.b) {
                best = Some(local);
            }
            if best.as_ref().map_or(false, |o| o.b < stop_below) {
                break;
            }
        }
        best.expect("at least one start runs")
    }

    pub fn solve(&self, gamma: f64, family: WeightFamily, alpha: f64) -> Result<GameSolution> {
        self.solve_inner(gamma, family, alpha, f64::NEG_INFINITY)
    }

    /// Decision only; may stop before the minimum is reached once the
    /// outcome is settled. The decision always equals that of [`solve`].
    ///
    /// [`solve`]: GameSolver::solve
    pub fn rejects(&self, gamma: f64, family: WeightFamily, alpha: f64) -> Result<bool> {
        // Every chi-bar critical value is at least z²_α.
        let z = norm_quantile(1.0 - alpha);
        Ok(self.solve_inner(gamma, family, alpha, z * z)?.reject)
    }

    fn solve_inner(
        &self,
        gamma: f64,
        family: WeightFamily,
        alpha: f64,
        stop_below: f64,
    ) -> Result<GameSolution> {
        check_gamma(gamma)?;
        check_alpha(alpha)?;
        if family == WeightFamily::SignScore {
            if let Some((i, s)) = self
                .prep
                .summaries
                .iter()
                .enumerate()
                .find(|(_, s)| s.distinct > 2)
            {
                return Err(Error::NotSignScore {
                    set: i,
                    distinct: s.distinct,
                });
            }
        }
        let m = Moments::new(&self.prep, gamma, family);
        // Marginal variances vanish for every ϱ or for none, so probing the
        // uniform law decides degeneracy.
        let uniform = alloc::vec![0usize; m.n_sets()];
        let (_, sig0) = m.evaluate(&uniform);
        let mut warnings = Vec::new();
        let fixed = match (sig0[0][0] > 0.0, sig0[1][1] > 0.0) {
            (true, true) => None,
            (false, false) => return Err(Error::ZeroVariance),
            (true, false) => {
                warnings.push(String::from(
                    "tilted component has zero variance; using the conventional statistic alone",
                ));
                Some([1.0, 0.0])
            }
            (false, true) => {
                warnings.push(String::from(
                    "conventional component has zero variance; using the tilted statistic alone",
                ));
                Some([0.0, 1.0])
            }
        };
        let out = self.minimize(&m, fixed, stop_below);
        let rho_hat = if fixed.is_some() {
            1.0
        } else {
            let den = sqrt(out.sigma[0][0] * out.sigma[1][1]);
            if den > 0.0 {
                (out.sigma[0][1] / den).clamp(-1.0, 1.0)
            } else {
                1.0
            }
        };
        let z = norm_quantile(1.0 - alpha);
        let critical = if fixed.is_some() {
            z * z
        } else if out.b < stop_below {
            // Settled without looking up the table.
            f64::NAN
        } else {
            chi_bar_critical(rho_hat, alpha)?
        };
        Ok(GameSolution {
            gamma,
            b: out.b,
            lambda_star: [1.0 - out.s, out.s],
            rho_hat,
            critical,
            reject: out.b >= critical,
            excess: out.d,
            sigma: out.sigma,
            warnings,
        })
    }

    /// `sup_λ` value at a fixed per-set pattern (`a_i` top units biased);
    /// used by tests and oracles.
    pub fn value_at(&self, gamma: f64, family: WeightFamily, pattern: &[usize]) -> f64 {
        let m = Moments::new(&self.prep, gamma, family);
        let (d, sigma) = m.evaluate(pattern);
        lambda_step(d, sigma).0
    }
}

/// Solves the game at Γ and compares with the chi-bar-square critical value.
pub fn game_solve(
    scores: &ScoreMatrix,
    gamma: f64,
    family: WeightFamily,
    alpha: f64,
) -> Result<GameSolution> {
    GameSolver::new(scores).solve(gamma, family, alpha)
}

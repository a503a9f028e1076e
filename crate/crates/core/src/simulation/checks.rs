use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::generative::{simulate_table, ErrorFamily, GenerativeSpec};
use super::limits::{design_sensitivity_tilted, DesignSensitivity, Estimate, LimitEstimates};
use crate::conventional::m_gamma_solve;
use crate::error::{Error, Result};
use crate::math::{csum, ln, sqrt, CompensatedSum, MeanSe};
use crate::rng::Stream;
use crate::statistics::{huber_scale, huber_with_scale, ScoreSpec};
use crate::study::ScoreMatrix;
use crate::tilted::tilt;
use crate::{check_gamma, kappa};

/// The three sides of the `M_Γ` bounds, each an average over sets, with the
/// standard errors of the two outer sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitBounds {
    pub lb: f64,
    pub mid: f64,
    pub ub: f64,
    pub lb_se: f64,
    pub ub_se: f64,
}

/// For `f(x) = n⁻¹Σ|c_j − x|` with right derivative `2Ĝ(x) − 1` and fixed
/// point `f(κM) = M`, convexity gives per set
/// `(κM − t)(2Ĝ(t) − 1) ≤ M − f(t) ≤ (κM − t)(2Ĝ(κM) − 1)`.
pub fn bounds_check(scores: &ScoreMatrix, gamma: f64, t: f64) -> Result<LimitBounds> {
    check_gamma(gamma)?;
    let k = kappa(gamma);
    let mut lb = MeanSe::default();
    let mut ub = MeanSe::default();
    let mut mid = CompensatedSum::new();
    for s in scores.iter() {
        let m = m_gamma_solve(s.q, gamma)?;
        let n = s.len() as f64;
        let g_hat = |x: f64| s.q.iter().filter(|&&q| q - s.mean <= x).count() as f64 / n;
        let f_t = s.q.iter().map(|&q| (q - s.mean - t).abs()).sum::<f64>() / n;
        lb.push((k * m - t) * (2.0 * g_hat(t) - 1.0));
        ub.push((k * m - t) * (2.0 * g_hat(k * m) - 1.0));
        mid.add(m - f_t);
    }
    Ok(LimitBounds {
        lb: lb.mean(),
        mid: mid.value() / scores.n_sets() as f64,
        ub: ub.mean(),
        lb_se: lb.se(),
        ub_se: ub.se(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaJRow {
    pub controls: usize,
    /// `E(T_i/J)`, free of J for a fixed ψ.
    pub theta: Estimate,
    /// `E|T_i/J|`.
    pub eta: Estimate,
    pub tilted: DesignSensitivity,
}

/// `η_J` and the tilted design sensitivity for an m-statistic across J.
///
/// The Huber scale is estimated once, on the pool for the first J, and then
/// held fixed so that ψ is the same function for every J.
pub fn eta_j_curve(
    family: ErrorFamily,
    effect_ratio: f64,
    stat: ScoreSpec,
    j_list: &[usize],
    n_sets: usize,
    seed: u64,
) -> Result<Vec<EtaJRow>> {
    let trim = match stat {
        ScoreSpec::Huber { trim } => trim,
        _ => {
            return Err(Error::InvalidArgument(
                "the J curve needs an m-statistic (huber)".into(),
            ))
        }
    };
    let mut scale = None;
    let mut rows = Vec::with_capacity(j_list.len());
    for &j in j_list {
        let spec = GenerativeSpec::new(family, effect_ratio, j, n_sets, seed);
        let table = simulate_table(&spec, 0)?;
        let s = *scale.get_or_insert_with(|| if trim.is_infinite() { 1.0 } else { huber_scale(&table) });
        let scores = huber_with_scale(&table, trim, s)?;
        let est = LimitEstimates::from_scores(&scores, &[])?;
        let per_j = |e: Estimate| Estimate {
            value: e.value / j as f64,
            se: e.se / j as f64,
        };
        rows.push(EtaJRow {
            controls: j,
            theta: per_j(est.theta),
            eta: per_j(est.eta),
            tilted: design_sensitivity_tilted(&est),
        });
    }
    Ok(rows)
}

/// Score generator for the dominance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DominanceGenerator {
    /// Exchangeable multivariate normal with common correlation `rho`.
    ExchangeableNormal { rho: f64 },
    /// Independent 1 − Exp(1) draws, strongly left skewed.
    LeftSkewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceResult {
    pub dominated: bool,
    /// `sup_c {F_M(c) − F_A(c)}` for the empirical CDFs of `M_Γ` and of the
    /// mean absolute deviation.
    pub max_cdf_gap: f64,
    /// DKW half-width at confidence 0.99.
    pub band: f64,
}

/// Monte-Carlo check that `M_Γ` stochastically dominates `n⁻¹Σ|q_j − q̄|`.
pub fn dominance_check_prop6(
    n: usize,
    generator: DominanceGenerator,
    gamma: f64,
    reps: usize,
    seed: u64,
) -> Result<DominanceResult> {
    check_gamma(gamma)?;
    if n < 2 || reps == 0 {
        return Err(Error::InvalidArgument("need n >= 2 and reps >= 1".into()));
    }
    if let DominanceGenerator::ExchangeableNormal { rho } = generator {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidRho(rho));
        }
    }
    let draws = crate::par::map_init(
        reps,
        || alloc::vec![0.0; n],
        |q, r| -> Result<(f64, f64)> {
            let mut rng = Stream::new(seed, r as u64, 0);
            match generator {
                DominanceGenerator::ExchangeableNormal { rho } => {
                    let common = sqrt(rho) * rng.normal();
                    let own = sqrt(1.0 - rho);
                    for x in q.iter_mut() {
                        *x = common + own * rng.normal();
                    }
                }
                DominanceGenerator::LeftSkewed => {
                    for x in q.iter_mut() {
                        *x = ErrorFamily::OneMinusExp1.quantile(rng.uniform());
                    }
                }
            }
            let mean = csum(q.iter().copied()) / n as f64;
            let mad = csum(q.iter().map(|x| (x - mean).abs())) / n as f64;
            Ok((m_gamma_solve(q, gamma)?, mad))
        },
    );
    let (mut m, mut a): (Vec<f64>, Vec<f64>) = draws.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    m.sort_unstable_by(f64::total_cmp);
    a.sort_unstable_by(f64::total_cmp);
    let gap = max_cdf_excess(&m, &a);
    let band = sqrt(ln(2.0 / 0.01) / (2.0 * reps as f64));
    Ok(DominanceResult {
        dominated: gap <= band,
        max_cdf_gap: gap,
        band,
    })
}

/// `sup_c {F_x(c) − F_y(c)}` for sorted samples.
fn max_cdf_excess(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < x.len() {
        let c = x[i];
        while i < x.len() && x[i] <= c {
            i += 1;
        }
        while j < y.len() && y[j] <= c {
            j += 1;
        }
        best = best.max(i as f64 / nx - j as f64 / ny);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathologicalMoments {
    /// `Σν̃² / Σσ²` where `σ²` is the variance under `u = e₁`.
    pub ratio: f64,
    /// `(Γ + 3)/(2Γ + 2)`.
    pub expected: f64,
    pub mean_var_tilde: f64,
    pub mean_sigma2: f64,
    /// `I^{-1/2} Σ ϑ`, the scaled expectation under `u = e₁`.
    pub scaled_bias: f64,
}

/// Fixture with `q_i = (1, i⁻², −i⁻², −1)`, where the tilted variance
/// understates the variance under the bias pattern `u = e₁`.
pub fn pathological_fixture(n_sets: usize) -> Result<ScoreMatrix> {
    ScoreMatrix::new(
        (1..=n_sets)
            .map(|i| {
                let e = 1.0 / (i as f64 * i as f64);
                (alloc::vec![1.0, e, -e, -1.0], 0)
            })
            .collect(),
    )
}

pub fn pathological_moments(gamma: f64, n_sets: usize) -> Result<PathologicalMoments> {
    check_gamma(gamma)?;
    let scores = pathological_fixture(n_sets)?;
    let t = tilt(&scores, gamma)?;
    let den = gamma + 3.0;
    let mut nu = CompensatedSum::new();
    let mut sigma = CompensatedSum::new();
    let mut bias = CompensatedSum::new();
    for i in 0..t.n_sets() {
        let ts = t.unit_scores(i);
        let p = |j: usize| if j == 0 { gamma / den } else { 1.0 / den };
        let m: f64 = ts.iter().enumerate().map(|(j, x)| p(j) * x).sum();
        let v: f64 = ts.iter().enumerate().map(|(j, x)| p(j) * (x - m) * (x - m)).sum();
        nu.add(t.var_tilde(i));
        sigma.add(v);
        bias.add(m);
    }
    let n = n_sets as f64;
    Ok(PathologicalMoments {
        ratio: nu.value() / sigma.value(),
        expected: (gamma + 3.0) / (2.0 * gamma + 2.0),
        mean_var_tilde: nu.value() / n,
        mean_sigma2: sigma.value() / n,
        scaled_bias: bias.value() / sqrt(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_excess_of_identical_samples_is_zero() {
        let x = [0.1, 0.5, 0.7];
        assert_eq!(max_cdf_excess(&x, &x), 0.0);
        // x below y everywhere means F_x exceeds F_y.
        assert!(max_cdf_excess(&[0.0, 0.1], &[1.0, 2.0]) == 1.0);
    }
}

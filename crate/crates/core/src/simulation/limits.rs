use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::generative::{simulate_table, GenerativeSpec};
use crate::conventional::{m_gamma_solve, ConventionalPrep};
use crate::error::{Error, Result};
use crate::kappa;
use crate::math::{sqrt, CompensatedSum, MeanSe};
use crate::statistics::{score_table, ScoreSpec};
use crate::study::ScoreMatrix;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGammaPoint {
    pub gamma: f64,
    pub m: Estimate,
}

/// Per-set averages estimating `θ = plim I⁻¹Σ(T_i − q̄_i)`,
/// `η = plim I⁻¹Σ|T_i − q̄_i|` and `m_Γ = plim I⁻¹Σ M_Γi`, together with the
/// pool they came from so that further Γ can be probed on the same draws.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimates {
    pub theta: Estimate,
    pub eta: Estimate,
    pub m_gamma: Vec<MGammaPoint>,
    pub n_sets: usize,
    #[serde(skip)]
    cov_theta_eta: f64,
    #[serde(skip)]
    pool: ConventionalPrep,
}

fn mean_se<I: IntoIterator<Item = f64>>(xs: I) -> Estimate {
    let mut acc = MeanSe::default();
    for x in xs {
        acc.push(x);
    }
    Estimate {
        value: acc.mean(),
        se: acc.se(),
    }
}

impl LimitEstimates {
    pub fn from_scores(scores: &ScoreMatrix, gamma_list: &[f64]) -> Result<Self> {
        let pool = ConventionalPrep::new(scores);
        let x = pool.treated_centered();
        let n = x.len() as f64;
        let theta = mean_se(x.iter().copied());
        let eta = mean_se(x.iter().map(|v| v.abs()));
        let cov = x
            .iter()
            .map(|&v| (v - theta.value) * (v.abs() - eta.value))
            .collect::<CompensatedSum>()
            .value()
            / (n - 1.0)
            / n;
        let mut m_gamma = Vec::with_capacity(gamma_list.len());
        for &gamma in gamma_list {
            let ms = crate::par::map(pool.n_sets(), |i| m_gamma_solve(pool.sorted_set(i), gamma));
            let ms = ms.into_iter().collect::<Result<Vec<f64>>>()?;
            m_gamma.push(MGammaPoint {
                gamma,
                m: mean_se(ms),
            });
        }
        Ok(LimitEstimates {
            theta,
            eta,
            m_gamma,
            n_sets: x.len(),
            cov_theta_eta: cov,
            pool,
        })
    }

    pub fn pool(&self) -> &ConventionalPrep {
        &self.pool
    }

    /// `I⁻¹ Σ κ_Γ M_Γi`, evaluated through the worst-case expectation.
    pub fn kappa_m(&self, gamma: f64) -> f64 {
        (0..self.pool.n_sets())
            .map(|i| self.pool.set_excess(i, gamma))
            .collect::<CompensatedSum>()
            .value()
            / self.n_sets as f64
    }

    /// Empirical CDF of set `i`'s centered scores at `t`.
    pub fn g_hat(&self, i: usize, t: f64) -> f64 {
        let c = self.pool.sorted_set(i);
        c.iter().filter(|&&x| x <= t).count() as f64 / c.len() as f64
    }
}

/// Simulates one pool of `spec.n_sets` sets, scores it and estimates the
/// limits, with `m_Γ` tabulated at each Γ in `gamma_list`.
pub fn estimate_limits(
    spec: &GenerativeSpec,
    stat: ScoreSpec,
    gamma_list: &[f64],
) -> Result<LimitEstimates> {
    let table = simulate_table(spec, 0)?;
    let scores = score_table(&table, stat)?;
    LimitEstimates::from_scores(&scores, gamma_list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSensitivity {
    Value { gamma: f64, se: f64 },
    /// No favorable effect: `θ ≤ 0`.
    AtMostOne,
    /// `η ≤ θ`.
    Infinite,
    /// The root lies beyond the search range.
    AboveMax { gamma_max: f64 },
}

impl DesignSensitivity {
    /// Point value with the sentinels mapped to 1, +∞ and the range limit.
    pub fn value(&self) -> f64 {
        match *self {
            DesignSensitivity::Value { gamma, .. } => gamma,
            DesignSensitivity::AtMostOne => 1.0,
            DesignSensitivity::Infinite => f64::INFINITY,
            DesignSensitivity::AboveMax { gamma_max } => gamma_max,
        }
    }
}

/// Closed form `(η + θ)/(η − θ)` with a delta-method standard error.
pub fn design_sensitivity_tilted(est: &LimitEstimates) -> DesignSensitivity {
    let (t, e) = (est.theta.value, est.eta.value);
    if !(t > 0.0) {
        return DesignSensitivity::AtMostOne;
    }
    if e <= t {
        return DesignSensitivity::Infinite;
    }
    let d = (e - t) * (e - t);
    let (gt, ge) = (2.0 * e / d, -2.0 * t / d);
    let var = gt * gt * est.theta.se * est.theta.se
        + ge * ge * est.eta.se * est.eta.se
        + 2.0 * gt * ge * est.cov_theta_eta;
    DesignSensitivity::Value {
        gamma: (e + t) / (e - t),
        se: sqrt(var.max(0.0)),
    }
}

pub const CONVENTIONAL_GAMMA_MAX: f64 = 1000.0;

/// Root in Γ of `θ − I⁻¹Σ κ_Γ M_Γi`, probing the same pool at every Γ.
pub fn design_sensitivity_conventional(est: &LimitEstimates) -> DesignSensitivity {
    let (t, e) = (est.theta.value, est.eta.value);
    if !(t > 0.0) {
        return DesignSensitivity::AtMostOne;
    }
    if e <= t {
        return DesignSensitivity::Infinite;
    }
    let f = |g: f64| t - est.kappa_m(g);
    if f(CONVENTIONAL_GAMMA_MAX) > 0.0 {
        return DesignSensitivity::AboveMax {
            gamma_max: CONVENTIONAL_GAMMA_MAX,
        };
    }
    let root = crate::math::bisect_decreasing(f, 1.0, CONVENTIONAL_GAMMA_MAX, 1e-9);
    // Delta method: the root moves by (per-set noise)/(slope of the curve).
    let h = 1e-4 * root;
    let slope = (est.kappa_m(root + h) - est.kappa_m((root - h).max(1.0))) / (root + h - (root - h).max(1.0));
    let pool = est.pool();
    let resid = mean_se((0..pool.n_sets()).map(|i| pool.treated_centered()[i] - pool.set_excess(i, root)));
    DesignSensitivity::Value {
        gamma: root,
        se: resid.se / slope.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    /// `{I(J+1)}⁻¹ ΣΣ |q_ij − q̄_i − θ| − η`.
    pub value: f64,
    pub se: f64,
    /// Positive predicts a larger tilted design sensitivity.
    pub sign: i8,
}

/// The mean-absolute-deviation heuristic for which analysis has the larger
/// design sensitivity, evaluated at `theta`.
pub fn comparison_heuristic(est: &LimitEstimates, theta: f64) -> Heuristic {
    let pool = est.pool();
    let mut total = CompensatedSum::new();
    let mut units = 0usize;
    for i in 0..pool.n_sets() {
        for &c in pool.sorted_set(i) {
            total.add((c - theta).abs());
            units += 1;
        }
    }
    let value = total.value() / units as f64 - est.eta.value;
    let per_set = mean_se((0..pool.n_sets()).map(|i| {
        let c = pool.sorted_set(i);
        c.iter().map(|&x| (x - theta).abs()).sum::<f64>() / c.len() as f64
            - pool.treated_centered()[i].abs()
    }));
    Heuristic {
        value,
        se: per_set.se,
        sign: if value > 0.0 {
            1
        } else if value < 0.0 {
            -1
        } else {
            0
        },
    }
}

/// One design-sensitivity table cell: both design sensitivities for a spec and statistic.
#[derive(Debug, Clone, Serialize)]
pub struct DesignCell {
    pub spec: GenerativeSpec,
    pub stat: ScoreSpec,
    pub theta: Estimate,
    pub eta: Estimate,
    pub conventional: DesignSensitivity,
    pub tilted: DesignSensitivity,
    pub heuristic: Heuristic,
    /// `m_Γ` at the tilted design sensitivity; above `η` exactly when the
    /// tilted analysis has the larger design sensitivity.
    pub m_at_tilted: Option<f64>,
}

pub fn design_cell(spec: &GenerativeSpec, stat: ScoreSpec) -> Result<DesignCell> {
    if stat == ScoreSpec::MantelHaenszel {
        return Err(Error::InvalidArgument(
            "the generative model has continuous outcomes".into(),
        ));
    }
    let est = estimate_limits(spec, stat, &[])?;
    let tilted = design_sensitivity_tilted(&est);
    let m_at_tilted = match tilted {
        DesignSensitivity::Value { gamma, .. } if gamma > 1.0 => {
            Some(est.kappa_m(gamma) / kappa(gamma))
        }
        _ => None,
    };
    Ok(DesignCell {
        spec: *spec,
        stat,
        theta: est.theta,
        eta: est.eta,
        conventional: design_sensitivity_conventional(&est),
        tilted,
        heuristic: comparison_heuristic(&est, est.theta.value),
        m_at_tilted,
    })
}

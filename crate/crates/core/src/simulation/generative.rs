use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln, sqrt, t3_quantile};
use crate::rng::Stream;
use crate::study::{MatchedStudy, OutcomeTable};

/// Error distribution of the potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    Normal,
    T3,
    DoubleExponential,
    /// Exp(1) − 1, right skewed.
    Exp1Minus1,
    /// 1 − Exp(1), left skewed.
    OneMinusExp1,
}

impl ErrorFamily {
    pub const ALL: [ErrorFamily; 5] = [
        ErrorFamily::Normal,
        ErrorFamily::T3,
        ErrorFamily::DoubleExponential,
        ErrorFamily::Exp1Minus1,
        ErrorFamily::OneMinusExp1,
    ];

    /// `Var(ε₁ − ε₀)` for independent errors.
    pub fn sigma2(self) -> f64 {
        match self {
            ErrorFamily::Normal => 2.0,
            ErrorFamily::T3 => 6.0,
            ErrorFamily::DoubleExponential => 4.0,
            ErrorFamily::Exp1Minus1 | ErrorFamily::OneMinusExp1 => 2.0,
        }
    }

    /// Inverse CDF at `u ∈ (0, 1)`.
    #[inline]
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            ErrorFamily::Normal => crate::math::norm_quantile(u),
            ErrorFamily::T3 => t3_quantile(u),
            ErrorFamily::DoubleExponential => {
                let d = u - 0.5;
                -d.signum() * ln(1.0 - 2.0 * d.abs())
            }
            ErrorFamily::Exp1Minus1 => -libm::log1p(-u) - 1.0,
            ErrorFamily::OneMinusExp1 => 1.0 + ln(u),
        }
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorFamily::Normal => "normal",
            ErrorFamily::T3 => "t3",
            ErrorFamily::DoubleExponential => "double_exponential",
            ErrorFamily::Exp1Minus1 => "exp1_minus_1",
            ErrorFamily::OneMinusExp1 => "one_minus_exp1",
        })
    }
}

impl FromStr for ErrorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => ErrorFamily::Normal,
            "t3" => ErrorFamily::T3,
            "double_exponential" | "laplace" | "dexp" => ErrorFamily::DoubleExponential,
            "exp1_minus_1" | "exp" | "exp-1" => ErrorFamily::Exp1Minus1,
            "one_minus_exp1" | "negexp" | "1-exp" => ErrorFamily::OneMinusExp1,
            other => {
                return Err(Error::InvalidArgument(alloc::format!(
                    "unknown error family `{other}`"
                )))
            }
        })
    }
}

/// Matched-set fixed effects. They cancel from every statistic here; the
/// random policy exists to check that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlphaPolicy {
    Zero,
    IidNormal { sd: f64 },
}

/// Superpopulation model: `Y = α_i + Z·(τ + ε₁) + (1 − Z)·ε₀` with a uniformly
/// placed treated unit in each set and no hidden bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub error_family: ErrorFamily,
    /// `τ/σ`.
    pub effect_ratio: f64,
    /// Controls per set `J`.
    pub controls: usize,
    pub n_sets: usize,
    pub seed: u64,
    pub alpha_policy: AlphaPolicy,
}

impl GenerativeSpec {
    pub fn new(error_family: ErrorFamily, effect_ratio: f64, controls: usize, n_sets: usize, seed: u64) -> Self {
        GenerativeSpec {
            error_family,
            effect_ratio,
            controls,
            n_sets,
            seed,
            alpha_policy: AlphaPolicy::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls == 0 || self.n_sets == 0 {
            return Err(Error::InvalidArgument(
                "need at least one control and one set".into(),
            ));
        }
        if !(self.effect_ratio >= 0.0) || !self.effect_ratio.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "effect ratio must be finite and nonnegative, got {}",
                self.effect_ratio
            )));
        }
        if let AlphaPolicy::IidNormal { sd } = self.alpha_policy {
            if !(sd >= 0.0) || !sd.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!("invalid alpha sd {sd}")));
            }
        }
        Ok(())
    }

    pub fn set_size(&self) -> usize {
        self.controls + 1
    }

    pub fn sigma(&self) -> f64 {
        sqrt(self.error_family.sigma2())
    }

    pub fn tau(&self) -> f64 {
        self.effect_ratio * self.sigma()
    }

    /// 64-bit draws consumed per set: treated slot, fixed effect, and two
    /// error draws per unit.
    pub fn draws_per_set(&self) -> u64 {
        2 * self.set_size() as u64 + 2
    }
}

/// One replicate as flat outcome storage. Replicate `r` reads stream `r` of
/// the seed; set `i` always starts at draw `i·(2n + 2)`.
pub fn simulate_table(spec: &GenerativeSpec, replicate: u64) -> Result<OutcomeTable> {
    spec.validate()?;
    let n = spec.set_size();
    let tau = spec.tau();
    let family = spec.error_family;
    let mut rng = Stream::new(spec.seed, replicate, 0);
    let mut outcomes = Vec::with_capacity(spec.n_sets * n);
    let mut treated = Vec::with_capacity(spec.n_sets);
    let offsets = (0..=spec.n_sets).map(|i| i * n).collect();
    for _ in 0..spec.n_sets {
        let t = rng.below(n);
        let z = rng.normal();
        let alpha = match spec.alpha_policy {
            AlphaPolicy::Zero => 0.0,
            AlphaPolicy::IidNormal { sd } => sd * z,
        };
        let start = outcomes.len();
        for _ in 0..n {
            outcomes.push(alpha + family.quantile(rng.uniform()));
        }
        for j in 0..n {
            let e1 = family.quantile(rng.uniform());
            if j == t {
                outcomes[start + j] = alpha + tau + e1;
            }
        }
        treated.push(t);
    }
    OutcomeTable::from_parts(offsets, outcomes, treated)
}

/// Simulates a study (replicate 0 of the spec's seed).
pub fn simulate_study(spec: &GenerativeSpec) -> Result<MatchedStudy> {
    Ok(simulate_table(spec, 0)?.to_study())
}

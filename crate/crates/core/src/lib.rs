//! Sensitivity analysis for matched observational studies under the Γ model.
//!
//! Each matched set holds one treated unit and one or more controls. For a
//! sum statistic `T = Σ_i Σ_j Z_ij q_ij` the crate provides
//!
//! * the conventional analysis (the separable algorithm: per-set worst-case
//!   expectation and variance, plus the fractional-program representation
//!   `M_Γi` of the worst-case expectation),
//! * the tilted analysis, whose worst-case null moments are available in
//!   closed form for any number of controls, with unit, sign-score and
//!   inverse-probability weights,
//! * an adaptive combination of the two via a min-max game and a
//!   chi-bar-square critical value,
//! * sensitivity values (the largest Γ at which a method still rejects),
//! * a Monte-Carlo engine for design sensitivities and power curves, and
//! * brute-force oracles used to verify all of the above.
//!
//! The crate is `no_std` compatible (it needs `alloc`). The default `std`
//! feature only adds thread-level parallelism for the simulation engine.
//! File formats and the command-line interface live in `tiltsens-cli`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adaptive;
pub mod chibar;
pub mod conventional;
mod error;
pub mod math;
pub mod oracle;
mod par;
pub mod rng;
pub mod senval;
pub mod simulation;
pub mod statistics;
pub mod study;
pub mod tilted;

pub use adaptive::{game_solve, GameSolution};
pub use chibar::{chi_bar_critical, ChiBarTable, ChiBarWeights};
pub use conventional::{conventional_pvalue, m_gamma_solve, worst_case_expectation, worst_case_variance, WorstCaseMoments};
pub use error::{Error, Result};
pub use senval::{sensitivity_value, Method, SenVal, SensitivityReport};
pub use statistics::{score, ScoreSpec};
pub use study::{statistic_total, MatchedSet, MatchedStudy, ScoreMatrix, Unit};
pub use tilted::{tilt, tilted_pvalue, weights, TiltedScores, WeightFamily};

use serde::{Deserialize, Serialize};

/// Outcome of a one-sided level-α test at a single Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub deviate: f64,
    pub pvalue: f64,
    pub reject: bool,
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `κ_Γ = (Γ − 1)/(Γ + 1)`, the shrinkage factor shared by both analyses.
#[inline]
pub fn kappa(gamma: f64) -> f64 {
    (gamma - 1.0) / (gamma + 1.0)
}

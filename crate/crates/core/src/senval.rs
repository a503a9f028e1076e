//! Sensitivity values: the largest Γ at which a method still rejects.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::GameSolver;
use crate::conventional::ConventionalPrep;
use crate::error::{Error, Result};
use crate::statistics::{score, ScoreSpec};
use crate::study::{MatchedStudy, ScoreMatrix};
use crate::tilted::{TiltPrep, WeightFamily};
use crate::check_alpha;

pub const DEFAULT_GAMMA_MAX: f64 = 1000.0;
pub const DEFAULT_TOL: f64 = 1e-4;
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Conventional,
    Tilted(WeightFamily),
    Adaptive(WeightFamily),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Conventional => f.write_str("conventional"),
            Method::Tilted(w) => write!(f, "tilted:{w}"),
            Method::Adaptive(w) => write!(f, "adaptive:{w}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `conventional`, `tilted[:unit|ss|ipw]`, `adaptive[:unit|ss|ipw]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, family) = match s.split_once(':') {
            Some((n, w)) => (n, Some(w.parse::<WeightFamily>()?)),
            None => (s, None),
        };
        let family = family.unwrap_or(WeightFamily::Unit);
        match name {
            "conventional" | "conv" if s.contains(':') => Err(Error::InvalidArgument(
                "the conventional method takes no weights".into(),
            )),
            "conventional" | "conv" => Ok(Method::Conventional),
            "tilted" | "tilt" => Ok(Method::Tilted(family)),
            "adaptive" => Ok(Method::Adaptive(family)),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown method `{s}`"))),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Where the rejection region ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "SenValRepr", try_from = "SenValRepr")]
pub enum SenVal {
    Value(f64),
    NotRejectedAtOne,
    ExceedsGammaMax,
}

const NOT_REJECTED: &str = "not rejected at gamma=1";
const EXCEEDS: &str = "exceeds gamma_max";

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SenValRepr {
    Value(f64),
    Text(String),
}

impl From<SenVal> for SenValRepr {
    fn from(v: SenVal) -> Self {
        match v {
            SenVal::Value(x) => SenValRepr::Value(x),
            SenVal::NotRejectedAtOne => SenValRepr::Text(NOT_REJECTED.into()),
            SenVal::ExceedsGammaMax => SenValRepr::Text(EXCEEDS.into()),
        }
    }
}

impl TryFrom<SenValRepr> for SenVal {
    type Error = Error;

    fn try_from(r: SenValRepr) -> Result<Self> {
        match r {
            SenValRepr::Value(x) => Ok(SenVal::Value(x)),
            SenValRepr::Text(t) if t == NOT_REJECTED => Ok(SenVal::NotRejectedAtOne),
            SenValRepr::Text(t) if t == EXCEEDS => Ok(SenVal::ExceedsGammaMax),
            SenValRepr::Text(t) => Err(Error::InvalidArgument(alloc::format!(
                "unknown sensitivity value `{t}`"
            ))),
        }
    }
}

impl fmt::Display for SenVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenVal::Value(x) => write!(f, "{x}"),
            SenVal::NotRejectedAtOne => f.write_str(NOT_REJECTED),
            SenVal::ExceedsGammaMax => f.write_str(EXCEEDS),
        }
    }
}

/// One evaluated Γ: the deviate (or `B_Γ` for the adaptive method) and the
/// decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub statistic: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub method: Method,
    pub alpha: f64,
    pub gamma_max: f64,
    pub tol: f64,
    /// Every evaluated Γ, strictly increasing.
    pub gamma_grid: Vec<GridPoint>,
    pub senval: SenVal,
    pub warnings: Vec<String>,
}

/// A method prepared on fixed scores, evaluable at any Γ.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Conventional(ConventionalPrep),
    Tilted(TiltPrep, WeightFamily),
    Adaptive(GameSolver, WeightFamily),
}

impl Evaluator {
    pub fn new(scores: &ScoreMatrix, method: Method) -> Result<Self> {
        Ok(match method {
            Method::Conventional => Evaluator::Conventional(ConventionalPrep::new(scores)),
            Method::Tilted(w) => {
                let prep = TiltPrep::new(scores);
                prep.check_family(w)?;
                Evaluator::Tilted(prep, w)
            }
            Method::Adaptive(w) => Evaluator::Adaptive(GameSolver::new(scores), w),
        })
    }

    /// Statistic and decision at Γ.
    pub fn eval(&self, gamma: f64, alpha: f64) -> Result<GridPoint> {
        let (statistic, reject) = match self {
            Evaluator::Conventional(p) => {
                let r = p.test(gamma, alpha)?;
                (r.deviate, r.reject)
            }
            Evaluator::Tilted(p, w) => {
                let r = p.test(gamma, *w, alpha)?;
                (r.deviate, r.reject)
            }
            Evaluator::Adaptive(s, w) => {
                let r = s.solve(gamma, *w, alpha)?;
                (r.b, r.reject)
            }
        };
        Ok(GridPoint {
            gamma,
            statistic,
            reject,
        })
    }
}

/// Scores the study and locates the changepoint Γ.
pub fn sensitivity_value(
    study: &MatchedStudy,
    spec: ScoreSpec,
    method: Method,
    alpha: f64,
    gamma_max: f64,
    tol: f64,
) -> Result<SensitivityReport> {
    let scores = score(study, spec)?;
    sensitivity_value_scores(&scores, method, alpha, gamma_max, tol)
}

/// Doubling scan from Γ = 1 to bracket the changepoint, then bisection to
/// width `tol`.
pub fn sensitivity_value_scores(
    scores: &ScoreMatrix,
    method: Method,
    alpha: f64,
    gamma_max: f64,
    tol: f64,
) -> Result<SensitivityReport> {
    check_alpha(alpha)?;
    if !(gamma_max >= 1.0) || !gamma_max.is_finite() {
        return Err(Error::InvalidGamma(gamma_max));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "tol must be positive, got {tol}"
        )));
    }
    let ev = Evaluator::new(scores, method)?;
    let mut grid = Vec::new();
    let mut warnings = Vec::new();

    let first = ev.eval(1.0, alpha)?;
    grid.push(first);
    let senval = if !first.reject {
        SenVal::NotRejectedAtOne
    } else {
        // Walk the doubling grid to gamma_max; the first acceptance closes the
        // bracket, and later points only serve the single-crossing check.
        let mut lo = 1.0;
        let mut bracket = None;
        let mut g = 1.0;
        while g < gamma_max {
            g = (2.0 * g).min(gamma_max);
            let p = ev.eval(g, alpha)?;
            grid.push(p);
            match (bracket, p.reject) {
                (None, true) => lo = g,
                (None, false) => bracket = Some((lo, g)),
                (Some(_), true) => {
                    warnings.push(alloc::format!(
                        "rejects again at gamma={g} after an acceptance; reporting the smallest acceptance point"
                    ));
                    break;
                }
                (Some(_), false) => {}
            }
        }
        match bracket {
            None => SenVal::ExceedsGammaMax,
            Some((mut lo, mut hi)) => {
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    let p = ev.eval(mid, alpha)?;
                    grid.push(p);
                    if p.reject {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                SenVal::Value(0.5 * (lo + hi))
            }
        }
    };

    grid.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    grid.dedup_by(|a, b| a.gamma == b.gamma);
    if !matches!(method, Method::Adaptive(_)) {
        if let Some(w) = grid
            .windows(2)
            .find(|w| w[1].statistic > w[0].statistic + MONOTONE_SLACK)
        {
            warnings.push(alloc::format!(
                "deviate increases between gamma={} and gamma={}",
                w[0].gamma,
                w[1].gamma
            ));
        }
    }
    Ok(SensitivityReport {
        method,
        alpha,
        gamma_max,
        tol,
        gamma_grid: grid,
        senval,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_text_forms() {
        assert_eq!("conventional".parse::<Method>().unwrap(), Method::Conventional);
        assert_eq!(
            "tilted".parse::<Method>().unwrap(),
            Method::Tilted(WeightFamily::Unit)
        );
        assert_eq!(
            "adaptive:ipw".parse::<Method>().unwrap(),
            Method::Adaptive(WeightFamily::Ipw)
        );
        assert!("conventional:ss".parse::<Method>().is_err());
        assert!("magic".parse::<Method>().is_err());
        for m in ["conventional", "tilted:ss", "adaptive:unit"] {
            assert_eq!(m.parse::<Method>().unwrap().to_string(), m);
        }
    }
}

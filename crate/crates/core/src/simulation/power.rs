use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::generative::{simulate_table, GenerativeSpec};
use crate::adaptive::GameSolver;
use crate::conventional::ConventionalPrep;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::senval::Method;
use crate::statistics::{score_table, ScoreSpec};
use crate::tilted::TiltPrep;
use crate::{check_alpha, check_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerRow {
    pub gamma: f64,
    pub method: Method,
    pub rate: f64,
    pub se: f64,
}

/// Rejection rates indexed by method, then Γ.
#[derive(Debug, Clone, Serialize)]
pub struct PowerTable {
    pub spec: GenerativeSpec,
    pub stat: ScoreSpec,
    pub alpha: f64,
    pub reps: usize,
    pub gammas: Vec<f64>,
    pub methods: Vec<Method>,
    pub rates: Vec<Vec<f64>>,
}

impl PowerTable {
    fn index(&self, method: Method) -> Result<usize> {
        self.methods
            .iter()
            .position(|&m| m == method)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("method {method} not in table")))
    }

    pub fn rates_for(&self, method: Method) -> Result<&[f64]> {
        Ok(&self.rates[self.index(method)?])
    }

    /// Binomial standard error of a rate.
    pub fn se(&self, rate: f64) -> f64 {
        sqrt(rate * (1.0 - rate) / self.reps as f64)
    }

    pub fn rows(&self) -> Vec<PowerRow> {
        let mut rows = Vec::with_capacity(self.gammas.len() * self.methods.len());
        for (g, &gamma) in self.gammas.iter().enumerate() {
            for (m, &method) in self.methods.iter().enumerate() {
                let rate = self.rates[m][g];
                rows.push(PowerRow {
                    gamma,
                    method,
                    rate,
                    se: self.se(rate),
                });
            }
        }
        rows
    }

    /// Largest `rate(a) − rate(b)` over the grid, with the Γ attaining it.
    pub fn max_gap(&self, a: Method, b: Method) -> Result<(f64, f64)> {
        let (ra, rb) = (self.rates_for(a)?, self.rates_for(b)?);
        Ok(self
            .gammas
            .iter()
            .zip(ra.iter().zip(rb))
            .map(|(&g, (x, y))| (x - y, g))
            .fold((f64::NEG_INFINITY, f64::NAN), |acc, v| if v.0 > acc.0 { v } else { acc }))
    }

    /// Largest shortfall of `m` against the pointwise best of `others`.
    pub fn max_shortfall(&self, m: Method, others: &[Method]) -> Result<(f64, f64)> {
        let rm = self.rates_for(m)?;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for (g, &gamma) in self.gammas.iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for &o in others {
                top = top.max(self.rates_for(o)?[g]);
            }
            let gap = top - rm[g];
            if gap > best.0 {
                best = (gap, gamma);
            }
        }
        Ok(best)
    }
}

enum Prepared {
    Conventional(ConventionalPrep),
    Tilted(TiltPrep),
    Adaptive(GameSolver),
}

/// Rejection rates of each method on `reps` simulated studies.
pub fn power_curve(
    spec: &GenerativeSpec,
    stat: ScoreSpec,
    methods: &[Method],
    alpha: f64,
    gamma_grid: &[f64],
    reps: usize,
) -> Result<PowerTable> {
    power_curve_with_progress(spec, stat, methods, alpha, gamma_grid, reps, &|_, _| {})
}

/// As [`power_curve`], calling `progress(done, total)` as replicates finish.
pub fn power_curve_with_progress(
    spec: &GenerativeSpec,
    stat: ScoreSpec,
    methods: &[Method],
    alpha: f64,
    gamma_grid: &[f64],
    reps: usize,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<PowerTable> {
    spec.validate()?;
    check_alpha(alpha)?;
    for &g in gamma_grid {
        check_gamma(g)?;
    }
    if reps == 0 || methods.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one replicate, method and gamma".into(),
        ));
    }
    let done = AtomicUsize::new(0);
    let per_rep = crate::par::map(reps, |r| -> Result<Vec<bool>> {
        let table = simulate_table(spec, r as u64)?;
        let scores = score_table(&table, stat)?;
        let mut out = Vec::with_capacity(methods.len() * gamma_grid.len());
        for &method in methods {
            let prep = match method {
                Method::Conventional => Prepared::Conventional(ConventionalPrep::new(&scores)),
                Method::Tilted(w) => {
                    let p = TiltPrep::new(&scores);
                    p.check_family(w)?;
                    Prepared::Tilted(p)
                }
                Method::Adaptive(_) => Prepared::Adaptive(GameSolver::new(&scores)),
            };
            for &gamma in gamma_grid {
                let reject = match (&prep, method) {
                    (Prepared::Conventional(p), _) => p.test(gamma, alpha)?.reject,
                    (Prepared::Tilted(p), Method::Tilted(w)) => p.test(gamma, w, alpha)?.reject,
                    (Prepared::Adaptive(s), Method::Adaptive(w)) => s.rejects(gamma, w, alpha)?,
                    _ => unreachable!("prepared state follows the method"),
                };
                out.push(reject);
            }
        }
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        progress(k, reps);
        Ok(out)
    });
    let mut counts = alloc::vec![alloc::vec![0usize; gamma_grid.len()]; methods.len()];
    for rep in per_rep {
        let rep = rep?;
        for (m, row) in counts.iter_mut().enumerate() {
            for (g, c) in row.iter_mut().enumerate() {
                *c += usize::from(rep[m * gamma_grid.len() + g]);
            }
        }
    }
    let rates = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / reps as f64).collect())
        .collect();
    Ok(PowerTable {
        spec: *spec,
        stat,
        alpha,
        reps,
        gammas: gamma_grid.to_vec(),
        methods: methods.to_vec(),
        rates,
    })
}

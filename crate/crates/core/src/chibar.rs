//! Chi-bar-square critical values for the two-dimensional nonnegative cone.
//!
//! For `Z ~ N(0, Σ)` with correlation ρ the statistic
//! `sup_{λ ≥ 0} max(0, λᵀZ)² / λᵀΣλ` is a mixture of 0, χ²₁ and χ²₂ with
//! weights `(w₀, w₁, w₂)`. The interior weight `w₂ = P(Σ⁻¹Z ≥ 0)` is
//! estimated by Monte Carlo per ρ bucket and cached; `w₁ = 1/2` holds for
//! every ρ because the two one-edge events are mirror images, and
//! `w₀ = 1/2 − w₂`.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::check_alpha;
use crate::error::{Error, Result};
use crate::math::{chi2_1_sf, chi2_2_sf, sqrt};
use crate::rng::Stream;

pub const BUCKET_WIDTH: f64 = 0.001;
pub const DEFAULT_DRAWS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 0x5eed_c41b_a125_0001;

const BUCKETS: i32 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiBarWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

fn check_rho(rho: f64) -> Result<f64> {
    // Allow rounding overshoot from correlations computed in floating point.
    if rho.is_nan() || rho.abs() > 1.0 + 1e-9 {
        return Err(Error::InvalidRho(rho));
    }
    Ok(rho.clamp(-1.0, 1.0))
}

impl ChiBarWeights {
    fn from_w2(w2: f64) -> Self {
        ChiBarWeights {
            w0: 0.5 - w2,
            w1: 0.5,
            w2,
        }
    }

    /// Closed-form weights, `w₂ = arccos(ρ)/(2π)`. Used to check the
    /// Monte-Carlo table.
    pub fn exact(rho: f64) -> Result<Self> {
        let rho = check_rho(rho)?;
        Ok(Self::from_w2(libm::acos(rho) / (2.0 * core::f64::consts::PI)))
    }

    /// Monte-Carlo weights from `draws` bivariate normal vectors.
    pub fn monte_carlo(rho: f64, draws: u64, seed: u64, stream: u64) -> Result<Self> {
        let rho = check_rho(rho)?;
        if draws == 0 {
            return Err(Error::InvalidArgument("draws must be positive".into()));
        }
        // With Z₁ = X₁ and Z₂ = ρX₁ + sX₂ (s = √(1−ρ²)), the interior event
        // Σ⁻¹Z ≥ 0 reads X₂ ≥ 0 and sX₁ ≥ ρX₂.
        let s = sqrt((1.0 - rho * rho).max(0.0));
        let mut rng = Stream::new(seed, stream, 0);
        let mut hits = 0u64;
        for _ in 0..draws {
            let x1 = rng.normal();
            let x2 = rng.normal();
            if x2 >= 0.0 && s * x1 >= rho * x2 {
                hits += 1;
            }
        }
        Ok(Self::from_w2(hits as f64 / draws as f64))
    }

    /// `P(χ̄² ≥ c)`.
    pub fn tail(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 1.0 - self.w0;
        }
        self.w1 * chi2_1_sf(c) + self.w2 * chi2_2_sf(c)
    }

    /// The `1 − α` quantile, by bisection on the mixture tail.
    pub fn critical(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mut hi = 16.0;
        while self.tail(hi) >= alpha {
            hi *= 2.0;
        }
        Ok(crate::math::bisect_decreasing(
            |c| self.tail(c) - alpha,
            0.0,
            hi,
            1e-12,
        ))
    }
}

/// Cache of Monte-Carlo weights keyed by ρ bucket.
#[derive(Debug, Clone)]
pub struct ChiBarTable {
    draws: u64,
    seed: u64,
    w2: BTreeMap<i32, f64>,
}

impl Default for ChiBarTable {
    fn default() -> Self {
        Self::new()
    }
}

impl ChiBarTable {
    pub fn new() -> Self {
        Self::with_draws(DEFAULT_DRAWS, DEFAULT_SEED)
    }

    pub fn with_draws(draws: u64, seed: u64) -> Self {
        ChiBarTable {
            draws,
            seed,
            w2: BTreeMap::new(),
        }
    }

    /// Bucket index of ρ and the bucket's representative ρ.
    pub fn bucket(rho: f64) -> (i32, f64) {
        let k = libm::round((rho + 1.0) / BUCKET_WIDTH) as i32;
        let k = k.clamp(0, BUCKETS);
        (k, -1.0 + f64::from(k) * BUCKET_WIDTH)
    }

    pub fn weights(&mut self, rho: f64) -> Result<ChiBarWeights> {
        let rho = check_rho(rho)?;
        let (k, center) = Self::bucket(rho);
        if let Some(&w2) = self.w2.get(&k) {
            return Ok(ChiBarWeights::from_w2(w2));
        }
        let w = ChiBarWeights::monte_carlo(center, self.draws, self.seed, k as u64)?;
        self.w2.insert(k, w.w2);
        Ok(w)
    }

    pub fn critical(&mut self, rho: f64, alpha: f64) -> Result<f64> {
        self.weights(rho)?.critical(alpha)
    }

    pub fn cached_buckets(&self) -> usize {
        self.w2.len()
    }
}

#[cfg(feature = "std")]
fn global() -> &'static std::sync::Mutex<ChiBarTable> {
    static TABLE: std::sync::OnceLock<std::sync::Mutex<ChiBarTable>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| std::sync::Mutex::new(ChiBarTable::new()))
}

/// Weights from the process-wide table (a fresh table without `std`).
pub fn chi_bar_weights(rho: f64) -> Result<ChiBarWeights> {
    #[cfg(feature = "std")]
    {
        let mut table = global().lock().unwrap_or_else(|e| e.into_inner());
        table.weights(rho)
    }
    #[cfg(not(feature = "std"))]
    {
        ChiBarTable::new().weights(rho)
    }
}

/// `1 − α` quantile of the chi-bar-square law with correlation ρ.
pub fn chi_bar_critical(rho: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    chi_bar_weights(rho)?.critical(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::norm_quantile;
    use approx::assert_abs_diff_eq;

    #[test]
    fn independent_components() {
        let w = ChiBarWeights::exact(0.0).unwrap();
        assert_abs_diff_eq!(w.w0, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w2, 0.25, epsilon = 1e-15);
        let c = w.critical(0.05).unwrap();
        assert_abs_diff_eq!(0.5 * chi2_1_sf(c) + 0.25 * chi2_2_sf(c), 0.05, epsilon = 1e-12);
        let mc = ChiBarTable::with_draws(200_000, 3).critical(0.0, 0.05).unwrap();
        assert!((mc - c).abs() < 0.05);
    }

    #[test]
    fn perfectly_correlated_is_one_sided_normal() {
        let z = norm_quantile(0.95);
        let c = chi_bar_critical(1.0, 0.05).unwrap();
        assert_abs_diff_eq!(c, z * z, epsilon = 1e-10);
    }

    #[test]
    fn critical_dominates_the_normal_square() {
        let mut table = ChiBarTable::with_draws(50_000, 1);
        let z = norm_quantile(0.95);
        for rho in [-0.99, -0.5, 0.0, 0.3, 0.9, 0.999] {
            assert!(table.critical(rho, 0.05).unwrap() >= z * z - 1e-12);
        }
    }

    #[test]
    fn monte_carlo_matches_arccos() {
        for rho in [-0.8, 0.0, 0.6] {
            let mc = ChiBarWeights::monte_carlo(rho, 400_000, 9, 0).unwrap();
            let exact = ChiBarWeights::exact(rho).unwrap();
            assert!((mc.w2 - exact.w2).abs() < 4.0 * (0.25f64 / 400_000.0).sqrt());
        }
    }

    #[test]
    fn buckets_are_cached_and_deterministic() {
        let mut a = ChiBarTable::with_draws(10_000, 5);
        let mut b = ChiBarTable::with_draws(10_000, 5);
        let wa = a.weights(0.4123).unwrap();
        assert_eq!(wa, a.weights(0.4118).unwrap());
        assert_eq!(a.cached_buckets(), 1);
        assert_eq!(wa, b.weights(0.412).unwrap());
    }

    #[test]
    fn rho_outside_the_unit_interval_is_rejected() {
        assert_eq!(chi_bar_critical(1.5, 0.05), Err(Error::InvalidRho(1.5)));
    }
}

//! Scalar numerics usable without `std`.
//!
//! Elementary functions go through `libm`; distribution functions needed by
//! the analyses (normal, chi-square with 1 and 2 degrees of freedom, t with
//! 3 degrees of freedom) are implemented here.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 − Φ(x)`, accurate far into the right tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-ln(r));
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// `P(χ²₁ ≥ c)`.
pub fn chi2_1_sf(c: f64) -> f64 {
    if c <= 0.0 {
        1.0
    } else {
        libm::erfc(sqrt(0.5 * c))
    }
}

/// `P(χ²₂ ≥ c)`.
pub fn chi2_2_sf(c: f64) -> f64 {
    if c <= 0.0 {
        1.0
    } else {
        exp(-0.5 * c)
    }
}

/// CDF of Student's t with 3 degrees of freedom.
pub fn t3_cdf(t: f64) -> f64 {
    let theta = libm::atan(t / SQRT_3);
    0.5 + (theta + libm::sin(theta) * libm::cos(theta)) / PI
}

/// Quantile of Student's t with 3 degrees of freedom.
///
/// With `t = √3·cot δ` the upper tail is `(δ − sin(2δ)/2)/π`, so the quantile
/// reduces to a monotone scalar equation in `δ ∈ (0, π/2)`, solved by
/// safeguarded Newton steps.
pub fn t3_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let (tail, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    let target = PI * tail;
    // h(δ) = δ − sin(2δ)/2, increasing from 0 to π/2.
    let h = |d: f64| {
        if d < 0.05 {
            let d2 = d * d;
            // (2/3)d³ − (2/15)d⁵ + (4/315)d⁷ − (2/2835)d⁹
            d2 * d
                * (2.0 / 3.0 + d2 * (-2.0 / 15.0 + d2 * (4.0 / 315.0 - d2 * (2.0 / 2835.0))))
        } else {
            d - 0.5 * libm::sin(2.0 * d)
        }
    };
    let (mut lo, mut hi) = (0.0, 0.5 * PI);
    let mut d = libm::cbrt(1.5 * target).min(0.5 * PI);
    for _ in 0..100 {
        let f = h(d) - target;
        if f > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let s = libm::sin(d);
        let slope = 2.0 * s * s;
        let mut next = d - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - d).abs() <= 1e-16 * d.max(1e-300) {
            d = next;
            break;
        }
        d = next;
    }
    sign * SQRT_3 / libm::tan(d)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Combine two partial sums, e.g. from different shards.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl core::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Mean and standard error of the mean (sample sd / √n) in one pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct MeanSe {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanSe {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn se(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        sqrt(self.m2 / (self.n - 1) as f64 / self.n as f64)
    }
}

/// Bisection for a decreasing function on `[lo, hi]` with `f(lo) > 0 ≥ f(hi)`.
pub(crate) fn bisect_decreasing<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    for _ in 0..2000 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from scipy.stats (norm.ppf, t.ppf(df=3), chi2.sf).
    #[test]
    fn normal_quantile_reference_values() {
        let cases = [
            (0.5, 0.0),
            (0.95, 1.644_853_626_951_472_2),
            (0.975, 1.959_963_984_540_054),
            (0.999, 3.090_232_306_167_813_5),
            (1e-10, -6.361_340_902_404_056),
            (0.3, -0.524_400_512_708_041_2),
        ];
        for (p, x) in cases {
            assert_relative_eq!(norm_quantile(p), x, max_relative = 1e-14, epsilon = 1e-15);
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for k in 1..1000 {
            let p = k as f64 / 1000.0;
            assert_relative_eq!(norm_cdf(norm_quantile(p)), p, max_relative = 1e-13);
        }
    }

    #[test]
    fn t3_quantile_reference_values() {
        let cases = [
            (0.95, 2.353_363_434_801_826_4),
            (0.975, 3.182_446_305_284_263),
            (0.6, 0.276_670_662_332_689_83),
            (0.001, -10.214_531_852_405_337),
            (1e-9, -1_033.109_674_504_174_3),
        ];
        for (p, t) in cases {
            assert_relative_eq!(t3_quantile(p), t, max_relative = 1e-10);
        }
    }

    #[test]
    fn t3_quantile_inverts_cdf() {
        for k in 1..200 {
            let p = k as f64 / 200.0;
            assert_relative_eq!(t3_cdf(t3_quantile(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn chi_square_tails() {
        assert_relative_eq!(chi2_1_sf(3.841_458_820_694_124), 0.05, max_relative = 1e-12);
        assert_relative_eq!(chi2_2_sf(5.991_464_547_107_979), 0.05, max_relative = 1e-12);
        assert_eq!(chi2_1_sf(0.0), 1.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = alloc::vec![1e16, 1.0, -1e16];
        xs.extend(core::iter::repeat(1e-3).take(1000));
        assert_relative_eq!(csum(xs), 2.0, max_relative = 1e-12);
    }
}

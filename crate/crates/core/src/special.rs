//! Standard normal helpers and thin wrappers over the incomplete gamma
//! functions.
//!
//! Φ uses the musl `erfc` port from `libm` (about 1 ulp). The normal quantile is Wichura's AS241 (PPND16), accurate to about
//! 1e-16 relative over the whole open unit interval. Upper-tail variants
//! take the tail probability directly so that quantiles such as
//! `Φ⁻¹(1 − 1e-9)` keep full relative precision.

use std::f64::consts::SQRT_2;

use statrs::function::gamma;

/// Standard normal distribution function Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function 1 − Φ(x), accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ⁻¹(p) for p in (0, 1). Returns ±∞ at the endpoints and NaN outside.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * central(r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let z = tail_quantile(tail);
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Φ⁻¹(1 − tail), computed from the tail probability without forming `1 − tail`.
pub fn normal_quantile_upper(tail: f64) -> f64 {
    if tail.is_nan() || !(0.0..=1.0).contains(&tail) {
        return f64::NAN;
    }
    if tail < 0.075 {
        // 0.5 - 0.425
        if tail == 0.0 {
            return f64::INFINITY;
        }
        tail_quantile(tail)
    } else {
        -normal_quantile(tail)
    }
}

// Returns the positive quantile z with 1 − Φ(z) = tail, for tail < 0.075.
// The AS241 coefficients are kept exactly as published.
#[allow(clippy::excessive_precision)]
fn tail_quantile(tail: f64) -> f64 {
    let mut r = (-tail.ln()).sqrt();
    if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    }
}

fn central(r: f64) -> f64 {
    let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
        + 6.726_577_092_700_87e4)
        * r
        + 4.592_195_393_154_987e4)
        * r
        + 1.373_169_376_550_946e4)
        * r
        + 1.971_590_950_306_551_3e3)
        * r
        + 1.331_416_678_917_843_8e2)
        * r
        + 3.387_132_872_796_366_5;
    let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
        + 3.930_789_580_009_271e4)
        * r
        + 2.121_379_430_158_659_7e4)
        * r
        + 5.394_196_021_424_751e3)
        * r
        + 6.871_870_074_920_579e2)
        * r
        + 4.231_333_070_160_091e1)
        * r
        + 1.0;
    num / den
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma::gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma::gamma_ur(a, x)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bisection on the erfc-based cdf: independent of the rational approximation.
    fn quantile_by_bisection(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn upper_by_bisection(tail: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_sf(mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        for &p in &[1e-300, 1e-20, 1e-9, 1e-4, 0.01, 0.074, 0.076, 0.2, 0.5, 0.7, 0.925, 0.99, 0.9999] {
            let z = normal_quantile(p);
            let oracle = quantile_by_bisection(p);
            assert!(
                (z - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "p={p}: {z} vs {oracle}"
            );
        }
    }

    #[test]
    fn upper_quantile_keeps_tail_precision() {
        for &t in &[1e-12, 1e-9, 1e-6, 1e-4, 0.05, 0.3, 0.9] {
            let z = normal_quantile_upper(t);
            let oracle = upper_by_bisection(t);
            assert!((z - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn known_quantile_0_9999() {
        // Φ⁻¹(0.9999) = 3.719016485455709 (bisection oracle above agrees)
        let z = normal_quantile(0.9999);
        assert!((z - quantile_by_bisection(0.9999)).abs() < 1e-12);
        assert!((z - 3.719_016_485_455_709).abs() < 1e-12);
    }

    #[test]
    fn endpoints() {
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn incomplete_gamma_edges() {
        assert_eq!(gamma_p(2.0, 0.0), 0.0);
        assert_eq!(gamma_q(2.0, 0.0), 1.0);
        assert!((gamma_p(1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }
}

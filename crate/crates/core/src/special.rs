//! Real special functions: gamma (with reflection to negative arguments),
//! log-gamma, beta, and the standard normal distribution.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Lanczos series A(x) for the shifted argument x - 1.
fn lanczos_sum(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    acc
}

/// sin(pi x) with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    // reduce to [-1/2, 1/2] using sin(pi - t) = sin(t) and 2-periodicity
    let arg = if r < 0.5 {
        r
    } else if r < 1.5 {
        1.0 - r
    } else {
        r - 2.0
    };
    (PI * arg).sin()
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Gamma function for real x outside the non-positive integers.
///
/// Positive arguments (x >= 1/2) use a fixed-coefficient Lanczos series
/// (g = 7, 9 terms); smaller arguments go through the reflection formula
/// Γ(x)Γ(1−x) = π / sin(πx).
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return domain("gamma of NaN");
    }
    if is_pole(x) {
        return Err(Error::Pole(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x == x.floor() && (1.0..=171.0).contains(&x) {
        // (x-1)! by direct product, exact through 22!
        return (2..x as u32).fold(1.0, |acc, k| acc * k as f64);
    }
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma_unchecked(1.0 - x));
    }
    let t = x + LANCZOS_G - 0.5;
    // split the power so that t^(x-1/2) does not overflow before e^-t is applied
    let half = t.powf(0.5 * (x - 0.5));
    SQRT_2PI * half * (half * (-t).exp()) * lanczos_sum(x)
}

/// Natural log of Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("ln_gamma requires x > 0, got {x}"));
    }
    Ok(ln_gamma_pos(x))
}

fn ln_gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the series in its accurate range
        return (PI / (PI * x).sin()).ln() - ln_gamma_pos(1.0 - x);
    }
    let t = x + LANCZOS_G - 0.5;
    LN_SQRT_2PI + (x - 0.5) * t.ln() - t + lanczos_sum(x).ln()
}

/// Beta function B(x, y) = Γ(x)Γ(y)/Γ(x+y), evaluated through log-gamma.
pub fn beta(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0) || !(y > 0.0) {
        return domain(format!("beta requires x > 0 and y > 0, got ({x}, {y})"));
    }
    Ok((ln_gamma_pos(x) + ln_gamma_pos(y) - ln_gamma_pos(x + y)).exp())
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function 1 − Φ(x), accurate deep in the right tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

// Rational approximation of P. J. Acklam (relative error < 1.2e-9), refined below.
const ACK_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACK_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACK_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACK_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACK_P_LOW: f64 = 0.024_25;

fn acklam_lower(p: f64) -> f64 {
    if p < ACK_P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((ACK_C[0] * q + ACK_C[1]) * q + ACK_C[2]) * q + ACK_C[3]) * q + ACK_C[4]) * q
            + ACK_C[5])
            / ((((ACK_D[0] * q + ACK_D[1]) * q + ACK_D[2]) * q + ACK_D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((ACK_A[0] * r + ACK_A[1]) * r + ACK_A[2]) * r + ACK_A[3]) * r + ACK_A[4]) * r
            + ACK_A[5])
            * q
            / (((((ACK_B[0] * r + ACK_B[1]) * r + ACK_B[2]) * r + ACK_B[3]) * r + ACK_B[4]) * r
                + 1.0)
    }
}

/// Inverse for p <= 1/2, where p itself carries full relative precision.
fn inv_lower(p: f64) -> f64 {
    let mut x = acklam_lower(p);
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-17 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Standard normal quantile Φ⁻¹(p) for 0 < p < 1.
pub fn normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal_inv_cdf requires 0 < p < 1, got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    Ok(if p < 0.5 {
        inv_lower(p)
    } else {
        -inv_lower(1.0 - p)
    })
}

/// The z with 1 − Φ(z) = q, keeping full precision for tiny q.
pub fn normal_inv_sf(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("normal_inv_sf requires 0 < q < 1, got {q}"));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    Ok(if q < 0.5 {
        -inv_lower(q)
    } else {
        inv_lower(1.0 - q)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_known_values() {
        assert_eq!(gamma(1.0).unwrap(), 1.0);
        assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) < 1e-13);
        assert!(rel(gamma(5.0).unwrap(), 24.0) < 1e-13);
        // 50-digit oracle values
        assert!(rel(gamma(-0.6).unwrap(), -3.696_932_572_929_480_3) < 1e-12);
        assert!(rel(gamma(-2.5).unwrap(), -0.945_308_720_482_941_88) < 1e-12);
        assert!(rel(gamma(25.3).unwrap(), 1.622_777_117_670_872_9e24) < 1e-12);
        assert!(rel(gamma(-0.6).unwrap(), gamma(0.4).unwrap() / -0.6) < 1e-13);
    }

    #[test]
    fn gamma_rejects_poles() {
        for x in [0.0, -1.0, -2.0, -17.0] {
            assert_eq!(gamma(x), Err(Error::Pole(x)));
        }
        assert!(gamma(-1.5).is_ok());
    }

    #[test]
    fn gamma_recurrence() {
        let mut x = 0.1;
        while x < 20.0 {
            let r = gamma(x + 1.0).unwrap() / (x * gamma(x).unwrap());
            assert!((r - 1.0).abs() <= 1e-12, "x = {x}, ratio {r}");
            x += 0.173;
        }
    }

    #[test]
    fn beta_values() {
        assert!((beta(1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(rel(beta(0.5, 0.5).unwrap(), PI) < 1e-14);
        let oracle = integrate(|t| t.powf(6.5) * (1.0 - t).powi(4), 0.0, 1.0, 1e-13).unwrap();
        assert!(rel(oracle, 3.281_861_943_862_213e-4) < 1e-11);
        assert!(rel(beta(7.5, 5.0).unwrap(), oracle) < 1e-12);
        assert_eq!(beta(7.5, 5.0).unwrap(), beta(5.0, 7.5).unwrap());
        assert!(beta(0.0, 1.0).is_err());
        assert!(beta(1.0, -2.0).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        let oracle = 0.5 + integrate(normal_pdf, 0.0, 1.959_963_985, 1e-14).unwrap();
        assert!((oracle - 0.975).abs() < 1e-9);
        assert!((normal_cdf(1.959_963_985) - oracle).abs() < 1e-15);
        for x in [0.1, 0.7, 1.3, 2.9, 5.0, 8.2] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
            assert!((normal_sf(x) - normal_cdf(-x)).abs() <= f64::EPSILON * normal_sf(x));
        }
    }

    #[test]
    fn normal_inverse_values() {
        assert_eq!(normal_inv_cdf(0.5).unwrap(), 0.0);
        let x = normal_inv_cdf(normal_cdf(2.7)).unwrap();
        assert!((x - 2.7).abs() < 1e-12);

        // bisection oracle on normal_cdf
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.999 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((normal_inv_cdf(0.999).unwrap() - lo).abs() < 1e-13);
        assert!((lo - 3.090_232_306_167_813_5).abs() < 1e-13);

        assert!(normal_inv_cdf(0.0).is_err());
        assert!(normal_inv_cdf(1.0).is_err());
        assert!(normal_inv_sf(f64::NAN).is_err());
    }

    #[test]
    fn normal_inverse_deep_tails() {
        for q in [1e-5, 1e-10, 1e-20, 1e-100, 1e-300] {
            let z = normal_inv_sf(q).unwrap();
            assert!(rel(normal_sf(z), q) < 1e-13, "q = {q}");
            assert_eq!(normal_inv_cdf(q).unwrap(), -z);
        }
    }

    #[test]
    fn sin_pi_exact_zeros() {
        for k in -6..=6 {
            assert_eq!(sin_pi(k as f64), 0.0);
        }
        assert!((sin_pi(0.5) - 1.0).abs() < 1e-16);
        assert!((sin_pi(-0.5) + 1.0).abs() < 1e-16);
        assert!((sin_pi(2.25) - (PI * 0.25).sin()).abs() < 1e-15);
    }
}

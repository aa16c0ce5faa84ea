//! Catalog of positive heavy-tailed loss models.
//!
//! Every model is described through its quantile function; the tail
//! quantile function is `U(t) = F^←(1 − 1/t)` for `t > 1`.
//!
//! | kind     | parameters         | U(t)                                     |
//! |----------|--------------------|------------------------------------------|
//! | `pareto` | ξ                  | t^ξ                                      |
//! | `burr`   | τ, κ               | (t^{1/κ} − 1)^{1/τ}                      |
//! | `gandh`  | a, b, g, h         | a + b (e^{gz} − 1)/g · e^{hz²/2}, z = Φ⁻¹(1 − 1/t) |
//! | `hall`   | c, d, ξ, ρ         | c t^ξ (1 + d t^ρ)                        |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature;
use crate::special::{normal_inv_cdf, normal_inv_sf, normal_pdf, normal_sf};

/// Relative tolerance used by the numerical truncated-mean integrals.
pub const MOMENT_REL_TOL: f64 = 1e-10;

/// Lower end of the standard normal generator range; Φ(−38.5) is below 1e-320.
const Z_FLOOR: f64 = -38.5;
const Z_CEIL: f64 = 38.5;

const HALL_CHECK_POINTS: usize = 1000;
const HALL_CHECK_T_MAX: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum LossModel {
    /// Standard Pareto on [1, ∞) with F̄(x) = x^{−1/ξ}.
    #[serde(rename = "pareto")]
    Pareto { xi: f64 },
    /// Burr with F̄(x) = (1 + x^τ)^{−κ} on [0, ∞).
    #[serde(rename = "burr")]
    Burr { tau: f64, kappa: f64 },
    /// Tukey g-and-h transform of a standard normal variate.
    #[serde(rename = "gandh")]
    GandH { a: f64, b: f64, g: f64, h: f64 },
    /// Exact Hall-form quantile U(t) = c t^ξ (1 + d t^ρ), t ≥ 1.
    #[serde(rename = "hall")]
    ExactHall { c: f64, d: f64, xi: f64, rho: f64 },
}

/// First- and second-order tail parameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderInfo {
    pub xi: f64,
    /// `f64::NEG_INFINITY` for the exact Pareto.
    pub rho: f64,
    pub hall_c: Option<f64>,
    pub hall_d: Option<f64>,
    pub mean_finite: bool,
}

impl SecondOrderInfo {
    pub fn is_hall(&self) -> bool {
        self.hall_c.is_some()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must satisfy {name} > 0, got {v}"))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite, got {v}"))
    }
}

fn check_probability(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        domain(format!("probability must lie in (0, 1), got {alpha}"))
    }
}

/// ∫_1^T s^{m−1} ds, with T = ∞ allowed.
fn power_integral(m: f64, t: f64) -> f64 {
    if t.is_infinite() {
        return if m < 0.0 { -1.0 / m } else { f64::INFINITY };
    }
    let lt = t.ln();
    if m == 0.0 {
        lt
    } else {
        (m * lt).exp_m1() / m
    }
}

impl LossModel {
    pub fn pareto(xi: f64) -> Result<Self> {
        let m = LossModel::Pareto { xi };
        m.validate()?;
        Ok(m)
    }

    pub fn burr(tau: f64, kappa: f64) -> Result<Self> {
        let m = LossModel::Burr { tau, kappa };
        m.validate()?;
        Ok(m)
    }

    pub fn gandh(a: f64, b: f64, g: f64, h: f64) -> Result<Self> {
        let m = LossModel::GandH { a, b, g, h };
        m.validate()?;
        Ok(m)
    }

    pub fn hall(c: f64, d: f64, xi: f64, rho: f64) -> Result<Self> {
        let m = LossModel::ExactHall { c, d, xi, rho };
        m.validate()?;
        Ok(m)
    }

    /// Check every parameter constraint; the error names the violated one.
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossModel::Pareto { xi } => positive("xi", xi),
            LossModel::Burr { tau, kappa } => {
                positive("tau", tau)?;
                positive("kappa", kappa)
            }
            LossModel::GandH { a, b, g, h } => {
                finite("a", a)?;
                positive("b", b)?;
                positive("g", g)?;
                positive("h", h)
            }
            LossModel::ExactHall { c, d, xi, rho } => {
                positive("c", c)?;
                finite("d", d)?;
                if d == 0.0 {
                    return domain("d must satisfy d != 0");
                }
                positive("xi", xi)?;
                if !(rho.is_finite() && rho < 0.0) {
                    return domain(format!("rho must satisfy rho < 0, got {rho}"));
                }
                self.check_hall_quantile()
            }
        }
    }

    // U must be a valid quantile: positive and strictly increasing on t >= 1.
    fn check_hall_quantile(&self) -> Result<()> {
        let step = HALL_CHECK_T_MAX.ln() / (HALL_CHECK_POINTS - 1) as f64;
        for i in 0..HALL_CHECK_POINTS {
            let t = (step * i as f64).exp();
            let u = self.hall_u(t);
            let du = self.hall_du(t);
            if !(u > 0.0) || !(du > 0.0) {
                return domain(format!(
                    "hall quantile c t^xi (1 + d t^rho) must be positive and strictly increasing on t >= 1 (fails at t = {t:.6e})"
                ));
            }
        }
        Ok(())
    }

    fn hall_u(&self, t: f64) -> f64 {
        match *self {
            LossModel::ExactHall { c, d, xi, rho } => c * t.powf(xi) * (1.0 + d * t.powf(rho)),
            _ => unreachable!(),
        }
    }

    fn hall_du(&self, t: f64) -> f64 {
        match *self {
            LossModel::ExactHall { c, d, xi, rho } => {
                c * t.powf(xi - 1.0) * (xi + d * (xi + rho) * t.powf(rho))
            }
            _ => unreachable!(),
        }
    }

    fn gandh_q(&self, z: f64) -> f64 {
        match *self {
            LossModel::GandH { a, b, g, h } => a + b * (g * z).exp_m1() / g * (0.5 * h * z * z).exp(),
            _ => unreachable!(),
        }
    }

    fn gandh_dq(&self, z: f64) -> f64 {
        match *self {
            LossModel::GandH { b, g, h, .. } => {
                b * (0.5 * h * z * z).exp() * ((g * z).exp() + h * z * (g * z).exp_m1() / g)
            }
            _ => unreachable!(),
        }
    }

    /// Generator value z with Q(z) = x for the g-and-h transform.
    fn gandh_z(&self, x: f64) -> f64 {
        let (mut lo, mut hi) = (Z_FLOOR, Z_CEIL);
        if self.gandh_q(lo) >= x {
            return lo;
        }
        if self.gandh_q(hi) <= x {
            return hi;
        }
        // bisection until the bracket is narrow, then safeguarded Newton
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if self.gandh_q(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..100 {
            let q = self.gandh_q(z) - x;
            if q == 0.0 {
                return z;
            }
            if q < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let newton = z - q / self.gandh_dq(z);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - z).abs() <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
                return next;
            }
            z = next;
        }
        z
    }

    /// t >= 1 with U(t) = x for the exact Hall model (x above the support minimum).
    fn hall_t(&self, x: f64) -> f64 {
        // Newton in s = ln t: d/ds ln U = t U'(t)/U(t) > 0
        let target = x.ln();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while self.hall_u(hi.exp()).ln() < target {
            lo = hi;
            hi *= 2.0;
            if hi > 700.0 {
                return f64::INFINITY;
            }
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let t = s.exp();
            let u = self.hall_u(t);
            let f = u.ln() - target;
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - f / (t * self.hall_du(t) / u);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
                return next.exp();
            }
            s = next;
        }
        s.exp()
    }

    /// Tail index ξ.
    pub fn xi(&self) -> f64 {
        match *self {
            LossModel::Pareto { xi } | LossModel::ExactHall { xi, .. } => xi,
            LossModel::Burr { tau, kappa } => 1.0 / (tau * kappa),
            LossModel::GandH { h, .. } => h,
        }
    }

    /// Smallest point of the support (−∞ for g-and-h).
    pub fn support_min(&self) -> f64 {
        match *self {
            LossModel::Pareto { .. } => 1.0,
            LossModel::Burr { .. } => 0.0,
            LossModel::GandH { .. } => f64::NEG_INFINITY,
            LossModel::ExactHall { c, d, .. } => c * (1.0 + d),
        }
    }

    /// F^←(α) for 0 < α < 1.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_probability(alpha)?;
        Ok(match *self {
            LossModel::Pareto { xi } => (-xi * (-alpha).ln_1p()).exp(),
            LossModel::Burr { tau, kappa } => (-(-alpha).ln_1p() / kappa).exp_m1().powf(1.0 / tau),
            LossModel::GandH { .. } => self.gandh_q(normal_inv_cdf(alpha)?),
            LossModel::ExactHall { .. } => self.hall_u(1.0 / (1.0 - alpha)),
        })
    }

    /// F^←(1 − p) computed from the tail probability p, exact for tiny p.
    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(match *self {
            LossModel::Pareto { xi } => p.powf(-xi),
            LossModel::Burr { tau, kappa } => (-p.ln() / kappa).exp_m1().powf(1.0 / tau),
            LossModel::GandH { .. } => self.gandh_q(normal_inv_sf(p)?),
            LossModel::ExactHall { .. } => self.hall_u(1.0 / p),
        })
    }

    /// Tail quantile function U(t) = F^←(1 − 1/t), t > 1.
    pub fn tail_quantile_fn(&self, t: f64) -> Result<f64> {
        if !(t > 1.0) {
            return domain(format!("U(t) requires t > 1, got {t}"));
        }
        self.tail_quantile(1.0 / t)
    }

    /// Slowly varying part L_U(t) = U(t)/t^ξ.
    pub fn slowly_varying(&self, t: f64) -> Result<f64> {
        Ok(self.tail_quantile_fn(t)? / t.powf(self.xi()))
    }

    /// F̄(x), defined for every real x (1 below the support).
    pub(crate) fn survival(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.support_min() {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        match *self {
            LossModel::Pareto { xi } => x.powf(-1.0 / xi),
            LossModel::Burr { tau, kappa } => (-kappa * x.powf(tau).ln_1p()).exp(),
            LossModel::GandH { .. } => normal_sf(self.gandh_z(x)),
            LossModel::ExactHall { .. } => 1.0 / self.hall_t(x),
        }
    }

    /// Tail function F̄(x) = 1 − F(x).
    pub fn tail(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < self.support_min() {
            return domain(format!(
                "x = {x} lies below the support minimum {}",
                self.support_min()
            ));
        }
        Ok(self.survival(x))
    }

    /// Distribution function F(x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.tail(x)?)
    }

    /// Density f(x) on the support.
    pub fn density(&self, x: f64) -> Result<f64> {
        let lo = self.support_min();
        let outside = match self {
            LossModel::Burr { .. } => x < lo,
            _ => x <= lo,
        };
        if x.is_nan() || outside || x == f64::INFINITY {
            return domain(format!("density is defined on the support interior, got x = {x}"));
        }
        Ok(match *self {
            LossModel::Pareto { xi } => x.powf(-1.0 / xi - 1.0) / xi,
            LossModel::Burr { tau, kappa } => {
                kappa * tau * x.powf(tau - 1.0) * (-(kappa + 1.0) * x.powf(tau).ln_1p()).exp()
            }
            LossModel::GandH { .. } => {
                let z = self.gandh_z(x);
                normal_pdf(z) / self.gandh_dq(z)
            }
            LossModel::ExactHall { .. } => {
                let t = self.hall_t(x);
                1.0 / (t * t * self.hall_du(t))
            }
        })
    }

    /// ∫ g(F^←(u)) du over u ∈ (0, 1 − p), i.e. E[g(X); X ≤ F^←(1 − p)].
    ///
    /// The head (u ≤ 1/2) is integrated in u, the tail in w = ln(1 − u) so
    /// that heavy tails stay resolved; g-and-h integrates over its normal
    /// generator instead.
    pub(crate) fn integrate_quantile<G: Fn(f64) -> f64>(
        &self,
        p: f64,
        rel_tol: f64,
        g: G,
    ) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return domain(format!("upper tail mass must lie in (0, 1], got {p}"));
        }
        if p == 1.0 {
            return Ok(0.0);
        }
        if let LossModel::GandH { .. } = self {
            let z_hi = normal_inv_sf(p)?.min(Z_CEIL);
            let breaks = [-8.0, -3.0, 0.0, 3.0, 8.0];
            let mut pts = vec![Z_FLOOR];
            pts.extend(breaks.iter().copied().filter(|&b| b < z_hi));
            pts.push(z_hi);
            let mut total = 0.0;
            for w in pts.windows(2) {
                total += quadrature::integrate(|z| g(self.gandh_q(z)) * normal_pdf(z), w[0], w[1], rel_tol)?;
            }
            return Ok(total);
        }
        let head_hi = (1.0 - p).min(0.5);
        let mut total = quadrature::integrate(
            |u| g(self.quantile(u).unwrap_or(f64::NAN)),
            0.0,
            head_hi,
            rel_tol,
        )?;
        if p < 0.5 {
            total += quadrature::integrate(
                |w| {
                    let v = w.exp();
                    g(self.tail_quantile(v).unwrap_or(f64::NAN)) * v
                },
                p.ln(),
                0.5f64.ln(),
                rel_tol,
            )?;
        }
        Ok(total)
    }

    /// Truncated mean μ_F(x) = ∫_0^x t dF(t); `x = f64::INFINITY` gives μ_F.
    ///
    /// Returns +∞ for the full mean when ξ ≥ 1.
    pub fn moments(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return domain("truncated mean at NaN");
        }
        if x <= self.support_min() {
            return Ok(0.0);
        }
        match *self {
            LossModel::Pareto { xi } => {
                let t = if x.is_infinite() { x } else { x.powf(1.0 / xi) };
                Ok(power_integral(xi - 1.0, t))
            }
            LossModel::ExactHall { c, d, xi, rho } => {
                let t = if x.is_infinite() { x } else { self.hall_t(x) };
                Ok(c * (power_integral(xi - 1.0, t) + d * power_integral(xi + rho - 1.0, t)))
            }
            LossModel::Burr { tau, kappa } => {
                if x.is_infinite() {
                    return if tau * kappa > 1.0 {
                        Ok(kappa * crate::special::beta(kappa - 1.0 / tau, 1.0 + 1.0 / tau)?)
                    } else {
                        Ok(f64::INFINITY)
                    };
                }
                let p = self.survival(x);
                if p == 0.0 {
                    return self.moments(f64::INFINITY);
                }
                self.integrate_quantile(p, MOMENT_REL_TOL, |q| q)
            }
            LossModel::GandH { a, b, g, h } => {
                if x.is_infinite() {
                    return if h < 1.0 {
                        let s = (1.0 - h).sqrt();
                        Ok(a + b / (g * s) * (0.5 * g * g / (1.0 - h)).exp_m1())
                    } else {
                        Ok(f64::INFINITY)
                    };
                }
                if h >= 1.0 {
                    return domain("g-and-h truncated mean diverges in the left tail for h >= 1");
                }
                let p = self.survival(x);
                if p == 0.0 {
                    return self.moments(f64::INFINITY);
                }
                self.integrate_quantile(p, MOMENT_REL_TOL, |q| q)
            }
        }
    }

    /// Auxiliary function a(t) = t U'(t)/U(t) − ξ from the analytic U′.
    pub fn auxiliary(&self, t: f64) -> Result<f64> {
        if !(t > 1.0) {
            return domain(format!("auxiliary function requires t > 1, got {t}"));
        }
        Ok(match *self {
            LossModel::Pareto { .. } => 0.0,
            LossModel::Burr { tau, kappa } => 1.0 / (tau * kappa) / (t.ln() / kappa).exp_m1(),
            LossModel::ExactHall { d, rho, .. } => {
                let s = d * t.powf(rho);
                rho * s / (1.0 + s)
            }
            LossModel::GandH { h, .. } => {
                let z = normal_inv_sf(1.0 / t)?;
                // 1/t = Φ̄(z) and dz/dt = 1/(t² φ(z))
                let mills = normal_sf(z) / normal_pdf(z);
                self.gandh_dq(z) * mills / self.gandh_q(z) - h
            }
        })
    }

    pub fn second_order_info(&self) -> SecondOrderInfo {
        let xi = self.xi();
        // every catalog model has an infinite mean exactly when xi >= 1
        let mean_finite = xi < 1.0;
        match *self {
            LossModel::Pareto { .. } => SecondOrderInfo {
                xi,
                rho: f64::NEG_INFINITY,
                hall_c: Some(1.0),
                hall_d: None,
                mean_finite,
            },
            LossModel::Burr { tau, kappa } => SecondOrderInfo {
                xi,
                rho: -1.0 / kappa,
                hall_c: Some(1.0),
                hall_d: Some(-1.0 / tau),
                mean_finite,
            },
            LossModel::GandH { .. } => SecondOrderInfo {
                xi,
                rho: 0.0,
                hall_c: None,
                hall_d: None,
                mean_finite,
            },
            LossModel::ExactHall { c, d, rho, .. } => SecondOrderInfo {
                xi,
                rho,
                hall_c: Some(c),
                hall_d: Some(d),
                mean_finite,
            },
        }
    }

    /// One draw from the model.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LossModel::GandH { .. } => {
                let z: f64 = rng.sample(StandardNormal);
                self.gandh_q(z)
            }
            _ => {
                // v in (0, 1] so the inverse transform never sees 0
                let v = 1.0 - rng.gen::<f64>();
                match *self {
                    LossModel::Pareto { xi } => v.powf(-xi),
                    LossModel::Burr { tau, kappa } => (-v.ln() / kappa).exp_m1().powf(1.0 / tau),
                    LossModel::ExactHall { .. } => self.hall_u(1.0 / v),
                    LossModel::GandH { .. } => unreachable!(),
                }
            }
        }
    }

    /// `count` iid draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return domain("sample count must be at least 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.draw(&mut rng)).collect())
    }

    /// Parse and validate a JSON model description such as
    /// `{"kind":"burr","tau":0.25,"kappa":8}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: LossModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }
}

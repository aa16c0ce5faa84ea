//! First- and second-order approximations of the risk concentration
//! C(α) = VaR_α(X_1 + ... + X_n) / (n VaR_α(X_1)).
//!
//! The second-order term is C2(α) = n^{ξ−1} + K_{ξ,ρ}(n) A(α), where the
//! pair (K, A) depends on which correction dominates:
//!
//! * fast convergence, ρ < −(1 ∧ ξ): the convolution correction b(F^←(α)),
//! * slow convergence, ρ > −(1 ∧ ξ): the auxiliary function a(1/(1−α)),
//! * boundary, ρ = −(1 ∧ ξ): both, weighted by q = lim b(F^←(α)) / a(1/(1−α)).

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::models::{LossModel, SecondOrderInfo};
use crate::special::{gamma, normal_inv_cdf};

/// Relative width of the band around ρ = −(1 ∧ ξ) treated as the boundary.
pub const BOUNDARY_EPS: f64 = 1e-12;

/// Level used to estimate the boundary constant q when none is supplied.
pub const Q_ESTIMATE_TAIL: f64 = 1e-8;

/// Grid resolution of the crossover scan (points, log-spaced in 1 − α).
const CROSSOVER_SCAN_POINTS: usize = 256;
const CROSSOVER_ALPHA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "tag")]
pub enum Regime {
    Fast,
    Slow,
    /// ρ = −(1 ∧ ξ); `q` is the limit of b(F^←(α))/a(1/(1−α)) when known.
    Boundary { q: Option<f64> },
    /// Fast regime with ξ = 2: c_ξ vanishes and no second-order term exists.
    Degenerate,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Fast => "fast",
            Regime::Slow => "slow",
            Regime::Boundary { .. } => "boundary",
            Regime::Degenerate => "degenerate",
        }
    }
}

/// Which representation of A(α) to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AForm {
    /// b(F^←(α)) in the fast regime, a(1/(1−α)) = tU′/U − ξ in the slow one.
    Theorem,
    /// Closed forms: the Hall-class expressions (Pareto with c = 1) and
    /// g/Φ⁻¹(α) for g-and-h.
    ClosedForm,
}

impl AForm {
    /// g-and-h uses its closed form g/Φ⁻¹(α); every other model the generic path.
    pub fn default_for(model: &LossModel) -> Self {
        match model {
            LossModel::GandH { .. } => AForm::ClosedForm,
            _ => AForm::Theorem,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxResult {
    pub c1: f64,
    pub c2: f64,
    /// K · A(α); exactly `c2 - c1`.
    pub correction: f64,
    pub regime: Regime,
    pub degenerate_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    FromAbove,
    FromBelow,
    ModelDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Approach {
    pub direction: Direction,
    /// lim_{α→1} C2′(α) where it is known (may be ±∞).
    pub derivative_limit: Option<f64>,
}

fn check_n(n: u32) -> Result<()> {
    if n >= 2 {
        Ok(())
    } else {
        domain(format!("number of summands must satisfy n >= 2, got {n}"))
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        domain(format!("xi must satisfy xi > 0, got {xi}"))
    }
}

/// Convolution constant c_ξ.
///
/// For ξ > 1 this evaluates (2 − ξ) Γ²(2 − 1/ξ) / Γ(3 − 2/ξ), an exact
/// rewrite of (1 − ξ) Γ²(1 − 1/ξ) / (2 Γ(1 − 2/ξ)) obtained with
/// Γ(z + 1) = z Γ(z). It is continuous at ξ = 1 and vanishes exactly at
/// ξ = 2, where the reflected form has a pole.
pub fn c_xi(xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if xi <= 1.0 {
        return Ok(1.0 / xi);
    }
    let g1 = gamma(2.0 - 1.0 / xi)?;
    Ok((2.0 - xi) * g1 * g1 / gamma(3.0 - 2.0 / xi)?)
}

/// c_ξ for ξ > 1 straight from (1 − ξ) Γ²(1 − 1/ξ) / (2 Γ(1 − 2/ξ)),
/// using the gamma function at negative arguments when 1 < ξ < 2.
///
/// Fails with a pole error at ξ = 2.
pub fn c_xi_reflected(xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if xi <= 1.0 {
        return domain(format!("the gamma form of c_xi needs xi > 1, got {xi}"));
    }
    let g1 = gamma(1.0 - 1.0 / xi)?;
    Ok((1.0 - xi) * g1 * g1 / (2.0 * gamma(1.0 - 2.0 / xi)?))
}

/// J_ξ(n) = n (n − 1) c_ξ.
pub fn j_const(xi: f64, n: u32) -> Result<f64> {
    check_n(n)?;
    let n = n as f64;
    Ok(n * (n - 1.0) * c_xi(xi)?)
}

/// Second-order subexponential rate b(x).
pub fn b_function(model: &LossModel, x: f64) -> Result<f64> {
    if !(x > 0.0) || x <= model.support_min() {
        return domain(format!("b(x) needs x > 0 inside the support, got {x}"));
    }
    let info = model.second_order_info();
    if info.xi < 1.0 || (info.xi == 1.0 && info.mean_finite) {
        Ok(model.moments(f64::INFINITY)? / x)
    } else if info.xi == 1.0 {
        Ok(model.moments(x)? / x)
    } else {
        Ok(model.tail(x)? / (info.xi - 1.0))
    }
}

/// H_{ξ,ρ}(s) = s^ξ (s^ρ − 1)/ρ, with s^ξ log s at ρ = 0 and 0 at ρ = −∞ (s ≥ 1).
pub fn h_kernel(xi: f64, rho: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return domain(format!("H kernel needs s > 0, got {s}"));
    }
    if rho > 0.0 || rho.is_nan() {
        return domain(format!("H kernel needs rho <= 0, got {rho}"));
    }
    let ls = s.ln();
    if rho == f64::NEG_INFINITY {
        return Ok(if s >= 1.0 { 0.0 } else { f64::INFINITY });
    }
    let factor = if rho == 0.0 { ls } else { (rho * ls).exp_m1() / rho };
    Ok(s.powf(xi) * factor)
}

/// Fast / slow / boundary classification of (ξ, ρ).
pub fn classify_regime(info: &SecondOrderInfo, q_hint: Option<f64>) -> Regime {
    let threshold = -(info.xi.min(1.0));
    if info.rho == f64::NEG_INFINITY || info.rho < threshold - BOUNDARY_EPS {
        if (info.xi - 2.0).abs() <= BOUNDARY_EPS {
            Regime::Degenerate
        } else {
            Regime::Fast
        }
    } else if info.rho > threshold + BOUNDARY_EPS {
        Regime::Slow
    } else {
        Regime::Boundary { q: q_hint }
    }
}

/// Coefficient K_{ξ,ρ}(n) off the boundary.
pub fn k_coefficient(xi: f64, rho: f64, n: u32) -> Result<f64> {
    check_xi(xi)?;
    check_n(n)?;
    let info = SecondOrderInfo {
        xi,
        rho,
        hall_c: None,
        hall_d: None,
        mean_finite: xi < 1.0,
    };
    let nf = n as f64;
    match classify_regime(&info, None) {
        Regime::Fast | Regime::Degenerate => {
            if xi <= 1.0 {
                Ok((nf - 1.0) / nf)
            } else {
                Ok(nf.powf(xi - 2.0) * (nf - 1.0) * xi * c_xi(xi)?)
            }
        }
        Regime::Slow => Ok(h_kernel(xi, rho, nf)? / nf),
        Regime::Boundary { .. } => Err(Error::Boundary { xi, rho }),
    }
}

/// Coefficient of a(1/(1−α)) on the boundary ρ = −(1 ∧ ξ).
pub fn boundary_coefficient(xi: f64, rho: f64, n: u32, q: f64) -> Result<f64> {
    check_n(n)?;
    let nf = n as f64;
    Ok(xi * nf.powf(xi - 2.0) * nf.powf(-xi.min(1.0)) * j_const(xi, n)? * q
        + h_kernel(xi, rho, nf)? / nf)
}

/// Numerical stand-in for q = lim b(F^←(α)) / a(1/(1−α)), evaluated at 1 − α = 1e-8.
pub fn estimate_q(model: &LossModel) -> Result<f64> {
    let x = model.tail_quantile(Q_ESTIMATE_TAIL)?;
    Ok(b_function(model, x)? / model.auxiliary(1.0 / Q_ESTIMATE_TAIL)?)
}

fn closed_form_a(model: &LossModel, info: &SecondOrderInfo, regime: Regime, alpha: f64) -> Option<Result<f64>> {
    let tail = 1.0 - alpha;
    if let LossModel::GandH { g, .. } = *model {
        return Some(normal_inv_cdf(alpha).map(|z| g / z));
    }
    let c = info.hall_c?;
    Some(match regime {
        Regime::Fast | Regime::Degenerate => {
            let xi = info.xi;
            if xi < 1.0 || (xi == 1.0 && info.mean_finite) {
                model.moments(f64::INFINITY).map(|mu| mu / c * tail.powf(xi))
            } else if xi == 1.0 {
                Ok(-tail * tail.ln())
            } else {
                Ok(tail / (xi - 1.0))
            }
        }
        Regime::Slow => {
            let d = info.hall_d?;
            Ok(d * info.rho * tail.powf(-info.rho))
        }
        Regime::Boundary { .. } => return None,
    })
}

/// A(α) for the model's (non-boundary) regime.
pub fn a_correction(model: &LossModel, alpha: f64, form: AForm) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let info = model.second_order_info();
    let regime = classify_regime(&info, None);
    if let Regime::Boundary { .. } = regime {
        return Err(Error::Boundary { xi: info.xi, rho: info.rho });
    }
    if form == AForm::ClosedForm {
        if let Some(value) = closed_form_a(model, &info, regime, alpha) {
            return value;
        }
    }
    match regime {
        Regime::Fast | Regime::Degenerate => b_function(model, model.quantile(alpha)?),
        Regime::Slow => model.auxiliary(1.0 / (1.0 - alpha)),
        Regime::Boundary { .. } => unreachable!(),
    }
}

/// First-order limit n^{ξ−1}.
pub fn c1(xi: f64, n: u32) -> Result<f64> {
    check_xi(xi)?;
    check_n(n)?;
    Ok((n as f64).powf(xi - 1.0))
}

/// Second-order approximation C2(α) with its regime.
///
/// On the boundary `q` is used when given and estimated otherwise; for
/// ξ = 2 in the fast regime C1 is returned with `degenerate_flag` set.
pub fn c2(model: &LossModel, alpha: f64, n: u32, q: Option<f64>, form: AForm) -> Result<ApproxResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let info = model.second_order_info();
    let first = c1(info.xi, n)?;
    let regime = classify_regime(&info, q);
    let (correction, regime) = match regime {
        Regime::Degenerate => {
            return Ok(ApproxResult {
                c1: first,
                c2: first,
                correction: 0.0,
                regime,
                degenerate_flag: true,
            })
        }
        Regime::Fast | Regime::Slow => (
            k_coefficient(info.xi, info.rho, n)? * a_correction(model, alpha, form)?,
            regime,
        ),
        Regime::Boundary { q } => {
            let q = match q {
                Some(q) => q,
                None => estimate_q(model)?,
            };
            let coef = boundary_coefficient(info.xi, info.rho, n, q)?;
            (coef * model.auxiliary(1.0 / (1.0 - alpha))?, Regime::Boundary { q: Some(q) })
        }
    };
    Ok(ApproxResult {
        c1: first,
        c2: first + correction,
        correction,
        regime,
        degenerate_flag: false,
    })
}

/// Whether C(α) tends to n^{ξ−1} from above or below, read off the sign of
/// the correction K·A(α) near α = 1.
pub fn approach_direction(model: &LossModel, n: u32) -> Result<Approach> {
    check_n(n)?;
    let info = model.second_order_info();
    let nf = n as f64;
    let xi = info.xi;
    match classify_regime(&info, None) {
        Regime::Fast => {
            let derivative_limit = if xi < 1.0 || (xi == 1.0 && !info.mean_finite) {
                Some(f64::NEG_INFINITY)
            } else if xi == 1.0 {
                let mu = model.moments(f64::INFINITY)?;
                info.hall_c.map(|c| -(nf - 1.0) / nf * mu / c)
            } else {
                // Γ²(1−1/ξ)/(2Γ(1−2/ξ)) = c_ξ/(1−ξ)
                Some(nf.powf(xi - 2.0) * (nf - 1.0) * xi * c_xi(xi)? / (1.0 - xi))
            };
            let k = k_coefficient(xi, info.rho, n)?;
            let direction = if k > 0.0 { Direction::FromAbove } else { Direction::FromBelow };
            Ok(Approach { direction, derivative_limit })
        }
        Regime::Degenerate => Ok(Approach {
            direction: Direction::ModelDependent,
            derivative_limit: Some(0.0),
        }),
        Regime::Slow => {
            let direction = match info.hall_d {
                Some(d) if d < 0.0 => Direction::FromAbove,
                Some(_) => Direction::FromBelow,
                None => Direction::ModelDependent,
            };
            Ok(Approach { direction, derivative_limit: None })
        }
        Regime::Boundary { .. } => {
            let r = c2(model, 1.0 - Q_ESTIMATE_TAIL, n, None, AForm::Theorem)?;
            let direction = if r.correction > 0.0 {
                Direction::FromAbove
            } else if r.correction < 0.0 {
                Direction::FromBelow
            } else {
                Direction::ModelDependent
            };
            Ok(Approach { direction, derivative_limit: None })
        }
    }
}

/// Level α* in [α_lo, α_hi] where C2(α*) = 1, if C2 − 1 changes sign there.
pub fn crossover(
    model: &LossModel,
    n: u32,
    alpha_lo: f64,
    alpha_hi: f64,
    form: AForm,
) -> Result<Option<f64>> {
    if !(alpha_lo > 0.0 && alpha_hi < 1.0 && alpha_lo < alpha_hi) {
        return domain(format!(
            "crossover needs 0 < alpha_lo < alpha_hi < 1, got [{alpha_lo}, {alpha_hi}]"
        ));
    }
    check_n(n)?;
    if (model.xi() - 1.0).abs() <= BOUNDARY_EPS {
        // C1 = 1 exactly; the sub/superadditive switch happens only in the limit
        return Ok(None);
    }
    let excess = |alpha: f64| -> Result<f64> { Ok(c2(model, alpha, n, None, form)?.c2 - 1.0) };

    let (l0, l1) = ((1.0 - alpha_lo).ln(), (1.0 - alpha_hi).ln());
    let steps = CROSSOVER_SCAN_POINTS - 1;
    let mut prev_alpha = alpha_lo;
    let mut prev = excess(alpha_lo)?;
    for i in 1..=steps {
        let alpha = if i == steps {
            alpha_hi
        } else {
            1.0 - (l0 + (l1 - l0) * i as f64 / steps as f64).exp()
        };
        let cur = excess(alpha)?;
        if prev == 0.0 {
            return Ok(Some(prev_alpha));
        }
        if prev.signum() != cur.signum() {
            let (mut lo, mut hi, mut f_lo) = (prev_alpha, alpha, prev);
            while hi - lo > CROSSOVER_ALPHA_TOL {
                let mid = 0.5 * (lo + hi);
                let f_mid = excess(mid)?;
                if f_mid == 0.0 {
                    return Ok(Some(mid));
                }
                if f_mid.signum() == f_lo.signum() {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev_alpha = alpha;
        prev = cur;
    }
    Ok(None)
}

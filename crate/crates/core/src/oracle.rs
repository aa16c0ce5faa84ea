//! Quasi-exact convolution reference: tail of the n-fold sum, its
//! quantiles and the resulting risk concentration.
//!
//! For two summands the tail is computed directly from
//!
//! Ḡ(x) = 2 ∫₀^{F(x/2)} F̄(x − F^←(u)) du + F̄(x/2)²,
//!
//! which holds for any iid pair. Larger n convolve a gridded (n−1)-fold
//! tail with F one summand at a time.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::models::LossModel;
use crate::quadrature;
use crate::second_order::b_function;

/// Largest number of summands the oracle accepts.
pub const MAX_ORACLE_N: u32 = 8;

const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    /// Nodes on the linear head, from the start of the table to F^←(head_level).
    pub head_points: usize,
    pub head_level: f64,
    /// The log-spaced tail ends at F^←(1 − tail_mass).
    pub tail_mass: f64,
    /// Relative quadrature tolerance.
    pub rel_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 4096,
            head_points: 512,
            head_level: 0.99,
            tail_mass: 1e-10,
            rel_tol: 1e-10,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.head_points < 2 || self.points < self.head_points + 2 {
            return domain(format!(
                "grid needs at least 2 head points and 2 tail points, got {} of {}",
                self.head_points, self.points
            ));
        }
        if !(self.head_level > 0.0 && self.head_level < 1.0) {
            return domain(format!("head level must lie in (0, 1), got {}", self.head_level));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0 - self.head_level) {
            return domain(format!(
                "tail mass must lie in (0, 1 - head level), got {}",
                self.tail_mass
            ));
        }
        if !(self.rel_tol > 0.0) {
            return domain(format!("quadrature tolerance must be positive, got {}", self.rel_tol));
        }
        Ok(())
    }
}

/// Gridded tail Ḡ of the n-fold sum.
#[derive(Debug, Clone)]
pub struct ConvolutionGrid {
    pub model: LossModel,
    pub n: u32,
    pub x: Vec<f64>,
    pub g_tail: Vec<f64>,
    pub tol: f64,
    /// d ln Ḡ/dx at the nodes, for Hermite interpolation.
    slopes: Vec<f64>,
    /// The (n−1)-fold table, kept for n > 2 to evaluate Ḡ off the grid.
    lower: Option<Box<ConvolutionGrid>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagPoint {
    pub x: f64,
    /// (Ḡ(x)/F̄(x) − n)/b(x)
    pub value: f64,
}

fn nodes(model: &LossModel, k: u32, spec: &GridSpec) -> Result<Vec<f64>> {
    let smin = model.support_min();
    let head_q = model.quantile(spec.head_level)?;
    let tail_q = model.tail_quantile(spec.tail_mass)?;
    let (start, head_end, tail_end) = if smin.is_finite() {
        let start = k as f64 * smin;
        (start, start + head_q, start + tail_q)
    } else {
        (model.quantile(0.6)?, head_q, tail_q)
    };
    if !(start < head_end && head_end < tail_end) {
        return Err(Error::Precision(format!(
            "degenerate grid range [{start}, {head_end}, {tail_end}]"
        )));
    }
    let h = spec.head_points;
    let tail_points = spec.points - h;
    let mut x = Vec::with_capacity(spec.points);
    x.extend((0..h).map(|i| start + (head_end - start) * i as f64 / h as f64));
    let (l0, l1) = (head_end.ln(), tail_end.ln());
    let last = (tail_points - 1) as f64;
    x.extend((0..tail_points).map(|i| match i {
        0 => head_end,
        i if i == tail_points - 1 => tail_end,
        i => (l0 + (l1 - l0) * i as f64 / last).exp(),
    }));
    Ok(x)
}

/// ∫ h(F^←(1 − v)) dv over v ∈ [v_lo, v_hi], integrated in w = ln v.
fn integrate_tail<H: Fn(f64) -> f64>(model: &LossModel, v_lo: f64, v_hi: f64, rel_tol: f64, h: H) -> Result<f64> {
    if !(v_lo < v_hi) {
        return Ok(0.0);
    }
    quadrature::integrate(
        |w| {
            let v = w.exp();
            h(model.tail_quantile(v).unwrap_or(f64::NAN)) * v
        },
        v_lo.ln(),
        v_hi.ln(),
        rel_tol,
    )
}

/// Ḡ(x) for two iid summands.
fn pair_tail(model: &LossModel, x: f64, rel_tol: f64) -> Result<f64> {
    if x <= 2.0 * model.support_min() {
        return Ok(1.0);
    }
    let half = model.survival(0.5 * x);
    if half >= 1.0 {
        return Ok(1.0);
    }
    let body = model.integrate_quantile(half, rel_tol, |q| model.survival(x - q))?;
    Ok((2.0 * body + half * half).min(1.0))
}

/// Ḡ_{A+X}(x) = ∫₀¹ Ḡ_A(x − F^←(u)) du for a gridded A with support bounded below.
fn add_one(model: &LossModel, lower: &ConvolutionGrid, x: f64, rel_tol: f64) -> Result<f64> {
    let lower_start = lower.x[0];
    if x <= lower_start + model.support_min() {
        return Ok(1.0);
    }
    // beyond F^←(1 − v0) the lower tail is 1
    let v0 = model.survival(x - lower_start).max(f64::MIN_POSITIVE);
    let split = model.survival(0.5 * x).max(v0);
    let integrand = |q: f64| lower.interpolate(x - q);
    let head = if split < 1.0 {
        model.integrate_quantile(split, rel_tol, integrand)?
    } else {
        0.0
    };
    let tail = integrate_tail(model, v0, split, rel_tol, integrand)?;
    Ok((head + tail + v0).min(1.0))
}

fn hermite_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len();
    let d: Vec<f64> = (0..m - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut s = Vec::with_capacity(m);
    s.push(d[0]);
    for i in 1..m - 1 {
        let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        s.push((h1 * d[i - 1] + h0 * d[i]) / (h0 + h1));
    }
    s.push(d[m - 2]);
    s
}

impl ConvolutionGrid {
    fn build(model: &LossModel, k: u32, spec: &GridSpec) -> Result<Self> {
        let x = nodes(model, k, spec)?;
        let (g_tail, lower) = match k {
            1 => (x.iter().map(|&v| model.survival(v)).collect(), None),
            2 => (
                x.par_iter().map(|&v| pair_tail(model, v, spec.rel_tol)).collect::<Result<Vec<_>>>()?,
                None,
            ),
            _ => {
                let lower = ConvolutionGrid::build(model, k - 1, spec)?;
                let g = x
                    .par_iter()
                    .map(|&v| add_one(model, &lower, v, spec.rel_tol))
                    .collect::<Result<Vec<_>>>()?;
                (g, Some(Box::new(lower)))
            }
        };
        // quadrature noise must not break monotonicity of the table
        let mut g_tail: Vec<f64> = g_tail;
        for i in 1..g_tail.len() {
            if g_tail[i] > g_tail[i - 1] {
                g_tail[i] = g_tail[i - 1];
            }
        }
        if let Some(&bad) = g_tail.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::Precision(format!("convolution tail left (0, 1]: {bad}")));
        }
        let logs: Vec<f64> = g_tail.iter().map(|g| g.ln()).collect();
        let slopes = hermite_slopes(&x, &logs);
        Ok(ConvolutionGrid {
            model: *model,
            n: k,
            x,
            g_tail,
            tol: spec.rel_tol,
            slopes,
            lower,
        })
    }

    /// Ḡ(x) from the table: cubic Hermite in (x, ln Ḡ) inside, the value at
    /// the first node below, and a power tail x^{−1/ξ} beyond the last node.
    pub fn interpolate(&self, x: f64) -> f64 {
        let last = self.x.len() - 1;
        if x <= self.x[0] {
            return self.g_tail[0];
        }
        if x >= self.x[last] {
            return self.g_tail[last] * (x / self.x[last]).powf(-1.0 / self.model.xi());
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.g_tail[i].ln(), self.g_tail[i + 1].ln());
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * self.slopes[i + 1];
        y.exp().min(1.0)
    }

    /// Ḡ(x) by quadrature at an arbitrary x (not interpolated).
    pub fn tail_at(&self, x: f64) -> Result<f64> {
        match (&self.lower, self.n) {
            (_, 1) => Ok(self.model.survival(x)),
            (_, 2) => pair_tail(&self.model, x, self.tol),
            (Some(lower), _) => add_one(&self.model, lower, x, self.tol),
            (None, _) => unreachable!("tables for n > 2 keep their lower table"),
        }
    }

    /// Smallest and largest tail mass the table covers.
    pub fn tail_range(&self) -> (f64, f64) {
        (*self.g_tail.last().expect("non-empty grid"), self.g_tail[0])
    }
}

/// Tabulate the tail of the n-fold sum of iid `model` losses.
pub fn convolve_tail(model: &LossModel, n: u32, spec: &GridSpec) -> Result<ConvolutionGrid> {
    if !(2..=MAX_ORACLE_N).contains(&n) {
        return domain(format!("oracle needs 2 <= n <= {MAX_ORACLE_N}, got {n}"));
    }
    if n > 2 && !model.support_min().is_finite() {
        return domain("pairwise convolution for n > 2 needs a support bounded below");
    }
    spec.validate()?;
    ConvolutionGrid::build(model, n, spec)
}

/// G^←(α): the x with Ḡ(x) = 1 − α, bracketed on the table and refined
/// with quadrature-backed regula falsi.
pub fn oracle_quantile(grid: &ConvolutionGrid, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let p = 1.0 - alpha;
    let (lo_mass, hi_mass) = grid.tail_range();
    if p < lo_mass || p > hi_mass {
        return Err(Error::Range(format!(
            "tail mass {p:e} outside the table range [{lo_mass:e}, {hi_mass:e}]"
        )));
    }
    // first node with Ḡ <= p
    let j = grid.g_tail.partition_point(|&g| g > p);
    if grid.g_tail[j] == p {
        return Ok(grid.x[j]);
    }
    let target = p.ln();
    let f = |x: f64| -> Result<f64> { Ok(grid.tail_at(x)?.ln() - target) };
    let (mut a, mut b) = (grid.x[j - 1], grid.x[j]);
    let (mut fa, mut fb) = (grid.g_tail[j - 1].ln() - target, grid.g_tail[j].ln() - target);
    let mut side = 0i8;
    for _ in 0..ROOT_MAX_ITER {
        let c = if fa.is_finite() && fb.is_finite() && fa != fb {
            (a * fb - b * fa) / (fb - fa)
        } else {
            0.5 * (a + b)
        };
        let c = if c > a && c < b { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc == 0.0 || (b - a) <= 1e-13 * b.abs() {
            return Ok(c);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if fc.abs() <= 1e-14 {
            return Ok(c);
        }
    }
    Err(Error::Precision(format!("oracle quantile at alpha = {alpha} did not converge")))
}

/// C(α) from an existing table.
pub fn oracle_concentration_on(grid: &ConvolutionGrid, alpha: f64) -> Result<f64> {
    Ok(oracle_quantile(grid, alpha)? / (grid.n as f64 * grid.model.quantile(alpha)?))
}

/// C(α) = G^←(α)/(n F^←(α)) on a default table.
pub fn oracle_concentration(model: &LossModel, n: u32, alpha: f64) -> Result<f64> {
    let grid = convolve_tail(model, n, &GridSpec::default())?;
    oracle_concentration_on(&grid, alpha)
}

/// Second-order subexponential ratio (Ḡ(x)/F̄(x) − n)/b(x), which tends to
/// n(n − 1)c_ξ.
pub fn tail_ratio_diag(model: &LossModel, n: u32, xs: &[f64]) -> Result<Vec<DiagPoint>> {
    if !(2..=MAX_ORACLE_N).contains(&n) {
        return domain(format!("oracle needs 2 <= n <= {MAX_ORACLE_N}, got {n}"));
    }
    let spec = GridSpec::default();
    let table = if n > 2 { Some(convolve_tail(model, n, &spec)?) } else { None };
    xs.par_iter()
        .map(|&x| {
            let b = b_function(model, x)?;
            let g = match &table {
                Some(t) => t.tail_at(x)?,
                None => pair_tail(model, x, spec.rel_tol)?,
            };
            Ok(DiagPoint {
                x,
                value: (g / model.tail(x)? - n as f64) / b,
            })
        })
        .collect()
}

//! Batched simulation of the empirical risk concentration curve.
//!
//! Each batch owns a ChaCha8 generator seeded from the run seed and the
//! batch index, so a curve depends only on its configuration and never on
//! how rayon schedules the batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::models::LossModel;
use crate::second_order::{c1, c2, AForm, Regime};

/// Batch count at and above which the band uses batch quantiles instead of
/// a normal interval around the batch mean.
pub const QUANTILE_BAND_MIN_BATCHES: usize = 40;

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_BATCHES: usize = 20;
pub const DEFAULT_SEED: u64 = 42;
/// Default ceiling on simultaneously resident sample buffers (2 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DenominatorMode {
    /// VaR of a single loss estimated from independent draws of the same batch.
    Empirical,
    /// VaR of a single loss from the model quantile.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: u32,
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    pub denominator_mode: DenominatorMode,
    /// Representation of A(α) for the C2 column; `None` picks the model default.
    pub a_form: Option<AForm>,
    pub memory_budget: usize,
}

impl SimulationConfig {
    pub fn new(n: u32, samples: usize, alpha_grid: Vec<f64>) -> Self {
        SimulationConfig {
            n,
            samples,
            batches: DEFAULT_BATCHES,
            seed: DEFAULT_SEED,
            alpha_grid,
            denominator_mode: DenominatorMode::Empirical,
            a_form: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return domain(format!("number of summands must satisfy n >= 2, got {}", self.n));
        }
        if self.batches == 0 {
            return domain("batches must satisfy batches >= 1");
        }
        if self.samples == 0 || self.samples % self.batches != 0 {
            return domain(format!(
                "samples must be a positive multiple of batches, got {} samples in {} batches",
                self.samples, self.batches
            ));
        }
        if self.alpha_grid.is_empty() {
            return domain("alpha grid must not be empty");
        }
        if let Some(a) = self.alpha_grid.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return domain(format!("alpha grid values must lie in (0, 1), got {a}"));
        }
        if self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return domain("alpha grid must be strictly increasing");
        }
        Ok(())
    }

    pub fn samples_per_batch(&self) -> usize {
        self.samples / self.batches
    }

    /// Bytes of sample buffers alive at once across concurrently running
    /// batches; a batch frees its sums before drawing single losses.
    pub fn resident_bytes(&self) -> usize {
        let concurrent = self.batches.min(rayon::current_num_threads().max(1));
        self.samples_per_batch()
            .saturating_mul(std::mem::size_of::<f64>())
            .saturating_mul(concurrent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCurve {
    pub alpha: Vec<f64>,
    pub c_emp: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub c1: f64,
    pub c2: Vec<f64>,
    pub c_oracle: Option<Vec<f64>>,
    pub regime: Regime,
    pub degenerate_flag: bool,
}

/// Sign change of the empirical curve through 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalCrossover {
    /// Adjacent grid levels between which c_emp − 1 changes sign.
    pub bracket: (f64, f64),
    /// Smallest and largest grid level whose band contains 1.
    pub band_span: Option<(f64, f64)>,
}

/// Order statistic of rank ⌈αN⌉ (1-based), found by selection.
///
/// The slice is reordered in place.
pub fn empirical_quantile(values: &mut [f64], alpha: f64) -> Result<f64> {
    Ok(empirical_quantiles(values, &[alpha])?[0])
}

fn rank_index(len: usize, alpha: f64) -> usize {
    let rank = (alpha * len as f64).ceil() as usize;
    rank.clamp(1, len) - 1
}

/// Order statistics for an increasing list of levels; each selection runs
/// on the part of the slice not yet known to lie below the previous one.
pub fn empirical_quantiles(values: &mut [f64], alphas: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return domain("empirical quantile of an empty sample");
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return domain(format!("alpha must lie in (0, 1), got {a}"));
    }
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return domain("quantile levels must be non-decreasing");
    }
    let len = values.len();
    let mut start = 0;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let k = rank_index(len, alpha);
        let (_, kth, _) = values[start..].select_nth_unstable_by(k - start, f64::total_cmp);
        out.push(*kth);
        start = k;
    }
    Ok(out)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one batch; independent of scheduling.
pub fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(batch as u64))
}

fn run_batch(model: &LossModel, config: &SimulationConfig, batch: usize, exact: &[f64]) -> Result<Vec<f64>> {
    let m = config.samples_per_batch();
    let n = config.n as usize;
    let mut rng = batch_rng(config.seed, batch);
    // sums first, so both denominator modes see the same sums
    let mut sums: Vec<f64> = (0..m)
        .map(|_| (0..n).map(|_| model.draw(&mut rng)).sum())
        .collect();
    let numerators = empirical_quantiles(&mut sums, &config.alpha_grid)?;
    drop(sums);
    let denominators = match config.denominator_mode {
        DenominatorMode::Exact => exact.to_vec(),
        DenominatorMode::Empirical => {
            let mut singles: Vec<f64> = (0..m).map(|_| model.draw(&mut rng)).collect();
            empirical_quantiles(&mut singles, &config.alpha_grid)?
        }
    };
    let nf = config.n as f64;
    Ok(numerators
        .iter()
        .zip(&denominators)
        .map(|(s, d)| s / (nf * d))
        .collect())
}

fn band(values: &mut [f64]) -> (f64, f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let (lo, hi) = if values.len() == 1 {
        (mean, mean)
    } else if values.len() < QUANTILE_BAND_MIN_BATCHES {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let half = 1.96 * (var / b).sqrt();
        (mean - half, mean + half)
    } else {
        let q = empirical_quantiles(values, &[0.025, 0.975]).expect("non-empty batch values");
        (q[0], q[1])
    };
    (mean, lo.min(mean), hi.max(mean))
}

/// Simulate the empirical risk concentration over the configured α grid.
pub fn empirical_concentration(model: &LossModel, config: &SimulationConfig) -> Result<ConcentrationCurve> {
    config.validate()?;
    let needed = config.resident_bytes();
    if needed > config.memory_budget {
        return Err(Error::Resource(format!(
            "simulation needs {needed} bytes of sample buffers, budget is {}",
            config.memory_budget
        )));
    }
    let exact = match config.denominator_mode {
        DenominatorMode::Exact => config
            .alpha_grid
            .iter()
            .map(|&a| model.quantile(a))
            .collect::<Result<Vec<_>>>()?,
        DenominatorMode::Empirical => Vec::new(),
    };
    let per_batch: Vec<Vec<f64>> = (0..config.batches)
        .into_par_iter()
        .map(|b| run_batch(model, config, b, &exact))
        .collect::<Result<_>>()?;

    let k = config.alpha_grid.len();
    let (mut c_emp, mut ci_lo, mut ci_hi) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
    let mut column = vec![0.0; config.batches];
    for j in 0..k {
        for (slot, batch) in column.iter_mut().zip(&per_batch) {
            *slot = batch[j];
        }
        let (mean, lo, hi) = band(&mut column);
        c_emp.push(mean);
        ci_lo.push(lo);
        ci_hi.push(hi);
    }

    let form = config.a_form.unwrap_or_else(|| AForm::default_for(model));
    let approx = config
        .alpha_grid
        .iter()
        .map(|&a| c2(model, a, config.n, None, form))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationCurve {
        alpha: config.alpha_grid.clone(),
        c_emp,
        ci_lo,
        ci_hi,
        c1: c1(model.xi(), config.n)?,
        c2: approx.iter().map(|r| r.c2).collect(),
        c_oracle: None,
        regime: approx[0].regime,
        degenerate_flag: approx[0].degenerate_flag,
    })
}

impl ConcentrationCurve {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.ci_hi[i] - self.ci_lo[i])
    }

    /// First sign change of c_emp − 1 along the grid, with the levels whose
    /// band still contains 1.
    pub fn empirical_crossover(&self) -> Option<EmpiricalCrossover> {
        let i = (1..self.len()).find(|&i| (self.c_emp[i - 1] - 1.0).signum() != (self.c_emp[i] - 1.0).signum())?;
        let inside: Vec<f64> = (0..self.len())
            .filter(|&j| self.ci_lo[j] <= 1.0 && 1.0 <= self.ci_hi[j])
            .map(|j| self.alpha[j])
            .collect();
        Some(EmpiricalCrossover {
            bracket: (self.alpha[i - 1], self.alpha[i]),
            band_span: inside.first().zip(inside.last()).map(|(a, b)| (*a, *b)),
        })
    }
}

/// `points` levels log-spaced in 1 − α from `alpha_min` to `alpha_max`.
pub fn log_alpha_grid(alpha_min: f64, alpha_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(alpha_min > 0.0 && alpha_max < 1.0 && alpha_min < alpha_max) {
        return domain(format!(
            "alpha range must satisfy 0 < alpha_min < alpha_max < 1, got [{alpha_min}, {alpha_max}]"
        ));
    }
    if points < 2 {
        return domain(format!("points must satisfy points >= 2, got {points}"));
    }
    let (l0, l1) = ((1.0 - alpha_min).ln(), (1.0 - alpha_max).ln());
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => alpha_min,
            i if i == points - 1 => alpha_max,
            i => 1.0 - (l0 + (l1 - l0) * i as f64 / last).exp(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_ranks() {
        let mut v = vec![5.0, 3.0, 1.0, 4.0, 2.0];
        assert_eq!(empirical_quantile(&mut v, 0.5).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&mut v, 0.9).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&mut v, 0.2).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&mut v, 0.21).unwrap(), 2.0);
        assert!(empirical_quantile(&mut [], 0.5).is_err());
        assert!(empirical_quantile(&mut v, 1.0).is_err());
    }

    #[test]
    fn batched_selection_matches_sorting() {
        let model = LossModel::burr(1.0, 2.0).unwrap();
        let data = model.sample(9, 10_001).unwrap();
        let alphas = [0.1, 0.5, 0.5, 0.9, 0.99, 0.9999];
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let mut work = data.clone();
        let got = empirical_quantiles(&mut work, &alphas).unwrap();
        for (a, g) in alphas.iter().zip(got) {
            assert_eq!(g, sorted[rank_index(sorted.len(), *a)]);
        }
    }

    #[test]
    fn pareto_quantile_from_sample() {
        let mut v = LossModel::pareto(0.5).unwrap().sample(1, 1_000_000).unwrap();
        assert!((empirical_quantile(&mut v, 0.75).unwrap() - 2.0).abs() < 0.01);
    }

    #[test]
    fn config_validation() {
        let good = SimulationConfig::new(2, 1000, vec![0.9, 0.99]);
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.samples = 1001;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.alpha_grid = vec![0.99, 0.9];
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.alpha_grid = vec![0.5, 1.0];
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.n = 1;
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.batches = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn memory_budget_enforced() {
        let mut cfg = SimulationConfig::new(2, 1_000_000, vec![0.9]);
        cfg.memory_budget = 1 << 16;
        let r = empirical_concentration(&LossModel::pareto(0.5).unwrap(), &cfg);
        assert!(matches!(r, Err(Error::Resource(_))));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let model = LossModel::burr(0.25, 8.0).unwrap();
        let mut cfg = SimulationConfig::new(2, 200_000, vec![0.9, 0.99, 0.999]);
        cfg.batches = 8;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| empirical_concentration(&model, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        for i in 0..a.len() {
            assert!(a.ci_lo[i] <= a.c_emp[i] && a.c_emp[i] <= a.ci_hi[i]);
        }
    }

    #[test]
    fn band_width_shrinks_like_root_n() {
        let model = LossModel::pareto(0.5).unwrap();
        let grid = vec![0.9, 0.95, 0.99, 0.995, 0.999];
        let width = |samples| {
            let cfg = SimulationConfig::new(2, samples, grid.clone());
            let c = empirical_concentration(&model, &cfg).unwrap();
            (0..c.len()).map(|i| c.ci_hi[i] - c.ci_lo[i]).sum::<f64>() / c.len() as f64
        };
        let ratio = width(1_000_000) / width(2_000_000);
        assert!((1.2..=1.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn exact_denominator_is_less_noisy() {
        let model = LossModel::pareto(0.5).unwrap();
        let grid = vec![0.9, 0.99, 0.999];
        let mut cfg = SimulationConfig::new(2, 1_000_000, grid);
        let emp = empirical_concentration(&model, &cfg).unwrap();
        cfg.denominator_mode = DenominatorMode::Exact;
        let exact = empirical_concentration(&model, &cfg).unwrap();
        for i in 0..emp.len() {
            assert!(exact.half_width(i) <= emp.half_width(i), "alpha {}", emp.alpha[i]);
        }
    }

    #[test]
    fn quantile_band_for_many_batches() {
        let mut values: Vec<f64> = (1..=100).map(f64::from).collect();
        let (mean, lo, hi) = band(&mut values);
        assert_eq!(mean, 50.5);
        assert_eq!((lo, hi), (3.0, 98.0));
        let mut few = vec![1.0, 2.0, 3.0];
        let (mean, lo, hi) = band(&mut few);
        assert_eq!(mean, 2.0);
        assert!((hi - mean - 1.96 / 3f64.sqrt()).abs() < 1e-15 && (mean - lo - (hi - mean)).abs() < 1e-15);
    }

    #[test]
    fn log_grid_shape() {
        let g = log_alpha_grid(0.95, 0.9997, 40).unwrap();
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[39]), (0.95, 0.9997));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let r1 = (1.0 - g[1]) / (1.0 - g[0]);
        let r2 = (1.0 - g[20]) / (1.0 - g[19]);
        assert!((r1 - r2).abs() < 1e-9);
        assert!(log_alpha_grid(0.99, 0.9, 10).is_err());
    }

    #[test]
    fn empirical_crossover_bracket() {
        let curve = ConcentrationCurve {
            alpha: vec![0.9, 0.99, 0.999],
            c_emp: vec![0.9, 0.98, 1.05],
            ci_lo: vec![0.85, 0.95, 0.99],
            ci_hi: vec![0.95, 1.01, 1.1],
            c1: 0.7,
            c2: vec![0.0; 3],
            c_oracle: None,
            regime: Regime::Slow,
            degenerate_flag: false,
        };
        let x = curve.empirical_crossover().unwrap();
        assert_eq!(x.bracket, (0.99, 0.999));
        assert_eq!(x.band_span, Some((0.99, 0.999)));
    }
}

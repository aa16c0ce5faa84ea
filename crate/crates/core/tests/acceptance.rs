//! Exit criteria, one line each. Runs as a plain binary so the verdicts are
//! always printed; the process fails if any criterion fails.

use std::f64::consts::{LN_2, PI};
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use tailconc::models::LossModel;
use tailconc::monte_carlo::{empirical_concentration, ConcentrationCurve, SimulationConfig};
use tailconc::oracle::{convolve_tail, oracle_concentration_on, tail_ratio_diag, GridSpec};
use tailconc::second_order::{a_correction, approach_direction, c_xi, crossover, AForm, Direction};
use tailconc::special::{gamma, normal_cdf, normal_inv_cdf};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn pareto(xi: f64) -> LossModel {
    LossModel::pareto(xi).unwrap()
}

fn burr(tau: f64, kappa: f64) -> LossModel {
    LossModel::burr(tau, kappa).unwrap()
}

fn gandh() -> LossModel {
    LossModel::gandh(0.0, 1.0, 2.0, 0.5).unwrap()
}

fn constants() -> Verdict {
    let half = c_xi(0.5).unwrap();
    let one_low = c_xi(1.0).unwrap();
    let one_high = c_xi(1.0 + 1e-12).unwrap();
    let two = c_xi(2.0).unwrap();
    let grid = [0.25, 0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0];
    let values: Vec<f64> = grid.iter().map(|&x| c_xi(x).unwrap()).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let pass = half == 2.0
        && (one_low - 1.0).abs() <= 1e-10
        && (one_high - 1.0).abs() <= 1e-10
        && two.abs() <= 1e-10
        && decreasing;
    verdict(
        pass,
        format!("c(0.5)={half}, c(1)={one_low}/{one_high:.12}, c(2)={two:e}, decreasing={decreasing}"),
    )
}

fn first_order_limits() -> Verdict {
    let alpha = 1.0 - 1e-8;
    let spec = GridSpec::default();
    let low = oracle_concentration_on(&convolve_tail(&pareto(0.5), 2, &spec).unwrap(), alpha).unwrap();
    let high = oracle_concentration_on(&convolve_tail(&pareto(1.25), 2, &spec).unwrap(), alpha).unwrap();
    let pass = (low - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-3 && (high - 1.189_207_12).abs() <= 1e-2;
    verdict(pass, format!("Pareto(0.5): {low:.6}, Pareto(1.25): {high:.6}"))
}

fn fast_case_coefficient() -> Verdict {
    let model = pareto(0.5);
    let grid = convolve_tail(&model, 2, &GridSpec::default()).unwrap();
    let ratios: Vec<f64> = [0.99, 0.999, 0.9999]
        .iter()
        .map(|&a| {
            let c = oracle_concentration_on(&grid, a).unwrap();
            (c - 0.5f64.sqrt()) / a_correction(&model, a, AForm::Theorem).unwrap()
        })
        .collect();
    let dev: Vec<f64> = ratios.iter().map(|r| (r - 0.5).abs()).collect();
    let shrinking = dev.windows(2).all(|w| w[1] < w[0]);
    let pass = dev[2] <= 0.1 * 0.5 && shrinking;
    verdict(pass, format!("ratios {:.4} {:.4} {:.4} (target 0.5)", ratios[0], ratios[1], ratios[2]))
}

fn slow_case_coefficient() -> Verdict {
    let model = burr(0.25, 8.0);
    let grid = convolve_tail(&model, 2, &GridSpec::default()).unwrap();
    let alpha = 1.0 - 1e-6;
    let c = oracle_concentration_on(&grid, alpha).unwrap();
    let s = 2f64.powf(-0.5);
    let ratio = (c - s) / (1e-6f64).powf(0.125);
    let target = 4.0 * s * (1.0 - 2f64.powf(-0.125));
    let off = (ratio - target).abs() / target;
    verdict(off <= 0.15, format!("C={c:.6}, ratio {ratio:.5} vs {target:.5} ({:.1}% off)", 100.0 * off))
}

fn subexponential_ratio() -> Verdict {
    let model = burr(1.0, 2.0);
    let xs: Vec<f64> = (0..=4)
        .map(|k| model.tail_quantile(10f64.powf(-5.0 - 0.25 * k as f64)).unwrap())
        .collect();
    let diag = tail_ratio_diag(&model, 2, &xs).unwrap();
    let dev: Vec<f64> = diag.iter().map(|d| (d.value - 4.0).abs()).collect();
    let improving = dev.windows(2).all(|w| w[1] < w[0]);
    let last = diag.last().unwrap().value;
    verdict(
        (last - 4.0).abs() <= 0.05 * 4.0 && improving,
        format!("diagnostic {last:.4} at 1-F=1e-6, monotone={improving}"),
    )
}

fn gandh_closed_form() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gh.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_tailconc"))
        .args(["curve", "--model", r#"{"kind":"gandh","a":0,"b":1,"g":2,"h":0.5}"#])
        .args(["--samples", "100000", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    if !status.status.success() {
        return verdict(false, format!("curve exited with {:?}", status.status.code()));
    }
    let text = std::fs::read_to_string(&out).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let alpha: f64 = cells[0].parse().unwrap();
        let c2: f64 = cells[5].parse().unwrap();
        let expected = 2f64.powf(-0.5) * (1.0 + 2.0 * LN_2 / normal_inv_cdf(alpha).unwrap());
        worst = worst.max((c2 - expected).abs());
        rows += 1;
    }
    let star = crossover(&gandh(), 2, 0.99, 0.99999, AForm::default_for(&gandh())).unwrap();
    let in_range = star.is_some_and(|a| (0.9994..=0.9997).contains(&a));
    verdict(
        rows > 0 && worst <= 1e-12 && in_range,
        format!("{rows} rows, max |c2 - closed form| = {worst:e}, alpha* = {star:?}"),
    )
}

const FIGURE_LEVELS: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];

fn figure_models() -> [(&'static str, LossModel); 3] {
    [("g-and-h", gandh()), ("Pareto", pareto(0.5)), ("Burr", burr(0.25, 8.0))]
}

fn figure_curves() -> &'static Vec<ConcentrationCurve> {
    static CURVES: OnceLock<Vec<ConcentrationCurve>> = OnceLock::new();
    CURVES.get_or_init(|| {
        figure_models()
            .iter()
            .map(|(_, m)| {
                let mut cfg = SimulationConfig::new(2, 10_000_000, FIGURE_LEVELS.to_vec());
                cfg.seed = 42;
                empirical_concentration(m, &cfg).unwrap()
            })
            .collect()
    })
}

fn figure_ordering() -> Verdict {
    let curves = figure_curves();
    let at = |i: usize| curves[i].c_emp[3];
    let (gh, par, bur) = (at(0), at(1), at(2));
    let checks = [gh > 1.0, (0.70..=0.85).contains(&par), (0.71..=1.0).contains(&bur), bur > par];
    verdict(
        checks.iter().all(|&c| c),
        format!("C(0.9999): g-and-h {gh:.4}, Pareto {par:.4}, Burr {bur:.4}; checks {checks:?}"),
    )
}

fn simulation_matches_oracle() -> Verdict {
    let curves = figure_curves();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for ((name, m), curve) in figure_models().iter().zip(curves) {
        let grid = convolve_tail(m, 2, &GridSpec::default()).unwrap();
        for j in 0..3 {
            let oracle = oracle_concentration_on(&grid, curve.alpha[j]).unwrap();
            let score = (curve.c_emp[j] - oracle).abs() / curve.half_width(j);
            if score > 3.0 {
                notes.push(format!("{name}@{}: {score:.2}", curve.alpha[j]));
            }
            worst = worst.max(score);
        }
    }
    verdict(worst <= 3.0, format!("worst |c_emp - oracle| / half-width = {worst:.3} {notes:?}"))
}

fn deterministic_cli() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_tailconc"))
            .args(["curve", "--model", r#"{"kind":"burr","tau":0.25,"kappa":8}"#])
            .args(["--samples", "400000", "--seed", "42", "--threads", threads, "--out"])
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("4", "b.csv");
    verdict(a == b && !a.is_empty(), format!("{} bytes, identical = {}", a.len(), a == b))
}

fn special_functions() -> Verdict {
    let mut worst_reflection: f64 = 0.0;
    for k in 1..200 {
        let x = -4.5 + k as f64 * 0.0437;
        if (x - x.round()).abs() < 1e-9 {
            continue;
        }
        let lhs = gamma(x).unwrap() * gamma(1.0 - x).unwrap();
        let rhs = PI / (PI * x).sin();
        worst_reflection = worst_reflection.max(((lhs - rhs) / rhs).abs());
    }
    let half = (gamma(0.5).unwrap() - PI.sqrt()).abs();
    let mut worst_round_trip: f64 = 0.0;
    for p in [1e-300, 1e-100, 1e-20, 1e-8, 0.001, 0.025, 0.3, 0.5, 0.7, 0.975, 0.999, 1.0 - 1e-9] {
        let back = normal_cdf(normal_inv_cdf(p).unwrap());
        worst_round_trip = worst_round_trip.max(((back - p) / p).abs());
    }
    verdict(
        worst_reflection <= 1e-11 && half <= 1e-13 && worst_round_trip <= 1e-12,
        format!("reflection {worst_reflection:e}, gamma(1/2) {half:e}, round trip {worst_round_trip:e}"),
    )
}

fn approach_directions() -> Verdict {
    let down = approach_direction(&LossModel::hall(1.0, -0.5, 0.8, -0.4).unwrap(), 2).unwrap();
    let up = approach_direction(&LossModel::hall(1.0, 0.5, 0.8, -0.4).unwrap(), 2).unwrap();
    let par = approach_direction(&pareto(0.5), 2).unwrap();
    let pass = down.direction == Direction::FromAbove
        && up.direction == Direction::FromBelow
        && par.derivative_limit == Some(f64::NEG_INFINITY);
    verdict(
        pass,
        format!("d<0: {:?}, d>0: {:?}, Pareto derivative {:?}", down.direction, up.direction, par.derivative_limit),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "convolution constants", constants),
        (2, "first-order limits", first_order_limits),
        (3, "second-order coefficient, fast case", fast_case_coefficient),
        (4, "second-order coefficient, slow case", slow_case_coefficient),
        (5, "second-order subexponential ratio", subexponential_ratio),
        (6, "g-and-h closed form and crossover", gandh_closed_form),
        (7, "simulated ordering at 10^7 draws", figure_ordering),
        (8, "simulation against convolution oracle", simulation_matches_oracle),
        (9, "byte-identical curves across thread counts", deterministic_cli),
        (10, "special functions", special_functions),
        (11, "approach directions", approach_directions),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| verdict(false, "panicked"));
        println!(
            "criterion {id:>2} {}: {name} ({}; {:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

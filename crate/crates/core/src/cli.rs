//! Command-line front end: `tailconc info|curve|crossover|diag`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::models::LossModel;
use crate::monte_carlo::{
    empirical_concentration, log_alpha_grid, DenominatorMode, SimulationConfig, DEFAULT_BATCHES,
    DEFAULT_SAMPLES, DEFAULT_SEED,
};
use crate::oracle::{convolve_tail, oracle_concentration_on, tail_ratio_diag, GridSpec};
use crate::second_order::{
    approach_direction, boundary_coefficient, c1, c2, c_xi, classify_regime, crossover,
    estimate_q, j_const, k_coefficient, AForm, Regime,
};
use crate::special::normal_inv_sf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_PRECISION: i32 = 3;

const CURVE_ALPHA_MIN: f64 = 0.95;
const CURVE_ALPHA_MAX: f64 = 0.9997;
const CURVE_POINTS: usize = 40;
const CROSSOVER_ALPHA_MIN: f64 = 0.9;
const CROSSOVER_ALPHA_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Parser)]
#[command(name = "tailconc", version, about = "Risk concentration of sums of heavy-tailed losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tail parameters, regime and asymptotic constants of a model.
    Info(RunArgs),
    /// Empirical risk concentration with first/second-order approximations.
    Curve(RunArgs),
    /// Level where the second-order approximation crosses 1.
    Crossover(RunArgs),
    /// Tail-ratio and auxiliary-function diagnostics.
    Diag(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model as JSON, e.g. '{"kind":"burr","tau":0.25,"kappa":8}', or @path to a JSON file.
    #[arg(long)]
    model: String,
    /// Number of iid summands.
    #[arg(long, default_value_t = 2)]
    n: u32,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Number of levels, log-spaced in 1 - alpha.
    #[arg(long, default_value_t = CURVE_POINTS)]
    points: usize,
    /// Total simulated sums (crossover simulates only when this is given).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BATCHES)]
    batches: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Add the convolution-oracle column.
    #[arg(long)]
    oracle: bool,
    /// Divide by the model quantile instead of the simulated one.
    #[arg(long)]
    exact_denominator: bool,
    /// Use the Hall-class closed forms for A(alpha).
    #[arg(long)]
    hall_closed_form: bool,
    /// Boundary constant q (estimated when omitted).
    #[arg(long)]
    q: Option<f64>,
    /// Worker threads (defaults to the rayon default).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Lib(Error::Parse(_)) => EXIT_USAGE,
            Failure::Lib(Error::Precision(_)) => EXIT_PRECISION,
            Failure::Lib(_) => EXIT_DOMAIN,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => format!("usage error: {m}"),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Format a real with 17 significant digits in positional notation; NaN
/// and infinities use Rust's spelling.
pub fn format_real(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit (9.99.. -> 10.0..)
    let digits = s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count();
    if digits > 17 && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

fn json_real(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn json_opt(v: Option<f64>) -> Value {
    v.map(json_real).unwrap_or(Value::Null)
}

/// Column-oriented table rendered as CSV or as JSON arrays.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

enum Cell {
    Real(Option<f64>),
    Text(String),
}

impl Table {
    fn csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Real(v) => format_opt(*v),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn json_columns(&self) -> Value {
        let mut obj = Map::new();
        for (j, name) in self.columns.iter().enumerate() {
            let col: Vec<Value> = self
                .rows
                .iter()
                .map(|row| match &row[j] {
                    Cell::Real(v) => json_opt(*v),
                    Cell::Text(t) => json!(t),
                })
                .collect();
            obj.insert((*name).to_string(), Value::Array(col));
        }
        Value::Object(obj)
    }
}

fn parse_model_arg(text: &str) -> CliResult<LossModel> {
    let body = match text.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read model file {path}: {e}")))?,
        None => text.to_string(),
    };
    Ok(parse_model_spec(&body)?)
}

/// Parse and validate a JSON model description.
pub fn parse_model_spec(text: &str) -> crate::Result<LossModel> {
    LossModel::from_json(text)
}

struct Context {
    model: LossModel,
    args: RunArgs,
    form: AForm,
}

impl Context {
    fn new(args: RunArgs) -> CliResult<Self> {
        let model = parse_model_arg(&args.model)?;
        if args.n < 2 {
            return Err(Error::Domain(format!("n must satisfy n >= 2, got {}", args.n)).into());
        }
        let form = if args.hall_closed_form {
            AForm::ClosedForm
        } else {
            AForm::default_for(&model)
        };
        Ok(Context { model, args, form })
    }

    fn alpha_range(&self, lo: f64, hi: f64) -> (f64, f64) {
        (self.args.alpha_min.unwrap_or(lo), self.args.alpha_max.unwrap_or(hi))
    }

    fn regime(&self) -> Regime {
        classify_regime(&self.model.second_order_info(), self.args.q)
    }

    fn metadata(&self, command: &str) -> Value {
        let info = self.model.second_order_info();
        json!({
            "command": command,
            "model": serde_json::to_value(self.model).expect("model serializes"),
            "n": self.args.n,
            "xi": info.xi,
            "rho": json_real(info.rho),
            "regime": self.regime().name(),
            "a_form": format!("{:?}", self.form),
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}

fn emit(ctx: &Context, text: String) -> CliResult<()> {
    match &ctx.args.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Usage(format!("cannot write to standard output: {e}")))
        }
    }
}

fn render(ctx: &Context, command: &str, table: &Table, extra: Option<Value>) -> String {
    match ctx.args.format {
        Format::Csv => table.csv(),
        Format::Json => {
            let mut meta = ctx.metadata(command);
            if let (Some(Value::Object(more)), Value::Object(m)) = (extra, &mut meta) {
                m.extend(more);
            }
            let doc = json!({ "metadata": meta, "columns": table.json_columns() });
            let mut s = serde_json::to_string_pretty(&doc).expect("json renders");
            s.push('\n');
            s
        }
    }
}

fn run_info(ctx: &Context) -> CliResult<String> {
    let m = &ctx.model;
    let n = ctx.args.n;
    let info = m.second_order_info();
    let regime = ctx.regime();
    let mut rows: Vec<(&'static str, Cell)> = vec![
        ("kind", Cell::Text(model_kind(m).to_string())),
        ("xi", Cell::Real(Some(info.xi))),
        ("rho", Cell::Real(Some(info.rho))),
        ("regime", Cell::Text(regime.name().to_string())),
        ("c1", Cell::Real(Some(c1(info.xi, n)?))),
        ("c_xi", Cell::Real(Some(c_xi(info.xi)?))),
        ("j_const", Cell::Real(Some(j_const(info.xi, n)?))),
    ];
    let coefficient = match regime {
        Regime::Boundary { q } => {
            let q = match q {
                Some(q) => q,
                None => estimate_q(m)?,
            };
            rows.push(("q", Cell::Real(Some(q))));
            boundary_coefficient(info.xi, info.rho, n, q)?
        }
        _ => k_coefficient(info.xi, info.rho, n)?,
    };
    rows.push(("k_coefficient", Cell::Real(Some(coefficient))));
    rows.push(("hall_c", Cell::Real(info.hall_c)));
    rows.push(("hall_d", Cell::Real(info.hall_d)));
    rows.push(("mean", Cell::Real(Some(m.moments(f64::INFINITY)?))));
    let approach = approach_direction(m, n)?;
    rows.push(("approach", Cell::Text(format!("{:?}", approach.direction))));
    rows.push(("derivative_limit", Cell::Real(approach.derivative_limit)));
    rows.push(("degenerate", Cell::Text((regime == Regime::Degenerate).to_string())));

    match ctx.args.format {
        Format::Csv => {
            let mut out = String::from("field,value\n");
            for (k, v) in rows {
                let v = match v {
                    Cell::Real(r) => format_opt(r),
                    Cell::Text(t) => t,
                };
                out.push_str(&format!("{k},{v}\n"));
            }
            Ok(out)
        }
        Format::Json => {
            let mut obj = Map::new();
            for (k, v) in rows {
                obj.insert(
                    k.to_string(),
                    match v {
                        Cell::Real(r) => json_opt(r),
                        Cell::Text(t) => json!(t),
                    },
                );
            }
            let doc = json!({ "metadata": ctx.metadata("info"), "info": Value::Object(obj) });
            Ok(serde_json::to_string_pretty(&doc).expect("json renders") + "\n")
        }
    }
}

fn model_kind(m: &LossModel) -> &'static str {
    match m {
        LossModel::Pareto { .. } => "pareto",
        LossModel::Burr { .. } => "burr",
        LossModel::GandH { .. } => "gandh",
        LossModel::ExactHall { .. } => "hall",
    }
}

fn simulation_config(ctx: &Context, grid: Vec<f64>) -> CliResult<SimulationConfig> {
    let mut cfg = SimulationConfig::new(ctx.args.n, ctx.args.samples.unwrap_or(DEFAULT_SAMPLES), grid);
    cfg.batches = ctx.args.batches;
    cfg.seed = ctx.args.seed;
    cfg.a_form = Some(ctx.form);
    if ctx.args.exact_denominator {
        cfg.denominator_mode = DenominatorMode::Exact;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_curve(ctx: &Context) -> CliResult<String> {
    let (lo, hi) = ctx.alpha_range(CURVE_ALPHA_MIN, CURVE_ALPHA_MAX);
    let grid = log_alpha_grid(lo, hi, ctx.args.points)?;
    let cfg = simulation_config(ctx, grid)?;
    let mut curve = empirical_concentration(&ctx.model, &cfg)?;
    if ctx.args.q.is_some() {
        for (slot, &a) in curve.c2.iter_mut().zip(&curve.alpha) {
            *slot = c2(&ctx.model, a, ctx.args.n, ctx.args.q, ctx.form)?.c2;
        }
    }
    if ctx.args.oracle {
        let table = convolve_tail(&ctx.model, ctx.args.n, &GridSpec::default())?;
        curve.c_oracle = Some(
            curve
                .alpha
                .iter()
                .map(|&a| oracle_concentration_on(&table, a))
                .collect::<crate::Result<Vec<_>>>()?,
        );
    }
    eprintln!("regime: {}", ctx.regime().name());
    eprintln!("degenerate: {}", curve.degenerate_flag);

    let rows = (0..curve.len())
        .map(|i| {
            vec![
                Cell::Real(Some(curve.alpha[i])),
                Cell::Real(Some(curve.c_emp[i])),
                Cell::Real(Some(curve.ci_lo[i])),
                Cell::Real(Some(curve.ci_hi[i])),
                Cell::Real(Some(curve.c1)),
                Cell::Real(Some(curve.c2[i])),
                Cell::Real(curve.c_oracle.as_ref().map(|c| c[i])),
            ]
        })
        .collect();
    let table = Table {
        columns: vec!["alpha", "c_emp", "c_emp_lo", "c_emp_hi", "c1", "c2", "c_oracle"],
        rows,
    };
    let extra = json!({
        "seed": cfg.seed,
        "samples": cfg.samples,
        "batches": cfg.batches,
        "denominator": format!("{:?}", cfg.denominator_mode),
        "degenerate": curve.degenerate_flag,
    });
    Ok(render(ctx, "curve", &table, Some(extra)))
}

fn run_crossover(ctx: &Context) -> CliResult<String> {
    let (lo, hi) = ctx.alpha_range(CROSSOVER_ALPHA_MIN, CROSSOVER_ALPHA_MAX);
    let analytic = crossover(&ctx.model, ctx.args.n, lo, hi, ctx.form)?;
    let mut rows = Vec::new();
    match analytic {
        Some(a) => eprintln!("analytic crossover: alpha* = {a:.6}"),
        None => eprintln!("analytic crossover: none found in [{lo}, {hi}]"),
    }
    rows.push(vec![
        Cell::Text("analytic".into()),
        Cell::Text(if analytic.is_some() { "found" } else { "none found" }.into()),
        Cell::Real(analytic),
        Cell::Real(None),
        Cell::Real(None),
        Cell::Real(None),
        Cell::Real(None),
    ]);
    if ctx.args.samples.is_some() {
        let grid = log_alpha_grid(lo, hi, ctx.args.points)?;
        let cfg = simulation_config(ctx, grid)?;
        let curve = empirical_concentration(&ctx.model, &cfg)?;
        let found = curve.empirical_crossover();
        match found {
            Some(x) => eprintln!(
                "empirical crossover: between {:.6} and {:.6}",
                x.bracket.0, x.bracket.1
            ),
            None => eprintln!("empirical crossover: none found"),
        }
        let (bracket, span) = match found {
            Some(x) => (Some(x.bracket), x.band_span),
            None => (None, None),
        };
        rows.push(vec![
            Cell::Text("empirical".into()),
            Cell::Text(if found.is_some() { "found" } else { "none found" }.into()),
            Cell::Real(bracket.map(|b| 0.5 * (b.0 + b.1))),
            Cell::Real(bracket.map(|b| b.0)),
            Cell::Real(bracket.map(|b| b.1)),
            Cell::Real(span.map(|s| s.0)),
            Cell::Real(span.map(|s| s.1)),
        ]);
    }
    let table = Table {
        columns: vec!["method", "status", "alpha_star", "bracket_lo", "bracket_hi", "band_lo", "band_hi"],
        rows,
    };
    let extra = json!({ "alpha_min": lo, "alpha_max": hi, "seed": ctx.args.seed });
    Ok(render(ctx, "crossover", &table, Some(extra)))
}

fn run_diag(ctx: &Context) -> CliResult<String> {
    let m = &ctx.model;
    let n = ctx.args.n;
    let info = m.second_order_info();
    let mut rows = Vec::new();

    // auxiliary function against its closed-form asymptote
    for k in 0..=14 {
        let t = 10f64.powf(1.0 + 0.5 * k as f64);
        let a = m.auxiliary(t)?;
        let target = match (*m, info.hall_d) {
            (LossModel::GandH { g, .. }, _) => Some(g / normal_inv_sf(1.0 / t)?),
            (_, Some(d)) if d != 0.0 && info.rho.is_finite() => Some(d * info.rho * t.powf(info.rho)),
            _ => None,
        };
        rows.push(vec![
            Cell::Text("auxiliary".into()),
            Cell::Real(Some(t)),
            Cell::Real(Some(a)),
            Cell::Real(target),
            Cell::Real(target.map(|v| a / v)),
        ]);
    }

    // second-order subexponential ratio, 1 - F(x) from 1e-2 down to 1e-6
    let target = j_const(info.xi, n)?;
    let xs = (0..=16)
        .map(|k| m.tail_quantile(10f64.powf(-2.0 - 0.25 * k as f64)))
        .collect::<crate::Result<Vec<_>>>()?;
    for p in tail_ratio_diag(m, n, &xs)? {
        rows.push(vec![
            Cell::Text("tail_ratio".into()),
            Cell::Real(Some(p.x)),
            Cell::Real(Some(p.value)),
            Cell::Real(Some(target)),
            Cell::Real(if target != 0.0 { Some(p.value / target) } else { None }),
        ]);
    }
    let table = Table {
        columns: vec!["section", "x", "value", "target", "ratio"],
        rows,
    };
    Ok(render(ctx, "diag", &table, None))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let (name, args) = match cli.command {
        Command::Info(a) => ("info", a),
        Command::Curve(a) => ("curve", a),
        Command::Crossover(a) => ("crossover", a),
        Command::Diag(a) => ("diag", a),
    };
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure {threads} threads: {e}")))?;
    }
    let ctx = Context::new(args)?;
    let text = match name {
        "info" => run_info(&ctx)?,
        "curve" => run_curve(&ctx)?,
        "crossover" => run_crossover(&ctx)?,
        _ => run_diag(&ctx)?,
    };
    emit(&ctx, text)
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{}", f.message());
            f.code()
        }
    }
}

//! Subcommand arguments and handlers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use brwld_core::convex::ModelConstants;
use brwld_core::oracle::{
    exact_classical_rate_curve, exact_rate_at, ExactRate, LatticeSpec, MAX_RATE_GENERATIONS,
};
use brwld_core::ratefn::{branch_rate, grid_with_breakpoint, phi_with, psi, RatePoint};
use brwld_core::simulate::{empirical_rate, simulate_replicates, smoothed_cdf, Estimator, Tail};
use brwld_core::Branch;
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{load_model, RunModel};
use crate::error::CliError;
use crate::plot::{self, Marker, Series};
use crate::runner::Threads;
use crate::table::{fmt_num, Table};
use crate::verify;
use crate::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(name = "csv+plot")]
    CsvPlot,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Psi,
    Phi,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Smoothed,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Statistic {
    /// Right-most particle of the modified walk, `R_n*`.
    RStar,
    /// Right-most particle of the plain walk, `R_n`.
    #[value(name = "r-n")]
    Rn,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the file's theta.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct Sampling {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Seed from the system clock instead (the seed used is printed).
    #[arg(long, conflicts_with = "seed")]
    pub clock_seed: bool,
    #[arg(long)]
    pub reps: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Sampling {
    pub fn seed(&self) -> u64 {
        if self.clock_seed {
            let s = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(DEFAULT_SEED);
            eprintln!("seed = {s}");
            s
        } else {
            self.seed
        }
    }

    pub fn reps(&self, default: u64) -> Result<u64, CliError> {
        match self.reps.unwrap_or(default) {
            0 => Err(CliError::Usage("--reps must be at least 1".into())),
            r => Ok(r),
        }
    }

    pub fn executor(&self) -> Threads {
        self.threads.map(Threads).unwrap_or_else(Threads::available)
    }
}

#[derive(Debug, Clone, Args)]
pub struct Grid {
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 201)]
    pub steps: u32,
}

impl Grid {
    fn check(&self) -> Result<(), CliError> {
        if self.steps < 2 {
            return Err(CliError::Usage("--steps must be at least 2".into()));
        }
        if !(self.x_min < self.x_max) {
            return Err(CliError::Usage("--x-min must be below --x-max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Prints θ₀, c(θ), d(θ), ρ, a and related constants.
    Constants {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulates Ψ_θ, Φ or I_θ on an x-grid.
    Rate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, value_enum, default_value_t = Which::Psi)]
        which: Which,
    },
    /// Per-replicate R_n, R_n* and A_n(θ).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        n: u32,
    },
    /// Monte Carlo estimates of P(R_n* ≤ n·x) (or > n·x) over an x-grid.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum, default_value_t = TailArg::Lower)]
        tail: TailArg,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Smoothed)]
        estimator: EstimatorArg,
    },
    /// Runs the invariant checks and writes a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Finite-n rates -(1/n) log P against the limiting rate function.
    RateConvergence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<u32>,
        /// `exact` needs a lattice model; defaults to exact when possible.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum, default_value_t = Statistic::RStar)]
        statistic: Statistic,
        /// Must agree with the side of the speed that x is on.
        #[arg(long, value_enum)]
        tail: Option<TailArg>,
    },
}

pub fn run(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Constants { common } => cmd_constants(common),
        Command::Rate { common, grid, which } => cmd_rate(common, grid, *which),
        Command::Simulate { common, sampling, n } => cmd_simulate(common, sampling, *n),
        Command::Estimate { common, sampling, grid, n, tail, estimator } => {
            cmd_estimate(common, sampling, grid, *n, *tail, *estimator)
        }
        Command::Verify { common, sampling } => cmd_verify(common, sampling),
        Command::RateConvergence { common, sampling, x, n_list, mode, statistic, tail } => {
            cmd_rate_convergence(common, sampling, *x, n_list, *mode, *statistic, *tail)
        }
    }
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn no_plot(common: &Common) -> Result<(), CliError> {
    if common.format == Format::CsvPlot {
        return Err(CliError::Usage(
            "plots are available for rate and rate-convergence only".into(),
        ));
    }
    Ok(())
}

/// Writes `table` in the requested format; `csv+plot` also writes an SVG
/// next to the CSV.
fn emit<F>(common: &Common, table: &Table, plot: F) -> Result<(), CliError>
where
    F: FnOnce() -> String,
{
    let mut w = open_out(common.out.as_deref())?;
    match common.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &table.to_json()).map_err(io::Error::from)?;
            writeln!(w)?;
        }
        Format::Csv => table.write_csv(&mut w)?,
        Format::CsvPlot => {
            let path = common.out.as_deref().ok_or_else(|| {
                CliError::Usage("--format csv+plot needs --out for the plot file".into())
            })?;
            table.write_csv(&mut w)?;
            std::fs::write(path.with_extension("svg"), plot())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn constants_for(m: &RunModel, theta: f64) -> Result<ModelConstants, CliError> {
    Ok(ModelConstants::compute(&m.model.displacement, &m.model.offspring, theta)?)
}

/// Fixed 12-decimal rendering used by the constants report.
pub fn fmt12(x: f64) -> String {
    if x.is_infinite() {
        fmt_num(x)
    } else {
        format!("{x:.12}")
    }
}

pub fn constants_report(k: &ModelConstants) -> Vec<(&'static str, Option<f64>)> {
    vec![
        ("theta", Some(k.theta)),
        ("theta0", Some(k.theta0)),
        ("c", Some(k.speed_c)),
        ("d", Some(k.threshold_d)),
        ("rho", Some(k.rho)),
        ("a", k.a_tangent),
        ("slope", k.tangent_slope),
        ("mean_x", Some(k.mean_x)),
        ("log_mean_n", Some(k.log_mean_n)),
    ]
}

fn cmd_constants(common: &Common) -> Result<(), CliError> {
    no_plot(common)?;
    let m = load_model(&common.config)?;
    let k = constants_for(&m, m.theta(common.theta)?)?;
    let rows = constants_report(&k);
    let mut w = open_out(common.out.as_deref())?;
    match common.format {
        Format::Json => {
            let obj: serde_json::Map<_, _> = rows
                .iter()
                .map(|(name, v)| {
                    let v = match v {
                        Some(x) if x.is_finite() => json!(x),
                        Some(x) => json!(fmt_num(*x)),
                        None => serde_json::Value::Null,
                    };
                    (name.to_string(), v)
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &obj).map_err(io::Error::from)?;
            writeln!(w)?;
        }
        _ => {
            for (name, v) in rows {
                writeln!(w, "{name}={}", v.map(fmt12).unwrap_or_else(|| "undefined".into()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `I_θ` labelled "ii" where it equals `I` and "i" on its linear piece.
fn branch_point(m: &RunModel, theta: f64, x: f64) -> RatePoint {
    let value = branch_rate(&m.model.displacement, theta, x);
    let branch = if x <= m.model.displacement.cgf_prime(theta) {
        Branch::UpperCramer
    } else {
        Branch::UpperLinear
    };
    RatePoint { x, value, branch }
}

pub fn rate_table(m: &RunModel, theta: f64, grid: &Grid, which: Which) -> Result<(Table, Vec<Marker>), CliError> {
    grid.check()?;
    let k = match which {
        Which::Phi => ModelConstants::classical(&m.model.displacement, &m.model.offspring)?,
        _ => constants_for(m, theta)?,
    };
    let anchor = match which {
        Which::Branch => m.model.displacement.mean(),
        _ => k.speed_c,
    };
    let xs = grid_with_breakpoint(grid.x_min, grid.x_max, grid.steps as usize, anchor);
    let mut t = Table::new(&["x", "value", "branch"]);
    for &x in &xs {
        let p = match which {
            Which::Psi => psi(&k, &m.model.displacement, x),
            Which::Phi => phi_with(&k, &m.model.displacement, x),
            Which::Branch => branch_point(m, theta, x),
        };
        t.push(vec![p.x.into(), p.value.into(), p.branch.label().into()]);
    }
    let mut markers = Vec::new();
    match which {
        Which::Branch => markers.push(Marker {
            label: "φ′(θ)".into(),
            x: m.model.displacement.cgf_prime(theta),
        }),
        _ => {
            markers.push(Marker { label: "c".into(), x: k.speed_c });
            if which == Which::Psi && k.threshold_d > k.speed_c && k.threshold_d.is_finite() {
                markers.push(Marker { label: "d".into(), x: k.threshold_d });
            }
            if let Some(a) = k.a_tangent {
                markers.push(Marker { label: "a".into(), x: a });
            }
        }
    }
    Ok((t, markers))
}

fn cmd_rate(common: &Common, grid: &Grid, which: Which) -> Result<(), CliError> {
    let m = load_model(&common.config)?;
    let theta = match which {
        Which::Phi => m.theta(common.theta).unwrap_or(1.0),
        _ => m.theta(common.theta)?,
    };
    let (t, markers) = rate_table(&m, theta, grid, which)?;
    let title = match which {
        Which::Psi => format!("Ψ_θ, θ = {theta}"),
        Which::Phi => "Φ".to_string(),
        Which::Branch => format!("I_θ, θ = {theta}"),
    };
    emit(common, &t, || plot::render(&title, "x", "rate", &plot::rate_series(&t), &markers))
}

pub fn simulate_table(m: &RunModel, theta: f64, n: u32, reps: u64, seed: u64, exec: &Threads) -> Result<Table, CliError> {
    let rows = simulate_replicates(&m.model, theta, n, reps, seed, exec)?;
    let mut t = Table::new(&["replicate", "n", "r_n", "r_star", "a_n_theta"]);
    for r in rows {
        t.push(vec![
            r.replicate.into(),
            r.n.into(),
            r.r_n.into(),
            r.r_star.into(),
            r.log_a_n_theta.exp().into(),
        ]);
    }
    Ok(t)
}

fn cmd_simulate(common: &Common, sampling: &Sampling, n: u32) -> Result<(), CliError> {
    no_plot(common)?;
    let m = load_model(&common.config)?;
    let theta = m.theta(common.theta)?;
    let t = simulate_table(&m, theta, n, sampling.reps(1000)?, sampling.seed(), &sampling.executor())?;
    emit(common, &t, String::new)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_table(
    m: &RunModel,
    theta: f64,
    n: u32,
    grid: &Grid,
    tail: TailArg,
    estimator: EstimatorArg,
    reps: u64,
    seed: u64,
    exec: &Threads,
) -> Result<Table, CliError> {
    grid.check()?;
    let xs = grid_with_breakpoint(grid.x_min, grid.x_max, grid.steps as usize, f64::NAN);
    let ts: Vec<f64> = xs.iter().map(|x| n as f64 * x).collect();
    let est = match estimator {
        EstimatorArg::Smoothed => Estimator::Smoothed,
        EstimatorArg::Direct => Estimator::Direct,
    };
    let rows = smoothed_cdf(&m.model, theta, n, &ts, reps, seed, est, exec)?;
    let mut t = Table::new(&["n", "threshold", "p_hat", "std_error", "estimator"]);
    for r in rows {
        let e = match tail {
            TailArg::Lower => r.lower,
            TailArg::Upper => r.upper,
        };
        t.push(vec![e.n.into(), e.threshold.into(), e.p_hat.into(), e.std_error.into(), e.estimator.label().into()]);
    }
    Ok(t)
}

fn cmd_estimate(
    common: &Common,
    sampling: &Sampling,
    grid: &Grid,
    n: u32,
    tail: TailArg,
    estimator: EstimatorArg,
) -> Result<(), CliError> {
    no_plot(common)?;
    let m = load_model(&common.config)?;
    let theta = m.theta(common.theta)?;
    let t = estimate_table(&m, theta, n, grid, tail, estimator, sampling.reps(10_000)?, sampling.seed(), &sampling.executor())?;
    emit(common, &t, String::new)
}

fn cmd_verify(common: &Common, sampling: &Sampling) -> Result<(), CliError> {
    no_plot(common)?;
    let m = load_model(&common.config)?;
    let theta = m.theta(common.theta)?;
    let report = verify::run_checks(&m, theta, sampling.reps(10_000)?, sampling.seed(), &sampling.executor())?;
    let mut w = open_out(common.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::VerificationFailed(failed));
    }
    Ok(())
}

/// Options of a rate-convergence run that do not come from the model.
#[derive(Debug, Clone)]
pub struct ConvergenceRequest {
    pub theta: f64,
    pub x: f64,
    pub n_list: Vec<u32>,
    pub mode: Mode,
    pub statistic: Statistic,
    pub tail: Option<TailArg>,
    pub reps: u64,
    pub seed: u64,
}

fn check_tail(requested: Option<TailArg>, actual: Tail, x: f64, c: f64) -> Result<(), CliError> {
    let want = match requested {
        None => return Ok(()),
        Some(TailArg::Upper) => Tail::Upper,
        Some(TailArg::Lower) => Tail::Lower,
    };
    if want != actual {
        return Err(CliError::Usage(format!(
            "x = {x} is on the other side of the speed {c}; the {} tail is not a deviation",
            if want == Tail::Upper { "upper" } else { "lower" }
        )));
    }
    Ok(())
}

pub fn convergence_table(m: &RunModel, req: &ConvergenceRequest, exec: &Threads) -> Result<Table, CliError> {
    if req.n_list.is_empty() || req.n_list.contains(&0) {
        return Err(CliError::Usage("--n-list must list positive generations".into()));
    }
    let disp = &m.model.displacement;
    let k = match req.statistic {
        Statistic::RStar => constants_for(m, req.theta)?,
        Statistic::Rn => ModelConstants::classical(disp, &m.model.offspring)?,
    };
    if (req.x - k.speed_c).abs() <= brwld_core::ratefn::BREAKPOINT_TOL * (1.0 + k.speed_c.abs()) {
        return Err(CliError::Usage(format!("x = {} is the speed; the rate is 0 there", req.x)));
    }
    let theory = match req.statistic {
        Statistic::RStar => psi(&k, disp, req.x).value,
        Statistic::Rn => phi_with(&k, disp, req.x).value,
    };
    let tail = if req.x > k.speed_c { Tail::Upper } else { Tail::Lower };
    check_tail(req.tail, tail, req.x, k.speed_c)?;

    let mut t = Table::new(&["n", "threshold_snapped", "log_tail", "rate", "theory", "gap"]);
    let mut push = |n: u32, snapped: f64, log_tail: f64, rate: f64| {
        t.push(vec![n.into(), snapped.into(), log_tail.into(), rate.into(), theory.into(), (rate - theory).into()]);
    };
    match (req.mode, req.statistic) {
        (Mode::Exact, stat) => {
            let spec = LatticeSpec::new(m.model.clone(), req.theta)?;
            let rows: Vec<ExactRate> = match stat {
                Statistic::RStar => req
                    .n_list
                    .iter()
                    .map(|&n| exact_rate_at(&spec, req.x, n))
                    .collect::<Result<_, _>>()?,
                Statistic::Rn => {
                    let n_max = *req.n_list.iter().max().expect("nonempty");
                    if n_max > MAX_RATE_GENERATIONS {
                        return Err(brwld_core::oracle::OracleError::TooManyGenerations(n_max).into());
                    }
                    let all = exact_classical_rate_curve(&spec, req.x, n_max)?;
                    req.n_list.iter().map(|&n| all[n as usize - 1]).collect()
                }
            };
            for r in rows {
                push(r.n, r.threshold_snapped, r.log_tail, r.rate);
            }
        }
        (Mode::Mc, Statistic::RStar) => {
            let rows = empirical_rate(&m.model, req.theta, req.x, &req.n_list, req.reps, req.seed, exec)?;
            for r in rows {
                push(r.n, r.estimate.threshold, r.estimate.p_hat.ln(), r.rate_hat);
            }
        }
        (Mode::Mc, Statistic::Rn) => {
            return Err(CliError::Usage(
                "Monte Carlo rates are available for R_n* only; use --mode exact".into(),
            ))
        }
    }
    Ok(t)
}

#[allow(clippy::too_many_arguments)]
fn cmd_rate_convergence(
    common: &Common,
    sampling: &Sampling,
    x: f64,
    n_list: &[u32],
    mode: Option<Mode>,
    statistic: Statistic,
    tail: Option<TailArg>,
) -> Result<(), CliError> {
    let m = load_model(&common.config)?;
    let theta = match statistic {
        Statistic::Rn => m.theta(common.theta).unwrap_or(1.0),
        Statistic::RStar => m.theta(common.theta)?,
    };
    let mode = mode.unwrap_or(if m.is_lattice() { Mode::Exact } else { Mode::Mc });
    let n_list = if n_list.is_empty() {
        match mode {
            Mode::Exact => vec![32, 64, 128, 256],
            Mode::Mc => vec![6, 8, 10, 12],
        }
    } else {
        n_list.to_vec()
    };
    let req = ConvergenceRequest {
        theta,
        x,
        n_list,
        mode,
        statistic,
        tail,
        reps: sampling.reps(100_000)?,
        seed: sampling.seed(),
    };
    let t = convergence_table(&m, &req, &sampling.executor())?;
    emit(common, &t, || {
        let ns = t.column("n").unwrap_or_default();
        let rates = t.column("rate").unwrap_or_default();
        let theory = t.column("theory").unwrap_or_default();
        let series = [
            Series {
                name: "-(1/n) log P".into(),
                color: "#1f77b4",
                points: ns.iter().copied().zip(rates).collect(),
                dashed: false,
            },
            Series {
                name: "limit".into(),
                color: "#d62728",
                points: ns.iter().copied().zip(theory).collect(),
                dashed: true,
            },
        ];
        plot::render(&format!("rate convergence at x = {x}"), "n", "rate", &series, &[])
    })
}

//! `ouexit`: exit-time quantities of Lévy-driven OU processes as CSV.
//!
//! Every output starts with a `# config: {...}` line holding the resolved
//! run configuration, then a header row. `ouexit replay --from FILE`
//! re-runs that configuration.

pub mod config;

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use levy_ou_exit::error::Error;
use levy_ou_exit::exit_analytics::{ExitAnalytics, ExitProblem};
use levy_ou_exit::inversion::{survival, InversionConfig};
use levy_ou_exit::levy_model::{check_theorem_applicability, LevyModel, Theorem};
use levy_ou_exit::phi_kernel::PhiEvaluator;
use levy_ou_exit::simulator::{run_in_pool, SimConfig, SimMode, Simulator};
use levy_ou_exit::stats::McEstimate;
use levy_ou_exit::validation::{
    laplace_check, mean_check, overshoot_tests, theorem1_check, theorem2_check, IdentityCheck, WeightEstimator,
    Z_THRESHOLD,
};

pub use config::{Grid, Params, RunConfig};

pub const WORKERS_ENV: &str = "OUEXIT_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "ouexit",
    version,
    about = "Exit times of Lévy-driven Ornstein-Uhlenbeck processes"
)]
pub struct Cli {
    /// Write the CSV here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponent phi = Delta + W on a grid of u in [0, K].
    Phi {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u_grid: Grid,
    },
    /// Laplace transform E exp(-mu beta tau_b) on a grid of mu.
    Laplace {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu_grid: Grid,
    },
    /// Mean exit time and the overshoot-free lower bound.
    Mean {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
    },
    /// Mean exit time against its large-barrier asymptotic.
    Asymptotic {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b_grid: Grid,
    },
    /// Laplace transform of tau_b / E tau_b against 1 / (1 + z).
    Limit {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, allow_hyphen_values = true)]
        z_grid: Grid,
    },
    /// Survival function P(tau_b > t) by Gaver-Stehfest inversion.
    Survival {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, allow_hyphen_values = true)]
        t_grid: Grid,
        /// Stehfest terms (even, 4..=32).
        #[arg(long, default_value_t = 16)]
        terms: usize,
    },
    /// Simulated exit samples, one row per path.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[command(flatten)]
        sim: SimArgs,
        /// One summary row instead of the samples.
        #[arg(long)]
        summary: bool,
    },
    /// Monte Carlo checks of the exit identities; exit status 1 on failure.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        start: Start,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[command(flatten)]
        sim: SimArgs,
        /// Laplace argument for the stopped-martingale and transform checks.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
    },
    /// Re-run the configuration recorded in an earlier output file.
    Replay {
        #[arg(long)]
        from: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct Start {
    /// Starting point.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Number of paths.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Defaults to exact for models without a Brownian part, else diffusion.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Step size for the diffusion mode.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Censoring horizon; defaults to 50 mean exit times.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Turn off the Brownian-bridge crossing correction.
    #[arg(long)]
    pub no_bridge: bool,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Diffusion,
}

/// Failure of a run, split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, model files or violated preconditions.
    Input(String),
    /// Quadrature or series failures and unusable simulation output.
    Numerical(String),
}

impl CliError {
    pub fn status(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::CensoredData { .. }) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Runs the parsed command line. `Ok(false)` means a validation check failed.
pub fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = resolve(cli)?;
    match &cfg.output_path {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            let mut out = BufWriter::new(file);
            let passed = execute(&cfg, &mut out, &mut io::stderr())?;
            out.flush().map_err(|e| io_error(path, e))?;
            Ok(passed)
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            let passed = execute(&cfg, &mut out, &mut io::stderr())?;
            out.flush().map_err(|e| CliError::Input(e.to_string()))?;
            Ok(passed)
        }
    }
}

pub fn load_model(path: &Path) -> Result<LevyModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    LevyModel::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn sim_config(args: SimArgs, model: &LevyModel) -> SimConfig {
    let mode = match args.mode {
        Some(ModeArg::Exact) => SimMode::PureJumpExact,
        Some(ModeArg::Diffusion) => SimMode::DiffusionEuler,
        None if model.volatility > 0.0 => SimMode::DiffusionEuler,
        None => SimMode::PureJumpExact,
    };
    SimConfig {
        mode,
        dt: args.dt,
        t_max: args.t_max,
        bridge_correction: !args.no_bridge,
        workers: args.workers,
        ..SimConfig::new(args.n, args.seed)
    }
}

/// Applies defaults and reads the model file.
pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let output_path = cli.output;
    let (model_path, params) = match cli.command {
        Command::Replay { from } => {
            let text = fs::read_to_string(&from).map_err(|e| io_error(&from, e))?;
            let first = text.lines().next().unwrap_or_default();
            let mut cfg =
                RunConfig::from_comment_line(first).map_err(|e| CliError::Input(format!("{}: {e}", from.display())))?;
            cfg.model.validate()?;
            cfg.output_path = output_path;
            return Ok(cfg);
        }
        Command::Phi { model, u_grid } => (model.model, ParamsBuilder::Ready(Params::Phi { u_grid })),
        Command::Laplace {
            model,
            start,
            b,
            mu_grid,
        } => (
            model.model,
            ParamsBuilder::Ready(Params::Laplace { x: start.x, b, mu_grid }),
        ),
        Command::Mean { model, start, b } => (model.model, ParamsBuilder::Ready(Params::Mean { x: start.x, b })),
        Command::Asymptotic { model, start, b_grid } => (
            model.model,
            ParamsBuilder::Ready(Params::Asymptotic { x: start.x, b_grid }),
        ),
        Command::Limit {
            model,
            start,
            b,
            z_grid,
        } => (
            model.model,
            ParamsBuilder::Ready(Params::Limit { x: start.x, b, z_grid }),
        ),
        Command::Survival {
            model,
            start,
            b,
            t_grid,
            terms,
        } => (
            model.model,
            ParamsBuilder::Ready(Params::Survival {
                x: start.x,
                b,
                t_grid,
                terms,
            }),
        ),
        Command::Simulate {
            model,
            start,
            b,
            sim,
            summary,
        } => (
            model.model,
            ParamsBuilder::Simulate {
                x: start.x,
                b,
                sim,
                summary,
            },
        ),
        Command::Validate {
            model,
            start,
            b,
            sim,
            mu,
        } => (model.model, ParamsBuilder::Validate { x: start.x, b, sim, mu }),
    };
    let model = load_model(&model_path)?;
    let params = match params {
        ParamsBuilder::Ready(p) => p,
        ParamsBuilder::Simulate { x, b, sim, summary } => Params::Simulate {
            x,
            b,
            sim: sim_config(sim, &model),
            summary,
        },
        ParamsBuilder::Validate { x, b, sim, mu } => Params::Validate {
            x,
            b,
            sim: sim_config(sim, &model),
            mu,
        },
    };
    Ok(RunConfig {
        model_path,
        output_path,
        model,
        params,
    })
}

// Simulation settings depend on the model, which is read after matching.
enum ParamsBuilder {
    Ready(Params),
    Simulate {
        x: f64,
        b: f64,
        sim: SimArgs,
        summary: bool,
    },
    Validate {
        x: f64,
        b: f64,
        sim: SimArgs,
        mu: f64,
    },
}

/// Writes the CSV for `cfg` to `out` and warnings to `warn`.
pub fn execute(cfg: &RunConfig, out: &mut dyn Write, warn: &mut dyn Write) -> Result<bool, CliError> {
    let workers = cfg.workers();
    if workers == Some(0) {
        return Err(CliError::Input("invalid input `workers`: must be >= 1".into()));
    }
    let mut table = run_in_pool(workers, || compute(cfg))??;
    if let Some(t_max) = table.resolved_t_max {
        // record the horizon actually used so a replay skips the pilot run
        let mut resolved = cfg.clone();
        if let Params::Simulate { sim, .. } | Params::Validate { sim, .. } = &mut resolved.params {
            sim.t_max = Some(t_max);
        }
        table.config_line = resolved.comment_line();
    } else {
        table.config_line = cfg.comment_line();
    }
    let write_err = |e: io::Error| CliError::Input(format!("writing output: {e}"));
    writeln!(out, "{}", table.config_line).map_err(write_err)?;
    writeln!(out, "{}", table.header.join(",")).map_err(write_err)?;
    for row in &table.rows {
        writeln!(out, "{}", row.join(",")).map_err(write_err)?;
    }
    for w in &table.warnings {
        writeln!(warn, "warning: {w}").map_err(write_err)?;
    }
    Ok(table.passed)
}

struct Table {
    config_line: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    warnings: Vec<String>,
    passed: bool,
    resolved_t_max: Option<f64>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            config_line: String::new(),
            header: header.to_vec(),
            rows: Vec::new(),
            warnings: Vec::new(),
            passed: true,
            resolved_t_max: None,
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip form; switches to exponent notation for very small
/// or large magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn analytics(model: &LevyModel, x: f64, b: f64) -> Result<ExitAnalytics, CliError> {
    Ok(ExitAnalytics::new(ExitProblem::new(*model, x, b)?)?)
}

fn compute(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = &cfg.model;
    match &cfg.params {
        Params::Phi { u_grid } => {
            let phi = PhiEvaluator::new(model)?;
            let k = phi.k();
            if u_grid.start < 0.0 || u_grid.end > k {
                return Err(CliError::Input(format!(
                    "invalid input `u_grid`: must lie in [0, {k}] (got {u_grid})"
                )));
            }
            let mut t = Table::new(&["u", "delta", "w", "phi"]);
            for u in u_grid.points() {
                let (d, w) = (phi.delta(u)?, phi.w(u)?);
                t.push(vec![num(u), num(d), num(w), num(d + w)]);
            }
            Ok(t)
        }
        Params::Laplace { x, b, mu_grid } => {
            let a = analytics(model, *x, *b)?;
            let mut t = Table::new(&["mu", "laplace", "complement"]);
            for mu in mu_grid.points() {
                let lt = a.laplace_exit(mu)?.value;
                t.push(vec![num(mu), num(lt), num(a.laplace_complement(mu)?)]);
            }
            Ok(t)
        }
        Params::Mean { x, b } => {
            let a = analytics(model, *x, *b)?;
            let mut t = Table::new(&["x", "b", "mean", "lower_bound"]);
            t.push(vec![
                num(*x),
                num(*b),
                num(a.mean_exit()?),
                num(a.overshoot_free_lower_bound()?),
            ]);
            Ok(t)
        }
        Params::Asymptotic { x, b_grid } => {
            let mut t = Table::new(&["b", "mean", "asymptotic", "ratio"]);
            for b in b_grid.points() {
                let a = analytics(model, *x, b)?;
                let mean = a.mean_exit()?;
                let asym = a.asymptotic_mean()?.value;
                t.push(vec![num(b), num(mean), num(asym), num(mean / asym)]);
            }
            Ok(t)
        }
        Params::Limit { x, b, z_grid } => {
            let a = analytics(model, *x, *b)?;
            let mut t = Table::new(&["z", "limit_lt", "exponential_limit"]);
            for z in z_grid.points() {
                t.push(vec![num(z), num(a.limit_theorem_lt(z)?), num(1.0 / (1.0 + z))]);
            }
            Ok(t)
        }
        Params::Survival { x, b, t_grid, terms } => {
            let a = analytics(model, *x, *b)?;
            let inv = InversionConfig::with_terms(*terms);
            let mut t = Table::new(&["t", "survival", "err_est"]);
            for time in t_grid.points() {
                let p = survival(&a, time, &inv)?;
                if p.precision_loss {
                    t.warnings.push(format!(
                        "precision loss at t={}: raw value {}, error estimate {}",
                        p.t, p.raw, p.err_est
                    ));
                }
                t.push(vec![num(p.t), num(p.survival), num(p.err_est)]);
            }
            Ok(t)
        }
        Params::Simulate { x, b, sim, summary } => simulate(model, *x, *b, sim, *summary),
        Params::Validate { x, b, sim, mu } => validate(model, *x, *b, sim, *mu),
    }
}

fn simulate(model: &LevyModel, x: f64, b: f64, sim: &SimConfig, summary: bool) -> Result<Table, CliError> {
    let simulator = Simulator::new(ExitProblem::new(*model, x, b)?, *sim)?;
    let run = simulator.run()?;
    let mut t = if summary {
        let done: Vec<_> = run.samples.iter().filter(|s| !s.censored).collect();
        let tau: Vec<f64> = done.iter().map(|s| s.tau).collect();
        let chi: Vec<f64> = done.iter().map(|s| s.overshoot).collect();
        let (tau, chi) = (
            McEstimate::from_values(&tau, run.censored_fraction()),
            McEstimate::from_values(&chi, run.censored_fraction()),
        );
        let mut t = Table::new(&[
            "n",
            "censored_fraction",
            "t_max",
            "mean_tau",
            "std_error_tau",
            "mean_overshoot",
            "std_error_overshoot",
        ]);
        t.push(vec![
            run.samples.len().to_string(),
            num(run.censored_fraction()),
            num(run.t_max),
            num(tau.mean),
            num(tau.std_error),
            num(chi.mean),
            num(chi.std_error),
        ]);
        t
    } else {
        let mut t = Table::new(&[
            "path",
            "tau",
            "exit_value",
            "overshoot",
            "pre_exit_value",
            "censored",
            "n_jumps",
        ]);
        for (i, s) in run.samples.iter().enumerate() {
            t.push(vec![
                i.to_string(),
                num(s.tau),
                num(s.exit_value),
                num(s.overshoot),
                num(s.pre_exit_value),
                u8::from(s.censored).to_string(),
                s.n_jumps.to_string(),
            ]);
        }
        t
    };
    if run.censored_fraction() > 0.0 {
        t.warnings.push(format!(
            "{} of paths censored at t_max={}",
            run.censored_fraction(),
            run.t_max
        ));
    }
    t.resolved_t_max = Some(run.t_max);
    Ok(t)
}

const VALIDATE_HEADER: [&str; 8] = [
    "check",
    "estimate",
    "std_error",
    "reference",
    "z",
    "threshold",
    "result",
    "note",
];

fn verdict(passed: bool) -> String {
    if passed { "pass" } else { "fail" }.into()
}

fn identity_row(c: &IdentityCheck) -> Vec<String> {
    vec![
        c.name.clone(),
        num(c.mc.mean),
        num(c.mc.std_error),
        num(c.reference),
        num(c.z),
        num(Z_THRESHOLD),
        verdict(c.passed),
        String::new(),
    ]
}

fn skipped_row(name: &str, why: &Error) -> Vec<String> {
    // notes are free text; keep them inside one CSV field
    let note = why.to_string().replace([',', '\n'], ";");
    let mut row = vec![name.to_string()];
    row.extend(std::iter::repeat_n(String::new(), 5));
    row.extend(["skipped".to_string(), note]);
    row
}

fn validate(model: &LevyModel, x: f64, b: f64, sim: &SimConfig, mu: f64) -> Result<Table, CliError> {
    let problem = ExitProblem::new(*model, x, b)?;
    let analytics = ExitAnalytics::new(problem)?;
    let run = Simulator::new(problem, *sim)?.run()?;
    let samples = &run.samples;
    let mut t = Table::new(&VALIDATE_HEADER);
    t.resolved_t_max = Some(run.t_max);
    let skippable = |e: &Error| matches!(e, Error::NotApplicable(_) | Error::InsufficientData { .. });

    let identity = |t: &mut Table, name: String, r: levy_ou_exit::error::Result<IdentityCheck>| match r {
        Ok(c) => {
            t.passed &= c.passed;
            t.push(identity_row(&c));
            Ok(())
        }
        Err(e) if skippable(&e) => {
            t.push(skipped_row(&name, &e));
            Ok(())
        }
        Err(e) => Err(CliError::from(e)),
    };
    let est = WeightEstimator::Conditional;
    identity(
        &mut t,
        format!("theorem1 mu={mu}"),
        theorem1_check(&analytics, samples, mu, est, sim.workers),
    )?;
    identity(
        &mut t,
        "theorem2".into(),
        theorem2_check(&analytics, samples, est, sim.workers),
    )?;
    identity(
        &mut t,
        format!("laplace mu={mu}"),
        laplace_check(&analytics, samples, mu),
    )?;
    identity(&mut t, "mean".into(), mean_check(&analytics, samples))?;

    let names = ["overshoot_ks", "overshoot_correlation", "overshoot_mean"];
    let report = check_theorem_applicability(model, Theorem::ExponentialJumps)
        .into_result()
        .and_then(|()| overshoot_tests(samples, model.pos_jumps.mgf_boundary()));
    match report {
        Ok(r) => {
            t.passed &= r.passed();
            let blank = String::new;
            t.push(vec![
                names[0].into(),
                num(r.ks),
                blank(),
                blank(),
                blank(),
                num(r.ks_threshold),
                verdict(r.ks_passed),
                blank(),
            ]);
            t.push(vec![
                names[1].into(),
                num(r.correlation),
                blank(),
                num(0.0),
                blank(),
                num(r.correlation_threshold),
                verdict(r.correlation_passed),
                blank(),
            ]);
            t.push(vec![
                names[2].into(),
                num(r.mean.mean),
                num(r.mean.std_error),
                num(1.0 / r.k),
                num(r.mean_z),
                num(Z_THRESHOLD),
                verdict(r.mean_passed),
                blank(),
            ]);
        }
        Err(e) if skippable(&e) => {
            for name in names {
                t.push(skipped_row(name, &e));
            }
        }
        Err(e) => return Err(e.into()),
    }
    Ok(t)
}

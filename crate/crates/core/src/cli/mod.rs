//! Command-line driver: argument and config-file parsing, the `synth`,
//! `solve`, `analyze`, `deblur` and `reproduce` subcommands, and result
//! emission.

mod config;
mod output;
mod reproduce;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::analysis::{factorized_constants, ConvergenceConstants};
use crate::deblur::{self, BlurKernel, SolverKind};
use crate::error::{Error, Result};
use crate::oracle::least_norm_solve;
use crate::sampling::{seeded_rng, BlockSet};
use crate::solvers::{
    factrbags, factrbgs, trbags, trbgs, FactorizedOperator, FactorizedOracle,
    ResidualMode, RunStatus, SolveOutput, SolverConfig,
};
use crate::synth::{make_consistent, make_factorized_case, make_inconsistent, Table1Case, NOISE_SCALE};
use crate::tensor::Tensor3;

pub use config::{merge_config_file, parse_config_text, Entry};
pub use output::{read_trace_csv, render_plot_svg, write_plot_svg, write_trace_csv, Metric};
pub use reproduce::{reproduce, FigureId, ReproduceOptions, ReproduceReport};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for malformed or conflicting arguments.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running a valid command.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// `--help` or `--version` output.
    Info(String),
    Usage(String),
    Runtime(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Info(s) | CliError::Usage(s) => f.write_str(s.trim_end()),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => EXIT_OK,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Tensor dimensions written `AxBxC`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims(pub usize, pub usize, pub usize);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let nums: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("expected AxBxC, got `{s}`"))?;
        match nums[..] {
            [a, b, c] if a > 0 && b > 0 && c > 0 => Ok(Dims(a, b, c)),
            [_, _, _] => Err(format!("dimensions must be positive, got `{s}`")),
            _ => Err(format!("expected AxBxC, got `{s}`")),
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0, self.1, self.2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    #[default]
    Consistent,
    Inconsistent,
}

/// Where the linear system comes from: generated, a factorized grid cell,
/// or tensor text files.
#[derive(Args, Clone, Debug, PartialEq)]
pub struct SystemArgs {
    /// Operator dimensions of a generated system.
    #[arg(long, value_name = "MxNxP")]
    pub dims: Option<Dims>,
    /// Unknown dimensions; must agree with `--dims` on N and P.
    #[arg(long, value_name = "NxLxP")]
    pub x_dims: Option<Dims>,
    #[arg(long, value_enum, default_value_t = SystemKind::Consistent)]
    pub kind: SystemKind,
    /// Scale of the orthogonal noise of inconsistent systems.
    #[arg(long, default_value_t = NOISE_SCALE)]
    pub noise: f64,
    /// Factorized grid cell, e.g. `u-over-v-over-a-over`.
    #[arg(long)]
    pub case: Option<Table1Case>,
    /// Operator tensor file.
    #[arg(long, value_name = "FILE")]
    pub a: Option<PathBuf>,
    /// Outer factor tensor file.
    #[arg(long, value_name = "FILE")]
    pub u: Option<PathBuf>,
    /// Inner factor tensor file.
    #[arg(long, value_name = "FILE")]
    pub v: Option<PathBuf>,
    /// Right-hand side tensor file.
    #[arg(long, value_name = "FILE")]
    pub b: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct StepArgs {
    /// TRBAGS step size.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// FacTRBAGS outer step size.
    #[arg(long, default_value_t = 1.0)]
    pub omega1: f64,
    /// FacTRBAGS inner step size.
    #[arg(long, default_value_t = 1.0)]
    pub omega2: f64,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct SynthArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value = "system")]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct SolveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value = "trbgs")]
    pub solver: SolverKind,
    /// Column block size (inner blocks for factorized solvers).
    #[arg(long, default_value_t = 5)]
    pub block: usize,
    /// Outer block size for factorized solvers; defaults to `--block`.
    #[arg(long)]
    pub outer_block: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[command(flatten)]
    pub steps: StepArgs,
    #[arg(long, default_value_t = 1)]
    pub trace_every: usize,
    #[arg(long, default_value = "recompute")]
    pub residual_mode: ResidualMode,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    pub wall_time: bool,
    /// Skip the least-norm oracle; errors against it are left blank.
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long, default_value = "trace.csv")]
    pub out: PathBuf,
    /// Also plot the trace as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 5)]
    pub block: usize,
    #[arg(long)]
    pub outer_block: Option<usize>,
    #[command(flatten)]
    pub steps: StepArgs,
    /// Write the constants here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct DeblurArgs {
    /// Glob of blurred PGM frames, read in sorted order.
    #[arg(long)]
    pub frames: Option<String>,
    /// Glob of sharp PGM frames used as the reference solution.
    #[arg(long)]
    pub reference: Option<String>,
    /// Generate a random smooth video of ROWSxCOLSxFRAMES, blur it, and
    /// recover it.
    #[arg(long, value_name = "ROWSxCOLSxFRAMES")]
    pub synthetic: Option<Dims>,
    /// Blur kernels in the order they were applied.
    #[arg(long = "kernel", value_delimiter = ',', default_values = ["gaussian:5:1.0", "avg:5"])]
    pub kernels: Vec<BlurKernel>,
    #[arg(long, default_value = "trbags")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[command(flatten)]
    pub steps: StepArgs,
    #[arg(long, default_value_t = 10)]
    pub trace_every: usize,
    #[arg(long, default_value = "incremental")]
    pub residual_mode: ResidualMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "deblurred")]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct ReproduceArgs {
    /// Figure ids (`fig1`..`fig16`, `appA`, `appB`, `appC`, `table1-grid`)
    /// or `all`.
    #[arg(required = true)]
    pub figures: Vec<String>,
    #[arg(long, default_value = "figures")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override every run's iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Override every run's trace cadence.
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// Run the deblurring figure at full scale.
    #[arg(long)]
    pub full: bool,
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum Command {
    /// Generate a synthetic system and write it as tensor text files.
    Synth(SynthArgs),
    /// Run one solver and write its convergence trace.
    Solve(SolveArgs),
    /// Print convergence constants as key=value lines.
    Analyze(AnalyzeArgs),
    /// Recover blurred video frames.
    Deblur(DeblurArgs),
    /// Regenerate the data behind a figure.
    Reproduce(ReproduceArgs),
}

#[derive(Parser, Clone, Debug, PartialEq)]
#[command(name = "tblockgs", version, about = "Randomized block Gauss-Seidel solvers for t-product tensor systems")]
pub struct RunConfig {
    /// `key = value` file of defaults for the subcommand; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Parses `argv` (program name first), merging the `--config` file under
/// the flags, and checks cross-argument consistency.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cmd = RunConfig::command();
    let argv = merge_config_file(&cmd, argv.into_iter().map(Into::into).collect())?;
    let matches = cmd.try_get_matches_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
            _ => CliError::Usage(e.render().to_string()),
        }
    })?;
    let cfg = RunConfig::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("error: {}", msg.into()))
}

impl SystemArgs {
    fn validate(&self) -> Result<(), CliError> {
        let files = self.a.is_some() || self.u.is_some() || self.v.is_some() || self.b.is_some();
        let generated = self.dims.is_some() || self.x_dims.is_some() || self.case.is_some();
        if files && generated {
            return Err(usage("tensor files conflict with --dims, --x-dims and --case"));
        }
        if files {
            let plain = self.a.is_some();
            let fact = self.u.is_some() || self.v.is_some();
            if self.b.is_none() || plain == fact || (fact && (self.u.is_none() || self.v.is_none())) {
                return Err(usage("give --b with either --a or both --u and --v"));
            }
        }
        if self.case.is_some() && (self.dims.is_some() || self.x_dims.is_some()) {
            return Err(usage("--case fixes the dimensions; drop --dims/--x-dims"));
        }
        if let (Some(a), Some(x)) = (self.dims, self.x_dims) {
            if a.1 != x.0 || a.2 != x.2 {
                return Err(usage(format!(
                    "conflicting dims: operator {a} needs unknowns {}x_x{}, got {x}",
                    a.1, a.2
                )));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(usage("--noise must be a non-negative number"));
        }
        Ok(())
    }

    fn is_factorized(&self) -> bool {
        self.case.is_some() || self.u.is_some()
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        match &self.command {
            Command::Synth(a) => {
                a.system.validate()?;
                if a.system.a.is_some() || a.system.u.is_some() {
                    return Err(usage("synth generates systems; tensor file inputs are not accepted"));
                }
            }
            Command::Solve(a) => {
                a.system.validate()?;
                if a.solver.is_factorized() != a.system.is_factorized() {
                    return Err(usage(format!(
                        "solver {} needs a {} system",
                        a.solver.name(),
                        if a.solver.is_factorized() { "factorized (--case or --u/--v)" } else { "plain" }
                    )));
                }
                if a.block == 0 || a.outer_block == Some(0) || a.iters == 0 || a.trace_every == 0 {
                    return Err(usage("--block, --outer-block, --iters and --trace-every must be positive"));
                }
            }
            Command::Analyze(a) => {
                a.system.validate()?;
                if a.block == 0 || a.outer_block == Some(0) {
                    return Err(usage("--block and --outer-block must be positive"));
                }
            }
            Command::Deblur(a) => {
                if a.frames.is_some() == a.synthetic.is_some() {
                    return Err(usage("give exactly one of --frames and --synthetic"));
                }
                if a.synthetic.is_some() && a.reference.is_some() {
                    return Err(usage("--reference is only used with --frames"));
                }
                if a.kernels.is_empty() {
                    return Err(usage("at least one --kernel is required"));
                }
                if a.block == 0 || a.iters == 0 || a.trace_every == 0 {
                    return Err(usage("--block, --iters and --trace-every must be positive"));
                }
            }
            Command::Reproduce(a) => {
                for f in &a.figures {
                    if f != "all" {
                        f.parse::<FigureId>().map_err(usage)?;
                    }
                }
                if a.iters == Some(0) || a.trace_every == Some(0) {
                    return Err(usage("--iters and --trace-every must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Parses and executes `argv`, printing diagnostics, and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let result = parse_config(argv).and_then(|cfg| execute(&cfg));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Info(s) => print!("{s}"),
                other => eprintln!("{other}"),
            }
            e.exit_code()
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.command {
        Command::Synth(a) => synth_cmd(a)?,
        Command::Solve(a) => solve_cmd(a)?,
        Command::Analyze(a) => analyze_cmd(a)?,
        Command::Deblur(a) => deblur_cmd(a)?,
        Command::Reproduce(a) => reproduce_cmd(a)?,
    }
    Ok(())
}

/// A loaded system plus, optionally, its least-norm oracle.
enum Problem {
    Plain {
        a: Tensor3,
        b: Tensor3,
        x_star: Option<Tensor3>,
    },
    Factorized {
        op: FactorizedOperator,
        b: Tensor3,
        oracle: Option<FactorizedOracle>,
    },
}

fn load_problem(s: &SystemArgs, with_oracle: bool) -> Result<Problem> {
    if let Some(b) = &s.b {
        let b = Tensor3::read_text(b)?;
        if let Some(a) = &s.a {
            let a = Tensor3::read_text(a)?;
            let x_star = with_oracle.then(|| least_norm_solve(&a, &b)).transpose()?.map(|o| o.x_star);
            return Ok(Problem::Plain { a, b, x_star });
        }
        let u = Tensor3::read_text(s.u.as_ref().expect("validated"))?;
        let v = Tensor3::read_text(s.v.as_ref().expect("validated"))?;
        let op = FactorizedOperator::new(u, v)?;
        let oracle = with_oracle.then(|| FactorizedOracle::solve(&op, &b)).transpose()?;
        return Ok(Problem::Factorized { op, b, oracle });
    }
    let sys = generate(s)?;
    match sys.operator {
        crate::synth::SystemOperator::Plain(a) => {
            let x_star = with_oracle
                .then(|| least_norm_solve(&a, &sys.b))
                .transpose()?
                .map(|o| o.x_star);
            Ok(Problem::Plain { a, b: sys.b, x_star })
        }
        crate::synth::SystemOperator::Factorized(op) => {
            let oracle = with_oracle.then(|| FactorizedOracle::solve(&op, &sys.b)).transpose()?;
            Ok(Problem::Factorized { op, b: sys.b, oracle })
        }
    }
}

fn generate(s: &SystemArgs) -> Result<crate::synth::SyntheticSystem> {
    let mut rng = seeded_rng(s.seed);
    if let Some(case) = s.case {
        return make_factorized_case(case, &mut rng);
    }
    let Dims(m, n, p) = s.dims.unwrap_or(Dims(30, 20, 30));
    let l = s.x_dims.map_or(10, |x| x.1);
    match s.kind {
        SystemKind::Consistent => make_consistent(m, n, l, p, &mut rng),
        SystemKind::Inconsistent => make_inconsistent(m, n, l, p, &mut rng, s.noise),
    }
}

fn write_tensor(dir: &Path, name: &str, t: &Tensor3) -> Result<PathBuf> {
    let path = dir.join(name);
    t.write_text(&path)?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let sys = generate(&a.system)?;
    create_dir(&a.out_dir)?;
    let mut written = Vec::new();
    match &sys.operator {
        crate::synth::SystemOperator::Plain(op) => written.push(write_tensor(&a.out_dir, "a.t3", op)?),
        crate::synth::SystemOperator::Factorized(op) => {
            written.push(write_tensor(&a.out_dir, "u.t3", op.u())?);
            written.push(write_tensor(&a.out_dir, "v.t3", op.v())?);
        }
    }
    written.push(write_tensor(&a.out_dir, "b.t3", &sys.b)?);
    written.push(write_tensor(&a.out_dir, "x_gen.t3", &sys.x_gen)?);
    written.push(write_tensor(&a.out_dir, "b_perp.t3", &sys.b_perp)?);
    println!("case={} guaranteed={} consistent={}", sys.case_label, sys.guaranteed, sys.is_consistent());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn solver_config(iters: usize, steps: &StepArgs, seed: u64, trace_every: usize, mode: ResidualMode, wall: bool) -> SolverConfig {
    SolverConfig {
        max_iters: iters,
        omega: steps.omega,
        omega1: steps.omega1,
        omega2: steps.omega2,
        seed,
        trace_every,
        residual_mode: mode,
        record_wall_time: wall,
    }
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { iter } => format!("diverged@{iter}"),
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6e}"))
}

fn summarize(solver: SolverKind, out: &SolveOutput) -> String {
    let last = out.trace.last();
    format!(
        "solver={} status={} iter={} rel_err={} res_err={} raw_residual={}",
        solver.name(),
        status_text(&out.status),
        last.map_or(0, |r| r.iter),
        opt_text(last.and_then(|r| r.rel_err)),
        opt_text(last.and_then(|r| r.res_err)),
        opt_text(last.map(|r| r.raw_residual)),
    )
}

fn solve_cmd(a: &SolveArgs) -> Result<()> {
    let problem = load_problem(&a.system, !a.no_oracle)?;
    let cfg = solver_config(a.iters, &a.steps, a.system.seed, a.trace_every, a.residual_mode, a.wall_time);
    let mut out = match &problem {
        Problem::Plain { a: op, b, x_star } => {
            let blocks = BlockSet::partition(op.cols(), a.block)?;
            match a.solver {
                SolverKind::Trbgs => trbgs(op, b, &blocks, &cfg, x_star.as_ref())?,
                _ => trbags(op, b, &blocks, &cfg, x_star.as_ref())?,
            }
        }
        Problem::Factorized { op, b, oracle } => {
            let t_v = BlockSet::partition(op.v().cols(), a.block)?;
            let t_u = BlockSet::partition(op.u().cols(), a.outer_block.unwrap_or(a.block))?;
            match a.solver {
                SolverKind::FacTrbgs => factrbgs(op, b, &t_u, &t_v, &cfg, oracle.as_ref())?,
                _ => factrbags(op, b, &t_u, &t_v, &cfg, oracle.as_ref())?,
            }
        }
    };
    out.trace.label = a.solver.name().to_string();
    write_trace_csv(&out.trace, &a.out)?;
    if let Some(plot) = &a.plot {
        let metric = if a.no_oracle { Metric::RawResidual } else { Metric::RelErr };
        write_plot_svg(&[&out.trace], metric, plot)?;
    }
    println!("{}", summarize(a.solver, &out));
    Ok(())
}

fn analyze_cmd(a: &AnalyzeArgs) -> Result<()> {
    let problem = load_problem(&a.system, false)?;
    let mut lines = Vec::new();
    match &problem {
        Problem::Plain { a: op, .. } => {
            let (m, n, p) = op.dims();
            lines.push(("dims".to_string(), format!("{m}x{n}x{p}")));
            lines.push(("block".to_string(), a.block.to_string()));
            let blocks = BlockSet::partition(n, a.block)?;
            lines.extend(ConvergenceConstants::compute(op, &blocks, a.steps.omega)?.to_key_values());
        }
        Problem::Factorized { op, .. } => {
            let (m, m1, p) = op.u().dims();
            let n = op.v().cols();
            lines.push(("dims_u".to_string(), format!("{m}x{m1}x{p}")));
            lines.push(("dims_v".to_string(), format!("{m1}x{n}x{p}")));
            let t_v = BlockSet::partition(n, a.block)?;
            let t_u = BlockSet::partition(m1, a.outer_block.unwrap_or(a.block))?;
            lines.extend(factorized_constants(op, &t_u, &t_v, a.steps.omega1, a.steps.omega2)?.to_key_values());
        }
    }
    let text: String = lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    match &a.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_frames(pattern: &str) -> Result<Vec<crate::Matrix>> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::InvalidConfig(format!("bad glob `{pattern}`: {e}")))?
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidConfig(format!("glob `{pattern}`: {e}")))?;
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!("no frames match `{pattern}`")));
    }
    let mut paths = paths;
    paths.sort();
    paths.iter().map(deblur::read_pgm).collect()
}

fn write_frames(dir: &Path, prefix: &str, frames: &[crate::Matrix]) -> Result<()> {
    for (j, f) in frames.iter().enumerate() {
        deblur::write_pgm(dir.join(format!("{prefix}_{j:03}.pgm")), f)?;
    }
    Ok(())
}

fn deblur_cmd(a: &DeblurArgs) -> Result<()> {
    create_dir(&a.out_dir)?;
    let (blurred, reference) = match (&a.frames, a.synthetic) {
        (Some(pattern), _) => {
            let reference = a.reference.as_deref().map(read_frames).transpose()?;
            (read_frames(pattern)?, reference)
        }
        (None, Some(Dims(m, n, p))) => {
            let original = deblur::synthetic_video(m, n, p, &mut seeded_rng(a.seed))?;
            let blurred = deblur::blur_video(&original, &a.kernels)?;
            write_frames(&a.out_dir, "original", &original)?;
            write_frames(&a.out_dir, "blurred", &blurred)?;
            (blurred, Some(original))
        }
        (None, None) => unreachable!("validated"),
    };
    let cfg = solver_config(a.iters, &a.steps, a.seed, a.trace_every, a.residual_mode, false);
    let mut out = deblur::deblur(&blurred, &a.kernels, a.solver, &cfg, a.block, reference.as_deref())?;
    out.solve.trace.label = a.solver.name().to_string();
    write_frames(&a.out_dir, "recovered", &out.frames)?;
    write_trace_csv(&out.solve.trace, a.out_dir.join("trace.csv"))?;
    println!("{}", summarize(a.solver, &out.solve));
    if let Some(r) = &reference {
        println!(
            "blurred_distance={:.6e} recovered_distance={:.6e}",
            deblur::video_distance(&blurred, r),
            deblur::video_distance(&out.frames, r)
        );
    }
    Ok(())
}

fn reproduce_cmd(a: &ReproduceArgs) -> Result<()> {
    let ids: Vec<FigureId> = if a.figures.iter().any(|f| f == "all") {
        FigureId::all()
    } else {
        a.figures.iter().map(|f| f.parse().expect("validated")).collect()
    };
    let opts = ReproduceOptions {
        out_dir: a.out_dir.clone(),
        seed: a.seed,
        iters: a.iters,
        trace_every: a.trace_every,
        full: a.full,
    };
    for id in ids {
        let report = reproduce(id, &opts)?;
        for line in report.lines() {
            println!("{line}");
        }
    }
    Ok(())
}

//! Figure recipes and their parallel execution.
//!
//! | id | experiment | runs | iterations |
//! |----|------------|------|------------|
//! | fig1 | TRBGS, consistent, A 30x20x30 | blocks 1, 5, 10 | 2000 |
//! | fig2 | TRBGS, consistent, A 10x20x30 | blocks 1, 5, 10 | 2000 |
//! | fig3 | TRBGS, inconsistent, A 30x20x30 | blocks 1, 5, 10 | 2000 |
//! | fig4-fig6 | as fig1-fig3 with TRBAGS | blocks 1, 5, 10 | 2000 |
//! | fig7-fig9 | FacTRBGS and FacTRBAGS on the white grid cells | block 5 | 10000 |
//! | fig10-fig12 | TRBGS against TRBAGS on the fig1-fig3 systems | block 5 | 2000 |
//! | fig13-fig15 | FacTRBGS and FacTRBAGS on the gray grid cells | block 5 | 10000 |
//! | fig16 | deblurring of a 32x32x4 synthetic video (128x128x12 with `--full`) | TRBGS, TRBAGS, block 8 | 2000 |
//! | appA | TRBAGS over few iterations, A 30x20x30 and 300x200x30 | blocks 1, 5, 10 | 100 |
//! | appB | FacTRBAGS on u-over-v-over-a-over, unit steps against `1/sigma^2` steps | block 5 | 10000 |
//! | appC | all three gray cells | block 5 | 10000 |
//! | table1-grid | FacTRBGS on all six grid cells | block 5 | 10000 |
//!
//! Every run starts from `X = 0` with step sizes 1 unless stated otherwise.
//! Wall-clock times are not recorded, so outputs depend on the seed only.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::output::{write_plot_svg, write_trace_csv, Metric};
use crate::analysis::sigma_sq_blocks;
use crate::deblur::{self, BlurKernel, SolverKind};
use crate::error::{Error, Result};
use crate::oracle::least_norm_solve;
use crate::sampling::{seeded_rng, BlockSet};
use crate::solvers::{
    factrbags, factrbgs, trbags, trbgs, ConvergenceTrace, FactorizedOracle, ResidualMode, RunStatus,
    SolveOutput, SolverConfig,
};
use crate::synth::{make_consistent, make_factorized_case, make_inconsistent, SystemOperator, Table1Case, NOISE_SCALE};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TBLOCKGS_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureId {
    Fig(u8),
    AppA,
    AppB,
    AppC,
    Table1Grid,
}

impl FigureId {
    pub fn all() -> Vec<FigureId> {
        let mut ids: Vec<FigureId> = (1..=16).map(FigureId::Fig).collect();
        ids.extend([FigureId::AppA, FigureId::AppB, FigureId::AppC, FigureId::Table1Grid]);
        ids
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FigureId::Fig(n) => write!(f, "fig{n}"),
            FigureId::AppA => f.write_str("appA"),
            FigureId::AppB => f.write_str("appB"),
            FigureId::AppC => f.write_str("appC"),
            FigureId::Table1Grid => f.write_str("table1-grid"),
        }
    }
}

impl FromStr for FigureId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "appa" => Ok(FigureId::AppA),
            "appb" => Ok(FigureId::AppB),
            "appc" => Ok(FigureId::AppC),
            "table1-grid" => Ok(FigureId::Table1Grid),
            other => other
                .strip_prefix("fig")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=16).contains(n))
                .map(FigureId::Fig)
                .ok_or_else(|| format!("unknown figure id `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReproduceOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub iters: Option<usize>,
    pub trace_every: Option<usize>,
    pub full: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            out_dir: PathBuf::from("figures"),
            seed: 0,
            iters: None,
            trace_every: None,
            full: false,
        }
    }
}

/// Outcome of one run inside a figure.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub name: String,
    pub solver: SolverKind,
    pub block: usize,
    pub omega: f64,
    pub status: RunStatus,
    pub guaranteed: Option<bool>,
    pub trace: ConvergenceTrace,
}

impl RunSummary {
    pub fn min_rel_err(&self) -> Option<f64> {
        self.trace
            .records()
            .iter()
            .filter_map(|r| r.rel_err)
            .reduce(f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct ReproduceReport {
    pub id: FigureId,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub runs: Vec<RunSummary>,
}

impl ReproduceReport {
    /// One human-readable line per run.
    pub fn lines(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                let last = r.trace.last();
                format!(
                    "{} {}: {} last_iter={} rel_err={} res_err={}",
                    self.id,
                    r.name,
                    status_text(&r.status),
                    last.map_or(0, |x| x.iter),
                    fmt_opt(last.and_then(|x| x.rel_err)),
                    fmt_opt(last.and_then(|x| x.res_err)),
                )
            })
            .collect()
    }
}

fn status_text(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { iter } => format!("diverged@{iter}"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.11e}")).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SystemSpec {
    Consistent { m: usize, n: usize, l: usize, p: usize },
    Inconsistent { m: usize, n: usize, l: usize, p: usize },
    Case(Table1Case),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Step {
    Unit,
    /// `omega = 1 / sigma^2` over the block set of each system.
    InverseBlockSigma,
}

#[derive(Clone, Debug)]
struct RunSpec {
    solver: SolverKind,
    block: usize,
    step: Step,
}

#[derive(Clone, Debug)]
enum Experiment {
    Synthetic {
        name: String,
        system: SystemSpec,
        runs: Vec<RunSpec>,
        iters: usize,
        trace_every: usize,
    },
    Deblur {
        dims: (usize, usize, usize),
        iters: usize,
        trace_every: usize,
    },
}

const PLAIN_ITERS: usize = 2000;
const PLAIN_EVERY: usize = 10;
const FACTORIZED_ITERS: usize = 10_000;
const FACTORIZED_EVERY: usize = 50;
const DEBLUR_BLOCK: usize = 8;

fn plain_setting(idx: usize) -> (&'static str, SystemSpec) {
    match idx {
        0 => ("consistent-over", SystemSpec::Consistent { m: 30, n: 20, l: 10, p: 30 }),
        1 => ("consistent-under", SystemSpec::Consistent { m: 10, n: 20, l: 10, p: 30 }),
        _ => ("inconsistent-over", SystemSpec::Inconsistent { m: 30, n: 20, l: 10, p: 30 }),
    }
}

fn block_sweep(solver: SolverKind) -> Vec<RunSpec> {
    [1, 5, 10]
        .into_iter()
        .map(|block| RunSpec { solver, block, step: Step::Unit })
        .collect()
}

fn both_factorized() -> Vec<RunSpec> {
    [SolverKind::FacTrbgs, SolverKind::FacTrbags]
        .into_iter()
        .map(|solver| RunSpec { solver, block: 5, step: Step::Unit })
        .collect()
}

fn plain(idx: usize, runs: Vec<RunSpec>) -> Experiment {
    let (name, system) = plain_setting(idx);
    Experiment::Synthetic {
        name: name.into(),
        system,
        runs,
        iters: PLAIN_ITERS,
        trace_every: PLAIN_EVERY,
    }
}

fn factorized(case: Table1Case, runs: Vec<RunSpec>) -> Experiment {
    Experiment::Synthetic {
        name: case.label().into(),
        system: SystemSpec::Case(case),
        runs,
        iters: FACTORIZED_ITERS,
        trace_every: FACTORIZED_EVERY,
    }
}

fn recipe(id: FigureId, full: bool) -> Vec<Experiment> {
    let white = [Table1Case::UOverVUnderAUnder, Table1Case::UOverVUnderAOver, Table1Case::UOverVOverAOver];
    let gray = [Table1Case::UUnderVOverAUnder, Table1Case::UUnderVOverAOver, Table1Case::UUnderVUnderAUnder];
    match id {
        FigureId::Fig(n @ 1..=3) => vec![plain(n as usize - 1, block_sweep(SolverKind::Trbgs))],
        FigureId::Fig(n @ 4..=6) => vec![plain(n as usize - 4, block_sweep(SolverKind::Trbags))],
        FigureId::Fig(n @ 7..=9) => vec![factorized(white[n as usize - 7], both_factorized())],
        FigureId::Fig(n @ 10..=12) => {
            let runs = [SolverKind::Trbgs, SolverKind::Trbags]
                .into_iter()
                .map(|solver| RunSpec { solver, block: 5, step: Step::Unit })
                .collect();
            vec![plain(n as usize - 10, runs)]
        }
        FigureId::Fig(n @ 13..=15) => vec![factorized(gray[n as usize - 13], both_factorized())],
        FigureId::Fig(_) => vec![Experiment::Deblur {
            dims: if full { (128, 128, 12) } else { (32, 32, 4) },
            iters: PLAIN_ITERS,
            trace_every: PLAIN_EVERY,
        }],
        FigureId::AppA => [(30, 20), (300, 200)]
            .into_iter()
            .map(|(m, n)| Experiment::Synthetic {
                name: format!("consistent-{m}x{n}x30"),
                system: SystemSpec::Consistent { m, n, l: 10, p: 30 },
                runs: block_sweep(SolverKind::Trbags),
                iters: 100,
                trace_every: 1,
            })
            .collect(),
        FigureId::AppB => {
            let runs = [Step::Unit, Step::InverseBlockSigma]
                .into_iter()
                .map(|step| RunSpec { solver: SolverKind::FacTrbags, block: 5, step })
                .collect();
            vec![factorized(Table1Case::UOverVOverAOver, runs)]
        }
        FigureId::AppC => gray.into_iter().map(|c| factorized(c, both_factorized())).collect(),
        FigureId::Table1Grid => Table1Case::ALL
            .into_iter()
            .map(|c| {
                let runs = vec![RunSpec { solver: SolverKind::FacTrbgs, block: 5, step: Step::Unit }];
                factorized(c, runs)
            })
            .collect(),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => log::warn!("ignoring {THREADS_ENV}={v}: expected a positive integer"),
        }
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn run_name(solver: SolverKind, block: usize, step: Step) -> String {
    match step {
        Step::Unit => format!("{}_b{block}", solver.name()),
        Step::InverseBlockSigma => format!("{}_b{block}_inv-sigma", solver.name()),
    }
}

fn run_synthetic(
    idx: usize,
    name: &str,
    system: SystemSpec,
    runs: &[RunSpec],
    iters: usize,
    trace_every: usize,
    opts: &ReproduceOptions,
) -> Result<Vec<RunSummary>> {
    let data_seed = opts.seed.wrapping_mul(1000).wrapping_add(idx as u64);
    let mut rng = seeded_rng(data_seed);
    let sys = match system {
        SystemSpec::Consistent { m, n, l, p } => make_consistent(m, n, l, p, &mut rng)?,
        SystemSpec::Inconsistent { m, n, l, p } => make_inconsistent(m, n, l, p, &mut rng, NOISE_SCALE)?,
        SystemSpec::Case(c) => make_factorized_case(c, &mut rng)?,
    };
    let guaranteed = matches!(system, SystemSpec::Case(_)).then_some(sys.guaranteed);
    let iters = opts.iters.unwrap_or(iters);
    let trace_every = opts.trace_every.unwrap_or(trace_every);
    let cfg_for = |k: usize, omega: f64, omega12: (f64, f64)| SolverConfig {
        max_iters: iters,
        omega,
        omega1: omega12.0,
        omega2: omega12.1,
        seed: data_seed.wrapping_add(1 + k as u64),
        trace_every,
        residual_mode: ResidualMode::Incremental,
        record_wall_time: false,
    };
    match &sys.operator {
        SystemOperator::Plain(a) => {
            // A consistent system with a tall Gaussian operator has the
            // generating solution as its unique least-squares solution.
            let x_star = if sys.is_consistent() && a.rows() >= a.cols() {
                sys.x_gen.clone()
            } else {
                least_norm_solve(a, &sys.b)?.x_star
            };
            runs.par_iter()
                .enumerate()
                .map(|(k, spec)| {
                    let blocks = BlockSet::partition(a.cols(), spec.block)?;
                    let omega = match spec.step {
                        Step::Unit => 1.0,
                        Step::InverseBlockSigma => 1.0 / sigma_sq_blocks(a, &blocks)?,
                    };
                    let cfg = cfg_for(k, omega, (1.0, 1.0));
                    let out = match spec.solver {
                        SolverKind::Trbgs => trbgs(a, &sys.b, &blocks, &cfg, Some(&x_star))?,
                        _ => trbags(a, &sys.b, &blocks, &cfg, Some(&x_star))?,
                    };
                    Ok(summary(name, spec, omega, guaranteed, out))
                })
                .collect()
        }
        SystemOperator::Factorized(op) => {
            let oracle = FactorizedOracle::solve(op, &sys.b)?;
            runs.par_iter()
                .enumerate()
                .map(|(k, spec)| {
                    let t_v = BlockSet::partition(op.v().cols(), spec.block)?;
                    let t_u = BlockSet::partition(op.u().cols(), spec.block)?;
                    let omegas = match spec.step {
                        Step::Unit => (1.0, 1.0),
                        Step::InverseBlockSigma => (
                            1.0 / sigma_sq_blocks(op.u(), &t_u)?,
                            1.0 / sigma_sq_blocks(op.v(), &t_v)?,
                        ),
                    };
                    let cfg = cfg_for(k, 1.0, omegas);
                    let out = match spec.solver {
                        SolverKind::FacTrbgs => factrbgs(op, &sys.b, &t_u, &t_v, &cfg, Some(&oracle))?,
                        _ => factrbags(op, &sys.b, &t_u, &t_v, &cfg, Some(&oracle))?,
                    };
                    Ok(summary(name, spec, omegas.1, guaranteed, out))
                })
                .collect()
        }
    }
}

fn summary(exp: &str, spec: &RunSpec, omega: f64, guaranteed: Option<bool>, mut out: SolveOutput) -> RunSummary {
    let name = format!("{exp}_{}", run_name(spec.solver, spec.block, spec.step));
    out.trace.label = name.clone();
    RunSummary {
        name,
        solver: spec.solver,
        block: spec.block,
        omega,
        status: out.status,
        guaranteed,
        trace: out.trace,
    }
}

fn run_deblur(
    dims: (usize, usize, usize),
    iters: usize,
    trace_every: usize,
    opts: &ReproduceOptions,
    frames_dir: &Path,
) -> Result<Vec<RunSummary>> {
    let (m, n, p) = dims;
    let data_seed = opts.seed.wrapping_mul(1000);
    let original = deblur::synthetic_video(m, n, p, &mut seeded_rng(data_seed))?;
    let kernels = [BlurKernel::gaussian(5, 1.0)?, BlurKernel::averaging(5)?];
    let blurred = deblur::blur_video(&original, &kernels)?;
    fs::create_dir_all(frames_dir).map_err(|e| Error::io(frames_dir, e))?;
    for (j, f) in original.iter().enumerate() {
        deblur::write_pgm(frames_dir.join(format!("original_{j:03}.pgm")), f)?;
    }
    for (j, f) in blurred.iter().enumerate() {
        deblur::write_pgm(frames_dir.join(format!("blurred_{j:03}.pgm")), f)?;
    }
    let solvers = [SolverKind::Trbgs, SolverKind::Trbags];
    let results: Vec<Result<(RunSummary, Vec<crate::Matrix>)>> = solvers
        .par_iter()
        .enumerate()
        .map(|(k, &solver)| {
            let cfg = SolverConfig {
                max_iters: opts.iters.unwrap_or(iters),
                seed: data_seed.wrapping_add(1 + k as u64),
                trace_every: opts.trace_every.unwrap_or(trace_every),
                residual_mode: ResidualMode::Incremental,
                record_wall_time: false,
                ..SolverConfig::default()
            };
            let out = deblur::deblur(&blurred, &kernels, solver, &cfg, DEBLUR_BLOCK, Some(&original))?;
            let spec = RunSpec { solver, block: DEBLUR_BLOCK, step: Step::Unit };
            Ok((summary(&format!("video-{m}x{n}x{p}"), &spec, 1.0, None, out.solve), out.frames))
        })
        .collect();
    let mut runs = Vec::new();
    for r in results {
        let (summary, frames) = r?;
        for (j, f) in frames.iter().enumerate() {
            deblur::write_pgm(frames_dir.join(format!("{}_{j:03}.pgm", summary.solver.name())), f)?;
        }
        runs.push(summary);
    }
    Ok(runs)
}

fn write_summary(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut text = String::from(
        "run,solver,block,omega,guaranteed,status,last_iter,first_rel_err,last_rel_err,min_rel_err,last_res_err,last_raw_residual\n",
    );
    for r in runs {
        let first = r.trace.first();
        let last = r.trace.last();
        text.push_str(&format!(
            "{},{},{},{:.11e},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.solver.name(),
            r.block,
            r.omega,
            r.guaranteed.map(|g| g.to_string()).unwrap_or_default(),
            status_text(&r.status),
            last.map_or(0, |x| x.iter),
            fmt_opt(first.and_then(|x| x.rel_err)),
            fmt_opt(last.and_then(|x| x.rel_err)),
            fmt_opt(r.min_rel_err()),
            fmt_opt(last.and_then(|x| x.res_err)),
            fmt_opt(last.map(|x| x.raw_residual)),
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every experiment of `id` and writes, under `out_dir/<id>/`, one CSV
/// per run, `summary.csv`, and one SVG per plotted metric.
pub fn reproduce(id: FigureId, opts: &ReproduceOptions) -> Result<ReproduceReport> {
    let dir = opts.out_dir.join(id.to_string());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let experiments = recipe(id, opts.full);
    let pool = thread_pool()?;
    let frames_dir = dir.join("frames");
    let results: Vec<Result<Vec<RunSummary>>> = pool.install(|| {
        experiments
            .par_iter()
            .enumerate()
            .map(|(idx, exp)| match exp {
                Experiment::Synthetic { name, system, runs, iters, trace_every } => {
                    run_synthetic(idx, name, *system, runs, *iters, *trace_every, opts)
                }
                Experiment::Deblur { dims, iters, trace_every } => {
                    run_deblur(*dims, *iters, *trace_every, opts, &frames_dir)
                }
            })
            .collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.extend(r?);
    }
    let mut files = Vec::new();
    for r in &runs {
        let path = dir.join(format!("{}.csv", r.name));
        write_trace_csv(&r.trace, &path)?;
        files.push(path);
    }
    let summary_path = dir.join("summary.csv");
    write_summary(&summary_path, &runs)?;
    files.push(summary_path);
    let traces: Vec<&ConvergenceTrace> = runs.iter().map(|r| &r.trace).collect();
    let factorized = runs.iter().any(|r| r.solver.is_factorized());
    let mut metrics = vec![Metric::RelErr, Metric::ResErr];
    if factorized {
        metrics.extend([Metric::OuterRelErr, Metric::OuterResErr]);
    }
    if matches!(id, FigureId::Fig(16)) {
        metrics.push(Metric::RawResidual);
    }
    for metric in metrics {
        let suffix = match metric {
            Metric::RelErr => "rel_err",
            Metric::ResErr => "res_err",
            Metric::RawResidual => "raw_residual",
            Metric::OuterRelErr => "outer_rel_err",
            Metric::OuterResErr => "outer_res_err",
        };
        let path = dir.join(format!("{id}_{suffix}.svg"));
        write_plot_svg(&traces, metric, &path)?;
        files.push(path);
    }
    Ok(ReproduceReport { id, dir, files, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_round_trip() {
        for id in FigureId::all() {
            assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
        }
        assert!("fig0".parse::<FigureId>().is_err());
        assert!("fig17".parse::<FigureId>().is_err());
        assert_eq!("APPB".parse::<FigureId>().unwrap(), FigureId::AppB);
    }

    #[test]
    fn recipes_match_captions() {
        let Experiment::Synthetic { runs, system, .. } = &recipe(FigureId::Fig(1), false)[0] else {
            panic!("fig1 is synthetic")
        };
        assert_eq!(runs.iter().map(|r| r.block).collect::<Vec<_>>(), vec![1, 5, 10]);
        assert!(runs.iter().all(|r| r.solver == SolverKind::Trbgs));
        assert_eq!(*system, SystemSpec::Consistent { m: 30, n: 20, l: 10, p: 30 });
        assert_eq!(recipe(FigureId::Table1Grid, false).len(), 6);
        let Experiment::Synthetic { runs, .. } = &recipe(FigureId::AppB, false)[0] else { panic!() };
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().all(|r| r.solver == SolverKind::FacTrbags && r.block == 5));
        assert_ne!(runs[0].step, runs[1].step);
    }

    #[test]
    fn small_figure_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let opts = |sub: &str| ReproduceOptions {
            out_dir: dir.path().join(sub),
            seed: 3,
            iters: Some(30),
            trace_every: Some(5),
            full: false,
        };
        let a = reproduce(FigureId::Fig(10), &opts("a")).unwrap();
        let b = reproduce(FigureId::Fig(10), &opts("b")).unwrap();
        assert_eq!(a.runs.len(), 2);
        for (fa, fb) in a.files.iter().zip(&b.files) {
            assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
        }
    }
}

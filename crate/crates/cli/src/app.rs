//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use otm_core::diagnostics::{run_checks, CheckOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_OK};
use crate::io::format_float;
use crate::problem::{Dims, Inputs, ProblemData, ProblemKind};
use crate::solve::{run, run_batch, seeded_path, CgRule, ExperimentSpec, FwStep, Init, SolverKind};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "OTM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "otm", version, about = "Riemannian solvers for non-linear optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a solver and write its trace CSV.
    Solve(Box<SolveArgs>),
    /// Write a seeded synthetic instance.
    Gen(GenArgs),
    /// Run the geometry self-checks and print a pass/fail table.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub problem: ProblemKind,
    #[arg(long, value_enum)]
    pub solver: SolverKind,

    /// Directory holding mu1.csv, mu2.csv, cost.csv, s1.csv, ... as written by `gen`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub mu1: Option<PathBuf>,
    #[arg(long)]
    pub mu2: Option<PathBuf>,
    /// Feature marginals (coot).
    #[arg(long)]
    pub nu1: Option<PathBuf>,
    #[arg(long)]
    pub nu2: Option<PathBuf>,
    /// Cost matrix (linear).
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Cost matrices (robust), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub costs: Vec<PathBuf>,
    /// Similarity matrices (gw).
    #[arg(long)]
    pub s1: Option<PathBuf>,
    #[arg(long)]
    pub s2: Option<PathBuf>,
    /// Data matrices (coot).
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub z: Option<PathBuf>,
    /// 0/1 support mask for the (sample) coupling.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// 0/1 support mask for the coot feature coupling.
    #[arg(long)]
    pub feature_mask: Option<PathBuf>,

    /// Generate a synthetic instance of this size instead of reading files:
    /// MxN, MxNxK for robust, MxNxD1xD2 for coot.
    #[arg(long)]
    pub dims: Option<Dims>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Product)]
    pub init: Init,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub max_time: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, value_enum, default_value_t = CgRule::Hs)]
    pub cg: CgRule,
    /// Entropic regularization of the fw/fw1/am oracles.
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = FwStep::Harmonic)]
    pub fw_step: FwStep,
    /// Softmax temperature of the robust objective (0 = hard max).
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,

    /// Trace path; defaults to <out-dir>/<problem>-<solver>-seed<seed>.csv.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    /// Write zeros in the elapsed_sec column so repeated runs give identical files.
    #[arg(long)]
    pub no_clock: bool,

    /// Run seeds seed, seed+1, ..., seed+N-1.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Worker threads for --repeat.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: ProblemKind,
    /// MxN, MxNxK for robust, MxNxD1xD2 for coot.
    #[arg(long)]
    pub dims: Dims,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value = "4x5")]
    pub dims: Dims,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale the Riemannian Hessian under test by 1.01.
    #[arg(long)]
    pub inject_hessian_fault: bool,
}

impl SolveArgs {
    fn spec(&self) -> Result<ExperimentSpec, CliError> {
        let max_time = match self.max_time {
            Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
            Some(s) => return Err(CliError::Setup(format!("--max-time must be positive, got {s}"))),
            None => None,
        };
        if self.repeat == 0 || self.jobs == 0 {
            return Err(CliError::Setup("--repeat and --jobs must be at least 1".into()));
        }
        Ok(ExperimentSpec {
            problem: self.problem,
            solver: self.solver,
            inputs: Inputs {
                dir: self.input.clone(),
                mu1: self.mu1.clone(),
                mu2: self.mu2.clone(),
                nu1: self.nu1.clone(),
                nu2: self.nu2.clone(),
                cost: self.cost.clone(),
                costs: self.costs.clone(),
                s1: self.s1.clone(),
                s2: self.s2.clone(),
                x: self.x.clone(),
                z: self.z.clone(),
                mask: self.mask.clone(),
                feature_mask: self.feature_mask.clone(),
            },
            dims: self.dims.clone(),
            seed: self.seed,
            init: self.init,
            max_iter: self.max_iter,
            max_time,
            grad_tol: self.grad_tol,
            cg: self.cg,
            epsilon: self.epsilon,
            fw_step: self.fw_step,
            temperature: self.temperature,
            trace: self.trace_for(self.seed),
            clock: !self.no_clock,
        })
    }

    fn trace_for(&self, seed: u64) -> PathBuf {
        match &self.trace {
            Some(t) if self.repeat > 1 => seeded_path(t, seed),
            Some(t) => t.clone(),
            None => self
                .out_dir
                .join(ExperimentSpec::default_trace_name(self.problem, self.solver, seed)),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out`, diagnostics to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return crate::error::EXIT_SETUP;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a, out, err),
        Command::Gen(a) => gen(a, out),
        Command::Check(a) => check(a, out, err),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let spec = args.spec()?;
    if args.repeat == 1 {
        let report = run(&spec)?;
        let _ = writeln!(out, "{report}");
        return Ok(report.exit_code());
    }
    let mut worst = EXIT_OK;
    for (seed, outcome) in run_batch(&spec, args.repeat, args.jobs, |s| args.trace_for(s)) {
        let code = match outcome {
            Ok(report) => {
                let _ = writeln!(out, "seed {seed}: {report}");
                report.exit_code()
            }
            Err(e) => {
                let _ = writeln!(err, "seed {seed}: error: {e}");
                e.exit_code()
            }
        };
        worst = worse(worst, code);
    }
    Ok(worst)
}

/// Setup errors outrank numerical failures, which outrank success.
fn worse(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        crate::error::EXIT_SETUP => 2,
        crate::error::EXIT_NUMERICAL => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data = ProblemData::generate(args.kind, &args.dims, &mut rng)?;
    for path in data.write(&args.out_dir)? {
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn check(args: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let [rows, cols] = args.dims.0[..] else {
        return Err(CliError::Setup(format!("check takes MxN dims, got {}", args.dims)));
    };
    let opts = CheckOptions {
        rows,
        cols,
        seed: args.seed,
        hessian_fault: args.inject_hessian_fault,
    };
    let outcomes = run_checks(&opts).map_err(CliError::from_solve)?;
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0).max(5);
    let _ = writeln!(out, "{:width$}  {:>24}  {:>10}  result", "check", "value", "bound");
    let mut failed = 0;
    for o in &outcomes {
        let value = o.value.map(format_float).unwrap_or_else(|| "-".into());
        let verdict = if o.skipped_check() {
            "skip"
        } else if o.passed() {
            "pass"
        } else {
            failed += 1;
            let _ = writeln!(err, "FAILED {}: {value} (needs {})", o.name, o.bound);
            "FAIL"
        };
        let _ = writeln!(
            out,
            "{:width$}  {value:>24}  {:>10}  {verdict}",
            o.name,
            o.bound.to_string()
        );
    }
    let _ = writeln!(out, "{} checks, {failed} failed", outcomes.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

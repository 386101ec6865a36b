//! `otm solve`: one experiment, or a batch of seeds with `--repeat`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use clap::ValueEnum;
use nalgebra::DMatrix;
use otm_core::baselines::{coot_am, frank_wolfe, fw_fixed_step, AmConfig, FwConfig, StepRule};
use otm_core::objectives::coot_square;
use otm_core::solvers::{solve_rcg, solve_rgd, solve_rtr, CgVariant, SolveResult, SolverConfig, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, EXIT_NUMERICAL, EXIT_OK};
use crate::io::{format_float, write_trace};
use crate::problem::{load_masks, Dims, Inputs, ProblemData, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Rgd,
    Rcg,
    Rtr,
    /// Frank-Wolfe with entropic oracle and `--fw-step` rule.
    Fw,
    /// Frank-Wolfe with unit step (iterate = oracle output).
    Fw1,
    /// Alternating minimization, coot only.
    Am,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Rgd => "rgd",
            SolverKind::Rcg => "rcg",
            SolverKind::Rtr => "rtr",
            SolverKind::Fw => "fw",
            SolverKind::Fw1 => "fw1",
            SolverKind::Am => "am",
        }
    }

    fn is_riemannian(self) -> bool {
        matches!(self, SolverKind::Rgd | SolverKind::Rcg | SolverKind::Rtr)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum FwStep {
    #[default]
    Harmonic,
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum CgRule {
    #[default]
    Hs,
    Fr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Init {
    /// `mu1 mu2'` (Sinkhorn-scaled indicator under a mask).
    #[default]
    Product,
    /// Seeded random interior point.
    Random,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub inputs: Inputs,
    /// Synthetic instance size, used when no input files are given.
    pub dims: Option<Dims>,
    pub seed: u64,
    pub init: Init,
    pub max_iter: usize,
    pub max_time: Option<Duration>,
    pub grad_tol: f64,
    pub cg: CgRule,
    pub epsilon: f64,
    pub fw_step: FwStep,
    pub temperature: f64,
    pub trace: PathBuf,
    /// Write real elapsed times; `false` writes zeros for reproducible files.
    pub clock: bool,
}

impl ExperimentSpec {
    pub fn default_trace_name(problem: ProblemKind, solver: SolverKind, seed: u64) -> String {
        format!("{problem}-{solver}-seed{seed}.csv")
    }

    fn check_compatible(&self) -> Result<(), CliError> {
        let p = self.problem;
        match self.solver {
            SolverKind::Am if p != ProblemKind::Coot => {
                return Err(CliError::Setup(format!(
                    "solver am needs the coot problem (two couplings), got {p}"
                )))
            }
            SolverKind::Fw | SolverKind::Fw1 if p == ProblemKind::Coot => {
                return Err(CliError::Setup(format!(
                    "solver {} works on one coupling; coot needs rgd, rcg, rtr or am",
                    self.solver
                )))
            }
            _ => {}
        }
        let masked = self.inputs.mask.is_some() || self.inputs.feature_mask.is_some();
        if masked && !self.solver.is_riemannian() {
            return Err(CliError::Setup(format!(
                "support masks need rgd, rcg or rtr, not {}",
                self.solver
            )));
        }
        Ok(())
    }

    fn instance(&self) -> Result<ProblemData, CliError> {
        if let Some(data) = ProblemData::load(self.problem, &self.inputs)? {
            if self.dims.is_some() {
                return Err(CliError::Setup(
                    "--dims generates an instance; drop it when reading input files".into(),
                ));
            }
            return Ok(data);
        }
        let Some(dims) = &self.dims else {
            return Err(CliError::Setup(
                "give input files (--input or per-file flags) or --dims".into(),
            ));
        };
        ProblemData::generate(self.problem, dims, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            max_time: self.max_time,
            grad_tol: self.grad_tol,
            cg_variant: match self.cg {
                CgRule::Hs => CgVariant::HestenesStiefel,
                CgRule::Fr => CgVariant::FletcherReeves,
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub seed: u64,
    pub status: Status,
    pub final_cost: f64,
    pub iterations: usize,
    pub trace: PathBuf,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::StepFailure => EXIT_NUMERICAL,
            _ => EXIT_OK,
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "status {} final_cost {} iterations {} trace {}",
            self.status.as_str(),
            format_float(self.final_cost),
            self.iterations,
            self.trace.display()
        )
    }
}

/// Runs one experiment and writes its trace. File I/O happens outside the
/// solver's clock.
pub fn run(spec: &ExperimentSpec) -> Result<Report, CliError> {
    spec.check_compatible()?;
    let data = spec.instance()?;
    let (mask, feature_mask) = load_masks(&spec.inputs)?;
    let pm = data.manifold(mask, feature_mask)?;
    let objective = data.objective(spec.temperature)?;
    let x0 = match spec.init {
        Init::Product => pm.product_coupling(),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1);
            pm.random_point(&mut rng)
        }
    }
    .map_err(CliError::setup)?;
    let plans: Vec<DMatrix<f64>> = x0.iter().map(|c| c.plan().clone()).collect();
    let pairs = data.marginal_pairs();

    let fw = FwConfig {
        epsilon: spec.epsilon,
        steps: match spec.fw_step {
            FwStep::Harmonic => StepRule::Harmonic,
            FwStep::LineSearch => StepRule::ExactLineSearch,
        },
        max_iter: spec.max_iter,
        max_time: spec.max_time,
        ..FwConfig::default()
    };
    let result: Result<SolveResult, _> = match spec.solver {
        SolverKind::Rgd => solve_rgd(&pm, objective.as_ref(), &x0, &spec.solver_config()),
        SolverKind::Rcg => solve_rcg(&pm, objective.as_ref(), &x0, &spec.solver_config()),
        SolverKind::Rtr => solve_rtr(&pm, objective.as_ref(), &x0, &spec.solver_config()),
        SolverKind::Fw => frank_wolfe(objective.as_ref(), &pairs[0].0, &pairs[0].1, &plans[0], &fw),
        SolverKind::Fw1 => fw_fixed_step(objective.as_ref(), &pairs[0].0, &pairs[0].1, &plans[0], &fw),
        SolverKind::Am => {
            let ProblemData::Coot(c) = &data else {
                unreachable!("checked by check_compatible")
            };
            let coot = coot_square(
                c.x.clone(),
                c.z.clone(),
                c.mu1.clone(),
                c.mu2.clone(),
                c.nu1.clone(),
                c.nu2.clone(),
            )
            .map_err(CliError::setup)?;
            let am = AmConfig {
                epsilon: spec.epsilon,
                max_iter: spec.max_iter,
                max_time: spec.max_time,
                ..AmConfig::default()
            };
            coot_am(&coot, &plans, &am)
        }
    };
    let result = result.map_err(CliError::from_solve)?;
    write_trace(&spec.trace, &result, spec.clock)?;
    Ok(Report {
        seed: spec.seed,
        status: result.status,
        final_cost: result.final_cost(),
        iterations: result.iterations(),
        trace: spec.trace.clone(),
    })
}

/// `trace.csv` -> `trace-seed7.csv`.
pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

/// Runs seeds `base.seed .. base.seed + repeat` on up to `jobs` threads.
/// `trace_for(seed)` names each run's trace file. Results come back in seed
/// order.
pub fn run_batch(
    base: &ExperimentSpec,
    repeat: usize,
    jobs: usize,
    trace_for: impl Fn(u64) -> PathBuf + Sync,
) -> Vec<(u64, Result<Report, CliError>)> {
    let seeds: Vec<u64> = (0..repeat as u64).map(|k| base.seed + k).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(repeat));
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, repeat.max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(k) else { break };
                let spec = ExperimentSpec {
                    seed,
                    trace: trace_for(seed),
                    ..base.clone()
                };
                let outcome = run(&spec);
                results
                    .lock()
                    .expect("no panics while holding the lock")
                    .push((seed, outcome));
            });
        }
    });
    let mut out = results.into_inner().expect("threads joined");
    out.sort_by_key(|(seed, _)| *seed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(problem: ProblemKind, solver: SolverKind, dims: &str, trace: PathBuf) -> ExperimentSpec {
        ExperimentSpec {
            problem,
            solver,
            inputs: Inputs::default(),
            dims: Some(dims.parse().unwrap()),
            seed: 0,
            init: Init::Product,
            max_iter: 200,
            max_time: None,
            grad_tol: 1e-6,
            cg: CgRule::Hs,
            epsilon: 1e-2,
            fw_step: FwStep::Harmonic,
            temperature: 0.1,
            trace,
            clock: true,
        }
    }

    #[test]
    fn seeded_path_inserts_before_extension() {
        assert_eq!(seeded_path(Path::new("out/t.csv"), 3), PathBuf::from("out/t-seed3.csv"));
        assert_eq!(seeded_path(Path::new("t"), 0), PathBuf::from("t-seed0"));
    }

    #[test]
    fn incompatible_pairs_are_setup_errors() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.csv");
        for (p, s, d) in [
            (ProblemKind::Gw, SolverKind::Am, "3x3"),
            (ProblemKind::Linear, SolverKind::Am, "3x3"),
            (ProblemKind::Coot, SolverKind::Fw1, "3x3x2x2"),
            (ProblemKind::Coot, SolverKind::Fw, "3x3x2x2"),
        ] {
            let err = run(&spec(p, s, d, t.clone())).unwrap_err();
            assert!(matches!(err, CliError::Setup(_)), "{p} {s}");
            assert!(err.to_string().contains(s.name()), "{err}");
        }
        assert!(!t.exists());
    }

    #[test]
    fn every_solver_runs_on_a_compatible_problem() {
        let dir = tempfile::tempdir().unwrap();
        for (p, s, d) in [
            (ProblemKind::Linear, SolverKind::Rgd, "3x4"),
            (ProblemKind::Gw, SolverKind::Rcg, "3x4"),
            (ProblemKind::Coot, SolverKind::Rtr, "3x4x2x3"),
            (ProblemKind::Robust, SolverKind::Rcg, "3x4x2"),
            (ProblemKind::Gw, SolverKind::Fw, "3x4"),
            (ProblemKind::Gw, SolverKind::Fw1, "3x4"),
            (ProblemKind::Coot, SolverKind::Am, "3x4x2x3"),
        ] {
            let t = dir.path().join(format!("{p}-{s}.csv"));
            let r = run(&spec(p, s, d, t.clone())).unwrap();
            assert!(r.final_cost.is_finite(), "{p} {s}");
            assert!(t.is_file());
        }
    }

    #[test]
    fn batch_results_are_in_seed_order_and_match_single_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = spec(ProblemKind::Gw, SolverKind::Rgd, "4x4", dir.path().join("unused.csv"));
        base.seed = 5;
        base.clock = false;
        let out = run_batch(&base, 4, 3, |s| dir.path().join(format!("b{s}.csv")));
        let seeds: Vec<u64> = out.iter().map(|(s, _)| *s).collect();
        assert_eq!(seeds, vec![5, 6, 7, 8]);
        for (seed, r) in out {
            let r = r.unwrap();
            let single = run(&ExperimentSpec {
                seed,
                trace: dir.path().join(format!("s{seed}.csv")),
                ..base.clone()
            })
            .unwrap();
            assert_eq!(r.final_cost.to_bits(), single.final_cost.to_bits());
            assert_eq!(std::fs::read(&r.trace).unwrap(), std::fs::read(&single.trace).unwrap());
        }
    }
}

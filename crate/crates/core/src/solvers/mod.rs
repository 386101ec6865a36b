//! Riemannian optimization drivers.
//!
//! All drivers work on a [`ProductManifold`]; a single coupling problem is a
//! one-component product. Each run records a cost trace against wall-clock
//! time measured from the start of the solve.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::manifold::{Coupling, TangentVector};
use crate::objectives::{plans, Objective};
use crate::product::ProductManifold;

mod rcg;
mod rgd;
mod rtr;

pub use rcg::solve_rcg;
pub use rgd::solve_rgd;
pub use rtr::solve_rtr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CgVariant {
    FletcherReeves,
    #[default]
    HestenesStiefel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionConfig {
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Inner truncated-CG stops once `|r| <= |r0| * min(|r0|^theta, kappa)`.
    pub kappa: f64,
    pub theta: f64,
    /// Minimum actual/predicted decrease ratio for accepting a step.
    pub accept_ratio: f64,
    /// Consecutive rejected steps tolerated before giving up.
    pub max_rejections: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            initial_radius: 1.0,
            max_radius: 100.0,
            kappa: 0.1,
            theta: 1.0,
            accept_ratio: 0.1,
            max_rejections: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub max_time: Option<Duration>,
    pub grad_tol: f64,
    pub armijo: ArmijoConfig,
    pub cg_variant: CgVariant,
    pub trust_region: TrustRegionConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            max_time: None,
            grad_tol: 1e-6,
            armijo: ArmijoConfig::default(),
            cg_variant: CgVariant::default(),
            trust_region: TrustRegionConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        let tr = &self.trust_region;
        let ok = self.grad_tol > 0.0
            && a.initial_step > 0.0
            && a.backtrack > 0.0
            && a.backtrack < 1.0
            && a.sufficient_decrease > 0.0
            && a.sufficient_decrease < 0.5
            && tr.initial_radius > 0.0
            && tr.max_radius >= tr.initial_radius
            && tr.kappa > 0.0
            && tr.theta > 0.0
            && tr.accept_ratio >= 0.0
            && tr.accept_ratio < 0.25;
        if !ok {
            return Err(Error::Validation(format!("invalid solver config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationCap,
    TimeCap,
    StepFailure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationCap => "iteration-cap",
            Status::TimeCap => "time-cap",
            Status::StepFailure => "step-failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub elapsed_sec: f64,
    pub cost: f64,
    pub grad_norm: Option<f64>,
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: Vec<Coupling>,
    pub trace: Vec<TraceRecord>,
    pub status: Status,
}

impl SolveResult {
    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.cost)
    }

    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iter)
    }
}

/// Shared bookkeeping for a solve: the problem, the clock and the trace.
pub(crate) struct Run<'a> {
    pub manifold: &'a ProductManifold,
    pub objective: &'a dyn Objective,
    pub cfg: &'a SolverConfig,
    start: Instant,
    pub trace: Vec<TraceRecord>,
}

/// A point with its cost, Euclidean gradient and Riemannian gradient.
pub(crate) struct Iterate {
    pub x: Vec<Coupling>,
    pub cost: f64,
    pub egrad: Vec<nalgebra::DMatrix<f64>>,
    pub grad: Vec<TangentVector>,
    pub grad_norm: f64,
}

impl<'a> Run<'a> {
    pub fn start(
        manifold: &'a ProductManifold,
        objective: &'a dyn Objective,
        x0: &[Coupling],
        cfg: &'a SolverConfig,
    ) -> Result<(Self, Iterate)> {
        cfg.validate()?;
        if x0.len() != manifold.len() {
            return Err(Error::Arity {
                expected: manifold.len(),
                got: x0.len(),
            });
        }
        if objective.shapes() != manifold.shapes() {
            return Err(Error::Validation(format!(
                "objective expects plans {:?}, manifold has {:?}",
                objective.shapes(),
                manifold.shapes()
            )));
        }
        objective.check(&plans(x0))?;
        let validated = manifold.point(x0.iter().map(|c| c.plan().clone()).collect())?;
        let run = Self {
            manifold,
            objective,
            cfg,
            start: Instant::now(),
            trace: Vec::new(),
        };
        let first = run.evaluate(validated)?;
        Ok((run, first))
    }

    pub fn evaluate(&self, x: Vec<Coupling>) -> Result<Iterate> {
        let refs = plans(&x);
        let cost = self.objective.cost(&refs);
        let egrad = self.objective.egrad(&refs);
        let grad = self.manifold.egrad_to_rgrad(&x, &egrad)?;
        let grad_norm = self.manifold.norm(&x, &grad)?;
        if !cost.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Validation("objective produced a non-finite value".into()));
        }
        Ok(Iterate {
            x,
            cost,
            egrad,
            grad,
            grad_norm,
        })
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn record(&mut self, iter: usize, it: &Iterate, step: Option<f64>) {
        self.trace.push(TraceRecord {
            iter,
            elapsed_sec: self.elapsed().as_secs_f64(),
            cost: it.cost,
            grad_norm: Some(it.grad_norm),
            step_size: step,
        });
    }

    /// Checks the stopping rules in priority order: gradient tolerance, then caps.
    pub fn stop_reason(&self, iter: usize, it: &Iterate) -> Option<Status> {
        if it.grad_norm <= self.cfg.grad_tol {
            Some(Status::Converged)
        } else if iter >= self.cfg.max_iter {
            Some(Status::IterationCap)
        } else if self.cfg.max_time.is_some_and(|t| self.elapsed() >= t) {
            Some(Status::TimeCap)
        } else {
            None
        }
    }

    pub fn finish(self, it: Iterate, status: Status) -> SolveResult {
        SolveResult {
            point: it.x,
            trace: self.trace,
            status,
        }
    }

    /// Backtracking along `direction` until
    /// `f(R(x, t d)) <= f(x) + c t g(grad, d)`. Returns the accepted iterate
    /// and step, or `None` after the configured number of halvings.
    pub fn armijo(&self, it: &Iterate, direction: &[TangentVector], slope: f64) -> Result<Option<(Iterate, f64)>> {
        let a = &self.cfg.armijo;
        let mut t = a.initial_step;
        for _ in 0..=a.max_backtracks {
            let step = crate::product::scale(direction, t);
            match self.manifold.retract(&it.x, &step) {
                Ok(candidate) => {
                    let cost = self.objective.cost(&plans(&candidate));
                    if cost <= it.cost + a.sufficient_decrease * t * slope {
                        match self.evaluate(candidate) {
                            Ok(next) => return Ok(Some((next, t))),
                            Err(e) if is_step_rejection(&e) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
                Err(e) if is_step_rejection(&e) => {}
                Err(e) => return Err(e),
            }
            t *= a.backtrack;
        }
        Ok(None)
    }
}

/// Numerical failures that mean "this step was too long", not a broken setup.
pub(crate) fn is_step_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::Overflow { .. } | Error::Convergence { .. } | Error::BoundaryPoint { .. }
    ) || matches!(e, Error::Validation(msg) if msg.contains("non-finite"))
}

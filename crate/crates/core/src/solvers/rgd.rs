use super::{Run, SolveResult, SolverConfig, Status};
use crate::error::Result;
use crate::manifold::Coupling;
use crate::objectives::Objective;
use crate::product::{scale, ProductManifold};

/// Riemannian steepest descent with Armijo backtracking.
pub fn solve_rgd(
    manifold: &ProductManifold,
    objective: &dyn Objective,
    x0: &[Coupling],
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let (mut run, mut it) = Run::start(manifold, objective, x0, cfg)?;
    run.record(0, &it, None);
    let mut iter = 0;
    loop {
        if let Some(status) = run.stop_reason(iter, &it) {
            return Ok(run.finish(it, status));
        }
        let direction = scale(&it.grad, -1.0);
        let slope = -it.grad_norm * it.grad_norm;
        match run.armijo(&it, &direction, slope)? {
            Some((next, t)) => {
                iter += 1;
                it = next;
                run.record(iter, &it, Some(t));
            }
            None => return Ok(run.finish(it, Status::StepFailure)),
        }
    }
}

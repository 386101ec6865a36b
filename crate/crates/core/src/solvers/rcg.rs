use super::{CgVariant, Run, SolveResult, SolverConfig, Status};
use crate::error::Result;
use crate::manifold::Coupling;
use crate::objectives::Objective;
use crate::product::{add_scaled, scale, ProductManifold};

/// Riemannian nonlinear conjugate gradients.
///
/// Directions are transported by re-projecting onto the tangent space at the
/// new point; `beta` is clipped at zero and the direction falls back to the
/// negative gradient whenever it is not a descent direction.
pub fn solve_rcg(
    manifold: &ProductManifold,
    objective: &dyn Objective,
    x0: &[Coupling],
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let (mut run, mut it) = Run::start(manifold, objective, x0, cfg)?;
    run.record(0, &it, None);
    let mut direction = scale(&it.grad, -1.0);
    let mut iter = 0;
    loop {
        if let Some(status) = run.stop_reason(iter, &it) {
            return Ok(run.finish(it, status));
        }
        let mut slope = manifold.metric(&it.x, &it.grad, &direction)?;
        if !(slope < 0.0) {
            direction = scale(&it.grad, -1.0);
            slope = -it.grad_norm * it.grad_norm;
        }
        let Some((next, t)) = run.armijo(&it, &direction, slope)? else {
            return Ok(run.finish(it, Status::StepFailure));
        };
        iter += 1;
        run.record(iter, &next, Some(t));

        let moved_dir = manifold.transport(&next.x, &direction)?;
        let beta = match cfg.cg_variant {
            CgVariant::FletcherReeves => (next.grad_norm * next.grad_norm) / (it.grad_norm * it.grad_norm),
            CgVariant::HestenesStiefel => {
                let moved_grad = manifold.transport(&next.x, &it.grad)?;
                let diff = add_scaled(&next.grad, &moved_grad, -1.0);
                let num = manifold.metric(&next.x, &next.grad, &diff)?;
                let den = manifold.metric(&next.x, &moved_dir, &diff)?;
                if den.abs() > f64::MIN_POSITIVE {
                    num / den
                } else {
                    0.0
                }
            }
        };
        let beta = if beta.is_finite() { beta.max(0.0) } else { 0.0 };
        direction = add_scaled(&scale(&next.grad, -1.0), &moved_dir, beta);
        it = next;
    }
}

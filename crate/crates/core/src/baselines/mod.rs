//! Comparison algorithms: Frank-Wolfe with an entropic linear minimization
//! oracle and alternate minimization for COOT.

use std::time::Duration;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::sinkhorn::SinkhornConfig;

mod am;
mod fw;

pub use am::{coot_am, coot_surrogate, AmConfig};
pub use fw::{frank_wolfe, fw_fixed_step, FwConfig, StepRule};

/// Iterates stop once the largest entry change falls to this level.
pub const DEFAULT_MOVE_TOL: f64 = 1e-10;

/// Tolerance on the marginals of a user-supplied starting plan.
const START_TOL: f64 = 1e-8;

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn validate_common(epsilon: f64, move_tol: f64, sinkhorn: &SinkhornConfig, max_time: Option<Duration>) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(move_tol >= 0.0) {
        return Err(Error::Validation(format!(
            "move tolerance must be >= 0, got {move_tol}"
        )));
    }
    if max_time.is_some_and(|t| t.is_zero()) {
        return Err(Error::Validation("time budget must be positive".into()));
    }
    sinkhorn.validate()
}

/// Checks that `plan` is a nonnegative transport plan between the marginals.
/// Zeros are allowed: baselines only need a point in the polytope.
pub(crate) fn check_plan(plan: &DMatrix<f64>, mu1: &Marginal, mu2: &Marginal) -> Result<()> {
    if plan.shape() != (mu1.len(), mu2.len()) {
        return Err(Error::Shape {
            expected: (mu1.len(), mu2.len()),
            got: plan.shape(),
        });
    }
    if let Some(bad) = plan.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!(
            "starting plan entry {bad} (column-major) is negative or non-finite"
        )));
    }
    let rows = plan.column_sum();
    let cols = plan.row_sum();
    let rr = (&rows - mu1.weights()).amax();
    let cr = (cols.transpose() - mu2.weights()).amax();
    if rr.max(cr) > START_TOL {
        return Err(Error::Validation(format!(
            "starting plan violates the marginals by {:e}",
            rr.max(cr)
        )));
    }
    Ok(())
}

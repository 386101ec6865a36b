//! Transport objectives.
//!
//! An [`Objective`] maps a tuple of plans to a cost and supplies the Euclidean
//! gradient and, when available, the Euclidean Hessian-vector product. The
//! manifold layer turns those into their Riemannian counterparts.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::Coupling;

mod coot;
mod gw;
mod linear;
mod robust;

pub use coot::{coot_square, Coot};
pub use gw::{gw_frobenius, gw_reference_cost, squared_loss, GromovWasserstein};
pub use linear::{linear_ot, LinearOt, SquaredDistance};
pub use robust::{robust_max, RobustMax};

/// Largest dimension accepted by the quadruple-loop reference evaluators.
pub const REFERENCE_MAX_DIM: usize = 32;

pub trait Objective {
    /// Expected `(rows, cols)` of every plan argument.
    fn shapes(&self) -> Vec<(usize, usize)>;

    fn arity(&self) -> usize {
        self.shapes().len()
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64;

    fn egrad(&self, x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>>;

    /// Directional derivative of [`Objective::egrad`] along `dir`.
    fn ehess_vec(&self, _x: &[&DMatrix<f64>], _dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    /// Whether the cost is exactly quadratic (or affine) in the plans.
    fn is_quadratic(&self) -> bool {
        false
    }

    fn check(&self, x: &[&DMatrix<f64>]) -> Result<()> {
        let shapes = self.shapes();
        if shapes.len() != x.len() {
            return Err(Error::Arity {
                expected: shapes.len(),
                got: x.len(),
            });
        }
        for (expected, plan) in shapes.into_iter().zip(x) {
            if plan.shape() != expected {
                return Err(Error::Shape {
                    expected,
                    got: plan.shape(),
                });
            }
        }
        Ok(())
    }
}

/// Borrows the plans of a coupling tuple.
pub fn plans(points: &[Coupling]) -> Vec<&DMatrix<f64>> {
    points.iter().map(Coupling::plan).collect()
}

pub(crate) fn check_square(name: &str, s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Validation(format!("{name} must be square, got {:?}", s.shape())));
    }
    check_finite(name, s)
}

pub(crate) fn check_finite(name: &str, s: &DMatrix<f64>) -> Result<()> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{name} has non-finite entries")));
    }
    Ok(())
}

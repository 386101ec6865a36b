use nalgebra::DMatrix;

use super::{check_finite, Objective};
use crate::error::Result;

/// Linear transport cost `<gamma, C>`.
#[derive(Debug, Clone)]
pub struct LinearOt {
    cost: DMatrix<f64>,
}

pub fn linear_ot(cost: DMatrix<f64>) -> Result<LinearOt> {
    check_finite("cost matrix", &cost)?;
    Ok(LinearOt { cost })
}

impl LinearOt {
    pub fn cost_matrix(&self) -> &DMatrix<f64> {
        &self.cost
    }
}

impl Objective for LinearOt {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![self.cost.shape()]
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64 {
        x[0].dot(&self.cost)
    }

    fn egrad(&self, _x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        vec![self.cost.clone()]
    }

    fn ehess_vec(&self, _x: &[&DMatrix<f64>], dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(dir[0].nrows(), dir[0].ncols())])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

/// `||gamma - target||_F^2`; its minimizer is `target` whenever `target` is
/// itself an interior coupling.
#[derive(Debug, Clone)]
pub struct SquaredDistance {
    target: DMatrix<f64>,
}

impl SquaredDistance {
    pub fn new(target: DMatrix<f64>) -> Result<Self> {
        check_finite("target", &target)?;
        Ok(Self { target })
    }
}

impl Objective for SquaredDistance {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![self.target.shape()]
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64 {
        (x[0] - &self.target).norm_squared()
    }

    fn egrad(&self, x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        vec![(x[0] - &self.target) * 2.0]
    }

    fn ehess_vec(&self, _x: &[&DMatrix<f64>], dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![dir[0] * 2.0])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::testing::egrad_fd_error;

    #[test]
    fn cost_examples() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let obj = linear_ot(c.clone()).unwrap();
        let product = DMatrix::from_element(2, 2, 0.25);
        assert!((obj.cost(&[&product]) - 0.5).abs() < 1e-15);
        let near_identity = DMatrix::from_row_slice(2, 2, &[0.5 - 1e-9, 1e-9, 1e-9, 0.5 - 1e-9]);
        assert!(obj.cost(&[&near_identity]) < 1e-8);
        let zero = linear_ot(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.cost(&[&product]), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let obj = linear_ot(DMatrix::zeros(2, 3)).unwrap();
        assert!(obj.check(&[&DMatrix::zeros(3, 2)]).is_err());
        assert!(obj.check(&[]).is_err());
    }

    #[test]
    fn squared_distance_gradient() {
        let t = DMatrix::from_fn(3, 2, |i, j| 0.1 * (i + 2 * j) as f64);
        let obj = SquaredDistance::new(t).unwrap();
        let x = DMatrix::from_fn(3, 2, |i, j| 0.3 - 0.05 * (i * j) as f64);
        assert!(egrad_fd_error(&obj, &[x]) < 1e-7);
    }
}

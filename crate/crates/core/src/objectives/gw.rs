//! Gromov-Wasserstein objectives.

use nalgebra::{DMatrix, DVector};

use super::{check_square, Objective, REFERENCE_MAX_DIM};
use crate::error::{Error, Result};

/// Squared-loss GW written as `-<gamma' S1 gamma, S2>`.
///
/// For couplings with marginals `(mu1, mu2)`, the full squared-loss
/// objective `sum (S1_ik - S2_jl)^2 gamma_ij gamma_kl` equals
/// `mu1' (S1.^2) mu1 + mu2' (S2.^2) mu2 + 2 * cost`, see
/// [`GromovWasserstein::squared_loss_cost`].
#[derive(Debug, Clone)]
pub struct GromovWasserstein {
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
}

pub fn gw_frobenius(s1: DMatrix<f64>, s2: DMatrix<f64>) -> Result<GromovWasserstein> {
    check_square("S1", &s1)?;
    check_square("S2", &s2)?;
    Ok(GromovWasserstein { s1, s2 })
}

pub fn squared_loss(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

impl GromovWasserstein {
    pub fn similarities(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.s1, &self.s2)
    }

    /// The two coupling-independent terms of the squared-loss expansion.
    pub fn squared_loss_constants(&self, mu1: &DVector<f64>, mu2: &DVector<f64>) -> (f64, f64) {
        let c1 = mu1.dot(&(self.s1.component_mul(&self.s1) * mu1));
        let c2 = mu2.dot(&(self.s2.component_mul(&self.s2) * mu2));
        (c1, c2)
    }

    /// Full squared-loss GW value of a coupling with marginals `(mu1, mu2)`.
    pub fn squared_loss_cost(&self, gamma: &DMatrix<f64>, mu1: &DVector<f64>, mu2: &DVector<f64>) -> f64 {
        let (c1, c2) = self.squared_loss_constants(mu1, mu2);
        c1 + c2 + 2.0 * self.cost(&[gamma])
    }
}

impl Objective for GromovWasserstein {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![(self.s1.nrows(), self.s2.nrows())]
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64 {
        let g = x[0];
        -(g.transpose() * &self.s1 * g).dot(&self.s2)
    }

    fn egrad(&self, x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        vec![self.bilinear(x[0])]
    }

    fn ehess_vec(&self, _x: &[&DMatrix<f64>], dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![self.bilinear(dir[0])])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

impl GromovWasserstein {
    /// `-(S1 A S2' + S1' A S2)`.
    fn bilinear(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        -(&self.s1 * a * self.s2.transpose() + self.s1.tr_mul(a) * &self.s2)
    }
}

/// `sum_ijkl loss(S1_ik, S2_jl) gamma_ij gamma_kl` by the literal quadruple loop.
/// Only for dimensions up to [`REFERENCE_MAX_DIM`].
pub fn gw_reference_cost(
    gamma: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    loss: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let (m, n) = gamma.shape();
    if s1.shape() != (m, m) || s2.shape() != (n, n) {
        return Err(Error::Validation(format!(
            "similarities {:?}, {:?} do not match plan {:?}",
            s1.shape(),
            s2.shape(),
            gamma.shape()
        )));
    }
    if m.max(n) > REFERENCE_MAX_DIM {
        return Err(Error::Validation(format!(
            "reference evaluator limited to dims <= {REFERENCE_MAX_DIM}"
        )));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            for k in 0..m {
                for l in 0..n {
                    total += loss(s1[(i, k)], s2[(j, l)]) * gamma[(i, j)] * gamma[(k, l)];
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::testing::{egrad_fd_error, ehess_fd_error};
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_similarities() {
        let obj = gw_frobenius(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let g = DMatrix::from_element(2, 2, 0.25);
        assert_abs_diff_eq!(obj.cost(&[&g]), -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(obj.egrad(&[&g])[0], DMatrix::from_element(2, 2, -0.5), epsilon = 1e-15);
    }

    #[test]
    fn reference_examples() {
        let s = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        let g = DMatrix::identity(3, 3) / 3.0;
        assert_eq!(gw_reference_cost(&g, &s, &s, squared_loss).unwrap(), 0.0);
        assert_eq!(gw_reference_cost(&g, &s, &s, |_, _| 0.0).unwrap(), 0.0);
        let big = DMatrix::zeros(33, 33);
        assert!(gw_reference_cost(&DMatrix::zeros(33, 2), &big, &DMatrix::zeros(2, 2), squared_loss).is_err());
    }

    #[test]
    fn nonsymmetric_derivatives_match_finite_differences() {
        let s1 = DMatrix::from_fn(3, 3, |i, k| ((i * 7 + k * 3) % 5) as f64 * 0.2);
        let s2 = DMatrix::from_fn(4, 4, |j, l| ((j * 5 + l) % 7) as f64 * 0.1);
        let obj = gw_frobenius(s1, s2).unwrap();
        let g = DMatrix::from_fn(3, 4, |i, j| 0.05 + 0.01 * (i + j) as f64);
        let d = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) % 3) as f64 - 1.0);
        assert!(egrad_fd_error(&obj, std::slice::from_ref(&g)) < 1e-7);
        assert!(ehess_fd_error(&obj, &[g], &[d]) < 1e-7);
    }

    #[test]
    fn rejects_non_square() {
        assert!(gw_frobenius(DMatrix::zeros(2, 3), DMatrix::zeros(2, 2)).is_err());
    }
}

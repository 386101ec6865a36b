//! Co-optimal transport with the squared loss.

use nalgebra::DMatrix;

use super::{check_finite, Objective, REFERENCE_MAX_DIM};
use crate::error::{Error, Result};
use crate::marginal::Marginal;

/// `sum_ijkl (X_ik - Z_jl)^2 G1_ij G2_kl` over a sample coupling `G1` (m x n)
/// and a feature coupling `G2` (d1 x d2).
///
/// Evaluated as `sum X_ik^2 mu1_i nu1_k + sum Z_jl^2 mu2_j nu2_l - 2 <X, G1 Z G2'>`,
/// with the constant terms taken from the marginals.
#[derive(Debug, Clone)]
pub struct Coot {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    mu1: Marginal,
    mu2: Marginal,
    nu1: Marginal,
    nu2: Marginal,
    constant: f64,
}

pub fn coot_square(
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    mu1: Marginal,
    mu2: Marginal,
    nu1: Marginal,
    nu2: Marginal,
) -> Result<Coot> {
    check_finite("X", &x)?;
    check_finite("Z", &z)?;
    let consistent =
        x.nrows() == mu1.len() && z.nrows() == mu2.len() && x.ncols() == nu1.len() && z.ncols() == nu2.len();
    if !consistent {
        return Err(Error::Validation(format!(
            "COOT dims: X {:?}, Z {:?}, marginals {}, {}, {}, {}",
            x.shape(),
            z.shape(),
            mu1.len(),
            mu2.len(),
            nu1.len(),
            nu2.len()
        )));
    }
    let xsq = x.component_mul(&x);
    let zsq = z.component_mul(&z);
    let constant = mu1.weights().dot(&(&xsq * nu1.weights())) + mu2.weights().dot(&(&zsq * nu2.weights()));
    Ok(Coot {
        x,
        z,
        mu1,
        mu2,
        nu1,
        nu2,
        constant,
    })
}

impl Coot {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// `(mu1, mu2, nu1, nu2)`.
    pub fn marginals(&self) -> (&Marginal, &Marginal, &Marginal, &Marginal) {
        (&self.mu1, &self.mu2, &self.nu1, &self.nu2)
    }

    /// Quadruple-loop evaluation; dims up to [`REFERENCE_MAX_DIM`].
    pub fn reference_cost(&self, g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> Result<f64> {
        self.check(&[g1, g2])?;
        let (m, n) = g1.shape();
        let (d1, d2) = g2.shape();
        if m.max(n).max(d1).max(d2) > REFERENCE_MAX_DIM {
            return Err(Error::Validation(format!(
                "reference evaluator limited to dims <= {REFERENCE_MAX_DIM}"
            )));
        }
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..n {
                for k in 0..d1 {
                    for l in 0..d2 {
                        let d = self.x[(i, k)] - self.z[(j, l)];
                        total += d * d * g1[(i, j)] * g2[(k, l)];
                    }
                }
            }
        }
        Ok(total)
    }

    /// Sample-side cost `M1_ij = sum_kl (X_ik - Z_jl)^2 G2_kl` for a fixed
    /// feature coupling, so that the COOT cost equals `<M1, G1>`.
    pub fn sample_cost_matrix(&self, g2: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = g2.column_sum();
        let cols = g2.row_sum().transpose();
        let xs = self.x.component_mul(&self.x) * rows;
        let zs = self.z.component_mul(&self.z) * cols;
        let mut m = self.sample_cross(g2) * -2.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] += xs[i] + zs[j];
            }
        }
        m
    }

    /// Feature-side cost `M2_kl = sum_ij (X_ik - Z_jl)^2 G1_ij`, so that the
    /// COOT cost equals `<M2, G2>`.
    pub fn feature_cost_matrix(&self, g1: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = g1.column_sum();
        let cols = g1.row_sum().transpose();
        let xs = self.x.component_mul(&self.x).tr_mul(&rows);
        let zs = self.z.component_mul(&self.z).tr_mul(&cols);
        let mut m = self.feature_cross(g1) * -2.0;
        for l in 0..m.ncols() {
            for k in 0..m.nrows() {
                m[(k, l)] += xs[k] + zs[l];
            }
        }
        m
    }

    /// `X G2 Z'` (m x n).
    fn sample_cross(&self, g2: &DMatrix<f64>) -> DMatrix<f64> {
        &self.x * g2 * self.z.transpose()
    }

    /// `X' G1 Z` (d1 x d2).
    fn feature_cross(&self, g1: &DMatrix<f64>) -> DMatrix<f64> {
        self.x.tr_mul(g1) * &self.z
    }
}

impl Objective for Coot {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![(self.mu1.len(), self.mu2.len()), (self.nu1.len(), self.nu2.len())]
    }

    fn cost(&self, x: &[&DMatrix<f64>]) -> f64 {
        self.constant - 2.0 * self.sample_cross(x[1]).dot(x[0])
    }

    fn egrad(&self, x: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        vec![self.sample_cross(x[1]) * -2.0, self.feature_cross(x[0]) * -2.0]
    }

    fn ehess_vec(&self, _x: &[&DMatrix<f64>], dir: &[&DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![
            self.sample_cross(dir[1]) * -2.0,
            self.feature_cross(dir[0]) * -2.0,
        ])
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

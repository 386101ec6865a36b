//! Riemannian geometry of the interior of the transportation polytope.
//!
//! Points are strictly positive couplings with fixed marginals, tangent
//! vectors are matrices with zero row and column sums, and the metric is the
//! Fisher information metric `g(eta, xi) = sum(eta .* xi ./ gamma)`. With a
//! support mask, every elementwise formula runs over the allowed entries only
//! and the remaining entries are held at exactly zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::marginal::{Marginal, MASS_TOL};
use crate::mask::{SupportMask, DEFAULT_EXACT_THRESHOLD};
use crate::multipliers::{self, Pins, ProjectionConfig};
use crate::sinkhorn::{marginal_residual, sinkhorn_scale, sinkhorn_scale_log, SinkhornConfig};

/// Marginal tolerance for a matrix to count as a coupling.
pub const COUPLING_TOL: f64 = 1e-8;
/// Row/column-sum tolerance for a matrix to count as a tangent vector.
pub const TANGENT_TOL: f64 = 1e-10;
/// Default cap on `max(xi ./ gamma)` before a retraction step is rejected.
pub const DEFAULT_OVERFLOW_CAP: f64 = 30.0;
/// Entry scale of the Gaussian log-kernel behind [`TransportManifold::random_point`].
pub const RANDOM_POINT_SCALE: f64 = 0.1;

/// A point of the manifold: strictly positive (on its support) with the
/// manifold's marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: DMatrix<f64>,
}

impl Coupling {
    pub(crate) fn from_plan_unchecked(plan: DMatrix<f64>) -> Self {
        Self { plan }
    }

    pub fn plan(&self) -> &DMatrix<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> DMatrix<f64> {
        self.plan
    }

    pub fn shape(&self) -> (usize, usize) {
        self.plan.shape()
    }
}

/// A direction at a coupling: zero row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    direction: DMatrix<f64>,
}

impl TangentVector {
    pub(crate) fn from_matrix_unchecked(direction: DMatrix<f64>) -> Self {
        Self { direction }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            direction: DMatrix::zeros(rows, cols),
        }
    }

    pub fn direction(&self) -> &DMatrix<f64> {
        &self.direction
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.direction
    }

    pub fn shape(&self) -> (usize, usize) {
        self.direction.shape()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            direction: &self.direction * factor,
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &TangentVector, factor: f64) -> Self {
        Self {
            direction: &self.direction + &other.direction * factor,
        }
    }

    /// Largest absolute row or column sum.
    pub fn sum_residual(&self) -> f64 {
        let rows = self.direction.row_iter().map(|r| r.sum().abs());
        let cols = self.direction.column_iter().map(|c| c.sum().abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// The coupling manifold `M(mu1, mu2)`, optionally restricted to a support mask.
#[derive(Debug, Clone)]
pub struct TransportManifold {
    mu1: Marginal,
    mu2: Marginal,
    mask: Option<SupportMask>,
    pins: Pins,
    pub projection: ProjectionConfig,
    pub sinkhorn: SinkhornConfig,
    pub overflow_cap: f64,
}

impl TransportManifold {
    pub fn new(mu1: Marginal, mu2: Marginal) -> Result<Self> {
        let (sum1, sum2) = (mu1.total(), mu2.total());
        if (sum1 - sum2).abs() > MASS_TOL {
            return Err(Error::MassMismatch { sum1, sum2 });
        }
        let pins = Pins {
            rows: vec![mu1.len() - 1],
            cols: vec![mu2.len() - 1],
        };
        Ok(Self {
            mu1,
            mu2,
            mask: None,
            pins,
            projection: ProjectionConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            overflow_cap: DEFAULT_OVERFLOW_CAP,
        })
    }

    /// Builds a manifold from raw weights, reporting a total-mass mismatch
    /// before validating each marginal.
    pub fn from_weights(mu1: &[f64], mu2: &[f64]) -> Result<Self> {
        let (sum1, sum2): (f64, f64) = (mu1.iter().sum(), mu2.iter().sum());
        if (sum1 - sum2).abs() > MASS_TOL {
            return Err(Error::MassMismatch { sum1, sum2 });
        }
        Self::new(Marginal::new(mu1)?, Marginal::new(mu2)?)
    }

    /// Sparsity-constrained manifold: couplings vanish outside `mask`.
    pub fn masked(mu1: Marginal, mu2: Marginal, mask: SupportMask) -> Result<Self> {
        Self::masked_with_threshold(mu1, mu2, mask, DEFAULT_EXACT_THRESHOLD)
    }

    pub fn masked_with_threshold(
        mu1: Marginal,
        mu2: Marginal,
        mask: SupportMask,
        exact_threshold: usize,
    ) -> Result<Self> {
        let mut manifold = Self::new(mu1, mu2)?;
        if mask.shape() != manifold.shape() {
            return Err(Error::Shape {
                expected: manifold.shape(),
                got: mask.shape(),
            });
        }
        mask.validate(exact_threshold)?;
        let (rows, cols) = mask.components();
        manifold.pins = Pins::from_components(&rows, &cols);
        manifold.mask = Some(mask);
        Ok(manifold)
    }

    pub fn with_sinkhorn(mut self, cfg: SinkhornConfig) -> Self {
        self.sinkhorn = cfg;
        self
    }

    pub fn with_projection(mut self, cfg: ProjectionConfig) -> Self {
        self.projection = cfg;
        self
    }

    pub fn mu1(&self) -> &Marginal {
        &self.mu1
    }

    pub fn mu2(&self) -> &Marginal {
        &self.mu2
    }

    pub fn mask(&self) -> Option<&SupportMask> {
        self.mask.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.mu1.len(), self.mu2.len())
    }

    /// Dimension of the tangent space.
    pub fn dim(&self) -> usize {
        let (m, n) = self.shape();
        match &self.mask {
            None => (m - 1) * (n - 1),
            Some(mask) => mask.allowed_count() + self.pins.rows.len() - m - n,
        }
    }

    #[inline]
    fn allowed(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m.is_allowed(i, j))
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if shape != self.shape() {
            return Err(Error::Shape {
                expected: self.shape(),
                got: shape,
            });
        }
        Ok(())
    }

    /// Zeroes the masked-out entries.
    fn restrict(&self, mut z: DMatrix<f64>) -> DMatrix<f64> {
        if let Some(mask) = &self.mask {
            for j in 0..z.ncols() {
                for i in 0..z.nrows() {
                    if !mask.is_allowed(i, j) {
                        z[(i, j)] = 0.0;
                    }
                }
            }
        }
        z
    }

    /// `num ./ gamma` on the support, 0 elsewhere.
    fn ratio(&self, num: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(num.nrows(), num.ncols(), |i, j| {
            if self.allowed(i, j) {
                num[(i, j)] / gamma[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Validates and wraps a plan as a point of this manifold.
    pub fn coupling(&self, plan: DMatrix<f64>) -> Result<Coupling> {
        self.check_shape(plan.shape())?;
        for j in 0..plan.ncols() {
            for i in 0..plan.nrows() {
                let v = plan[(i, j)];
                let ok = if self.allowed(i, j) {
                    v.is_finite() && v > 0.0
                } else {
                    v == 0.0
                };
                if !ok {
                    return Err(Error::BoundaryPoint { row: i, col: j });
                }
            }
        }
        let residual = marginal_residual(&plan, &self.mu1, &self.mu2);
        if residual > COUPLING_TOL {
            return Err(Error::Validation(format!(
                "plan misses the marginals by {residual:e} (tolerance {COUPLING_TOL:e})"
            )));
        }
        Ok(Coupling::from_plan_unchecked(plan))
    }

    /// Validates and wraps a matrix as a tangent vector of this manifold.
    pub fn tangent(&self, direction: DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(direction.shape())?;
        if let Some(mask) = &self.mask {
            for j in 0..direction.ncols() {
                for i in 0..direction.nrows() {
                    if !mask.is_allowed(i, j) && direction[(i, j)] != 0.0 {
                        return Err(Error::Validation(format!(
                            "tangent entry ({i}, {j}) is outside the support"
                        )));
                    }
                }
            }
        }
        let t = TangentVector::from_matrix_unchecked(direction);
        let residual = t.sum_residual();
        if !(residual <= TANGENT_TOL) {
            return Err(Error::Validation(format!(
                "direction has row/column sums up to {residual:e} (tolerance {TANGENT_TOL:e})"
            )));
        }
        Ok(t)
    }

    fn check_point(&self, gamma: &Coupling) -> Result<()> {
        self.check_shape(gamma.shape())?;
        for j in 0..gamma.plan.ncols() {
            for i in 0..gamma.plan.nrows() {
                if self.allowed(i, j) && !(gamma.plan[(i, j)] > 0.0) {
                    return Err(Error::BoundaryPoint { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    /// Fisher information metric.
    pub fn metric(&self, gamma: &Coupling, eta: &TangentVector, xi: &TangentVector) -> Result<f64> {
        self.check_point(gamma)?;
        self.check_shape(eta.shape())?;
        self.check_shape(xi.shape())?;
        Ok(self.metric_unchecked(&gamma.plan, &eta.direction, &xi.direction))
    }

    pub(crate) fn metric_unchecked(&self, gamma: &DMatrix<f64>, eta: &DMatrix<f64>, xi: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for j in 0..gamma.ncols() {
            for i in 0..gamma.nrows() {
                if self.allowed(i, j) {
                    acc += eta[(i, j)] * xi[(i, j)] / gamma[(i, j)];
                }
            }
        }
        acc
    }

    pub fn norm(&self, gamma: &Coupling, xi: &TangentVector) -> Result<f64> {
        Ok(self.metric(gamma, xi, xi)?.max(0.0).sqrt())
    }

    fn multipliers(
        &self,
        gamma: &DMatrix<f64>,
        row_rhs: &DVector<f64>,
        col_rhs: &DVector<f64>,
    ) -> Result<multipliers::Multipliers> {
        // The actual sums of gamma stand in for (mu1, mu2): they agree up to the
        // scaling tolerance, and using them makes the output exactly tangent.
        let (sums1, sums2) = Self::row_col_sums(gamma);
        multipliers::solve(gamma, &sums1, &sums2, row_rhs, col_rhs, &self.pins, &self.projection)
    }

    fn row_col_sums(z: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let rows = DVector::from_iterator(z.nrows(), z.row_iter().map(|r| r.sum()));
        let cols = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.sum()));
        (rows, cols)
    }

    /// `(alpha 1' + 1 beta') .* gamma`.
    fn normal_component(gamma: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |i, j| {
            (alpha[i] + beta[j]) * gamma[(i, j)]
        })
    }

    /// Orthogonal projection (in the Fisher metric) of an ambient matrix onto
    /// the tangent space at `gamma`.
    pub fn project_tangent(&self, gamma: &Coupling, z: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_point(gamma)?;
        self.check_shape(z.shape())?;
        self.project_unchecked(&gamma.plan, z.clone())
    }

    fn project_unchecked(&self, gamma: &DMatrix<f64>, z: DMatrix<f64>) -> Result<TangentVector> {
        let z = self.restrict(z);
        let (rows, cols) = Self::row_col_sums(&z);
        let mult = self.multipliers(gamma, &rows, &cols)?;
        Ok(TangentVector::from_matrix_unchecked(
            z - Self::normal_component(gamma, &mult.alpha, &mult.beta),
        ))
    }

    /// `Sinkhorn(gamma .* exp(xi ./ gamma))` with the manifold's default scaling config.
    pub fn retract(&self, gamma: &Coupling, xi: &TangentVector) -> Result<Coupling> {
        self.retract_with(gamma, xi, &self.sinkhorn)
    }

    pub fn retract_with(&self, gamma: &Coupling, xi: &TangentVector, cfg: &SinkhornConfig) -> Result<Coupling> {
        self.check_point(gamma)?;
        self.check_shape(xi.shape())?;
        let (m, n) = self.shape();
        let ratio = self.ratio(&xi.direction, &gamma.plan);
        let mut worst = f64::NEG_INFINITY;
        for &r in ratio.iter() {
            if r.is_nan() || r == f64::INFINITY {
                return Err(Error::Overflow {
                    ratio: r,
                    cap: self.overflow_cap,
                });
            }
            worst = worst.max(r);
        }
        if worst > self.overflow_cap {
            return Err(Error::Overflow {
                ratio: worst,
                cap: self.overflow_cap,
            });
        }
        let scaled = if cfg.log_domain {
            let log_kernel = DMatrix::from_fn(m, n, |i, j| {
                if self.allowed(i, j) {
                    gamma.plan[(i, j)].ln() + ratio[(i, j)]
                } else {
                    f64::NEG_INFINITY
                }
            });
            sinkhorn_scale_log(&log_kernel, &self.mu1, &self.mu2, cfg)?
        } else {
            let kernel = DMatrix::from_fn(m, n, |i, j| {
                if self.allowed(i, j) {
                    gamma.plan[(i, j)] * ratio[(i, j)].exp()
                } else {
                    0.0
                }
            });
            sinkhorn_scale(&kernel, &self.mu1, &self.mu2, cfg)?
        };
        // Entries that underflow are floored at the smallest normal value so
        // the point stays in the interior and 1/gamma stays finite.
        let mut plan = scaled.plan;
        for j in 0..n {
            for i in 0..m {
                if !self.allowed(i, j) {
                    continue;
                }
                let v = plan[(i, j)];
                if v.is_nan() {
                    return Err(Error::BoundaryPoint { row: i, col: j });
                }
                if v < f64::MIN_POSITIVE {
                    plan[(i, j)] = f64::MIN_POSITIVE;
                }
            }
        }
        Ok(Coupling::from_plan_unchecked(plan))
    }

    /// Riemannian gradient from the Euclidean one: `Proj(gamma .* egrad)`.
    pub fn egrad_to_rgrad(&self, gamma: &Coupling, egrad: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_point(gamma)?;
        self.check_shape(egrad.shape())?;
        self.project_unchecked(&gamma.plan, gamma.plan.component_mul(egrad))
    }

    /// Riemannian Hessian-vector product from Euclidean derivatives.
    ///
    /// With `Z = gamma .* egrad` and multipliers `(alpha, beta)`, the gradient
    /// is `Z - (alpha 1' + 1 beta') .* gamma`. Differentiating along `xi`:
    ///
    /// ```text
    /// dZ      = xi .* egrad + gamma .* ehess_xi
    /// dalpha .* mu1 + gamma  dbeta  = dZ 1  - xi  beta
    /// dbeta  .* mu2 + gamma' dalpha = dZ' 1 - xi' alpha
    /// dgrad   = dZ - (dalpha 1' + 1 dbeta') .* gamma - (alpha 1' + 1 beta') .* xi
    /// Hess xi = Proj(dgrad - grad .* xi ./ (2 gamma))
    /// ```
    pub fn ehess_to_rhess(
        &self,
        gamma: &Coupling,
        egrad: &DMatrix<f64>,
        ehess_xi: &DMatrix<f64>,
        xi: &TangentVector,
    ) -> Result<TangentVector> {
        self.check_point(gamma)?;
        self.check_shape(egrad.shape())?;
        self.check_shape(ehess_xi.shape())?;
        self.check_shape(xi.shape())?;
        let g = &gamma.plan;
        let xi = self.restrict(xi.direction.clone());
        let egrad = self.restrict(egrad.clone());
        let ehess_xi = self.restrict(ehess_xi.clone());

        let z = g.component_mul(&egrad);
        let (rows, cols) = Self::row_col_sums(&z);
        let mult = self.multipliers(g, &rows, &cols)?;
        let grad = &z - Self::normal_component(g, &mult.alpha, &mult.beta);

        let dz = xi.component_mul(&egrad) + g.component_mul(&ehess_xi);
        let (drows, dcols) = Self::row_col_sums(&dz);
        let drows = drows - &xi * &mult.beta;
        let dcols = dcols - xi.tr_mul(&mult.alpha);
        let dmult = self.multipliers(g, &drows, &dcols)?;
        let dgrad = dz
            - Self::normal_component(g, &dmult.alpha, &dmult.beta)
            - Self::normal_component(&xi, &mult.alpha, &mult.beta);

        let correction = self.ratio(&grad.component_mul(&xi), g) * 0.5;
        self.project_unchecked(g, dgrad - correction)
    }

    /// `mu1 mu2'` for the full manifold; the scaled support indicator with a mask.
    pub fn product_coupling(&self) -> Result<Coupling> {
        match &self.mask {
            None => Ok(Coupling::from_plan_unchecked(
                self.mu1.weights() * self.mu2.weights().transpose(),
            )),
            Some(mask) => {
                let s = sinkhorn_scale(&mask.indicator(), &self.mu1, &self.mu2, &self.sinkhorn)?;
                Ok(Coupling::from_plan_unchecked(s.plan))
            }
        }
    }

    /// `Sinkhorn(exp(0.1 G))` with standard normal `G` on the support.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Coupling> {
        self.random_point_scaled(rng, RANDOM_POINT_SCALE)
    }

    pub fn random_point_scaled<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Result<Coupling> {
        let (m, n) = self.shape();
        let mut log_kernel = DMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                let g: f64 = rng.sample(StandardNormal);
                log_kernel[(i, j)] = if self.allowed(i, j) {
                    scale * g
                } else {
                    f64::NEG_INFINITY
                };
            }
        }
        if scale == 0.0 && self.mask.is_none() {
            return self.product_coupling();
        }
        let s = sinkhorn_scale_log(&log_kernel, &self.mu1, &self.mu2, &self.sinkhorn)?;
        Ok(Coupling::from_plan_unchecked(s.plan))
    }

    /// Projection of a standard normal ambient matrix.
    pub fn random_tangent<R: Rng + ?Sized>(&self, gamma: &Coupling, rng: &mut R) -> Result<TangentVector> {
        self.check_point(gamma)?;
        let (m, n) = self.shape();
        let mut z = DMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                z[(i, j)] = rng.sample(StandardNormal);
            }
        }
        self.project_unchecked(&gamma.plan, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipliers::Gauge;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform2() -> TransportManifold {
        TransportManifold::from_weights(&[0.5, 0.5], &[0.5, 0.5]).unwrap()
    }

    fn quarter() -> Coupling {
        Coupling::from_plan_unchecked(DMatrix::from_element(2, 2, 0.25))
    }

    fn checker() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
    }

    fn random_manifold(rng: &mut ChaCha8Rng, m: usize, n: usize) -> TransportManifold {
        let draw = |rng: &mut ChaCha8Rng, k: usize| {
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (a, b) = (draw(rng, m), draw(rng, n));
        // Renormalise the last entry so both masses agree to the last bit.
        let fix = |mut v: Vec<f64>| {
            let head: f64 = v[..v.len() - 1].iter().sum();
            *v.last_mut().unwrap() = 1.0 - head;
            v
        };
        TransportManifold::from_weights(&fix(a), &fix(b)).unwrap()
    }

    #[test]
    fn construction_checks_mass() {
        assert!(TransportManifold::from_weights(&[0.3, 0.7], &[0.2, 0.2, 0.6]).is_ok());
        assert!(matches!(
            TransportManifold::from_weights(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn metric_examples() {
        let mf = uniform2();
        let eta = mf.tangent(checker()).unwrap();
        assert_abs_diff_eq!(mf.metric(&quarter(), &eta, &eta).unwrap(), 16.0, epsilon = 1e-12);
        let flipped = eta.scaled(-1.0);
        assert_abs_diff_eq!(mf.metric(&quarter(), &eta, &flipped).unwrap(), -16.0, epsilon = 1e-12);
        assert_eq!(mf.metric(&quarter(), &eta, &TangentVector::zeros(2, 2)).unwrap(), 0.0);
        assert_abs_diff_eq!(mf.norm(&quarter(), &eta).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn metric_rejects_boundary_and_shape() {
        let mf = uniform2();
        let boundary = Coupling::from_plan_unchecked(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        let xi = TangentVector::zeros(2, 2);
        assert!(matches!(
            mf.metric(&boundary, &xi, &xi),
            Err(Error::BoundaryPoint { .. })
        ));
        assert!(matches!(
            mf.metric(&quarter(), &TangentVector::zeros(2, 3), &xi),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let mf = uniform2();
        let p = mf.project_tangent(&quarter(), &checker()).unwrap();
        assert_abs_diff_eq!(p.direction().clone(), checker(), epsilon = 1e-15);

        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.25, 0.25, 0.0]);
        let p = mf.project_tangent(&quarter(), &z).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.125, 0.125, 0.125, -0.125]);
        assert_abs_diff_eq!(p.direction().clone(), expected, epsilon = 1e-15);

        let mf = TransportManifold::new(Marginal::uniform(3).unwrap(), Marginal::uniform(4).unwrap()).unwrap();
        let gamma = mf.product_coupling().unwrap();
        let p = mf.project_tangent(&gamma, &DMatrix::from_element(3, 4, 1.0)).unwrap();
        assert!(p.direction().amax() < 1e-14);
    }

    #[test]
    fn retraction_examples() {
        let mf = uniform2();
        let zero = TangentVector::zeros(2, 2);
        let r = mf.retract(&quarter(), &zero).unwrap();
        assert_abs_diff_eq!(r.plan().clone(), quarter().into_plan(), epsilon = 1e-9);

        let xi = mf.tangent(checker() * 0.1).unwrap();
        let r = mf.retract(&quarter(), &xi).unwrap();
        let e = 0.8f64.exp();
        let d = 0.5 * e / (e + 1.0);
        let expected = DMatrix::from_row_slice(2, 2, &[d, 0.5 - d, 0.5 - d, d]);
        assert_abs_diff_eq!(r.plan().clone(), expected, epsilon = 1e-9);

        let big = mf.tangent(checker() * 25.0).unwrap();
        assert!(matches!(mf.retract(&quarter(), &big), Err(Error::Overflow { .. })));
    }

    #[test]
    fn rgrad_examples() {
        let mf = uniform2();
        let g = mf
            .egrad_to_rgrad(&quarter(), &DMatrix::from_element(2, 2, 3.5))
            .unwrap();
        assert!(g.direction().amax() < 1e-15);
        let e = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = mf.egrad_to_rgrad(&quarter(), &e).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.125, 0.125, 0.125, -0.125]);
        assert_abs_diff_eq!(g.direction().clone(), expected, epsilon = 1e-15);
    }

    #[test]
    fn rgrad_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mf = random_manifold(&mut rng, 4, 5);
        let gamma = mf.random_point(&mut rng).unwrap();
        for _ in 0..100 {
            let e = DMatrix::from_fn(4, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let xi = mf.random_tangent(&gamma, &mut rng).unwrap();
            let grad = mf.egrad_to_rgrad(&gamma, &e).unwrap();
            let lhs = mf.metric(&gamma, &grad, &xi).unwrap();
            let rhs = e.dot(xi.direction());
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gauge_choice_does_not_change_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mf = random_manifold(&mut rng, 4, 5);
        let alt = mf.clone().with_projection(ProjectionConfig {
            gauge: Gauge::PinAlpha,
            ..Default::default()
        });
        let gamma = mf.random_point(&mut rng).unwrap();
        let z = DMatrix::from_fn(4, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = mf.project_tangent(&gamma, &z).unwrap();
        let b = alt.project_tangent(&gamma, &z).unwrap();
        assert!((a.direction() - b.direction()).amax() <= 1e-12);
    }

    #[test]
    fn hessian_of_linear_cost_is_curved_and_linear_in_xi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mf = random_manifold(&mut rng, 3, 4);
        let gamma = mf.random_point(&mut rng).unwrap();
        let c = DMatrix::from_fn(3, 4, |_, _| rng.random::<f64>());
        let zero = DMatrix::zeros(3, 4);
        let xi = mf.random_tangent(&gamma, &mut rng).unwrap();
        let h = mf.ehess_to_rhess(&gamma, &c, &zero, &xi).unwrap();
        assert!(h.direction().amax() > 1e-6);
        let h0 = mf
            .ehess_to_rhess(&gamma, &c, &zero, &TangentVector::zeros(3, 4))
            .unwrap();
        assert_eq!(h0.direction().amax(), 0.0);
        let h2 = mf.ehess_to_rhess(&gamma, &c, &zero, &xi.scaled(2.0)).unwrap();
        assert!((h2.direction() - h.direction() * 2.0).amax() < 1e-12);
    }

    #[test]
    fn random_point_is_deterministic_and_valid() {
        let mf = TransportManifold::from_weights(&[0.3, 0.7], &[0.2, 0.2, 0.6]).unwrap();
        let a = mf.random_point(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = mf.random_point(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(mf.coupling(a.into_plan()).is_ok());
        let p = mf.random_point_scaled(&mut ChaCha8Rng::seed_from_u64(5), 0.0).unwrap();
        assert_eq!(p, mf.product_coupling().unwrap());
    }

    #[test]
    fn random_tangent_is_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mf = random_manifold(&mut rng, 5, 3);
        let gamma = mf.random_point(&mut rng).unwrap();
        let xi = mf.random_tangent(&gamma, &mut rng).unwrap();
        assert!(xi.sum_residual() <= TANGENT_TOL);
    }

    #[test]
    fn product_coupling_uniform() {
        assert_eq!(uniform2().product_coupling().unwrap(), quarter());
    }
}

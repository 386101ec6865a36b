//! Products of coupling manifolds.
//!
//! Points and tangent vectors are tuples, one entry per component; the metric
//! is the sum of the component metrics and every other operation acts
//! componentwise. A single-component product behaves exactly like its
//! component, so the solvers only ever deal with products.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::{Coupling, TangentVector, TransportManifold};
use crate::sinkhorn::SinkhornConfig;

#[derive(Debug, Clone)]
pub struct ProductManifold {
    components: Vec<TransportManifold>,
}

impl From<TransportManifold> for ProductManifold {
    fn from(m: TransportManifold) -> Self {
        Self { components: vec![m] }
    }
}

impl ProductManifold {
    pub fn new(components: Vec<TransportManifold>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("product needs at least one component".into()));
        }
        Ok(Self { components })
    }

    /// `k` copies of the same manifold.
    pub fn homogeneous(base: TransportManifold, k: usize) -> Result<Self> {
        Self::new(vec![base; k])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[TransportManifold] {
        &self.components
    }

    pub fn component(&self, index: usize) -> &TransportManifold {
        &self.components[index]
    }

    pub fn components_mut(&mut self) -> &mut [TransportManifold] {
        &mut self.components
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.components.iter().map(|c| c.shape()).collect()
    }

    pub fn dim(&self) -> usize {
        self.components.iter().map(|c| c.dim()).sum()
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        if got != self.components.len() {
            return Err(Error::Arity {
                expected: self.components.len(),
                got,
            });
        }
        Ok(())
    }

    /// Validates each plan against its component and wraps the tuple.
    pub fn point(&self, plans: Vec<DMatrix<f64>>) -> Result<Vec<Coupling>> {
        self.check_arity(plans.len())?;
        self.components.iter().zip(plans).map(|(c, p)| c.coupling(p)).collect()
    }

    pub fn metric(&self, x: &[Coupling], eta: &[TangentVector], xi: &[TangentVector]) -> Result<f64> {
        self.check_arity(x.len())?;
        self.check_arity(eta.len())?;
        self.check_arity(xi.len())?;
        let mut total = 0.0;
        for (((c, p), e), v) in self.components.iter().zip(x).zip(eta).zip(xi) {
            total += c.metric(p, e, v)?;
        }
        Ok(total)
    }

    pub fn norm(&self, x: &[Coupling], xi: &[TangentVector]) -> Result<f64> {
        Ok(self.metric(x, xi, xi)?.max(0.0).sqrt())
    }

    pub fn project_tangent(&self, x: &[Coupling], z: &[DMatrix<f64>]) -> Result<Vec<TangentVector>> {
        self.check_arity(x.len())?;
        self.check_arity(z.len())?;
        self.components
            .iter()
            .zip(x)
            .zip(z)
            .map(|((c, p), z)| c.project_tangent(p, z))
            .collect()
    }

    /// Re-projects tangent vectors from another point (vector transport).
    pub fn transport(&self, to: &[Coupling], xi: &[TangentVector]) -> Result<Vec<TangentVector>> {
        self.check_arity(to.len())?;
        self.check_arity(xi.len())?;
        self.components
            .iter()
            .zip(to)
            .zip(xi)
            .map(|((c, p), v)| c.project_tangent(p, v.direction()))
            .collect()
    }

    pub fn retract(&self, x: &[Coupling], xi: &[TangentVector]) -> Result<Vec<Coupling>> {
        self.check_arity(x.len())?;
        self.check_arity(xi.len())?;
        self.components
            .iter()
            .zip(x)
            .zip(xi)
            .map(|((c, p), v)| c.retract(p, v))
            .collect()
    }

    pub fn retract_with(&self, x: &[Coupling], xi: &[TangentVector], cfg: &SinkhornConfig) -> Result<Vec<Coupling>> {
        self.check_arity(x.len())?;
        self.check_arity(xi.len())?;
        self.components
            .iter()
            .zip(x)
            .zip(xi)
            .map(|((c, p), v)| c.retract_with(p, v, cfg))
            .collect()
    }

    pub fn egrad_to_rgrad(&self, x: &[Coupling], egrad: &[DMatrix<f64>]) -> Result<Vec<TangentVector>> {
        self.check_arity(x.len())?;
        self.check_arity(egrad.len())?;
        self.components
            .iter()
            .zip(x)
            .zip(egrad)
            .map(|((c, p), g)| c.egrad_to_rgrad(p, g))
            .collect()
    }

    pub fn ehess_to_rhess(
        &self,
        x: &[Coupling],
        egrad: &[DMatrix<f64>],
        ehess_xi: &[DMatrix<f64>],
        xi: &[TangentVector],
    ) -> Result<Vec<TangentVector>> {
        self.check_arity(x.len())?;
        self.check_arity(egrad.len())?;
        self.check_arity(ehess_xi.len())?;
        self.check_arity(xi.len())?;
        (0..self.len())
            .map(|i| self.components[i].ehess_to_rhess(&x[i], &egrad[i], &ehess_xi[i], &xi[i]))
            .collect()
    }

    pub fn product_coupling(&self) -> Result<Vec<Coupling>> {
        self.components.iter().map(|c| c.product_coupling()).collect()
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Coupling>> {
        self.components.iter().map(|c| c.random_point(rng)).collect()
    }

    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &[Coupling], rng: &mut R) -> Result<Vec<TangentVector>> {
        self.check_arity(x.len())?;
        self.components
            .iter()
            .zip(x)
            .map(|(c, p)| c.random_tangent(p, rng))
            .collect()
    }

    pub fn zero_tangent(&self) -> Vec<TangentVector> {
        self.components
            .iter()
            .map(|c| {
                let (m, n) = c.shape();
                TangentVector::zeros(m, n)
            })
            .collect()
    }
}

/// `a * xi` for a tangent tuple.
pub fn scale(xi: &[TangentVector], a: f64) -> Vec<TangentVector> {
    xi.iter().map(|v| v.scaled(a)).collect()
}

/// `xi + a * eta` for tangent tuples.
pub fn add_scaled(xi: &[TangentVector], eta: &[TangentVector], a: f64) -> Vec<TangentVector> {
    xi.iter().zip(eta).map(|(x, e)| x.add_scaled(e, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::Marginal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> TransportManifold {
        TransportManifold::from_weights(&[0.2, 0.3, 0.5], &[0.4, 0.6]).unwrap()
    }

    #[test]
    fn single_component_matches_base_bitwise() {
        let m = base();
        let p = ProductManifold::from(m.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = m.random_point(&mut rng).unwrap();
        let xi = m.random_tangent(&x, &mut rng).unwrap();
        let e = DMatrix::from_fn(3, 2, |i, j| (i as f64) - 0.5 * j as f64);
        let xs = vec![x.clone()];
        let xis = vec![xi.clone()];
        assert_eq!(p.metric(&xs, &xis, &xis).unwrap(), m.metric(&x, &xi, &xi).unwrap());
        assert_eq!(p.retract(&xs, &xis).unwrap()[0], m.retract(&x, &xi).unwrap());
        assert_eq!(
            p.egrad_to_rgrad(&xs, std::slice::from_ref(&e)).unwrap()[0],
            m.egrad_to_rgrad(&x, &e).unwrap()
        );
        assert_eq!(
            p.ehess_to_rhess(&xs, std::slice::from_ref(&e), std::slice::from_ref(&e), &xis)
                .unwrap()[0],
            m.ehess_to_rhess(&x, &e, &e, &xi).unwrap()
        );
    }

    #[test]
    fn metric_is_additive() {
        let p = ProductManifold::homogeneous(
            TransportManifold::new(Marginal::uniform(2).unwrap(), Marginal::uniform(2).unwrap()).unwrap(),
            3,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = p.random_point(&mut rng).unwrap();
        let mut xi = p.zero_tangent();
        xi[0] = p.component(0).random_tangent(&x[0], &mut rng).unwrap();
        let single = p.component(0).metric(&x[0], &xi[0], &xi[0]).unwrap();
        assert_eq!(p.metric(&x, &xi, &xi).unwrap(), single);
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let p = ProductManifold::homogeneous(base(), 2).unwrap();
        let x = p.product_coupling().unwrap();
        let err = p.retract(&x[..1], &p.zero_tangent()[..1]).unwrap_err();
        assert_eq!(err, Error::Arity { expected: 2, got: 1 });
        assert!(ProductManifold::new(vec![]).is_err());
    }
}

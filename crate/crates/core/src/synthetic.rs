//! Seeded random problem instances.
//!
//! Marginals are uniform on the open simplex (sorted-uniform spacings);
//! matrices have independent uniform `[0, 1)` entries and similarity
//! matrices are symmetrized as `(A + A') / 2`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::objectives::{
    coot_square, gw_frobenius, linear_ot, robust_max, Coot, GromovWasserstein, LinearOt, RobustMax,
};

/// Uniform sample from the open `k - 1` simplex.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Result<Marginal> {
    if k == 0 {
        return Err(Error::Validation("simplex dimension must be positive".into()));
    }
    loop {
        let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut w = Vec::with_capacity(k);
        let mut prev = 0.0;
        for &c in &cuts {
            w.push(c - prev);
            prev = c;
        }
        w.push(1.0 - prev);
        // Repeated or zero draws give an empty spacing; redraw.
        if w.iter().all(|x| *x > 0.0) {
            return Marginal::new(w);
        }
    }
}

pub fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major fill so that files written row by row follow the draw order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.random::<f64>();
        }
    }
    m
}

pub fn symmetric_matrix<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let a = uniform_matrix(rng, k, k);
    (&a + a.transpose()) * 0.5
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Validation(format!("dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub mu1: Marginal,
    pub mu2: Marginal,
    pub cost: DMatrix<f64>,
}

impl LinearProblem {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> Result<Self> {
        check_dims(&[m, n])?;
        let mu1 = sample_simplex(rng, m)?;
        let mu2 = sample_simplex(rng, n)?;
        let cost = uniform_matrix(rng, m, n);
        Ok(Self { mu1, mu2, cost })
    }

    pub fn objective(&self) -> Result<LinearOt> {
        linear_ot(self.cost.clone())
    }
}

#[derive(Debug, Clone)]
pub struct GwProblem {
    pub mu1: Marginal,
    pub mu2: Marginal,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
}

impl GwProblem {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> Result<Self> {
        check_dims(&[m, n])?;
        let mu1 = sample_simplex(rng, m)?;
        let mu2 = sample_simplex(rng, n)?;
        let s1 = symmetric_matrix(rng, m);
        let s2 = symmetric_matrix(rng, n);
        Ok(Self { mu1, mu2, s1, s2 })
    }

    pub fn objective(&self) -> Result<GromovWasserstein> {
        gw_frobenius(self.s1.clone(), self.s2.clone())
    }
}

#[derive(Debug, Clone)]
pub struct CootProblem {
    pub mu1: Marginal,
    pub mu2: Marginal,
    pub nu1: Marginal,
    pub nu2: Marginal,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl CootProblem {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, d1: usize, d2: usize) -> Result<Self> {
        check_dims(&[m, n, d1, d2])?;
        let mu1 = sample_simplex(rng, m)?;
        let mu2 = sample_simplex(rng, n)?;
        let nu1 = sample_simplex(rng, d1)?;
        let nu2 = sample_simplex(rng, d2)?;
        let x = uniform_matrix(rng, m, d1);
        let z = uniform_matrix(rng, n, d2);
        Ok(Self {
            mu1,
            mu2,
            nu1,
            nu2,
            x,
            z,
        })
    }

    pub fn objective(&self) -> Result<Coot> {
        coot_square(
            self.x.clone(),
            self.z.clone(),
            self.mu1.clone(),
            self.mu2.clone(),
            self.nu1.clone(),
            self.nu2.clone(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct RobustProblem {
    pub mu1: Marginal,
    pub mu2: Marginal,
    pub costs: Vec<DMatrix<f64>>,
}

impl RobustProblem {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, count: usize) -> Result<Self> {
        check_dims(&[m, n, count])?;
        let mu1 = sample_simplex(rng, m)?;
        let mu2 = sample_simplex(rng, n)?;
        let costs = (0..count).map(|_| uniform_matrix(rng, m, n)).collect();
        Ok(Self { mu1, mu2, costs })
    }

    pub fn objective(&self, temperature: f64) -> Result<RobustMax> {
        robust_max(self.costs.clone(), temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn simplex_samples_are_valid(seed in any::<u64>(), k in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = sample_simplex(&mut rng, k).unwrap();
            prop_assert!(w.as_slice().iter().all(|x| *x > 0.0));
            prop_assert!((w.total() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn simplex_coordinates_have_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 4;
        let n = 20000;
        let mut mean = vec![0.0; k];
        for _ in 0..n {
            for (m, w) in mean.iter_mut().zip(sample_simplex(&mut rng, k).unwrap().as_slice()) {
                *m += w / n as f64;
            }
        }
        for m in mean {
            assert!((m - 0.25).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn gw_similarities_are_symmetric_and_seeded() {
        let a = GwProblem::generate(&mut ChaCha8Rng::seed_from_u64(3), 5, 6).unwrap();
        let b = GwProblem::generate(&mut ChaCha8Rng::seed_from_u64(3), 5, 6).unwrap();
        assert_eq!(a.s1, a.s1.transpose());
        assert_eq!(a.s2, a.s2.transpose());
        assert_eq!(a.s1, b.s1);
        assert_eq!(a.mu2, b.mu2);
        assert!(a.s1.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn zero_dims_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(LinearProblem::generate(&mut rng, 0, 3).is_err());
        assert!(CootProblem::generate(&mut rng, 3, 3, 0, 2).is_err());
        assert!(sample_simplex(&mut rng, 0).is_err());
    }
}

//! Benchmark fixtures.

use nalgebra::DMatrix;
use otm_core::synthetic::{sample_simplex, uniform_matrix};
use otm_core::{Coupling, TransportManifold};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub manifold: TransportManifold,
    pub point: Coupling,
    /// Ambient matrix to project.
    pub ambient: DMatrix<f64>,
}

/// Random marginals, a random interior point and a uniform `[0, 1)` ambient
/// matrix at size `m x n`.
pub fn fixture(m: usize, n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifold = TransportManifold::new(
        sample_simplex(&mut rng, m).expect("positive dims"),
        sample_simplex(&mut rng, n).expect("positive dims"),
    )
    .expect("simplex marginals have equal mass");
    let point = manifold.random_point(&mut rng).expect("sinkhorn converges");
    let ambient = uniform_matrix(&mut rng, m, n);
    Fixture {
        manifold,
        point,
        ambient,
    }
}

/// Gibbs kernel `exp(-C / eps)` of a uniform cost matrix.
pub fn kernel(m: usize, n: usize, eps: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    uniform_matrix(&mut rng, m, n).map(|c| (-c / eps).exp())
}

use nalgebra::DMatrix;
use otm_core::diagnostics::{block_decomposition_error, product_single_component_identical};
use otm_core::synthetic::sample_simplex;
use otm_core::{Error, Marginal, ProductManifold, SupportMask, TransportManifold};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn uniform(k: usize) -> Marginal {
    Marginal::uniform(k).unwrap()
}

fn mask(rows: &[&str]) -> SupportMask {
    rows.join("\n").parse().unwrap()
}

#[test]
fn diagonal_2x2_mask_is_rank_deficient() {
    let err = TransportManifold::masked(uniform(2), uniform(2), mask(&["10", "01"])).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Rank {
                allowed: 2,
                required: 3
            }
        ),
        "{err:?}"
    );
}

#[test]
fn empty_row_is_structural() {
    let err = TransportManifold::masked(uniform(3), uniform(3), mask(&["111", "000", "111"])).unwrap_err();
    assert!(matches!(err, Error::Structural { .. }), "{err:?}");
}

#[test]
fn missing_total_support_names_an_entry() {
    let err = TransportManifold::masked(uniform(3), uniform(3), mask(&["111", "011", "011"])).unwrap_err();
    assert_eq!(err, Error::Support { row: 0, col: 1 });
}

#[test]
fn full_mask_matches_the_unmasked_manifold_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mu1, mu2) = (
        sample_simplex(&mut rng, 4).unwrap(),
        sample_simplex(&mut rng, 3).unwrap(),
    );
    let plain = TransportManifold::new(mu1.clone(), mu2.clone()).unwrap();
    let full = TransportManifold::masked(mu1, mu2, SupportMask::full(4, 3)).unwrap();
    let gamma = plain.random_point(&mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let gamma_full = full.random_point(&mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!(gamma.plan(), gamma_full.plan());
    let z = DMatrix::from_fn(4, 3, |i, j| (i as f64 - 1.5) * (j as f64 + 0.5));
    let a = plain.project_tangent(&gamma, &z).unwrap();
    let b = full.project_tangent(&gamma, &z).unwrap();
    assert_eq!(a.direction(), b.direction());
    let ra = plain.retract(&gamma, &a.scaled(0.01)).unwrap();
    let rb = full.retract(&gamma, &b.scaled(0.01)).unwrap();
    assert_eq!(ra.plan(), rb.plan());
    assert_eq!(
        plain.metric(&gamma, &a, &a).unwrap().to_bits(),
        full.metric(&gamma, &b, &b).unwrap().to_bits()
    );
}

#[test]
fn homogeneous_product_acts_componentwise() {
    let base = TransportManifold::from_weights(&[0.2, 0.3, 0.5], &[0.6, 0.4]).unwrap();
    let pm = ProductManifold::homogeneous(base.clone(), 3).unwrap();
    assert_eq!(pm.dim(), 3 * base.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = pm.random_point(&mut rng).unwrap();
    let z: Vec<DMatrix<f64>> = (0..3)
        .map(|k| DMatrix::from_fn(3, 2, |i, j| ((i + 2 * j + k) as f64).sin()))
        .collect();
    let xi = pm.project_tangent(&x, &z).unwrap();
    let y = pm.retract(&x, &xi).unwrap();
    let mut total = 0.0;
    for k in 0..3 {
        let own = base.project_tangent(&x[k], &z[k]).unwrap();
        assert_eq!(own.direction(), xi[k].direction());
        assert_eq!(base.retract(&x[k], &own).unwrap().plan(), y[k].plan());
        total += base.metric(&x[k], &own, &own).unwrap();
    }
    assert!((pm.metric(&x, &xi, &xi).unwrap() - total).abs() <= 1e-15 * total.max(1.0));
}

#[test]
fn single_component_product_is_bitwise_the_base() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base = TransportManifold::new(
        sample_simplex(&mut rng, 5).unwrap(),
        sample_simplex(&mut rng, 4).unwrap(),
    )
    .unwrap();
    for seed in 0..5 {
        assert!(product_single_component_identical(&base, seed).unwrap());
    }
    let masked = TransportManifold::masked(
        uniform(4),
        uniform(4),
        SupportMask::block_diagonal(&[(2, 2), (2, 2)]).unwrap(),
    )
    .unwrap();
    assert!(product_single_component_identical(&masked, 0).unwrap());
}

#[test]
fn product_rejects_wrong_arity() {
    let base = TransportManifold::from_weights(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let pm = ProductManifold::homogeneous(base, 2).unwrap();
    let one = vec![DMatrix::from_element(2, 2, 0.25)];
    assert!(matches!(pm.point(one), Err(Error::Arity { expected: 2, got: 1 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn block_masks_decompose(seed in any::<u64>(), sizes in prop::collection::vec(2usize..5, 2..4)) {
        prop_assume!(sizes.iter().sum::<usize>() <= 8);
        let blocks: Vec<(usize, usize)> = sizes.iter().map(|s| (*s, *s)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = block_decomposition_error(&blocks, &mut rng).unwrap();
        prop_assert!(err <= 1e-10, "blocks {blocks:?}: {err}");
    }
}

use ising_core::gen::GridBoundary;
use ising_core::isoradial::{rhombic_lattice, square_lattice, RhombicKind};
use ising_core::planar_map::dual_pair;
use ising_core::sembed::{
    build_sembedding, factorization_s_check, isoradial_pair, perturbed_isoradial, properness_check, recover_weights,
    s_laplacian,
};
use ising_core::sholo::{self, default_base};
use ising_core::svg::sembedding_svg;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn perturbed_embeddings_round_trip(seed in any::<u64>(), eps in 0.0f64..0.2) {
        let iso = square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap();
        let (map, dual) = (iso.map, iso.dual);
        let (w, s) = perturbed_isoradial(&map, &dual, eps, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(properness_check(&s, &dual).proper);
        let rec = recover_weights(&s, &dual).unwrap();
        let input = sholo::quad_thetas(&dual, &w);
        for (a, b) in rec.theta.iter().zip(&input) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let f = factorization_s_check(&map, &s, &dual).unwrap();
        prop_assert!(f.residual < 1e-9 && f.conjugate_residual < 1e-9);
        let lap = s_laplacian(&s, &dual).unwrap();
        prop_assert!((&lap.matrix - lap.matrix.transpose()).amax() < 1e-12);
    }
}

#[test]
fn rhombic_embeddings_are_proper_and_render() {
    for iso in [
        rhombic_lattice(RhombicKind::Triangular, 3, 3, 0.5, GridBoundary::Wired).unwrap(),
        rhombic_lattice(RhombicKind::Honeycomb, 3, 3, 0.5, GridBoundary::Wired).unwrap(),
        rhombic_lattice(RhombicKind::Rectangular { theta: 0.4 }, 3, 4, 0.5, GridBoundary::Wired).unwrap(),
    ] {
        let (f1, f2) = isoradial_pair(&iso.map, &iso.dual).unwrap();
        let s = build_sembedding(&iso.dual, &iso.weights, &f1, &f2, default_base(&iso.dual)).unwrap();
        let r = sembedding_svg(&s, &iso.dual);
        assert!(!r.warning);
        assert_eq!(r.svg.matches("<polygon").count(), iso.dual.quads.len());
        // the embedding reproduces the rhombi up to a similarity
        let lap = s_laplacian(&s, &iso.dual).unwrap();
        assert!(lap.b.iter().all(|b| b.abs() < 1e-12));
    }
}

#[test]
fn dirac_pair_needs_rhombi() {
    let map = ising_core::gen::square_grid(3, 4, 1.0, GridBoundary::Wired).unwrap();
    // stretching keeps the rhombi (rectangles are isoradial); moving a vertex does not
    let mut pos = map.positions().to_vec();
    pos[5] += ising_core::C64::new(0.1, 0.05);
    let map = ising_core::planar_map::build_map(&pos, map.edges(), map.arcs()).unwrap();
    let dual = dual_pair(&map).unwrap();
    assert!(matches!(isoradial_pair(&map, &dual), Err(ising_core::Error::Domain(_))));
}

use ising_core::gen::{square_grid, GridBoundary};
use ising_core::ising_enum::{CorrelatorRequest, Oracle};
use ising_core::kacward::Fermions;
use ising_core::planar_map::{dual_pair, EdgeKind};
use ising_core::sholo::{self, default_base, integrate_hf, CornerSpinor};
use ising_core::weights::X_CRIT_SQUARE;
use ising_core::IsingWeights;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observables_propagate_and_integrate(
        x in 0.1f64..0.9,
        bc in prop::sample::select(vec!["wired", "wfwf", "wwff", "wfff"]),
        v in 0usize..16,
        f in 0usize..9,
    ) {
        let map = square_grid(4, 4, 1.0, GridBoundary::parse(bc).unwrap()).unwrap();
        let w = IsingWeights::uniform(&map, x).unwrap();
        let oracle = Oracle::new(&map, &w).unwrap();
        let dual = dual_pair(&map).unwrap();
        let face = map.inner_faces().nth(f).unwrap();
        let obs: CornerSpinor = oracle.corner_observable(&[v], &[face]).unwrap().into();
        let thetas = sholo::quad_thetas(&dual, &w);
        for (z, q) in dual.quads.iter().enumerate() {
            if map.edge_kind(q.edge) == EdgeKind::Interior {
                let r = sholo::check_propagation(&obs, &dual, z, thetas[z]);
                prop_assert!(r.iter().all(|e| e.abs() < 1e-9), "{r:?}");
            }
        }
        let h = integrate_hf(&dual, &obs, default_base(&dual), 0.0, 1e-9).unwrap();
        prop_assert!(h.loop_closure < 1e-12);
    }
}

#[test]
fn kac_ward_fermions_match_enumeration() {
    let map = square_grid(3, 4, 1.0, GridBoundary::Wired).unwrap();
    let w = IsingWeights::uniform(&map, X_CRIT_SQUARE).unwrap();
    let oracle = Oracle::new(&map, &w).unwrap();
    let dual = dual_pair(&map).unwrap();
    let f = Fermions::new(&map, &dual, &w).unwrap();
    let nc = dual.corners.len();
    for a in (0..nc).step_by(5) {
        for b in (a + 1..nc).step_by(7) {
            if dual.corners[a].v == dual.corners[b].v {
                continue;
            }
            let exact = oracle
                .mixed_correlator(&CorrelatorRequest { corners: vec![a, b], ..Default::default() })
                .unwrap()
                .value;
            let (kw, _) = f.correlator(&[a, b], None).unwrap();
            assert!((kw - exact).abs() < 1e-10 * exact.abs().max(1e-3), "{a} {b}: {kw} vs {exact}");
        }
    }
}

use ising_core::gen::{random_map, RandomMapOptions};
use ising_core::io::GraphJson;
use ising_core::ising_enum::{spin_sum_faces, spin_sum_vertices, Oracle};
use ising_core::kacward;
use ising_core::IsingWeights;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, max_edges: usize) -> (ising_core::PlanarMap, IsingWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opt = RandomMapOptions { vertices: 7, max_edges, bridgeless: false, mixed_boundary: 0.5 };
    let map = random_map(&mut rng, opt).unwrap();
    let x = (0..map.num_edges()).map(|_| rng.random_range(0.05..0.95)).collect();
    let w = IsingWeights::new(&map, x).unwrap();
    (map, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn three_expansions_agree(seed in any::<u64>()) {
        let (map, w) = instance(seed, 14);
        let pf = Oracle::new(&map, &w).unwrap().partition_function();
        let zc = spin_sum_faces(&map, &w).unwrap();
        let zb = spin_sum_vertices(&map, &w).unwrap();
        prop_assert!((zc - pf.z_circ.unwrap()).abs() <= 1e-10 * zc);
        prop_assert!((zb - pf.z_bullet.unwrap()).abs() <= 1e-10 * zb);
    }

    #[test]
    fn kac_ward_squares_the_partition_function(seed in any::<u64>()) {
        let (map, w) = instance(seed, 16);
        let z = Oracle::new(&map, &w).unwrap().z();
        let rep = kacward::verify(&map, &w, Some(z)).unwrap();
        prop_assert!(rep.passes(1e-9), "{rep:?}");
        prop_assert!(rep.det_re >= 1.0 - 1e-12);
    }

    #[test]
    fn graph_json_round_trip(seed in any::<u64>()) {
        let (map, w) = instance(seed, 14);
        let g = GraphJson::from_map(&map, Some(&w));
        let back = GraphJson::parse(&g.to_string_pretty()).unwrap();
        prop_assert_eq!(&back, &g);
        let (m2, w2) = back.to_model(None).unwrap();
        prop_assert_eq!(m2.num_faces(), map.num_faces());
        prop_assert_eq!(w2.as_slice(), w.as_slice());
    }
}

#[test]
fn four_cycle_at_one_half() {
    let g = GraphJson::parse(
        r#"{"vertices": [[1,0],[0,1],[-1,0],[0,-1]], "edges": [[0,1],[1,2],[2,3],[3,0]],
            "boundary": [{"type": "wired", "edges": [0,1,2,3]}], "weights": [0.5,0.5,0.5,0.5]}"#,
    )
    .unwrap();
    let (map, w) = g.to_model(None).unwrap();
    let z = Oracle::new(&map, &w).unwrap().z();
    assert!((z - 17.0 / 16.0).abs() < 1e-15);
    let rep = kacward::verify(&map, &w, Some(z)).unwrap();
    assert!((rep.det_re - (17.0f64 / 16.0).powi(2)).abs() < 1e-12);
}

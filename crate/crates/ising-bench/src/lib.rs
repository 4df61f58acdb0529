//! Fixtures shared by the benchmarks.

use ising_core::gen::{square_grid, GridBoundary};
use ising_core::isoradial::{square_lattice, IsoradialMap};
use ising_core::weights::X_CRIT_SQUARE;
use ising_core::{IsingWeights, PlanarMap};

/// `n × n` vertex grid with wired boundary at the critical weight.
pub fn critical_grid(n: usize) -> (PlanarMap, IsingWeights) {
    let map = square_grid(n, n, 1.0, GridBoundary::Wired).expect("grid builds");
    let w = IsingWeights::uniform(&map, X_CRIT_SQUARE).expect("critical weight is valid");
    (map, w)
}

/// Self-dual crossing quad with `k + 1` columns and `k` rows.
pub fn crossing_quad(k: usize) -> (PlanarMap, IsingWeights) {
    let map = ising_core::fk::self_dual_quad(k).expect("quad builds");
    let w = IsingWeights::uniform(&map, X_CRIT_SQUARE).expect("critical weight is valid");
    (map, w)
}

pub fn iso_square(n: usize) -> IsoradialMap {
    square_lattice(1.0 / n as f64, n, n, GridBoundary::Wired).expect("lattice builds")
}

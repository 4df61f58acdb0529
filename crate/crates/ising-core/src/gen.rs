//! Map generators: square grids and random straight-line planar maps.

use crate::error::{Error, Result};
use crate::geom::{self, C64};
use crate::planar_map::{build_map, ArcKind, BoundaryArc, PlanarMap};
use rand::seq::SliceRandom;
use rand::Rng;

/// Boundary pattern for rectangular grids, by side: bottom, right, top, left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridBoundary {
    Wired,
    Sides([ArcKind; 4]),
}

impl GridBoundary {
    /// Wired bottom and top, free left and right.
    pub fn crossing() -> Self {
        GridBoundary::Sides([ArcKind::Wired, ArcKind::Free, ArcKind::Wired, ArcKind::Free])
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wired" => Ok(GridBoundary::Wired),
            "crossing" | "mixed" => Ok(GridBoundary::crossing()),
            other if other.len() == 4 => {
                let mut k = [ArcKind::Wired; 4];
                for (i, c) in other.chars().enumerate() {
                    k[i] = match c {
                        'w' | 'W' => ArcKind::Wired,
                        'f' | 'F' => ArcKind::Free,
                        _ => return Err(Error::Input(format!("bad boundary letter {c:?}"))),
                    };
                }
                Ok(GridBoundary::Sides(k))
            }
            other => Err(Error::Input(format!("unknown boundary spec {other:?}"))),
        }
    }
}

/// Index of grid vertex `(i, j)` in a grid of width `w`.
pub fn grid_index(w: usize, i: usize, j: usize) -> usize {
    j * w + i
}

/// Rectangular piece of δℤ² with `w × h` vertices.
pub fn square_grid(w: usize, h: usize, delta: f64, bc: GridBoundary) -> Result<PlanarMap> {
    if w < 2 || h < 2 {
        return Err(Error::Input("grid needs at least 2 × 2 vertices".into()));
    }
    let pos: Vec<C64> = (0..h)
        .flat_map(|j| (0..w).map(move |i| C64::new(i as f64 * delta, j as f64 * delta)))
        .collect();
    let mut edges = Vec::new();
    for j in 0..h {
        for i in 0..w {
            if i + 1 < w {
                edges.push([grid_index(w, i, j), grid_index(w, i + 1, j)]);
            }
            if j + 1 < h {
                edges.push([grid_index(w, i, j), grid_index(w, i, j + 1)]);
            }
        }
    }
    let arcs = match bc {
        GridBoundary::Wired => Vec::new(),
        GridBoundary::Sides(kinds) => side_arcs(w, h, &edges, kinds),
    };
    build_map(&pos, &edges, &arcs)
}

/// Boundary edges of a grid by side, each listed counterclockwise.
pub fn grid_sides(w: usize, h: usize, edges: &[[usize; 2]]) -> [Vec<usize>; 4] {
    let find = |a: usize, b: usize| {
        edges.iter().position(|&[p, q]| (p == a && q == b) || (p == b && q == a)).unwrap()
    };
    let g = |i, j| grid_index(w, i, j);
    let bottom = (0..w - 1).map(|i| find(g(i, 0), g(i + 1, 0))).collect();
    let right = (0..h - 1).map(|j| find(g(w - 1, j), g(w - 1, j + 1))).collect();
    let top = (0..w - 1).rev().map(|i| find(g(i + 1, h - 1), g(i, h - 1))).collect();
    let left = (0..h - 1).rev().map(|j| find(g(0, j + 1), g(0, j))).collect();
    [bottom, right, top, left]
}

fn side_arcs(w: usize, h: usize, edges: &[[usize; 2]], kinds: [ArcKind; 4]) -> Vec<BoundaryArc> {
    let sides = grid_sides(w, h, edges);
    // rotate so that side 0 starts a new run, then merge equal neighbours
    let start = (0..4).find(|&k| kinds[k] != kinds[(k + 3) % 4]).unwrap_or(0);
    let mut arcs: Vec<BoundaryArc> = Vec::new();
    for s in 0..4 {
        let k = (start + s) % 4;
        match arcs.last_mut() {
            Some(a) if a.kind == kinds[k] => a.edges.extend(sides[k].iter().copied()),
            _ => arcs.push(BoundaryArc { kind: kinds[k], edges: sides[k].clone() }),
        }
    }
    arcs
}

/// Options for [`random_map`].
#[derive(Clone, Copy, Debug)]
pub struct RandomMapOptions {
    pub vertices: usize,
    pub max_edges: usize,
    /// keep every edge on a cycle (no bridges)
    pub bridgeless: bool,
    /// probability that the boundary is split into wired and free arcs
    pub mixed_boundary: f64,
}

impl Default for RandomMapOptions {
    fn default() -> Self {
        RandomMapOptions { vertices: 8, max_edges: 16, bridgeless: true, mixed_boundary: 0.0 }
    }
}

/// A random straight-line planar map: random points, greedy non-crossing
/// short edges, then random deletions down to `max_edges` that keep the
/// graph connected (and bridgeless if requested).
pub fn random_map<R: Rng>(rng: &mut R, opt: RandomMapOptions) -> Result<PlanarMap> {
    let n = opt.vertices.max(3);
    for _ in 0..100 {
        let pos: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>(), rng.random::<f64>())).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                pairs.push(((pos[a] - pos[b]).norm(), a, b));
            }
        }
        pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let mut edges: Vec<[usize; 2]> = Vec::new();
        for &(_, a, b) in &pairs {
            let ok = edges.iter().all(|&[c, d]| {
                a == c || a == d || b == c || b == d || !geom::segments_meet(pos[a], pos[b], pos[c], pos[d], 1e-9)
            }) && (0..n).all(|v| v == a || v == b || !geom::point_on_open_segment(pos[v], pos[a], pos[b], 1e-6));
            if ok {
                edges.push([a, b]);
            }
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.shuffle(rng);
        let mut alive = vec![true; edges.len()];
        let mut count = edges.len();
        for &k in &order {
            if count <= opt.max_edges {
                break;
            }
            alive[k] = false;
            let kept: Vec<[usize; 2]> = (0..edges.len()).filter(|&i| alive[i]).map(|i| edges[i]).collect();
            if connected(n, &kept) && (!opt.bridgeless || bridge_free(n, &kept)) {
                count -= 1;
            } else {
                alive[k] = true;
            }
        }
        if count > opt.max_edges {
            continue;
        }
        let kept: Vec<[usize; 2]> = (0..edges.len()).filter(|&i| alive[i]).map(|i| edges[i]).collect();
        let Ok(map) = build_map(&pos, &kept, &[]) else { continue };
        if rng.random::<f64>() < opt.mixed_boundary {
            let arcs = random_arcs(rng, &map);
            if let Ok(m) = build_map(&pos, &kept, &arcs) {
                return Ok(m);
            }
        }
        return Ok(map);
    }
    Err(Error::Input("could not generate a random map with these options".into()))
}

/// Split the outer boundary into 2 or 4 alternating arcs, starting wired.
pub fn random_arcs<R: Rng>(rng: &mut R, map: &PlanarMap) -> Vec<BoundaryArc> {
    let walk = map.outer_walk();
    let mut order: Vec<usize> = Vec::new();
    for &e in &walk {
        if !order.contains(&e) {
            order.push(e);
        }
    }
    if order.len() < 2 || walk.len() != order.len() {
        return Vec::new();
    }
    let pieces = if order.len() >= 4 && rng.random::<bool>() { 4 } else { 2 };
    let mut cuts: Vec<usize> = (1..order.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(pieces - 1).collect();
    cuts.sort();
    let rot = rng.random_range(0..order.len());
    order.rotate_left(rot);
    let mut arcs = Vec::new();
    let mut prev = 0;
    for (k, &c) in cuts.iter().chain(std::iter::once(&order.len())).enumerate() {
        let kind = if k % 2 == 0 { ArcKind::Wired } else { ArcKind::Free };
        arcs.push(BoundaryArc { kind, edges: order[prev..c].to_vec() });
        prev = c;
    }
    arcs
}

fn connected(n: usize, edges: &[[usize; 2]]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &[a, b] in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn bridge_free(n: usize, edges: &[[usize; 2]]) -> bool {
    (0..edges.len()).all(|k| {
        let rest: Vec<[usize; 2]> = edges.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, e)| *e).collect();
        connected(n, &rest)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planar_map::EdgeKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_counts() {
        let m = square_grid(3, 3, 1.0, GridBoundary::Wired).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (9, 12, 5));
    }

    #[test]
    fn crossing_grid_arcs() {
        let m = square_grid(4, 4, 1.0, GridBoundary::crossing()).unwrap();
        assert_eq!(m.arcs().len(), 4);
        let free = (0..m.num_edges()).filter(|&e| m.edge_kind(e) == EdgeKind::Free).count();
        assert_eq!(free, 6);
    }

    #[test]
    fn random_maps_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_map(&mut rng, RandomMapOptions { mixed_boundary: 0.5, ..Default::default() }).unwrap();
            assert!(m.num_edges() <= 16);
            assert_eq!(m.euler_characteristic(), 2);
        }
    }
}

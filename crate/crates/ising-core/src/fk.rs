//! FK (random-cluster) representation on the spin graph Γ° (faces of G, all
//! wired arcs glued into the outer face) with dual configurations on Γ•
//! (vertices of G, each free arc glued into one vertex), the Edwards–Sokal
//! coupling, crossing probabilities and a cluster Monte Carlo chain.

use crate::error::{Error, Result};
use crate::planar_map::{ArcKind, EdgeKind, PlanarMap};
use crate::weights::IsingWeights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::SQRT_2;

/// Largest edge count for exhaustive enumeration.
pub const EXACT_BUDGET: usize = 22;

/// `ϱ(p) = p / (p + √2 (1 − p))`.
pub fn rho(p: f64) -> f64 {
    p / (p + SQRT_2 * (1.0 - p))
}

#[derive(Clone, Debug)]
struct Dsu {
    parent: Vec<usize>,
    comps: usize,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), comps: n }
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.comps -= 1;
        }
    }
}

/// The pair (Γ°, Γ•) over the interacting edges of a map.
#[derive(Clone, Debug)]
pub struct FkGraph {
    /// G edge behind each FK edge
    pub g_edge: Vec<usize>,
    pub x: Vec<f64>,
    /// Γ° endpoints (G face ids, wired arcs glued into the outer face)
    pub primal: Vec<[usize; 2]>,
    /// Γ° endpoints with one extra vertex per wired arc
    primal_sep: Vec<[usize; 2]>,
    n_primal: usize,
    n_primal_sep: usize,
    pub outer: usize,
    /// Γ• endpoints (free arcs glued)
    pub dual: Vec<[usize; 2]>,
    pub n_dual: usize,
    /// Γ• vertex of each free arc, in boundary order
    pub free_terminals: Vec<usize>,
    pub n_wired_arcs: usize,
}

/// One FK configuration and its derived counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FkConfig {
    pub open: Vec<bool>,
    pub clusters: usize,
    pub dual_clusters: usize,
    /// loops separating clusters from dual clusters on the sphere
    pub loops: usize,
    /// loops counted with the wired arcs kept apart
    pub loops_inside: usize,
}

impl FkGraph {
    pub fn new(map: &PlanarMap, w: &IsingWeights) -> Result<Self> {
        let nf = map.num_faces();
        let outer = map.outer_face();
        // wired arc index per wired edge; an empty arc list is one wired arc
        let mut wired_arc = vec![usize::MAX; map.num_edges()];
        let mut n_wired_arcs = 0;
        let mut free_arcs = Vec::new();
        if map.arcs().is_empty() {
            n_wired_arcs = 1;
            for e in 0..map.num_edges() {
                if map.edge_kind(e) == EdgeKind::Wired {
                    wired_arc[e] = 0;
                }
            }
        } else {
            for arc in map.arcs() {
                match arc.kind {
                    ArcKind::Wired => {
                        for &e in &arc.edges {
                            wired_arc[e] = n_wired_arcs;
                        }
                        n_wired_arcs += 1;
                    }
                    ArcKind::Free => free_arcs.push(arc.edges.clone()),
                }
            }
        }
        let mut bullets = Dsu::new(map.num_vertices());
        for e in 0..map.num_edges() {
            if map.edge_kind(e) == EdgeKind::Free {
                let [a, b] = map.edge(e);
                bullets.union(a, b);
            }
        }
        let mut id = vec![usize::MAX; map.num_vertices()];
        let mut n_dual = 0;
        for v in 0..map.num_vertices() {
            let r = bullets.find(v);
            if id[r] == usize::MAX {
                id[r] = n_dual;
                n_dual += 1;
            }
        }
        let bullet = |v: usize, d: &mut Dsu| id[d.find(v)];
        let free_terminals = free_arcs.iter().map(|edges| bullet(map.edge(edges[0])[0], &mut bullets)).collect();
        let mut g = FkGraph {
            g_edge: Vec::new(),
            x: Vec::new(),
            primal: Vec::new(),
            primal_sep: Vec::new(),
            n_primal: nf,
            n_primal_sep: nf + n_wired_arcs,
            outer,
            dual: Vec::new(),
            n_dual,
            free_terminals,
            n_wired_arcs,
        };
        for e in 0..map.num_edges() {
            if map.edge_kind(e) == EdgeKind::Free {
                continue;
            }
            let [h, t] = map.edge_half_edges(e);
            let (fa, fb) = (map.face_of(h), map.face_of(t));
            let sep = |f: usize| if f == outer { nf + wired_arc[e] } else { f };
            let [a, b] = map.edge(e);
            g.g_edge.push(e);
            g.x.push(w.x(e));
            g.primal.push([fa, fb]);
            g.primal_sep.push([sep(fa), sep(fb)]);
            g.dual.push([bullet(a, &mut bullets), bullet(b, &mut bullets)]);
        }
        Ok(g)
    }

    pub fn num_edges(&self) -> usize {
        self.g_edge.len()
    }
    pub fn num_primal(&self) -> usize {
        self.n_primal
    }

    fn primal_dsu(&self, open: &[bool]) -> Dsu {
        let mut d = Dsu::new(self.n_primal);
        for (k, &[a, b]) in self.primal.iter().enumerate() {
            if open[k] {
                d.union(a, b);
            }
        }
        d
    }

    fn dual_dsu(&self, open: &[bool]) -> Dsu {
        let mut d = Dsu::new(self.n_dual);
        for (k, &[a, b]) in self.dual.iter().enumerate() {
            if !open[k] {
                d.union(a, b);
            }
        }
        d
    }

    /// Cluster label of every Γ° vertex.
    pub fn cluster_labels(&self, open: &[bool]) -> Vec<usize> {
        let mut d = self.primal_dsu(open);
        (0..self.n_primal).map(|v| d.find(v)).collect()
    }

    pub fn config(&self, open: &[bool]) -> FkConfig {
        let clusters = self.primal_dsu(open).comps;
        let dual_clusters = self.dual_dsu(open).comps;
        let mut sep = Dsu::new(self.n_primal_sep);
        for (k, &[a, b]) in self.primal_sep.iter().enumerate() {
            if open[k] {
                sep.union(a, b);
            }
        }
        // once the wired arcs have their own vertices the outer face is isolated
        let sep_clusters = sep.comps - usize::from(self.n_wired_arcs > 0);
        FkConfig {
            open: open.to_vec(),
            clusters,
            dual_clusters,
            loops: clusters + dual_clusters - 1,
            loops_inside: sep_clusters + dual_clusters - 1,
        }
    }

    /// Faces of the open subgraph of Γ° by Euler's formula on the sphere.
    pub fn euler_faces(&self, open: &[bool]) -> usize {
        let k = self.primal_dsu(open).comps;
        open.iter().filter(|&&o| o).count() + k + 1 - self.n_primal
    }

    /// `(da) ↔ (bc)`: the two free arcs are joined by dual-open edges.
    pub fn free_arcs_connected(&self, open: &[bool]) -> Result<bool> {
        let [a, b] = self.quad_terminals()?;
        let mut d = self.dual_dsu(open);
        Ok(d.find(a) == d.find(b))
    }

    fn quad_terminals(&self) -> Result<[usize; 2]> {
        match (self.n_wired_arcs, self.free_terminals.as_slice()) {
            (2, &[a, b]) if a != b => Ok([a, b]),
            _ => Err(Error::Input(format!(
                "not a crossing quad: {} wired and {} free arcs",
                self.n_wired_arcs,
                self.free_terminals.len()
            ))),
        }
    }

    /// `Π x^{closed} (1 − x)^{open} · 2^{#clusters}`.
    pub fn fk_weight(&self, c: &FkConfig) -> f64 {
        let edges: f64 = self.x.iter().zip(&c.open).map(|(&x, &o)| if o { 1.0 - x } else { x }).product();
        edges * 2f64.powi(c.clusters as i32)
    }

    /// FK weight reweighted to count only the loops inside the domain.
    pub fn loops_weight(&self, c: &FkConfig) -> f64 {
        self.fk_weight(c) * SQRT_2.powi(c.loops_inside as i32 - c.loops as i32)
    }

    /// Spin → FK: an edge between aligned spins opens with probability `1 − x`.
    pub fn spins_to_fk<R: Rng>(&self, spins: &[i8], rng: &mut R, open: &mut [bool]) {
        for (k, &[a, b]) in self.primal.iter().enumerate() {
            open[k] = spins[a] == spins[b] && rng.random::<f64>() < 1.0 - self.x[k];
        }
    }

    /// FK → spin: a fair ±1 per cluster; the boundary cluster keeps `+1`.
    pub fn fk_to_spins<R: Rng>(&self, open: &[bool], rng: &mut R, spins: &mut [i8]) {
        let labels = self.cluster_labels(open);
        let mut coin = vec![0i8; self.n_primal];
        coin[labels[self.outer]] = 1;
        for v in 0..self.n_primal {
            let l = labels[v];
            if coin[l] == 0 {
                coin[l] = if rng.random::<bool>() { 1 } else { -1 };
            }
            spins[v] = coin[l];
        }
    }
}

/// Exhaustive FK and loop measures.
#[derive(Clone, Debug, Serialize)]
pub struct FkExact {
    pub n_edges: usize,
    pub p_fk: Vec<f64>,
    pub p_loops: Vec<f64>,
    /// `max/min − 1` of `(FK weight) / √2^{#loops}` over configurations
    pub loop_ratio_spread: f64,
    /// configurations where dual clusters differ from Euler faces
    pub euler_failures: usize,
    /// `P^FK[every non-boundary cluster holds an even number of marked faces]`
    pub even_clusters: Option<f64>,
}

fn open_of(mask: u64, m: usize) -> Vec<bool> {
    (0..m).map(|k| mask >> k & 1 == 1).collect()
}

/// Enumerate all `2^|E|` configurations; `marked` are G face ids.
pub fn fk_exact(g: &FkGraph, marked: &[usize]) -> Result<FkExact> {
    let m = g.num_edges();
    if m > EXACT_BUDGET {
        return Err(Error::Size { what: "FK edges".into(), needed: m, budget: EXACT_BUDGET });
    }
    if let Some(&f) = marked.iter().find(|&&f| f >= g.num_primal()) {
        return Err(Error::Input(format!("face {f} does not exist")));
    }
    let rows: Vec<(f64, f64, f64, bool, bool)> = (0u64..1 << m)
        .into_par_iter()
        .map(|mask| {
            let open = open_of(mask, m);
            let c = g.config(&open);
            let wf = g.fk_weight(&c);
            let even = if marked.is_empty() {
                true
            } else {
                let labels = g.cluster_labels(&open);
                let boundary = labels[g.outer];
                let mut odd = vec![false; g.num_primal()];
                for &f in marked {
                    odd[labels[f]] ^= true;
                }
                odd.iter().enumerate().all(|(l, &o)| !o || l == boundary)
            };
            (wf, g.loops_weight(&c), wf / SQRT_2.powi(c.loops as i32), g.euler_faces(&open) == c.dual_clusters, even)
        })
        .collect();
    let zf: f64 = rows.iter().map(|r| r.0).sum();
    let zl: f64 = rows.iter().map(|r| r.1).sum();
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    Ok(FkExact {
        n_edges: m,
        p_fk: rows.iter().map(|r| r.0 / zf).collect(),
        p_loops: rows.iter().map(|r| r.1 / zl).collect(),
        loop_ratio_spread: hi / lo - 1.0,
        euler_failures: rows.iter().filter(|r| !r.3).count(),
        even_clusters: (!marked.is_empty()).then(|| rows.iter().filter(|r| r.4).map(|r| r.0).sum::<f64>() / zf),
    })
}

/// Crossing probabilities of a quad with wired `(ab), (cd)` and free `(bc), (da)`.
#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    pub p_fk: f64,
    pub p_loops: Option<f64>,
    /// `|P^FK − ϱ(P^loops)|`
    pub rho_residual: Option<f64>,
    /// largest deviation of `dP^loops / dP^FK` from `c (1 + (√2 − 1) 1[crossing])`
    pub density_residual: Option<f64>,
    pub stderr: Option<f64>,
    pub samples: Option<usize>,
}

pub fn crossing_exact(g: &FkGraph) -> Result<CrossingReport> {
    g.quad_terminals()?;
    let ex = fk_exact(g, &[])?;
    let m = g.num_edges();
    let cross: Vec<bool> =
        (0u64..1 << m).map(|mask| g.free_arcs_connected(&open_of(mask, m))).collect::<Result<_>>()?;
    // crossing mass over total mass, each summed separately to limit rounding
    let split = |p: &[f64]| {
        let (mut yes, mut no) = (0.0, 0.0);
        for (&q, &c) in p.iter().zip(&cross) {
            if c {
                yes += q;
            } else {
                no += q;
            }
        }
        yes / (yes + no)
    };
    let (p_fk, p_loops) = (split(&ex.p_fk), split(&ex.p_loops));
    // normalizing constant of the density: E^FK[1 + (√2 − 1) 1[crossing]]
    let norm = 1.0 + (SQRT_2 - 1.0) * p_fk;
    let density_residual = ex
        .p_fk
        .iter()
        .zip(&ex.p_loops)
        .zip(&cross)
        .map(|((&pf, &pl), &c)| (pl - pf * (1.0 + (SQRT_2 - 1.0) * f64::from(u8::from(c))) / norm).abs())
        .fold(0.0, f64::max);
    Ok(CrossingReport {
        p_fk,
        p_loops: Some(p_loops),
        rho_residual: Some((p_fk - rho(p_loops)).abs()),
        density_residual: Some(density_residual),
        stderr: None,
        samples: None,
    })
}

/// Alternating Edwards–Sokal chain; a pure function of the seed.
#[derive(Clone, Debug)]
pub struct FkChain<'a> {
    g: &'a FkGraph,
    pub open: Vec<bool>,
    pub spins: Vec<i8>,
    rng: ChaCha8Rng,
}

impl<'a> FkChain<'a> {
    /// Starts from the all-open configuration.
    pub fn new(g: &'a FkGraph, seed: u64) -> Self {
        FkChain { g, open: vec![true; g.num_edges()], spins: vec![1; g.num_primal()], rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// One sweep: spins given FK, then FK given spins.
    pub fn step(&mut self) {
        self.g.fk_to_spins(&self.open, &mut self.rng, &mut self.spins);
        self.g.spins_to_fk(&self.spins, &mut self.rng, &mut self.open);
    }
}

/// Monte Carlo estimate with a batch-means standard error.
#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

const CHAINS: usize = 16;
const BATCHES: usize = 25;
const BURN_IN: usize = 200;

/// Average `obs(open, spins)` over `samples` chain steps split across
/// independent chains seeded from `seed`. The spins are those the FK state
/// was drawn from.
pub fn mc_estimate<F>(g: &FkGraph, samples: usize, seed: u64, n_obs: usize, obs: F) -> Result<McEstimate>
where
    F: Fn(&FkGraph, &[bool], &[i8], &mut [f64]) + Sync,
{
    let per_chain = samples / CHAINS;
    if per_chain < BATCHES {
        return Err(Error::McBudget(format!("{samples} samples is too few for {CHAINS} chains")));
    }
    let batch_len = per_chain / BATCHES;
    let batch_means: Vec<Vec<f64>> = (0..CHAINS)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut chain = FkChain::new(g, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(c as u64));
            for _ in 0..BURN_IN {
                chain.step();
            }
            let mut buf = vec![0.0; n_obs];
            let mut out = Vec::with_capacity(BATCHES);
            for _ in 0..BATCHES {
                let mut acc = vec![0.0; n_obs];
                for _ in 0..batch_len {
                    chain.step();
                    obs(g, &chain.open, &chain.spins, &mut buf);
                    acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                }
                acc.iter_mut().for_each(|a| *a /= batch_len as f64);
                out.push(acc);
            }
            out
        })
        .collect();
    let nb = batch_means.len() as f64;
    let mut mean = vec![0.0; n_obs];
    let mut stderr = vec![0.0; n_obs];
    for k in 0..n_obs {
        let mu = batch_means.iter().map(|b| b[k]).sum::<f64>() / nb;
        let var = batch_means.iter().map(|b| (b[k] - mu).powi(2)).sum::<f64>() / (nb - 1.0);
        mean[k] = mu;
        stderr[k] = (var / nb).sqrt();
    }
    Ok(McEstimate { mean, stderr, samples: CHAINS * BATCHES * batch_len })
}

pub fn crossing_mc(g: &FkGraph, samples: usize, seed: u64) -> Result<CrossingReport> {
    g.quad_terminals()?;
    let est = mc_estimate(g, samples, seed, 1, |g, open, _, out| {
        out[0] = f64::from(u8::from(g.free_arcs_connected(open).unwrap_or(false)));
    })?;
    Ok(CrossingReport {
        p_fk: est.mean[0],
        p_loops: None,
        rho_residual: None,
        density_residual: None,
        stderr: Some(est.stderr[0]),
        samples: Some(est.samples),
    })
}

/// Grid quad whose Γ° and Γ• are isomorphic with wired and free arcs swapped:
/// `(k + 1) × k` vertices, wired bottom and top, free left and right.
pub fn self_dual_quad(k: usize) -> Result<PlanarMap> {
    crate::gen::square_grid(k + 1, k, 1.0, crate::gen::GridBoundary::crossing())
}

/// Search for a graph isomorphism from Γ° (wired arcs apart) onto Γ•
/// sending the wired-arc vertices onto the free-arc vertices. Returns the
/// vertex map when one exists.
pub fn duality_isomorphism(g: &FkGraph) -> Result<Option<Vec<usize>>> {
    g.quad_terminals()?;
    // Γ° without the isolated outer face
    let keep: Vec<usize> = (0..g.n_primal_sep).filter(|&v| v != g.outer).collect();
    let mut idx = vec![usize::MAX; g.n_primal_sep];
    for (i, &v) in keep.iter().enumerate() {
        idx[v] = i;
    }
    let n = keep.len();
    if n != g.n_dual {
        return Ok(None);
    }
    let adj = |edges: &[[usize; 2]], map: &dyn Fn(usize) -> usize| {
        let mut a = vec![vec![0u32; n]; n];
        for &[p, q] in edges {
            let (p, q) = (map(p), map(q));
            a[p][q] += 1;
            if p != q {
                a[q][p] += 1;
            }
        }
        a
    };
    let a = adj(&g.primal_sep, &|v| idx[v]);
    let b = adj(&g.dual, &|v| v);
    let terminals_a: Vec<usize> = (0..g.n_wired_arcs).map(|j| idx[g.n_primal + j]).collect();
    let terminals_b = g.free_terminals.clone();
    let deg = |m: &[Vec<u32>], v: usize| m[v].iter().sum::<u32>();
    let mut phi = vec![usize::MAX; n];
    let mut used = vec![false; n];
    // order: terminals first, then by BFS so that each vertex has a mapped neighbour
    let mut order = terminals_a.clone();
    let mut seen = vec![false; n];
    terminals_a.iter().for_each(|&t| seen[t] = true);
    let mut head = 0;
    while order.len() < n {
        if head == order.len() {
            let v = (0..n).find(|&v| !seen[v]).unwrap();
            seen[v] = true;
            order.push(v);
        }
        let v = order[head];
        head += 1;
        for w in 0..n {
            if a[v][w] > 0 && !seen[w] {
                seen[w] = true;
                order.push(w);
            }
        }
    }
    fn extend(
        k: usize,
        order: &[usize],
        a: &[Vec<u32>],
        b: &[Vec<u32>],
        phi: &mut [usize],
        used: &mut [bool],
        allowed: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let v = order[k];
        for w in 0..b.len() {
            if used[w] || !allowed(v, w) {
                continue;
            }
            if a[v][v] != b[w][w] || order[..k].iter().any(|&u| a[v][u] != b[w][phi[u]]) {
                continue;
            }
            phi[v] = w;
            used[w] = true;
            if extend(k + 1, order, a, b, phi, used, allowed) {
                return true;
            }
            used[w] = false;
            phi[v] = usize::MAX;
        }
        false
    }
    let allowed = |v: usize, w: usize| {
        deg(&a, v) == deg(&b, w) && terminals_a.contains(&v) == terminals_b.contains(&w)
    };
    if !extend(0, &order, &a, &b, &mut phi, &mut used, &allowed) {
        return Ok(None);
    }
    Ok(Some(keep.iter().map(|&v| phi[idx[v]]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{square_grid, GridBoundary};
    use crate::ising_enum::Oracle;
    use crate::planar_map::{build_map, BoundaryArc};
    use crate::weights::X_CRIT_SQUARE;
    use crate::C64;

    fn model(w: usize, h: usize, bc: GridBoundary, x: f64) -> (PlanarMap, IsingWeights) {
        let map = square_grid(w, h, 1.0, bc).unwrap();
        let iw = IsingWeights::uniform(&map, x).unwrap();
        (map, iw)
    }

    #[test]
    fn rho_endpoints() {
        assert_eq!(rho(0.0), 0.0);
        assert_eq!(rho(1.0), 1.0);
        assert!((rho(0.5) - (SQRT_2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_interacting_edge() {
        // a triangle whose base is wired and the other two sides free
        let pos = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.5, 1.0)];
        let map = build_map(&pos, &[[0, 1], [1, 2], [2, 0]], &[BoundaryArc::wired(vec![0]), BoundaryArc::free(vec![1, 2])])
            .unwrap();
        let x = 0.3;
        let g = FkGraph::new(&map, &IsingWeights::uniform(&map, x).unwrap()).unwrap();
        assert_eq!(g.num_edges(), 1);
        let ex = fk_exact(&g, &[]).unwrap();
        // open: (1 − x)·2^1, closed: x·2^2
        let want = 2.0 * (1.0 - x) / (2.0 * (1.0 - x) + 4.0 * x);
        assert!((ex.p_fk[1] - want).abs() < 1e-15);
        // the Edwards–Sokal marginal: aligned with probability 1/(1+x), then open with 1 − x
        assert!((want - (1.0 - x) / (1.0 + x)).abs() < 1e-15);
    }

    #[test]
    fn empty_configuration_space() {
        let pos = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.5, 1.0)];
        let map = build_map(&pos, &[[0, 1], [1, 2], [2, 0]], &[BoundaryArc::wired(vec![0]), BoundaryArc::free(vec![1, 2])])
            .unwrap();
        let mut g = FkGraph::new(&map, &IsingWeights::uniform(&map, 0.5).unwrap()).unwrap();
        // strip the one interacting edge
        g.g_edge.clear();
        g.x.clear();
        g.primal.clear();
        g.primal_sep.clear();
        g.dual.clear();
        assert_eq!(g.num_edges(), 0);
        let ex = fk_exact(&g, &[]).unwrap();
        assert_eq!(ex.p_fk, vec![1.0]);
    }

    #[test]
    fn cluster_and_loop_forms_agree_at_criticality() {
        let (map, w) = model(3, 2, GridBoundary::Wired, X_CRIT_SQUARE);
        let g = FkGraph::new(&map, &w).unwrap();
        assert_eq!(g.num_edges(), 7);
        let ex = fk_exact(&g, &[]).unwrap();
        assert!(ex.loop_ratio_spread < 1e-12);
        assert_eq!(ex.euler_failures, 0);
        let (map, w) = model(3, 2, GridBoundary::Wired, 0.3);
        let ex = fk_exact(&FkGraph::new(&map, &w).unwrap(), &[]).unwrap();
        assert!(ex.loop_ratio_spread > 1e-3);
    }

    #[test]
    fn euler_identity_on_mixed_boundaries() {
        for bc in [GridBoundary::crossing(), GridBoundary::parse("wfff").unwrap(), GridBoundary::parse("ffwf").unwrap()] {
            let (map, w) = model(4, 3, bc, 0.4);
            let ex = fk_exact(&FkGraph::new(&map, &w).unwrap(), &[]).unwrap();
            assert_eq!(ex.euler_failures, 0);
        }
    }

    #[test]
    fn spin_correlators_are_connectivity_events() {
        for (wd, ht, bc) in [(2, 3, GridBoundary::Wired), (3, 3, GridBoundary::Wired), (4, 3, GridBoundary::crossing())] {
            let (map, w) = model(wd, ht, bc, 0.37);
            let g = FkGraph::new(&map, &w).unwrap();
            let oracle = Oracle::new(&map, &w).unwrap();
            let faces: Vec<usize> = map.inner_faces().collect();
            let mut sets: Vec<Vec<usize>> = faces.iter().map(|&f| vec![f]).collect();
            for i in 0..faces.len() {
                for j in i + 1..faces.len() {
                    sets.push(vec![faces[i], faces[j]]);
                }
            }
            sets.push(faces.clone());
            for s in sets {
                let p = fk_exact(&g, &s).unwrap().even_clusters.unwrap();
                let e = oracle.spin_correlator(&s).unwrap();
                assert!((p - e).abs() < 1e-12, "{s:?}: {p} vs {e}");
            }
        }
    }

    #[test]
    fn crossing_identity_on_small_quads() {
        for (wd, ht) in [(3, 3), (4, 3), (3, 4), (5, 3)] {
            for x in [0.2, X_CRIT_SQUARE, 0.7] {
                let (map, w) = model(wd, ht, GridBoundary::crossing(), x);
                let g = FkGraph::new(&map, &w).unwrap();
                assert!(g.num_edges() <= 20);
                let r = crossing_exact(&g).unwrap();
                assert!(r.rho_residual.unwrap() <= 1e-12, "{wd}x{ht} x={x}: {r:?}");
                assert!(r.density_residual.unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn free_arc_disorders_equal_crossing() {
        for (wd, ht) in [(3, 3), (4, 3)] {
            let (map, w) = model(wd, ht, GridBoundary::crossing(), 0.41);
            let r = crossing_exact(&FkGraph::new(&map, &w).unwrap()).unwrap();
            let oracle = Oracle::new(&map, &w).unwrap();
            let mu = oracle.disorder_correlator(&[crate::gen::grid_index(wd, 0, 1), crate::gen::grid_index(wd, wd - 1, 1)]).unwrap();
            assert!((mu - r.p_fk).abs() < 1e-12);
        }
    }

    #[test]
    fn self_dual_quad_crosses_with_half() {
        let map = self_dual_quad(3).unwrap();
        let w = IsingWeights::uniform(&map, X_CRIT_SQUARE).unwrap();
        let g = FkGraph::new(&map, &w).unwrap();
        assert!(duality_isomorphism(&g).unwrap().is_some());
        let r = crossing_exact(&g).unwrap();
        assert!((r.p_loops.unwrap() - 0.5).abs() <= 1e-10);
        assert!((r.p_fk - (SQRT_2 - 1.0)).abs() <= 1e-9);
        // a square grid is not self-dual in this sense
        let (map, w) = model(3, 3, GridBoundary::crossing(), X_CRIT_SQUARE);
        assert!(duality_isomorphism(&FkGraph::new(&map, &w).unwrap()).unwrap().is_none());
    }

    #[test]
    fn misaligned_edges_stay_closed() {
        let (map, w) = model(4, 4, GridBoundary::Wired, 0.01);
        let g = FkGraph::new(&map, &w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spins: Vec<i8> = (0..g.num_primal()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let mut open = vec![false; g.num_edges()];
        for _ in 0..50 {
            g.spins_to_fk(&spins, &mut rng, &mut open);
            for (k, &[a, b]) in g.primal.iter().enumerate() {
                assert!(!open[k] || spins[a] == spins[b]);
            }
        }
    }

    #[test]
    fn chain_is_deterministic() {
        let (map, w) = model(4, 4, GridBoundary::Wired, X_CRIT_SQUARE);
        let g = FkGraph::new(&map, &w).unwrap();
        let run = |seed| {
            let mut c = FkChain::new(&g, seed);
            (0..100).map(|_| {
                c.step();
                c.open.clone()
            }).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn chain_samples_the_fk_measure() {
        let (map, w) = model(2, 2, GridBoundary::Wired, 0.35);
        let g = FkGraph::new(&map, &w).unwrap();
        assert_eq!(g.num_edges(), 4);
        let ex = fk_exact(&g, &[]).unwrap();
        let est = mc_estimate(&g, 1_000_000, 5, 16, |_, open, _, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            let mask = open.iter().enumerate().fold(0, |m, (k, &o)| m | (usize::from(o) << k));
            out[mask] = 1.0;
        })
        .unwrap();
        for k in 0..16 {
            assert!((est.mean[k] - ex.p_fk[k]).abs() <= 3.0 * est.stderr[k] + 1e-12, "config {k}");
        }
    }

    #[test]
    fn chain_crossing_on_self_dual_quad() {
        let map = self_dual_quad(6).unwrap();
        let g = FkGraph::new(&map, &IsingWeights::uniform(&map, X_CRIT_SQUARE).unwrap()).unwrap();
        let r = crossing_mc(&g, 200_000, 3).unwrap();
        assert!((r.p_fk - (SQRT_2 - 1.0)).abs() <= 3.0 * r.stderr.unwrap());
    }
}

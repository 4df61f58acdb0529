//! Isoradial (rhombic) lattices with critical Z-invariant weights, the
//! Laplacians Δ• and Δ°, local positivity of `H_F` and the isoradial
//! factorization of `Δ• + Δ°`.

use crate::error::{Error, Result};
use crate::gen::{self, GridBoundary};
use crate::geom::C64;
use crate::planar_map::{build_map, dual_pair, ArcKind, DoubleCover, DualPair, EdgeKind, PlanarMap, Varpi};
use crate::sholo::{self, CornerSpinor, HFunction, LambdaVertex};
use crate::weights::IsingWeights;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6};

/// Default lower bound on rhombus half-angles.
pub const THETA_MIN: f64 = 0.05;

/// A map whose quads are rhombi of common side `delta`, with weights
/// `x_e = tan(θ_e / 2)`.
#[derive(Clone, Debug)]
pub struct IsoradialMap {
    pub map: PlanarMap,
    pub dual: DualPair,
    pub weights: IsingWeights,
    pub delta: f64,
    /// half-angle of each quad: `|v•1 − v•0| = 2δ cos θ`
    pub theta: Vec<f64>,
}

impl IsoradialMap {
    /// Read off `δ` and the rhombus angles from the geometry.
    pub fn from_map(map: PlanarMap, theta_min: f64) -> Result<Self> {
        let dual = dual_pair(&map)?;
        let delta = sholo::isoradial_delta(&map, &dual).map_err(|e| Error::Geometry(e.to_string()))?;
        let mut theta = Vec::with_capacity(dual.quads.len());
        for q in &dual.quads {
            let len = (map.pos(q.v[1]) - map.pos(q.v[0])).norm();
            let t = (len / (2.0 * delta)).clamp(-1.0, 1.0).acos();
            if t < theta_min || t > FRAC_PI_2 - theta_min {
                return Err(Error::Geometry(format!("rhombus angle {t} outside [{theta_min}, π/2 − {theta_min}]")));
            }
            theta.push(t);
        }
        let mut x = vec![1.0; map.num_edges()];
        for (q, t) in dual.quads.iter().zip(&theta) {
            x[q.edge] = (0.5 * t).tan();
        }
        let weights = IsingWeights::new(&map, x)?;
        Ok(IsoradialMap { map, dual, weights, delta, theta })
    }
}

/// Critical square lattice with `w × h` vertices and mesh `delta`.
pub fn square_lattice(delta: f64, w: usize, h: usize, bc: GridBoundary) -> Result<IsoradialMap> {
    IsoradialMap::from_map(gen::square_grid(w, h, delta, bc)?, THETA_MIN)
}

/// Periodic rhombic tilings available from [`rhombic_lattice`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhombicKind {
    /// rectangular grid: horizontal edges at half-angle θ, vertical ones at π/2 − θ
    Rectangular { theta: f64 },
    /// triangular lattice (θ = π/6), dual honeycomb at π/3
    Triangular,
    /// honeycomb lattice (θ = π/3), dual triangular at π/6
    Honeycomb,
}

/// Rhombic lattice patch with `w × h` cells of rhombus side `delta`.
pub fn rhombic_lattice(kind: RhombicKind, w: usize, h: usize, delta: f64, bc: GridBoundary) -> Result<IsoradialMap> {
    if w < 2 || h < 2 {
        return Err(Error::Input("rhombic patch needs at least 2 × 2 cells".into()));
    }
    let map = match kind {
        RhombicKind::Rectangular { theta } => {
            if !(theta > 0.0 && theta < FRAC_PI_2) {
                return Err(Error::Geometry(format!("degenerate rhombus angle {theta}")));
            }
            let (a, b) = (2.0 * delta * theta.cos(), 2.0 * delta * theta.sin());
            let base = gen::square_grid(w, h, 1.0, bc)?;
            let pos: Vec<C64> = base.positions().iter().map(|p| C64::new(p.re * a, p.im * b)).collect();
            build_map(&pos, base.edges(), base.arcs())?
        }
        RhombicKind::Triangular => {
            let a = 2.0 * delta * FRAC_PI_6.cos();
            let step = C64::from_polar(a, FRAC_PI_3);
            let pos: Vec<C64> =
                (0..h).flat_map(|j| (0..w).map(move |i| a * i as f64 + step * j as f64)).collect();
            let idx = |i: usize, j: usize| j * w + i;
            let mut edges = Vec::new();
            for j in 0..h {
                for i in 0..w {
                    if i + 1 < w {
                        edges.push([idx(i, j), idx(i + 1, j)]);
                    }
                    if j + 1 < h {
                        edges.push([idx(i, j), idx(i, j + 1)]);
                        if i > 0 {
                            edges.push([idx(i, j), idx(i - 1, j + 1)]);
                        }
                    }
                }
            }
            build_with_bc(&pos, &edges, bc)?
        }
        RhombicKind::Honeycomb => {
            // union of hexagons of circumradius δ centred on a triangular lattice
            let a = 2.0 * delta * FRAC_PI_6.cos();
            let step = C64::from_polar(a, FRAC_PI_3);
            let mut pos: Vec<C64> = Vec::new();
            let mut edges: Vec<[usize; 2]> = Vec::new();
            let find = |p: C64, pos: &mut Vec<C64>| -> usize {
                if let Some(k) = pos.iter().position(|q| (q - p).norm() < 1e-9 * delta) {
                    k
                } else {
                    pos.push(p);
                    pos.len() - 1
                }
            };
            for j in 0..h {
                for i in 0..w {
                    let c = a * i as f64 + step * j as f64;
                    let ids: Vec<usize> = (0..6)
                        .map(|k| find(c + C64::from_polar(delta, FRAC_PI_6 + k as f64 * FRAC_PI_3), &mut pos))
                        .collect();
                    for k in 0..6 {
                        let e = [ids[k].min(ids[(k + 1) % 6]), ids[k].max(ids[(k + 1) % 6])];
                        if !edges.contains(&e) {
                            edges.push(e);
                        }
                    }
                }
            }
            build_with_bc(&pos, &edges, bc)?
        }
    };
    IsoradialMap::from_map(map, THETA_MIN.min(FRAC_PI_6 - 1e-9))
}

/// Boundary arcs for non-rectangular patches: wired, or the outer walk cut
/// into four roughly equal arcs alternating wired and free.
fn build_with_bc(pos: &[C64], edges: &[[usize; 2]], bc: GridBoundary) -> Result<PlanarMap> {
    let wired = build_map(pos, edges, &[])?;
    let kinds = match bc {
        GridBoundary::Wired => return Ok(wired),
        GridBoundary::Sides(k) => k,
    };
    let walk = wired.outer_walk();
    let n = walk.len();
    let mut arcs: Vec<crate::planar_map::BoundaryArc> = Vec::new();
    for s in 0..4 {
        let part = walk[s * n / 4..(s + 1) * n / 4].to_vec();
        match arcs.last_mut() {
            Some(a) if a.kind == kinds[s] => a.edges.extend(part),
            _ => arcs.push(crate::planar_map::BoundaryArc { kind: kinds[s], edges: part }),
        }
    }
    if arcs.len() > 1 && arcs[0].kind == arcs[arcs.len() - 1].kind {
        let last = arcs.pop().unwrap();
        let mut e = last.edges;
        e.extend(arcs[0].edges.iter().copied());
        arcs[0].edges = e;
    }
    if arcs.iter().all(|a| a.kind == ArcKind::Wired) {
        return Ok(wired);
    }
    build_map(pos, edges, &arcs)
}

/// Δ• on bullets (conductance tan θ) and Δ° on circ vertices (cot θ).
#[derive(Clone, Debug)]
pub struct IsoLaplacian {
    pub bullet: DMatrix<f64>,
    pub circ: DMatrix<f64>,
}

pub fn iso_laplacian(iso: &IsoradialMap) -> IsoLaplacian {
    let d = &iso.dual;
    let mut lb = DMatrix::zeros(d.n_bullet, d.n_bullet);
    let mut lc = DMatrix::zeros(d.num_circ(), d.num_circ());
    for (q, &t) in d.quads.iter().zip(&iso.theta) {
        add_conductance(&mut lb, q.vb[0], q.vb[1], t.tan());
        add_conductance(&mut lc, q.u[0], q.u[1], 1.0 / t.tan());
    }
    IsoLaplacian { bullet: lb, circ: lc }
}

fn add_conductance(l: &mut DMatrix<f64>, a: usize, b: usize, c: f64) {
    if a == b {
        return;
    }
    l[(a, b)] += c;
    l[(b, a)] += c;
    l[(a, a)] -= c;
    l[(b, b)] -= c;
}

/// Vertices of Λ whose every neighbouring cell is a quad (no boundary triangle).
pub fn interior_lambda(iso: &IsoradialMap) -> (Vec<usize>, Vec<usize>) {
    interior_lambda_of(&iso.map, &iso.dual)
}

/// [`interior_lambda`] for any map and its dual pair.
pub fn interior_lambda_of(map: &PlanarMap, d: &DualPair) -> (Vec<usize>, Vec<usize>) {
    let on_outer: Vec<bool> = {
        let mut b = vec![false; map.num_vertices()];
        for e in map.outer_walk() {
            for v in map.edge(e) {
                b[v] = true;
            }
        }
        b
    };
    let bullets = (0..map.num_vertices())
        .filter(|&v| !on_outer[v] && d.bullet_of.iter().filter(|&&b| b == d.bullet_of[v]).count() == 1)
        .map(|v| d.bullet_of[v])
        .collect();
    let circs = (0..d.num_circ())
        .filter(|&u| {
            !d.is_wired_circ(u)
                && match d.circ[u] {
                    crate::planar_map::CircKind::Face(f) => {
                        map.face(f).iter().all(|&h| map.edge_kind(map.edge_of(h)) != EdgeKind::Free)
                    }
                    crate::planar_map::CircKind::Wired(_) => false,
                }
        })
        .collect();
    (bullets, circs)
}

/// Quads around a Λ vertex.
pub fn star(dual: &DualPair, v: LambdaVertex) -> Vec<usize> {
    (0..dual.quads.len())
        .filter(|&z| match v {
            LambdaVertex::Bullet(b) => dual.quads[z].vb.contains(&b),
            LambdaVertex::Circ(u) => dual.quads[z].u.contains(&u),
        })
        .collect()
}

/// `[Δ•H_F](v)` or `[Δ°H_F](v)` computed from corner values around `v`.
/// Fails when the spinor violates propagation at a quad around `v`.
pub fn positivity_check(iso: &IsoradialMap, spinor: &CornerSpinor, v: LambdaVertex, tol: f64) -> Result<f64> {
    let d = &iso.dual;
    let quads = star(d, v);
    if quads.is_empty() {
        return Err(Error::Input(format!("{v:?} has no quads")));
    }
    for &z in &quads {
        let r = sholo::check_propagation(spinor, d, z, iso.theta[z]);
        if r.iter().any(|x| x.abs() > tol) {
            return Err(Error::Input(format!("spinor is not s-holomorphic at quad {z}")));
        }
    }
    Ok(local_laplacian(iso, &spinor.values, v, &quads))
}

fn local_laplacian(iso: &IsoradialMap, f: &[f64], v: LambdaVertex, quads: &[usize]) -> f64 {
    let d = &iso.dual;
    let sq = |p: usize, q: usize, z: usize| f[d.quads[z].c[p][q]].powi(2);
    quads
        .iter()
        .map(|&z| {
            let quad = &d.quads[z];
            let t = iso.theta[z];
            match v {
                LambdaVertex::Bullet(b) => {
                    // H(v1) − H(v) through the face u0
                    let p = if quad.vb[0] == b { 0 } else { 1 };
                    t.tan() * (sq(1 - p, 0, z) - sq(p, 0, z))
                }
                LambdaVertex::Circ(u) => {
                    let q = if quad.u[0] == u { 0 } else { 1 };
                    (sq(0, q, z) - sq(0, 1 - q, z)) / t.tan()
                }
            }
        })
        .sum()
}

/// Random s-holomorphic spinors on the quads around one Λ vertex.
pub struct LocalSpinors {
    pub vertex: LambdaVertex,
    pub quads: Vec<usize>,
    pub corners: Vec<usize>,
    /// columns: basis of local solutions, indexed by `corners`
    pub basis: DMatrix<f64>,
    pub cover: DoubleCover,
}

impl LocalSpinors {
    pub fn new(iso: &IsoradialMap, v: LambdaVertex) -> Self {
        Self::with_thetas(&iso.dual, &iso.theta, v)
    }

    /// Local solutions for arbitrary quad angles.
    pub fn with_thetas(d: &DualPair, thetas: &[f64], v: LambdaVertex) -> Self {
        let cover = DoubleCover::ups_times(d, &Varpi::empty());
        let quads = star(d, v);
        let mut corners: Vec<usize> = quads.iter().flat_map(|&z| d.quads[z].loop_corners()).collect();
        corners.sort();
        corners.dedup();
        let full = sholo::propagation_matrix(d, &cover, thetas, false);
        let rows: Vec<usize> = quads.iter().flat_map(|&z| 4 * z..4 * z + 4).collect();
        let a = DMatrix::from_fn(rows.len(), corners.len(), |r, c| full[(rows[r], corners[c])]);
        let basis = null_space(&a);
        LocalSpinors { vertex: v, quads, corners, basis, cover }
    }

    /// Full corner vector from local coefficients.
    pub fn spinor(&self, n_corners: usize, coeff: &[f64]) -> CornerSpinor {
        let local = &self.basis * nalgebra::DVector::from_column_slice(coeff);
        let mut values = vec![0.0; n_corners];
        for (k, &c) in self.corners.iter().enumerate() {
            values[c] = local[k];
        }
        CornerSpinor { values, cover: self.cover.clone() }
    }

    /// The quadratic form `coeff ↦ ΔH_F(v)` in the local basis.
    pub fn laplacian_form(&self, iso: &IsoradialMap) -> DMatrix<f64> {
        let n = self.basis.ncols();
        let nc = iso.dual.corners.len();
        let eval = |c: &[f64]| local_laplacian(iso, &self.spinor(nc, c).values, self.vertex, &self.quads);
        let mut q = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            q[(i, i)] = eval(&e);
            e[i] = 0.0;
        }
        for i in 0..n {
            for j in i + 1..n {
                e[i] = 1.0;
                e[j] = 1.0;
                let both = eval(&e);
                e[i] = 0.0;
                e[j] = 0.0;
                let v = 0.5 * (both - q[(i, i)] - q[(j, j)]);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        q
    }
}

/// Orthonormal null-space basis (columns).
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] < 1e-11 * scale).collect();
    DMatrix::from_fn(a.ncols(), cols.len(), |r, k| eig.eigenvectors[(r, cols[k])])
}

/// Outcome of the boundary-condition check for `H_F`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundaryReport {
    /// largest |H| on wired boundary dual vertices
    pub wired_max_abs: f64,
    /// smallest inward derivative across wired edges (should be ≥ 0)
    pub wired_min_normal: f64,
    /// value of H on each free arc (one merged vertex each)
    pub free_values: Vec<f64>,
    /// largest inward derivative from free arcs (should be ≤ 0)
    pub free_max_normal: f64,
    pub violations: Vec<String>,
}

/// Boundary conditions: `H = 0`, `∂_ν H ≥ 0` on wired arcs; `H` constant,
/// `∂_ν H ≤ 0` on free arcs. The inward derivative at a boundary Λ vertex is
/// the difference to its Λ-neighbours inside the boundary cell: bullets next
/// to a wired circ, faces next to a free macro-vertex.
pub fn boundary_h_check(map: &PlanarMap, dual: &DualPair, h: &HFunction, tol: f64) -> BoundaryReport {
    let mut rep = BoundaryReport { wired_min_normal: f64::INFINITY, free_max_normal: f64::NEG_INFINITY, ..Default::default() };
    let mut free_bullets: Vec<usize> = (0..map.num_edges())
        .filter(|&e| map.edge_kind(e) == EdgeKind::Free)
        .map(|e| dual.bullet_of[map.edge(e)[0]])
        .collect();
    free_bullets.sort();
    free_bullets.dedup();
    for u in (0..dual.num_circ()).filter(|&u| dual.is_wired_circ(u)) {
        rep.wired_max_abs = rep.wired_max_abs.max(h.circ[u].abs());
        if h.circ[u].abs() > tol {
            rep.violations.push(format!("H = {} at wired dual vertex {u}", h.circ[u]));
        }
    }
    for &b in &free_bullets {
        rep.free_values.push(h.bullet[b]);
    }
    for c in &dual.corners {
        let b = dual.bullet_of[c.v];
        if dual.is_wired_circ(c.u) {
            let dn = h.bullet[b] - h.circ[c.u];
            rep.wired_min_normal = rep.wired_min_normal.min(dn);
            if dn < -tol {
                rep.violations.push(format!("inward derivative {dn} < 0 at wired dual vertex {}", c.u));
            }
        }
        if free_bullets.contains(&b) && !dual.is_wired_circ(c.u) {
            let dn = h.circ[c.u] - h.bullet[b];
            rep.free_max_normal = rep.free_max_normal.max(dn);
            if dn > tol {
                rep.violations.push(format!("inward derivative {dn} > 0 from free arc at face vertex {}", c.u));
            }
        }
    }
    rep
}

/// Residual of `−δ⁻¹(Δ• ⊕ Δ°) = 16 ∂*_Λ R ∂_Λ` on interior Λ vertices, with
/// `R = diag(r_z)`, `r_z = ¼ δ⁻¹ |v•1 − v•0| |v°1 − v°0|`, together with the
/// conjugated form (∂̄ in place of ∂), as largest absolute entry differences.
pub fn iso_factorization_check(iso: &IsoradialMap) -> (f64, f64) {
    let map = &iso.map;
    let d = &iso.dual;
    let nb = d.n_bullet;
    let n = nb + d.num_circ();
    let nq = d.quads.len();
    // ∂_Λ and ∂̄_Λ as quad × Λ matrices
    let mut dm = DMatrix::<C64>::zeros(nq, n);
    let mut dbar = DMatrix::<C64>::zeros(nq, n);
    let mut r = vec![0.0; nq];
    for (z, q) in d.quads.iter().enumerate() {
        let (b0, b1) = (map.pos(q.v[0]), map.pos(q.v[1]));
        let (w0, w1) = (d.circ_pos[q.u[0]], d.circ_pos[q.u[1]]);
        for (i, j, p0, p1) in [(q.vb[0], q.vb[1], b0, b1), (nb + q.u[0], nb + q.u[1], w0, w1)] {
            let k = 0.5 / (p1 - p0);
            dm[(z, j)] += k;
            dm[(z, i)] -= k;
            let kb = 0.5 / (p1 - p0).conj();
            dbar[(z, j)] += kb;
            dbar[(z, i)] -= kb;
        }
        r[z] = 0.25 / iso.delta * (b1 - b0).norm() * (w1 - w0).norm();
    }
    let rm = DMatrix::<C64>::from_diagonal(&nalgebra::DVector::from_iterator(nq, r.iter().map(|&x| C64::new(x, 0.0))));
    let lap = iso_laplacian(iso);
    let mut l = DMatrix::<C64>::zeros(n, n);
    for i in 0..nb {
        for j in 0..nb {
            l[(i, j)] = C64::new(-lap.bullet[(i, j)] / iso.delta, 0.0);
        }
    }
    for i in 0..d.num_circ() {
        for j in 0..d.num_circ() {
            l[(nb + i, nb + j)] = C64::new(-lap.circ[(i, j)] / iso.delta, 0.0);
        }
    }
    let (ib, ic) = interior_lambda(iso);
    let rows: Vec<usize> = ib.into_iter().chain(ic.into_iter().map(|u| nb + u)).collect();
    let gap = |m: &DMatrix<C64>| {
        let mut worst: f64 = 0.0;
        for &i in &rows {
            for j in 0..n {
                worst = worst.max((m[(i, j)] * 16.0 - l[(i, j)]).norm());
            }
        }
        worst
    };
    let a = dm.adjoint() * &rm * &dm;
    let b = dbar.adjoint() * &rm * &dbar;
    (gap(&a), gap(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising_enum::Oracle;
    use crate::sholo::{default_base, integrate_hf};
    use crate::weights::{beta_crit_square, X_CRIT_SQUARE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn square_lattice_is_critical() {
        let iso = square_lattice(0.5, 4, 4, GridBoundary::Wired).unwrap();
        assert!((iso.delta - 0.5 / 2f64.sqrt()).abs() < 1e-12);
        for (q, t) in iso.dual.quads.iter().zip(&iso.theta) {
            assert!((t - FRAC_PI_4).abs() < 1e-12);
            assert!((iso.weights.x(q.edge) - X_CRIT_SQUARE).abs() < 1e-12);
            assert!((FRAC_PI_2 - t - FRAC_PI_4).abs() < 1e-12);
        }
        assert!((beta_crit_square() + 0.5 * (2f64.sqrt() - 1.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn rectangular_quarter_turn_is_square() {
        let a = rhombic_lattice(RhombicKind::Rectangular { theta: FRAC_PI_4 }, 4, 4, 1.0, GridBoundary::Wired).unwrap();
        let b = square_lattice(2.0 * FRAC_PI_4.cos(), 4, 4, GridBoundary::Wired).unwrap();
        assert_eq!(a.map.edges(), b.map.edges());
        assert!(a.map.positions().iter().zip(b.map.positions()).all(|(p, q)| (p - q).norm() < 1e-12));
        assert!(matches!(
            rhombic_lattice(RhombicKind::Rectangular { theta: 0.0 }, 3, 3, 1.0, GridBoundary::Wired),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn sixty_degree_lattices() {
        let tri = rhombic_lattice(RhombicKind::Triangular, 4, 4, 1.0, GridBoundary::Wired).unwrap();
        assert!(tri.theta.iter().all(|t| (t - FRAC_PI_6).abs() < 1e-12));
        assert!(tri.dual.quads.iter().all(|q| (tri.weights.x(q.edge) - (FRAC_PI_6 / 2.0).tan()).abs() < 1e-12));
        let hex = rhombic_lattice(RhombicKind::Honeycomb, 3, 3, 1.0, GridBoundary::Wired).unwrap();
        assert!(hex.theta.iter().all(|t| (t - FRAC_PI_3).abs() < 1e-12));
        assert!(hex.dual.quads.iter().all(|q| (hex.weights.x(q.edge) - FRAC_PI_6.tan()).abs() < 1e-12));
    }

    #[test]
    fn laplacian_rows_and_linear_functions() {
        for iso in [
            square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Triangular, 5, 5, 1.0, GridBoundary::Wired).unwrap(),
        ] {
            let l = iso_laplacian(&iso);
            for i in 0..l.bullet.nrows() {
                assert!(l.bullet.row(i).sum().abs() < 1e-12);
            }
            let re: Vec<f64> = {
                let mut v = vec![0.0; iso.dual.n_bullet];
                for p in 0..iso.map.num_vertices() {
                    v[iso.dual.bullet_of[p]] = iso.map.pos(p).re;
                }
                v
            };
            let lap = &l.bullet * nalgebra::DVector::from_vec(re);
            for b in interior_lambda(&iso).0 {
                assert!(lap[b].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirac_h_is_harmonic() {
        let iso = square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap();
        let (eta, cover) = sholo::dirac_on_ups_times(&iso.map, &iso.dual, C64::from_polar(1.0, FRAC_PI_4)).unwrap();
        let s = CornerSpinor { values: eta.values.iter().map(|e| e.conj().re).collect(), cover };
        let (ib, ic) = interior_lambda(&iso);
        for b in ib {
            assert!(positivity_check(&iso, &s, LambdaVertex::Bullet(b), 1e-12).unwrap().abs() < 1e-12);
        }
        for u in ic {
            assert!(positivity_check(&iso, &s, LambdaVertex::Circ(u), 1e-12).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn local_positivity_and_equality_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for iso in [
            square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Triangular, 5, 5, 1.0, GridBoundary::Wired).unwrap(),
        ] {
            let (ib, ic) = interior_lambda(&iso);
            let nc = iso.dual.corners.len();
            for (v, sign) in [(LambdaVertex::Bullet(ib[0]), 1.0), (LambdaVertex::Circ(ic[0]), -1.0)] {
                let local = LocalSpinors::new(&iso, v);
                for _ in 0..200 {
                    let c: Vec<f64> = (0..local.basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let val = positivity_check(&iso, &local.spinor(nc, &c), v, 1e-9).unwrap();
                    assert!(sign * val >= -1e-12, "{v:?}: {val}");
                }
                // the form vanishes exactly on a two-dimensional subspace
                let q = local.laplacian_form(&iso) * sign;
                let ev = SymmetricEigen::new(q).eigenvalues;
                let zeros = ev.iter().filter(|&&e| e.abs() < 1e-8).count();
                assert!(ev.iter().all(|&e| e > -1e-10));
                assert_eq!(zeros, 2, "{ev}");
            }
        }
    }

    #[test]
    fn rejects_non_sholo_input() {
        let iso = square_lattice(1.0, 4, 4, GridBoundary::Wired).unwrap();
        let (ib, _) = interior_lambda(&iso);
        let s = CornerSpinor { values: (0..iso.dual.corners.len()).map(|c| c as f64).collect(), cover: DoubleCover::trivial(&iso.dual) };
        assert!(matches!(positivity_check(&iso, &s, LambdaVertex::Bullet(ib[0]), 1e-9), Err(Error::Input(_))));
    }

    #[test]
    fn factorization_on_isoradial_lattices() {
        for iso in [
            square_lattice(1.0, 6, 6, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Triangular, 5, 5, 1.0, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Rectangular { theta: 0.6 }, 5, 5, 1.0, GridBoundary::Wired).unwrap(),
        ] {
            let (a, b) = iso_factorization_check(&iso);
            assert!(a < 1e-10 && b < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn enumerated_observables_meet_boundary_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let iso = square_lattice(1.0, 4, 4, GridBoundary::crossing()).unwrap();
        let o = Oracle::new(&iso.map, &iso.weights).unwrap();
        let d = &iso.dual;
        let inner: Vec<usize> = iso.map.inner_faces().collect();
        for _ in 0..10 {
            let v = rng.random_range(0..iso.map.num_vertices());
            let f = inner[rng.random_range(0..inner.len())];
            let obs: CornerSpinor = o.corner_observable(&[v], &[f]).unwrap().into();
            let h = integrate_hf(d, &obs, default_base(d), 0.0, 1e-9).unwrap();
            assert!(h.loop_closure < 1e-12);
            let rep = boundary_h_check(&iso.map, d, &h, 1e-9);
            assert!(rep.violations.is_empty(), "{:?}", rep.violations);
            assert!(rep.wired_max_abs < 1e-12 && rep.wired_min_normal >= 0.0 && rep.free_max_normal <= 0.0);
            assert!(!rep.free_values.is_empty());
        }
    }

    #[test]
    fn enumerated_h_is_sub_and_superharmonic() {
        let iso = square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap();
        let o = Oracle::new(&iso.map, &iso.weights).unwrap();
        let (ib, ic) = interior_lambda(&iso);
        let center = 12;
        let face = iso.map.inner_faces().next().unwrap();
        let obs: CornerSpinor = o.corner_observable(&[center], &[face]).unwrap().into();
        let skip_b = iso.dual.bullet_of[center];
        let skip_c = iso.dual.circ_of_face[face];
        let mut checked = 0;
        for b in ib.into_iter().filter(|&b| b != skip_b) {
            let v = LambdaVertex::Bullet(b);
            if star(&iso.dual, v).iter().all(|&z| sholo::check_propagation(&obs, &iso.dual, z, iso.theta[z]).iter().all(|r| r.abs() < 1e-9)) {
                assert!(positivity_check(&iso, &obs, v, 1e-9).unwrap() >= -1e-12);
                checked += 1;
            }
        }
        for u in ic.into_iter().filter(|&u| Some(u) != skip_c) {
            let v = LambdaVertex::Circ(u);
            if star(&iso.dual, v).iter().all(|&z| sholo::check_propagation(&obs, &iso.dual, z, iso.theta[z]).iter().all(|r| r.abs() < 1e-9)) {
                assert!(positivity_check(&iso, &obs, v, 1e-9).unwrap() <= 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 10, "{checked}");
    }
}

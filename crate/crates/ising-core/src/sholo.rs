//! S-holomorphic spinors on corners: the propagation equation, extension
//! quad by quad, the function `H_F`, complex observables on quads and the
//! isoradial Cauchy–Riemann operators.

use crate::error::{Error, Result};
use crate::geom::C64;
use crate::ising_enum::CornerObservable;
use crate::planar_map::{DiracPhase, DoubleCover, DualPair, PlanarMap, Varpi};
use crate::weights::IsingWeights;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use std::collections::VecDeque;

/// Real spinor on corners, stored on the reference sheet of `cover`.
#[derive(Clone, Debug)]
pub struct CornerSpinor {
    pub values: Vec<f64>,
    pub cover: DoubleCover,
}

impl From<CornerObservable> for CornerSpinor {
    fn from(o: CornerObservable) -> Self {
        CornerSpinor { values: o.values, cover: o.cover }
    }
}

/// Half-angles `θ_z = 2 arctan x_e` of every quad.
pub fn quad_thetas(dual: &DualPair, w: &IsingWeights) -> Vec<f64> {
    dual.quads.iter().map(|q| w.theta(q.edge)).collect()
}

/// Signs taking reference-sheet values to the lift of the quad loop
/// `c00, c10, c11, c01` that starts on the reference sheet at `c00`.
pub fn loop_signs(cover: &DoubleCover, dual: &DualPair, z: usize) -> [f64; 4] {
    let s = cover.quad_signs(dual, z);
    let mut out = [1.0; 4];
    for k in 1..4 {
        out[k] = out[k - 1] * f64::from(s[k - 1]);
    }
    out
}

/// Terms `(loop position, coefficient)` of the propagation residual at loop
/// position `k`: `L_k − cos θ L_{same v} − sin θ L_{other}`, where the lifted
/// loop continues with a sign flip after each full turn.
pub(crate) fn propagation_terms(k: usize, theta: f64) -> [(usize, f64); 3] {
    let (s, c) = theta.sin_cos();
    let prev = ((k + 3) % 4, if k == 0 { -1.0 } else { 1.0 });
    let next = ((k + 1) % 4, if k == 3 { -1.0 } else { 1.0 });
    // even loop steps move the vertex, odd ones the face
    let (same, other) = if k.is_multiple_of(2) { (prev, next) } else { (next, prev) };
    [(k, 1.0), (same.0, -c * same.1), (other.0, -s * other.1)]
}

/// `F(c_pq) − F(c_{p,1−q}) cos θ − F(c_{1−p,q}) sin θ`.
pub fn propagation_residual(f_pq: f64, f_same_v: f64, f_other: f64, theta: f64) -> f64 {
    f_pq - f_same_v * theta.cos() - f_other * theta.sin()
}

/// Value at a corner from its two neighbours in the quad.
pub fn propagate(f_same_v: f64, f_other: f64, theta: f64) -> f64 {
    f_same_v * theta.cos() + f_other * theta.sin()
}

/// Residuals at the four loop positions of quad `z`.
pub fn check_propagation(spinor: &CornerSpinor, dual: &DualPair, z: usize, theta: f64) -> [f64; 4] {
    let lc = dual.quads[z].loop_corners();
    let sg = loop_signs(&spinor.cover, dual, z);
    let l: Vec<f64> = (0..4).map(|k| sg[k] * spinor.values[lc[k]]).collect();
    let mut r = [0.0; 4];
    for (k, rk) in r.iter_mut().enumerate() {
        *rk = propagation_terms(k, theta).iter().map(|&(j, a)| a * l[j]).sum();
    }
    r
}

/// Largest propagation residual over all quads.
pub fn max_propagation_residual(spinor: &CornerSpinor, dual: &DualPair, thetas: &[f64]) -> f64 {
    (0..dual.quads.len())
        .flat_map(|z| check_propagation(spinor, dual, z, thetas[z]))
        .fold(0.0, |m, r| m.max(r.abs()))
}

/// Lifted loop values of a quad from the values at two distinct loop positions.
pub fn complete_quad(theta: f64, known: [(usize, f64); 2]) -> Result<[f64; 4]> {
    if known[0].0 == known[1].0 || known.iter().any(|k| k.0 > 3) {
        return Err(Error::Input("need two distinct loop positions".into()));
    }
    let mut a = DMatrix::<f64>::zeros(6, 4);
    let mut b = nalgebra::DVector::<f64>::zeros(6);
    for k in 0..4 {
        for (j, c) in propagation_terms(k, theta) {
            a[(k, j)] += c;
        }
    }
    for (r, &(j, v)) in known.iter().enumerate() {
        a[(4 + r, j)] = 1.0;
        b[4 + r] = v;
    }
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Input(format!("quad completion failed: {e}")))?;
    let res = (&a * &sol - &b).amax();
    if res > 1e-9 * b.amax().max(1.0) {
        return Err(Error::NonIntegrable { residual: res });
    }
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

/// Extend seed values quad by quad. Every quad with two known corners is
/// completed; a quad whose known corners disagree raises `NonIntegrable`.
pub fn extend_spinor(
    dual: &DualPair,
    cover: &DoubleCover,
    thetas: &[f64],
    seeds: &[(usize, f64)],
    tol: f64,
) -> Result<CornerSpinor> {
    let nc = dual.corners.len();
    let mut val: Vec<Option<f64>> = vec![None; nc];
    for &(c, v) in seeds {
        val[c] = Some(v);
    }
    let quads_of: Vec<Vec<usize>> = {
        let mut q = vec![Vec::new(); nc];
        for (z, quad) in dual.quads.iter().enumerate() {
            for c in quad.loop_corners() {
                q[c].push(z);
            }
        }
        q
    };
    let mut queue: VecDeque<usize> = (0..dual.quads.len()).collect();
    let mut done = vec![false; dual.quads.len()];
    let mut worst: f64 = 0.0;
    while let Some(z) = queue.pop_front() {
        if done[z] {
            continue;
        }
        let lc = dual.quads[z].loop_corners();
        let sg = loop_signs(cover, dual, z);
        let known: Vec<(usize, f64)> = (0..4).filter_map(|k| val[lc[k]].map(|v| (k, sg[k] * v))).collect();
        if known.len() < 2 {
            continue;
        }
        let full = complete_quad(thetas[z], [known[0], known[1]])?;
        for &(k, v) in &known[2..] {
            worst = worst.max((full[k] - v).abs());
        }
        if worst > tol {
            return Err(Error::NonIntegrable { residual: worst });
        }
        done[z] = true;
        for k in 0..4 {
            if val[lc[k]].is_none() {
                val[lc[k]] = Some(sg[k] * full[k]);
                queue.extend(quads_of[lc[k]].iter().copied().filter(|&z2| !done[z2]));
            }
        }
    }
    Ok(CornerSpinor { values: val.into_iter().map(|v| v.unwrap_or(0.0)).collect(), cover: cover.clone() })
}

/// Matrix of the propagation equations acting on reference-sheet values.
/// With `boundary`, each boundary triangle adds the row `X(b) = s X(a)` for
/// its corner-graph edge `a → b` with cover sign `s` (a degenerate quad).
pub fn propagation_matrix(dual: &DualPair, cover: &DoubleCover, thetas: &[f64], boundary: bool) -> DMatrix<f64> {
    let nq = dual.quads.len();
    let tri: Vec<usize> = if boundary { triangle_edges(dual) } else { Vec::new() };
    let mut a = DMatrix::zeros(4 * nq + tri.len(), dual.corners.len());
    for z in 0..nq {
        let lc = dual.quads[z].loop_corners();
        let sg = loop_signs(cover, dual, z);
        for k in 0..4 {
            for (j, c) in propagation_terms(k, thetas[z]) {
                a[(4 * z + k, lc[j])] += c * sg[j];
            }
        }
    }
    for (r, &k) in tri.iter().enumerate() {
        let e = &dual.ups_edges[k];
        a[(4 * nq + r, e.b)] += 1.0;
        a[(4 * nq + r, e.a)] -= f64::from(cover.sign[k]);
    }
    a
}

fn triangle_edges(dual: &DualPair) -> Vec<usize> {
    (0..dual.ups_edges.len())
        .filter(|&k| !matches!(dual.ups_edges[k].cell, crate::planar_map::CellKind::Quad(_)))
        .collect()
}

/// Largest `|X(b) − s X(a)|` over boundary-triangle edges of the corner graph.
pub fn boundary_residual(spinor: &CornerSpinor, dual: &DualPair) -> f64 {
    triangle_edges(dual)
        .into_iter()
        .map(|k| {
            let e = &dual.ups_edges[k];
            (spinor.values[e.b] - f64::from(spinor.cover.sign[k]) * spinor.values[e.a]).abs()
        })
        .fold(0.0, f64::max)
}

/// Orthonormal basis (columns) of s-holomorphic spinors on `cover`,
/// optionally subject to the boundary-triangle relations.
pub fn sholo_basis(dual: &DualPair, cover: &DoubleCover, thetas: &[f64], boundary: bool) -> DMatrix<f64> {
    let a = propagation_matrix(dual, cover, thetas, boundary);
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] < 1e-11 * scale).collect();
    DMatrix::from_fn(dual.corners.len(), cols.len(), |r, k| eig.eigenvectors[(r, cols[k])])
}

/// A random s-holomorphic spinor: Gaussian-like combination of a basis.
pub fn random_spinor<R: Rng>(basis: &DMatrix<f64>, cover: &DoubleCover, rng: &mut R) -> CornerSpinor {
    let coeff = nalgebra::DVector::from_fn(basis.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let v = basis * coeff;
    CornerSpinor { values: v.iter().copied().collect(), cover: cover.clone() }
}

/// A vertex of `Λ(G) = G• ∪ G°`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaVertex {
    Bullet(usize),
    Circ(usize),
}

/// `H_F` on both lattices.
#[derive(Clone, Debug)]
pub struct HFunction {
    pub bullet: Vec<f64>,
    pub circ: Vec<f64>,
    pub base: LambdaVertex,
    /// largest `|F(c00)² + F(c11)² − F(c01)² − F(c10)²|`
    pub loop_closure: f64,
}

impl HFunction {
    pub fn at(&self, v: LambdaVertex) -> f64 {
        match v {
            LambdaVertex::Bullet(b) => self.bullet[b],
            LambdaVertex::Circ(u) => self.circ[u],
        }
    }
}

/// Default base point: the first wired boundary dual vertex, else circ 0.
pub fn default_base(dual: &DualPair) -> LambdaVertex {
    LambdaVertex::Circ((0..dual.num_circ()).find(|&u| dual.is_wired_circ(u)).unwrap_or(0))
}

/// Integrate `H(v•(c)) − H(v°(c)) = F(c)²` from a base point.
pub fn integrate_hf(dual: &DualPair, spinor: &CornerSpinor, base: LambdaVertex, base_value: f64, tol: f64) -> Result<HFunction> {
    let nb = dual.n_bullet;
    let nu = dual.num_circ();
    let node = |v: LambdaVertex| match v {
        LambdaVertex::Bullet(b) => b,
        LambdaVertex::Circ(u) => nb + u,
    };
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb + nu];
    let mut scale: f64 = 1.0;
    for (c, corner) in dual.corners.iter().enumerate() {
        let f2 = spinor.values[c] * spinor.values[c];
        scale = scale.max(f2);
        let (b, u) = (dual.bullet_of[corner.v], nb + corner.u);
        adj[u].push((b, f2));
        adj[b].push((u, -f2));
    }
    let mut h = vec![f64::NAN; nb + nu];
    let root = node(base);
    if root >= nb + nu {
        return Err(Error::Input("base point out of range".into()));
    }
    h[root] = base_value;
    let mut q = VecDeque::from([root]);
    let mut worst: f64 = 0.0;
    while let Some(a) = q.pop_front() {
        for &(b, d) in &adj[a] {
            let want = h[a] + d;
            if h[b].is_nan() {
                h[b] = want;
                q.push_back(b);
            } else {
                worst = worst.max((h[b] - want).abs());
            }
        }
    }
    if worst > tol * scale {
        return Err(Error::NonIntegrable { residual: worst });
    }
    let mut closure: f64 = 0.0;
    for quad in &dual.quads {
        let f = |p: usize, q: usize| spinor.values[quad.c[p][q]].powi(2);
        closure = closure.max((f(0, 0) + f(1, 1) - f(0, 1) - f(1, 0)).abs());
    }
    let h: Vec<f64> = h.into_iter().map(|x| if x.is_nan() { base_value } else { x }).collect();
    Ok(HFunction { bullet: h[..nb].to_vec(), circ: h[nb..].to_vec(), base, loop_closure: closure })
}

/// Complex observable `F(z) = ψ_{c00} + ψ_{c11}` with `ψ_c = η_c X(c)`.
#[derive(Clone, Debug)]
pub struct DiamondObservable {
    pub values: Vec<C64>,
    /// product-cover signs along each quad loop, anchored at `c00`
    pub lift: Vec<[f64; 4]>,
    /// largest gap between the two diagonal evaluations
    pub diagonal_gap: f64,
    /// largest `|Pr[F(z); η_c ℝ] − η_c X(c)|` over quads and their corners
    pub projection_gap: f64,
}

pub fn complex_observable(dual: &DualPair, spinor: &CornerSpinor, dirac: &DiracPhase, dirac_cover: &DoubleCover) -> DiamondObservable {
    let nq = dual.quads.len();
    let mut values = Vec::with_capacity(nq);
    let mut lift = Vec::with_capacity(nq);
    let (mut dg, mut pg): (f64, f64) = (0.0, 0.0);
    for z in 0..nq {
        let lc = dual.quads[z].loop_corners();
        let sx = loop_signs(&spinor.cover, dual, z);
        let se = loop_signs(dirac_cover, dual, z);
        let eta: Vec<C64> = (0..4).map(|k| dirac.values[lc[k]] * se[k]).collect();
        let x: Vec<f64> = (0..4).map(|k| spinor.values[lc[k]] * sx[k]).collect();
        let psi: Vec<C64> = (0..4).map(|k| eta[k] * x[k]).collect();
        let f = psi[0] + psi[2];
        dg = dg.max((f - psi[1] - psi[3]).norm());
        for k in 0..4 {
            let e = eta[k];
            let pr = e * (e.conj() * f).re / e.norm_sqr();
            pg = pg.max((pr - psi[k]).norm());
        }
        values.push(f);
        lift.push([sx[0] * se[0], sx[1] * se[1], sx[2] * se[2], sx[3] * se[3]]);
    }
    DiamondObservable { values, lift, diagonal_gap: dg, projection_gap: pg }
}

/// Dirac phases `ς e^{−(i/2) arg(v−u)}` on the cover branching at every face.
pub fn dirac_on_ups_times(map: &PlanarMap, dual: &DualPair, varsigma: C64) -> Result<(DiracPhase, DoubleCover)> {
    let cover = DoubleCover::ups_times(dual, &Varpi::empty());
    Ok((crate::planar_map::dirac_spinor(map, dual, &cover, varsigma)?, cover))
}

/// Common rhombus side when every quad is a rhombus, else `DomainError`.
pub fn isoradial_delta(map: &PlanarMap, dual: &DualPair) -> Result<f64> {
    let mut delta = None;
    for q in &dual.quads {
        for p in 0..2 {
            for s in 0..2 {
                let r = (map.pos(q.v[p]) - dual.circ_pos[q.u[s]]).norm();
                let d = *delta.get_or_insert(r);
                if (r - d).abs() > 1e-9 * d {
                    return Err(Error::Domain(format!("quad of edge {} is not a rhombus of side {d}", q.edge)));
                }
            }
        }
    }
    delta.ok_or_else(|| Error::Domain("no quads".into()))
}

/// `∂_Λ H(z) = ½[(H(v•1) − H(v•0))/(v•1 − v•0) + (H(v°1) − H(v°0))/(v°1 − v°0)]`.
pub fn d_lambda(map: &PlanarMap, dual: &DualPair, h: &HFunction) -> Result<Vec<C64>> {
    isoradial_delta(map, dual)?;
    Ok(dual
        .quads
        .iter()
        .map(|q| {
            let (b0, b1) = (map.pos(q.v[0]), map.pos(q.v[1]));
            let (w0, w1) = (dual.circ_pos[q.u[0]], dual.circ_pos[q.u[1]]);
            0.5 * ((h.bullet[q.vb[1]] - h.bullet[q.vb[0]]) / (b1 - b0) + (h.circ[q.u[1]] - h.circ[q.u[0]]) / (w1 - w0))
        })
        .collect())
}

/// Per-vertex values on the bullet and circ lattices; `None` where undefined.
pub type LambdaValues = (Vec<Option<C64>>, Vec<Option<C64>>);

/// Adjoint of [`d_lambda`] for the pairings `Σ_z area(z) F Ḡ` on quads and
/// `Σ_v H Ḡ` on `Λ`: `∂*F(v) = ½ Σ_{z ∋ v} area(z) F(z) / conj(v − v′(z))`
/// with `v′(z)` the vertex of `z` opposite to `v`. Values are returned per
/// bullet and per circ vertex. Quads around a vertex are brought to a common
/// sheet through shared corners; vertices where this is impossible (branch
/// points) get `None`.
pub fn d_lambda_star(map: &PlanarMap, dual: &DualPair, f: &DiamondObservable) -> Result<LambdaValues> {
    isoradial_delta(map, dual)?;
    let nq = dual.quads.len();
    let mut at_bullet: Vec<Vec<(usize, usize)>> = vec![Vec::new(); map.num_vertices()];
    let mut at_circ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dual.num_circ()];
    for z in 0..nq {
        let q = &dual.quads[z];
        for p in 0..2 {
            at_bullet[q.v[p]].push((z, p));
            at_circ[q.u[p]].push((z, p));
        }
    }
    let area = |z: usize| {
        let q = &dual.quads[z];
        let pts = [map.pos(q.v[0]), dual.circ_pos[q.u[0]], map.pos(q.v[1]), dual.circ_pos[q.u[1]]];
        crate::geom::signed_area(&pts).abs()
    };
    let sum_around = |items: &[(usize, usize)], bullet: bool| -> Option<C64> {
        let signs = common_sheet(dual, f, items.iter().map(|&(z, _)| z).collect(), |z, c| {
            let corner = &dual.corners[c];
            let q = &dual.quads[z];
            if bullet {
                q.v.contains(&corner.v) && items.iter().any(|&(zz, p)| zz == z && q.v[p] == corner.v)
            } else {
                q.u.contains(&corner.u) && items.iter().any(|&(zz, p)| zz == z && q.u[p] == corner.u)
            }
        })?;
        let mut s = C64::new(0.0, 0.0);
        for (&(z, p), sg) in items.iter().zip(signs) {
            let q = &dual.quads[z];
            let d = if bullet {
                map.pos(q.v[p]) - map.pos(q.v[1 - p])
            } else {
                dual.circ_pos[q.u[p]] - dual.circ_pos[q.u[1 - p]]
            };
            s += 0.5 * area(z) * f.values[z] * sg / d.conj();
        }
        Some(s)
    };
    let b = at_bullet.iter().map(|it| if it.is_empty() { None } else { sum_around(it, true) }).collect();
    let c = at_circ.iter().map(|it| if it.is_empty() { None } else { sum_around(it, false) }).collect();
    Ok((b, c))
}

/// Signs bringing the quads in `zs` to one sheet, walking through shared
/// corners accepted by `shared`. `None` if the sheets do not close up.
fn common_sheet(dual: &DualPair, f: &DiamondObservable, zs: Vec<usize>, shared: impl Fn(usize, usize) -> bool) -> Option<Vec<f64>> {
    let n = zs.len();
    let mut sg = vec![0.0; n];
    sg[0] = 1.0;
    let mut q = VecDeque::from([0]);
    let pos_in = |z: usize, c: usize| dual.quads[z].loop_corners().iter().position(|&x| x == c);
    while let Some(i) = q.pop_front() {
        let zi = zs[i];
        for j in 0..n {
            if j == i {
                continue;
            }
            let zj = zs[j];
            for c in dual.quads[zi].loop_corners() {
                if !shared(zi, c) || !shared(zj, c) {
                    continue;
                }
                let (Some(ki), Some(kj)) = (pos_in(zi, c), pos_in(zj, c)) else { continue };
                let want = sg[i] * f.lift[zi][ki] * f.lift[zj][kj];
                if sg[j] == 0.0 {
                    sg[j] = want;
                    q.push_back(j);
                } else if sg[j] != want {
                    return None;
                }
            }
        }
    }
    if sg.contains(&0.0) {
        return None;
    }
    Some(sg)
}

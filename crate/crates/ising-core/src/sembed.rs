//! S-embeddings `S = H_{F1 + iF2}` built from pairs of real s-holomorphic
//! spinors, their tangential-quad geometry, the s-Laplacian `Δ_S` and the
//! Cauchy–Riemann operator `∂̄_S`.

use crate::error::{Error, Result};
use crate::geom::{self, C64};
use crate::isoradial::{interior_lambda_of, null_space, star, LocalSpinors};
use crate::planar_map::{DoubleCover, DualPair, PlanarMap, Varpi};
use crate::sholo::{self, CornerSpinor, HFunction, LambdaVertex};
use crate::weights::IsingWeights;
use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use serde::Serialize;
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_4, PI};

/// Positions of Λ(G) and of the quad centers, with the complex spinor that
/// produced them (empty when built from positions alone).
#[derive(Clone, Debug)]
pub struct SEmbedding {
    pub bullet: Vec<C64>,
    pub circ: Vec<C64>,
    /// incircle centers of the image quads
    pub center: Vec<C64>,
    /// `F = F1 + iF2` on the reference sheet of `cover`
    pub spinor: Vec<C64>,
    pub cover: DoubleCover,
    /// largest disagreement between the four center formulas of a quad
    pub center_gap: f64,
}

impl SEmbedding {
    pub fn at(&self, v: LambdaVertex) -> C64 {
        match v {
            LambdaVertex::Bullet(b) => self.bullet[b],
            LambdaVertex::Circ(u) => self.circ[u],
        }
    }

    /// Image quad `(S(v•0), S(v°0), S(v•1), S(v°1))`.
    pub fn quad_points(&self, dual: &DualPair, z: usize) -> [C64; 4] {
        let q = &dual.quads[z];
        [self.bullet[q.vb[0]], self.circ[q.u[0]], self.bullet[q.vb[1]], self.circ[q.u[1]]]
    }

    /// Position as a flat Λ vector: bullets first, then circs.
    pub fn lambda(&self) -> Vec<C64> {
        self.bullet.iter().chain(&self.circ).copied().collect()
    }

    /// Real and imaginary parts of the spinor as real spinors.
    pub fn spinor_pair(&self) -> (CornerSpinor, CornerSpinor) {
        (
            CornerSpinor { values: self.spinor.iter().map(|f| f.re).collect(), cover: self.cover.clone() },
            CornerSpinor { values: self.spinor.iter().map(|f| f.im).collect(), cover: self.cover.clone() },
        )
    }

    /// An embedding given by its Λ positions; centers are the incircles.
    pub fn from_positions(dual: &DualPair, bullet: Vec<C64>, circ: Vec<C64>) -> Result<Self> {
        if bullet.len() != dual.n_bullet || circ.len() != dual.num_circ() {
            return Err(Error::Shape("positions do not match Λ(G)".into()));
        }
        let mut s = SEmbedding {
            bullet,
            circ,
            center: Vec::new(),
            spinor: Vec::new(),
            cover: DoubleCover::ups_times(dual, &Varpi::empty()),
            center_gap: 0.0,
        };
        for z in 0..dual.quads.len() {
            let (c, _) = geom::incircle(s.quad_points(dual, z))
                .ok_or_else(|| Error::Geometry(format!("quad {z} has no incircle")))?;
            s.center.push(c);
        }
        Ok(s)
    }
}

fn node(dual: &DualPair, v: LambdaVertex) -> usize {
    match v {
        LambdaVertex::Bullet(b) => b,
        LambdaVertex::Circ(u) => dual.n_bullet + u,
    }
}

/// Integrate corner increments `H(v•(c)) − H(v°(c)) = incr[c]` over Λ.
/// Returns node values and the largest inconsistency met.
fn integrate_increments(dual: &DualPair, incr: &[C64], base: LambdaVertex) -> (Vec<C64>, f64) {
    let nb = dual.n_bullet;
    let n = nb + dual.num_circ();
    let mut adj: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    for (c, corner) in dual.corners.iter().enumerate() {
        let (b, u) = (dual.bullet_of[corner.v], nb + corner.u);
        adj[u].push((b, incr[c]));
        adj[b].push((u, -incr[c]));
    }
    let mut h = vec![C64::new(f64::NAN, 0.0); n];
    let mut worst: f64 = 0.0;
    let root = node(dual, base);
    h[root] = C64::new(0.0, 0.0);
    let mut q = VecDeque::from([root]);
    while let Some(a) = q.pop_front() {
        for &(b, d) in &adj[a] {
            let want = h[a] + d;
            if h[b].re.is_nan() {
                h[b] = want;
                q.push_back(b);
            } else {
                worst = worst.max((h[b] - want).norm());
            }
        }
    }
    (h.into_iter().map(|x| if x.re.is_nan() { C64::new(0.0, 0.0) } else { x }).collect(), worst)
}

fn lifted(dual: &DualPair, cover: &DoubleCover, f: &[C64], z: usize) -> [C64; 4] {
    let lc = dual.quads[z].loop_corners();
    let sg = sholo::loop_signs(cover, dual, z);
    [f[lc[0]] * sg[0], f[lc[1]] * sg[1], f[lc[2]] * sg[2], f[lc[3]] * sg[3]]
}

/// `S = H_{F1 + iF2}` with `S(base) = 0`; quad centers from the corner products.
pub fn build_sembedding(
    dual: &DualPair,
    w: &IsingWeights,
    f1: &CornerSpinor,
    f2: &CornerSpinor,
    base: LambdaVertex,
) -> Result<SEmbedding> {
    let n = dual.corners.len();
    if f1.values.len() != n || f2.values.len() != n {
        return Err(Error::Shape("spinors do not match the corner set".into()));
    }
    if f1.cover.sign != f2.cover.sign {
        return Err(Error::Input("spinors live on different covers".into()));
    }
    let thetas = sholo::quad_thetas(dual, w);
    let scale = f1.values.iter().chain(&f2.values).fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    for f in [f1, f2] {
        let r = sholo::max_propagation_residual(f, dual, &thetas);
        if r > 1e-10 * scale {
            return Err(Error::Input(format!("spinor violates propagation (residual {r:e})")));
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (g11, g22, g12) = (dot(&f1.values, &f1.values), dot(&f2.values, &f2.values), dot(&f1.values, &f2.values));
    if g11 * g22 - g12 * g12 <= 1e-12 * g11 * g22 || g11 == 0.0 || g22 == 0.0 {
        return Err(Error::DegenerateSpinor("F1 and F2 are linearly dependent".into()));
    }
    let spinor: Vec<C64> = f1.values.iter().zip(&f2.values).map(|(&a, &b)| C64::new(a, b)).collect();
    let incr: Vec<C64> = spinor.iter().map(|f| f * f).collect();
    let (h, worst) = integrate_increments(dual, &incr, base);
    if worst > 1e-9 * scale * scale {
        return Err(Error::NonIntegrable { residual: worst });
    }
    let nb = dual.n_bullet;
    let mut s = SEmbedding {
        bullet: h[..nb].to_vec(),
        circ: h[nb..].to_vec(),
        center: Vec::with_capacity(dual.quads.len()),
        spinor,
        cover: f1.cover.clone(),
        center_gap: 0.0,
    };
    for (z, &t) in thetas.iter().enumerate() {
        let l = lifted(dual, &s.cover, &s.spinor, z);
        let p = s.quad_points(dual, z);
        let (sn, cs) = t.sin_cos();
        let cands = [p[0] + l[0] * l[3] * cs, p[2] - l[1] * l[2] * cs, p[1] + l[0] * l[1] * sn, p[3] + l[2] * l[3] * sn];
        let c = cands.iter().sum::<C64>() / 4.0;
        s.center_gap = s.center_gap.max(cands.iter().map(|x| (x - c).norm()).fold(0.0, f64::max));
        s.center.push(c);
    }
    Ok(s)
}

/// `|S(v•0)−S(v°0)| + |S(v•1)−S(v°1)| − |S(v•0)−S(v°1)| − |S(v•1)−S(v°0)|`.
pub fn tangential_residual(s: &SEmbedding, dual: &DualPair, z: usize) -> f64 {
    let p = s.quad_points(dual, z);
    (p[0] - p[1]).norm() + (p[2] - p[3]).norm() - (p[0] - p[3]).norm() - (p[2] - p[1]).norm()
}

/// Properness certificate, or the list of what goes wrong.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ProperReport {
    pub proper: bool,
    pub degenerate: Vec<usize>,
    pub clockwise: Vec<usize>,
    pub overlaps: Vec<(usize, usize)>,
    pub tangential_max: f64,
}

/// Non-degeneracy, counterclockwise orientation and pairwise disjoint
/// interiors of the image quads.
pub fn properness_check(s: &SEmbedding, dual: &DualPair) -> ProperReport {
    let nq = dual.quads.len();
    let polys: Vec<[C64; 4]> = (0..nq).map(|z| s.quad_points(dual, z)).collect();
    let scale = s.lambda().iter().fold(0.0f64, |m, p| m.max(p.norm())).max(1e-300);
    let eps = 1e-9 * scale;
    let mut rep = ProperReport::default();
    for (z, p) in polys.iter().enumerate() {
        rep.tangential_max = rep.tangential_max.max(tangential_residual(s, dual, z).abs());
        let area = geom::signed_area(p);
        let short = (0..4).any(|k| (p[(k + 1) % 4] - p[k]).norm() < eps);
        if short || area.abs() < eps * eps {
            rep.degenerate.push(z);
        } else if area < 0.0 || !is_simple_ccw(p) {
            rep.clockwise.push(z);
        }
    }
    let tris: Vec<Vec<[C64; 3]>> = polys.iter().map(triangulate).collect();
    let bbox = |p: &[C64; 4]| {
        let (mut lo, mut hi) = (p[0], p[0]);
        for q in p {
            lo = C64::new(lo.re.min(q.re), lo.im.min(q.im));
            hi = C64::new(hi.re.max(q.re), hi.im.max(q.im));
        }
        (lo, hi)
    };
    let boxes: Vec<(C64, C64)> = polys.iter().map(bbox).collect();
    for a in 0..nq {
        for b in a + 1..nq {
            let ((la, ha), (lb, hb)) = (boxes[a], boxes[b]);
            if la.re > hb.re - eps || lb.re > ha.re - eps || la.im > hb.im - eps || lb.im > ha.im - eps {
                continue;
            }
            if tris[a].iter().any(|x| tris[b].iter().any(|y| triangles_overlap(x, y, eps))) {
                rep.overlaps.push((a, b));
            }
        }
    }
    rep.proper = rep.degenerate.is_empty() && rep.clockwise.is_empty() && rep.overlaps.is_empty();
    rep
}

/// At most one reflex vertex, so the quad is a simple ccw polygon.
fn is_simple_ccw(p: &[C64; 4]) -> bool {
    (0..4).filter(|&k| geom::orient(p[(k + 3) % 4], p[k], p[(k + 1) % 4]) < 0.0).count() <= 1
}

fn triangulate(p: &[C64; 4]) -> Vec<[C64; 3]> {
    if geom::orient(p[0], p[1], p[2]) > 0.0 && geom::orient(p[0], p[2], p[3]) > 0.0 {
        vec![[p[0], p[1], p[2]], [p[0], p[2], p[3]]]
    } else {
        vec![[p[1], p[2], p[3]], [p[1], p[3], p[0]]]
    }
}

/// Separating-axis test; touching along an edge or a vertex is not overlap.
fn triangles_overlap(a: &[C64; 3], b: &[C64; 3], eps: f64) -> bool {
    for t in [a, b] {
        for k in 0..3 {
            let e = t[(k + 1) % 3] - t[k];
            let n = C64::new(-e.im, e.re) / e.norm();
            let proj = |x: &[C64; 3]| {
                let v: Vec<f64> = x.iter().map(|p| p.re * n.re + p.im * n.im).collect();
                (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            };
            let ((a0, a1), (b0, b1)) = (proj(a), proj(b));
            if a1 <= b0 + eps || b1 <= a0 + eps {
                return false;
            }
        }
    }
    true
}

/// Inradius and half-angles of an image quad, in the order `v•0, v°0, v•1, v°1`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuadGeometry {
    pub r: f64,
    pub phi: [f64; 4],
    /// `|Σφ − π|`
    pub angle_sum_gap: f64,
    /// largest `| |S(v) − S(z)| sin φ − r |`
    pub distance_gap: f64,
}

pub fn quad_geometry(s: &SEmbedding, dual: &DualPair, z: usize) -> Result<QuadGeometry> {
    quad_geometry_of(s.quad_points(dual, z), s.center[z]).map_err(|_| Error::Geometry(format!("quad {z} is degenerate")))
}

/// [`quad_geometry`] for a bare polygon `v•0, v°0, v•1, v°1` and its center.
pub fn quad_geometry_of(p: [C64; 4], center: C64) -> Result<QuadGeometry> {
    let scale = p.iter().fold(0.0f64, |m, x| m.max((x - center).norm())).max(f64::MIN_POSITIVE);
    for k in 0..4 {
        if (p[(k + 1) % 4] - p[k]).norm() < 1e-13 * scale || (p[k] - center).norm() < 1e-13 * scale {
            return Err(Error::Geometry("degenerate quad".into()));
        }
    }
    let mut phi = [0.0; 4];
    for k in 0..4 {
        let ang = geom::ccw_angle(p[(k + 1) % 4] - p[k], p[(k + 3) % 4] - p[k]);
        phi[k] = 0.5 * if ang <= 0.0 { ang + 2.0 * PI } else { ang };
    }
    let d: Vec<f64> = (0..4).map(|k| (p[k] - center).norm() * phi[k].sin()).collect();
    let r = d.iter().sum::<f64>() / 4.0;
    Ok(QuadGeometry {
        r,
        phi,
        angle_sum_gap: (phi.iter().sum::<f64>() - PI).abs(),
        distance_gap: d.iter().map(|x| (x - r).abs()).fold(0.0, f64::max),
    })
}

/// Contributions of one quad to `Δ_S`: `(a_{v•0v•1}, a_{v°0v°1}, b-terms)`
/// with `b[p][q]` the share of the corner `(v•p, v°q)`.
pub fn quad_coefficients(g: &QuadGeometry, theta: f64) -> (f64, f64, [[f64; 2]; 2]) {
    let cot = |x: f64| x.cos() / x.sin();
    let c2 = theta.cos().powi(2);
    let mut b = [[0.0; 2]; 2];
    for (p, row) in b.iter_mut().enumerate() {
        for (q, x) in row.iter_mut().enumerate() {
            let (pv, pu) = (g.phi[2 * p], g.phi[1 + 2 * q]);
            *x = (c2 - cot(pv) / (cot(pv) + cot(pu))) / g.r;
        }
    }
    (theta.sin().powi(2) / g.r, c2 / g.r, b)
}

/// Weights of `∂̄_S` on the polygon `v•0, v°0, v•1, v°1` (including `μ/4`)
/// and the normalization `μ`.
pub fn dbar_quad(p: [C64; 4], center: C64) -> Result<([C64; 4], C64)> {
    let scale = p.iter().fold(0.0f64, |m, x| m.max((x - center).norm())).max(f64::MIN_POSITIVE);
    let mut w = [C64::new(0.0, 0.0); 4];
    for k in 0..4 {
        let d = p[k] - center;
        if d.norm() < 1e-13 * scale {
            return Err(Error::Geometry("vertex at the quad center".into()));
        }
        w[k] = if k % 2 == 0 { 1.0 / d } else { -1.0 / d };
    }
    let norm: C64 = (0..4).map(|k| w[k] * p[k].conj()).sum();
    if norm.norm() < 1e-300 {
        return Err(Error::Geometry("∂̄_S cannot be normalized".into()));
    }
    let m = 4.0 / norm;
    Ok(([w[0] * m / 4.0, w[1] * m / 4.0, w[2] * m / 4.0, w[3] * m / 4.0], m))
}

fn all_geometry(s: &SEmbedding, dual: &DualPair) -> Result<Vec<QuadGeometry>> {
    (0..dual.quads.len()).map(|z| quad_geometry(s, dual, z)).collect()
}

/// `tan θ` from the half-angles, by the cotangent and the sine forms.
pub fn tan_theta(g: &QuadGeometry) -> Result<(f64, f64)> {
    let cot = |x: f64| x.cos() / x.sin();
    let [v0, u0, v1, u1] = g.phi;
    let a = (cot(u0) + cot(u1)) / (cot(v0) + cot(v1));
    let b = (v0.sin() * v1.sin()) / (u0.sin() * u1.sin());
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Geometry("half-angles give no real tan θ".into()));
    }
    Ok((a.sqrt(), b.sqrt()))
}

/// Weights and spinor read back from an embedding.
#[derive(Clone, Debug)]
pub struct Recovered {
    /// `θ_z` from the cotangent form
    pub theta: Vec<f64>,
    /// largest gap between the two forms of `tan θ`
    pub form_gap: f64,
    /// `F(c) = (S(v•(c)) − S(v°(c)))^{1/2}` on the reference sheet of Υ×
    pub spinor: Vec<C64>,
    pub cover: DoubleCover,
    /// largest propagation residual of the spinor with the recovered θ
    pub propagation_residual: f64,
}

impl Recovered {
    pub fn x(&self) -> Vec<f64> {
        self.theta.iter().map(|t| (0.5 * t).tan()).collect()
    }
}

/// Recover `θ` from the geometry and the spinor from the corner increments.
/// Square-root signs are fixed along a spanning tree of the corner graph by
/// the center relations, then checked on every remaining relation.
pub fn recover_weights(s: &SEmbedding, dual: &DualPair) -> Result<Recovered> {
    let geo = all_geometry(s, dual)?;
    let mut theta = Vec::with_capacity(geo.len());
    let mut form_gap: f64 = 0.0;
    for g in &geo {
        let (a, b) = tan_theta(g)?;
        form_gap = form_gap.max((a - b).abs());
        theta.push(a.atan());
    }
    let cover = DoubleCover::ups_times(dual, &Varpi::empty());
    let n = dual.corners.len();
    let root: Vec<C64> = (0..n)
        .map(|c| {
            let k = &dual.corners[c];
            (s.bullet[dual.bullet_of[k.v]] - s.circ[k.u]).sqrt()
        })
        .collect();
    // relation a → b: F(b) must be a positive multiple of target / F(a)
    let mut adj: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    for z in 0..dual.quads.len() {
        let lc = dual.quads[z].loop_corners();
        let sg = sholo::loop_signs(&cover, dual, z);
        let p = s.quad_points(dual, z);
        let c = s.center[z];
        // L_k L_{k+1} points along these, with L_4 = −L_0
        let target = [c - p[1], p[2] - c, c - p[3], p[0] - c];
        for k in 0..4 {
            let (a, b) = (lc[k], lc[(k + 1) % 4]);
            let (sa, sb) = (sg[k], if k == 3 { -sg[0] } else { sg[k + 1] });
            // F(b) ∝ target · conj(F(a)) · sa · sb, and symmetrically
            adj[a].push((b, target[k] * sa * sb));
            adj[b].push((a, target[k] * sa * sb));
        }
    }
    let mut f: Vec<Option<C64>> = vec![None; n];
    for start in 0..n {
        if f[start].is_some() {
            continue;
        }
        f[start] = Some(root[start]);
        let mut q = VecDeque::from([start]);
        while let Some(a) = q.pop_front() {
            let fa = f[a].unwrap();
            for &(b, t) in &adj[a] {
                let dir = t / fa;
                let cand = if (root[b].conj() * dir).re >= 0.0 { root[b] } else { -root[b] };
                match f[b] {
                    None => {
                        f[b] = Some(cand);
                        q.push_back(b);
                    }
                    Some(fb) => {
                        if (fb - cand).norm() > 1e-6 * fb.norm().max(1e-300) {
                            return Err(Error::Sheet(format!("square-root branches disagree at corner {b}")));
                        }
                    }
                }
            }
        }
    }
    let spinor: Vec<C64> = f.into_iter().map(|x| x.unwrap()).collect();
    let re = CornerSpinor { values: spinor.iter().map(|x| x.re).collect(), cover: cover.clone() };
    let im = CornerSpinor { values: spinor.iter().map(|x| x.im).collect(), cover: cover.clone() };
    let propagation_residual =
        sholo::max_propagation_residual(&re, dual, &theta).max(sholo::max_propagation_residual(&im, dual, &theta));
    Ok(Recovered { theta, form_gap, spinor, cover, propagation_residual })
}

/// Coefficients of `Δ_S` and the assembled symmetric matrix over Λ.
#[derive(Clone, Debug)]
pub struct SLaplacian {
    pub theta: Vec<f64>,
    pub geometry: Vec<QuadGeometry>,
    /// `a_{v•0 v•1}` per quad
    pub a_bullet: Vec<f64>,
    /// `a_{v°0 v°1}` per quad
    pub a_circ: Vec<f64>,
    /// `b` per corner, summed over the quads containing it
    pub b: Vec<f64>,
    /// false where a corner lies in fewer than two quads
    pub b_complete: Vec<bool>,
    pub matrix: DMatrix<f64>,
}

pub fn s_laplacian(s: &SEmbedding, dual: &DualPair) -> Result<SLaplacian> {
    let geometry = all_geometry(s, dual)?;
    let mut theta = Vec::with_capacity(geometry.len());
    for g in &geometry {
        theta.push(tan_theta(g)?.0.atan());
    }
    let nb = dual.n_bullet;
    let n = nb + dual.num_circ();
    let mut m = DMatrix::zeros(n, n);
    let mut a_bullet = Vec::new();
    let mut a_circ = Vec::new();
    let mut b = vec![0.0; dual.corners.len()];
    let mut count = vec![0usize; dual.corners.len()];
    for (z, q) in dual.quads.iter().enumerate() {
        let (ab, ac, terms) = quad_coefficients(&geometry[z], theta[z]);
        a_bullet.push(ab);
        a_circ.push(ac);
        let (v0, v1) = (q.vb[0], q.vb[1]);
        let (u0, u1) = (nb + q.u[0], nb + q.u[1]);
        // bullet rows: +a (H(v1) − H(v)); circ rows: −a (H(u1) − H(u))
        for (x, y, w) in [(v0, v1, ab), (u0, u1, -ac)] {
            m[(x, y)] += w;
            m[(y, x)] += w;
            m[(x, x)] -= w;
            m[(y, y)] -= w;
        }
        for p in 0..2 {
            for qq in 0..2 {
                let c = q.c[p][qq];
                b[c] += terms[p][qq];
                count[c] += 1;
            }
        }
    }
    for (c, corner) in dual.corners.iter().enumerate() {
        if count[c] == 0 {
            continue;
        }
        let (x, y) = (dual.bullet_of[corner.v], nb + corner.u);
        m[(x, y)] += b[c];
        m[(y, x)] += b[c];
        m[(x, x)] -= b[c];
        m[(y, y)] -= b[c];
    }
    Ok(SLaplacian { theta, geometry, a_bullet, a_circ, b, b_complete: count.iter().map(|&k| k >= 2).collect(), matrix: m })
}

/// `Δ_S` coefficients around an interior bullet from the local polar data
/// `ρ_s = |F(c_s)|`, `φ_s` of the star.
#[derive(Clone, Debug, Default)]
pub struct LocalCoefficients {
    /// `(v•_s, a_{v•0 v•s})`
    pub a_bullet: Vec<(usize, f64)>,
    /// `([v°_{s−1}, v°_s], a)`
    pub a_circ: Vec<([usize; 2], f64)>,
    /// `(v°_s, b_{v•0 v°s})`
    pub b: Vec<(usize, f64)>,
}

pub fn local_coefficients(s: &SEmbedding, dual: &DualPair, lap: &SLaplacian, bullet: usize) -> Result<LocalCoefficients> {
    let quads = star(dual, LambdaVertex::Bullet(bullet));
    if quads.is_empty() {
        return Err(Error::Input(format!("bullet {bullet} has no quads")));
    }
    // (quad, u_{s−1}, u_s, other bullet, φ at the center bullet)
    let side = |z: usize| {
        let q = &dual.quads[z];
        if q.vb[0] == bullet {
            (z, q.u[0], q.u[1], q.vb[1], lap.geometry[z].phi[0])
        } else {
            (z, q.u[1], q.u[0], q.vb[0], lap.geometry[z].phi[2])
        }
    };
    let mut chain = vec![side(quads[0])];
    while chain.len() < quads.len() {
        let last = chain.last().unwrap().2;
        let next = quads
            .iter()
            .map(|&z| side(z))
            .find(|x| x.1 == last)
            .ok_or_else(|| Error::Input(format!("bullet {bullet} is not interior")))?;
        chain.push(next);
    }
    if chain.last().unwrap().2 != chain[0].1 {
        return Err(Error::Input(format!("bullet {bullet} is not interior")));
    }
    let n = chain.len();
    let rho = |u: usize| (s.bullet[bullet] - s.circ[u]).norm().sqrt();
    let mut out = LocalCoefficients::default();
    for k in 0..n {
        let (z, um, us, vs, ph) = chain[k];
        let t = lap.theta[z];
        let base = 1.0 / (rho(um) * rho(us) * ph.sin());
        out.a_bullet.push((vs, t.sin() * t.tan() * base));
        out.a_circ.push(([um, us], t.cos() * base));
        let (z1, _, u1, _, ph1) = chain[(k + 1) % n];
        let t1 = lap.theta[z1];
        let b = t.cos() * base + t1.cos() / (rho(us) * rho(u1) * ph1.sin())
            - (ph + ph1).sin() / (rho(us).powi(2) * ph.sin() * ph1.sin());
        out.b.push((us, b));
    }
    Ok(out)
}

/// `H_F` near `v` from corner values on the quads of its star.
fn local_h(dual: &DualPair, f: &[f64], quads: &[usize]) -> Vec<(usize, f64)> {
    let nb = dual.n_bullet;
    let mut corners: Vec<usize> = quads.iter().flat_map(|&z| dual.quads[z].loop_corners()).collect();
    corners.sort();
    corners.dedup();
    let mut vals: Vec<(usize, f64)> = Vec::new();
    let get = |vals: &Vec<(usize, f64)>, k: usize| vals.iter().find(|x| x.0 == k).map(|x| x.1);
    let first = &dual.corners[corners[0]];
    vals.push((nb + first.u, 0.0));
    let mut changed = true;
    while changed {
        changed = false;
        for &c in &corners {
            let k = &dual.corners[c];
            let (b, u) = (dual.bullet_of[k.v], nb + k.u);
            let d = f[c] * f[c];
            match (get(&vals, b), get(&vals, u)) {
                (None, Some(hu)) => {
                    vals.push((b, hu + d));
                    changed = true;
                }
                (Some(hb), None) => {
                    vals.push((u, hb - d));
                    changed = true;
                }
                _ => {}
            }
        }
    }
    vals
}

/// `[Δ_S H_F](v)` and whether `F` on the star lies in span{F1, F2}.
pub fn subharmonicity_check(
    s: &SEmbedding,
    dual: &DualPair,
    lap: &SLaplacian,
    spinor: &CornerSpinor,
    v: LambdaVertex,
    tol: f64,
) -> Result<(f64, bool)> {
    let quads = star(dual, v);
    if quads.is_empty() {
        return Err(Error::Input(format!("{v:?} has no quads")));
    }
    let scale = spinor.values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    for &z in &quads {
        if sholo::check_propagation(spinor, dual, z, lap.theta[z]).iter().any(|r| r.abs() > tol * scale) {
            return Err(Error::Input(format!("spinor is not s-holomorphic at quad {z}")));
        }
    }
    let value = apply_row(dual, lap, &spinor.values, v, &quads);
    let mut corners: Vec<usize> = quads.iter().flat_map(|&z| dual.quads[z].loop_corners()).collect();
    corners.sort();
    corners.dedup();
    let (f1, f2) = s.spinor_pair();
    let m = DMatrix::from_fn(corners.len(), 3, |r, k| match k {
        0 => f1.values[corners[r]],
        1 => f2.values[corners[r]],
        _ => spinor.values[corners[r]],
    });
    let sv = SVD::new(m, false, false).singular_values;
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let in_span = sv[2] <= 1e-8 * sv[0].max(f64::MIN_POSITIVE);
    Ok((value, in_span))
}

fn apply_row(dual: &DualPair, lap: &SLaplacian, f: &[f64], v: LambdaVertex, quads: &[usize]) -> f64 {
    let h = local_h(dual, f, quads);
    let row = node(dual, v);
    h.iter().map(|&(k, x)| lap.matrix[(row, k)] * x).sum()
}

/// Random s-holomorphic spinors on the star of `v` and the quadratic form
/// `coeff ↦ [Δ_S H_F](v)` in their basis.
pub fn local_form(dual: &DualPair, lap: &SLaplacian, v: LambdaVertex) -> (LocalSpinors, DMatrix<f64>) {
    let local = LocalSpinors::with_thetas(dual, &lap.theta, v);
    let n = local.basis.ncols();
    let nc = dual.corners.len();
    let eval = |c: &[f64]| apply_row(dual, lap, &local.spinor(nc, c).values, v, &local.quads);
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
            let x = 0.5 * (eval(&e) - q[(i, i)] - q[(j, j)]);
            e[i] = 0.0;
            e[j] = 0.0;
            q[(i, j)] = x;
            q[(j, i)] = x;
        }
    }
    (local, q)
}

/// `∂̄_S` as per-quad weights on the image polygon `v•0, v°0, v•1, v°1`.
#[derive(Clone, Debug)]
pub struct DbarS {
    pub coeff: Vec<[C64; 4]>,
    pub mu: Vec<C64>,
    pub r: Vec<f64>,
}

impl DbarS {
    /// Matrix over Λ (bullets, then circs).
    pub fn matrix(&self, dual: &DualPair) -> DMatrix<C64> {
        let nb = dual.n_bullet;
        let mut m = DMatrix::zeros(dual.quads.len(), nb + dual.num_circ());
        for (z, q) in dual.quads.iter().enumerate() {
            let idx = [q.vb[0], nb + q.u[0], q.vb[1], nb + q.u[1]];
            for k in 0..4 {
                m[(z, idx[k])] += self.coeff[z][k];
            }
        }
        m
    }

    pub fn apply(&self, dual: &DualPair, h: &[C64]) -> Vec<C64> {
        let nb = dual.n_bullet;
        dual.quads
            .iter()
            .enumerate()
            .map(|(z, q)| {
                let idx = [q.vb[0], nb + q.u[0], q.vb[1], nb + q.u[1]];
                (0..4).map(|k| self.coeff[z][k] * h[idx[k]]).sum()
            })
            .collect()
    }

    /// `∂_S H = conj(∂̄_S conj H)`.
    pub fn apply_d(&self, dual: &DualPair, h: &[C64]) -> Vec<C64> {
        let hc: Vec<C64> = h.iter().map(|x| x.conj()).collect();
        self.apply(dual, &hc).into_iter().map(|x| x.conj()).collect()
    }
}

pub fn dbar_s(s: &SEmbedding, dual: &DualPair) -> Result<DbarS> {
    let mut coeff = Vec::with_capacity(dual.quads.len());
    let mut mu = Vec::with_capacity(dual.quads.len());
    let mut r = Vec::with_capacity(dual.quads.len());
    for z in 0..dual.quads.len() {
        let (w, m) = dbar_quad(s.quad_points(dual, z), s.center[z]).map_err(|e| Error::Geometry(format!("quad {z}: {e}")))?;
        coeff.push(w);
        mu.push(m);
        r.push(quad_geometry(s, dual, z)?.r);
    }
    Ok(DbarS { coeff, mu, r })
}

/// `L_S` with increments `L(v•(c)) − L(v°(c)) = |S(v•(c)) − S(v°(c))|`.
pub fn l_s(s: &SEmbedding, dual: &DualPair, base: LambdaVertex) -> Result<HFunction> {
    let incr: Vec<C64> = dual
        .corners
        .iter()
        .map(|k| C64::new((s.bullet[dual.bullet_of[k.v]] - s.circ[k.u]).norm(), 0.0))
        .collect();
    let (h, worst) = integrate_increments(dual, &incr, base);
    let scale = incr.iter().fold(0.0f64, |m, x| m.max(x.re)).max(f64::MIN_POSITIVE);
    if worst > 1e-9 * scale {
        return Err(Error::NonIntegrable { residual: worst });
    }
    let nb = dual.n_bullet;
    let mut closure: f64 = 0.0;
    for q in &dual.quads {
        let d = |p: usize, qq: usize| incr[q.c[p][qq]].re;
        closure = closure.max((d(0, 0) + d(1, 1) - d(0, 1) - d(1, 0)).abs());
    }
    Ok(HFunction {
        bullet: h[..nb].iter().map(|x| x.re).collect(),
        circ: h[nb..].iter().map(|x| x.re).collect(),
        base,
        loop_closure: closure,
    })
}

/// Residuals of `Δ_S = −16 ∂*_S U⁻¹ R ∂̄_S` and of the conjugate form on the
/// rows of interior Λ vertices (largest absolute entry difference), with
/// `∂*_S` the adjoint for counting measures. The same products taken with a
/// plus sign are reported as `literal_residual`; they come out as `−Δ_S`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FactorizationReport {
    pub residual: f64,
    pub conjugate_residual: f64,
    pub literal_residual: f64,
}

pub fn factorization_s_check(map: &PlanarMap, s: &SEmbedding, dual: &DualPair) -> Result<FactorizationReport> {
    let lap = s_laplacian(s, dual)?;
    let d = dbar_s(s, dual)?;
    let m = d.matrix(dual);
    let nq = dual.quads.len();
    let w = DMatrix::<C64>::from_diagonal(&DVector::from_iterator(nq, (0..nq).map(|z| C64::new(d.r[z], 0.0) / d.mu[z])));
    // ∂*_S is the transpose of ∂̄_S's matrix; ∂̄*_S its conjugate transpose
    let first = m.transpose() * &w * &m * C64::new(16.0, 0.0);
    let wbar = w.map(|x| x.conj());
    let second = m.adjoint() * wbar * m.map(|x| x.conj()) * C64::new(16.0, 0.0);
    let (ib, ic) = interior_lambda_of(map, dual);
    let rows: Vec<usize> = ib.into_iter().chain(ic.into_iter().map(|u| dual.n_bullet + u)).collect();
    let gap = |x: &DMatrix<C64>, sign: f64| {
        rows.iter()
            .flat_map(|&i| (0..x.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| (x[(i, j)] * sign - C64::new(lap.matrix[(i, j)], 0.0)).norm())
            .fold(0.0, f64::max)
    };
    Ok(FactorizationReport {
        residual: gap(&first, -1.0),
        conjugate_residual: gap(&second, -1.0),
        literal_residual: gap(&first, 1.0),
    })
}

/// Solution of `∂̄_S(H1 + iH2) = 0` for real `H2` (fixed to 0 at node 0).
#[derive(Clone, Debug)]
pub struct Conjugate {
    pub h2: Vec<f64>,
    pub residual: f64,
    /// dimension of the real solution space of `∂̄_S(iH2) = 0`
    pub kernel_dim: usize,
}

pub fn harmonic_conjugate(map: &PlanarMap, s: &SEmbedding, dual: &DualPair, h1: &[f64]) -> Result<Conjugate> {
    let lap = s_laplacian(s, dual)?;
    let n = lap.matrix.nrows();
    if h1.len() != n {
        return Err(Error::Shape(format!("H1 has {} values, Λ has {n}", h1.len())));
    }
    let hv = DVector::from_column_slice(h1);
    let lh = &lap.matrix * &hv;
    let scale = lap.matrix.amax() * hv.amax().max(1.0);
    let (ib, ic) = interior_lambda_of(map, dual);
    for k in ib.into_iter().chain(ic.into_iter().map(|u| dual.n_bullet + u)) {
        if lh[k].abs() > 1e-9 * scale {
            return Err(Error::Input(format!("H1 is not s-harmonic at Λ vertex {k} ({:e})", lh[k])));
        }
    }
    let m = dbar_s(s, dual)?.matrix(dual);
    let nq = m.nrows();
    let a = DMatrix::from_fn(2 * nq, n, |r, c| if r < nq { -m[(r, c)].im } else { m[(r - nq, c)].re });
    let mh = m.map(|x| x) * hv.map(|x| C64::new(x, 0.0));
    let rhs = DVector::from_fn(2 * nq, |r, _| if r < nq { -mh[r].re } else { -mh[r - nq].im });
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.amax();
    let kernel_dim = n - svd.singular_values.iter().filter(|&&x| x > 1e-9 * smax).count();
    let x = svd.solve(&rhs, 1e-9 * smax).map_err(|e| Error::Input(e.to_string()))?;
    let residual = (&a * &x - &rhs).amax();
    let h2: Vec<f64> = x.iter().map(|v| v - x[0]).collect();
    Ok(Conjugate { h2, residual, kernel_dim })
}

/// Export of the embedding and its coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct SEmbeddingExport {
    pub bullet: Vec<[f64; 2]>,
    pub circ: Vec<[f64; 2]>,
    pub center: Vec<[f64; 2]>,
    pub r: Vec<f64>,
    pub phi: Vec<[f64; 4]>,
    pub a_bullet: Vec<f64>,
    pub a_circ: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<[f64; 2]>,
}

pub fn export(s: &SEmbedding, dual: &DualPair) -> Result<SEmbeddingExport> {
    let lap = s_laplacian(s, dual)?;
    let d = dbar_s(s, dual)?;
    let xy = |v: &[C64]| v.iter().map(|p| [p.re, p.im]).collect();
    Ok(SEmbeddingExport {
        bullet: xy(&s.bullet),
        circ: xy(&s.circ),
        center: xy(&s.center),
        r: lap.geometry.iter().map(|g| g.r).collect(),
        phi: lap.geometry.iter().map(|g| g.phi).collect(),
        a_bullet: lap.a_bullet,
        a_circ: lap.a_circ,
        b: lap.b,
        mu: xy(&d.mu),
    })
}

/// The isoradial pair `F = ς δ^{1/2} η̄` with `ς = e^{iπ/4}`.
pub fn isoradial_pair(map: &PlanarMap, dual: &DualPair) -> Result<(CornerSpinor, CornerSpinor)> {
    let delta = sholo::isoradial_delta(map, dual)?;
    let vs = C64::from_polar(1.0, FRAC_PI_4);
    let (eta, cover) = sholo::dirac_on_ups_times(map, dual, vs)?;
    let f: Vec<C64> = eta.values.iter().map(|e| vs * e.conj() * delta.sqrt()).collect();
    Ok((
        CornerSpinor { values: f.iter().map(|x| x.re).collect(), cover: cover.clone() },
        CornerSpinor { values: f.iter().map(|x| x.im).collect(), cover },
    ))
}

/// A perturbed isoradial instance: the angles of a rhombic map are moved by
/// up to `eps` and the isoradial pair is projected onto the spinors that
/// propagate with the new weights.
pub fn perturbed_isoradial<R: Rng>(
    map: &PlanarMap,
    dual: &DualPair,
    eps: f64,
    rng: &mut R,
) -> Result<(IsingWeights, SEmbedding)> {
    let (f1, f2) = isoradial_pair(map, dual)?;
    let delta = sholo::isoradial_delta(map, dual)?;
    let mut x = vec![1.0; map.num_edges()];
    for q in &dual.quads {
        let t = ((map.pos(q.v[1]) - map.pos(q.v[0])).norm() / (2.0 * delta)).clamp(-1.0, 1.0).acos();
        x[q.edge] = (0.5 * (t + eps * rng.random_range(-1.0..1.0))).tan();
    }
    let w = IsingWeights::new(map, x)?;
    let thetas = sholo::quad_thetas(dual, &w);
    let a = sholo::propagation_matrix(dual, &f1.cover, &thetas, false);
    let basis = null_space(&a);
    let project = |f: &CornerSpinor| {
        let v = DVector::from_column_slice(&f.values);
        let p = &basis * (basis.transpose() * v);
        CornerSpinor { values: p.iter().copied().collect(), cover: f.cover.clone() }
    };
    let s = build_sembedding(dual, &w, &project(&f1), &project(&f2), sholo::default_base(dual))?;
    Ok((w, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{square_grid, GridBoundary};
    use crate::isoradial::{rhombic_lattice, square_lattice, RhombicKind};
    use crate::planar_map::dual_pair;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iso_embedding(map: &PlanarMap, dual: &DualPair, w: &IsingWeights) -> SEmbedding {
        let (f1, f2) = isoradial_pair(map, dual).unwrap();
        build_sembedding(dual, w, &f1, &f2, sholo::default_base(dual)).unwrap()
    }

    fn perturbed(seed: u64, n: usize, eps: f64) -> (PlanarMap, DualPair, IsingWeights, SEmbedding) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = square_grid(n, n, 1.0, GridBoundary::Wired).unwrap();
        let dual = dual_pair(&map).unwrap();
        let (w, s) = perturbed_isoradial(&map, &dual, eps, &mut rng).unwrap();
        (map, dual, w, s)
    }

    #[test]
    fn isoradial_pair_reproduces_the_embedding() {
        for iso in [
            square_lattice(1.0, 4, 4, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Triangular, 4, 4, 1.0, GridBoundary::Wired).unwrap(),
        ] {
            let s = iso_embedding(&iso.map, &iso.dual, &iso.weights);
            let base = sholo::default_base(&iso.dual);
            let shift = iso.dual.circ_pos[match base {
                LambdaVertex::Circ(u) => u,
                _ => unreachable!(),
            }];
            for v in 0..iso.map.num_vertices() {
                assert!((s.bullet[iso.dual.bullet_of[v]] - (iso.map.pos(v) - shift)).norm() < 1e-12);
            }
            for u in 0..iso.dual.num_circ() {
                assert!((s.circ[u] - (iso.dual.circ_pos[u] - shift)).norm() < 1e-12);
            }
            assert!(s.center_gap < 1e-12);
            assert!(properness_check(&s, &iso.dual).proper);
        }
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let iso = square_lattice(1.0, 4, 4, GridBoundary::Wired).unwrap();
        let (f1, _) = isoradial_pair(&iso.map, &iso.dual).unwrap();
        let zero = CornerSpinor { values: vec![0.0; f1.values.len()], cover: f1.cover.clone() };
        let r = build_sembedding(&iso.dual, &iso.weights, &f1, &zero, sholo::default_base(&iso.dual));
        assert!(matches!(r, Err(Error::DegenerateSpinor(_))));
        let twice = CornerSpinor { values: f1.values.iter().map(|x| 2.0 * x).collect(), cover: f1.cover.clone() };
        let r = build_sembedding(&iso.dual, &iso.weights, &f1, &twice, sholo::default_base(&iso.dual));
        assert!(matches!(r, Err(Error::DegenerateSpinor(_))));
    }

    #[test]
    fn perturbed_embeddings_are_proper_and_tangential() {
        for seed in 0..5 {
            let (_, dual, _, s) = perturbed(seed, 4, 0.1);
            let rep = properness_check(&s, &dual);
            assert!(rep.proper, "{rep:?}");
            assert!(rep.tangential_max < 1e-10);
            assert!(s.center_gap < 1e-10);
            for z in 0..dual.quads.len() {
                let (c, r) = geom::incircle(s.quad_points(&dual, z)).unwrap();
                assert!((c - s.center[z]).norm() < 1e-9);
                let g = quad_geometry(&s, &dual, z).unwrap();
                assert!((g.r - r).abs() < 1e-9 && g.angle_sum_gap < 1e-12 && g.distance_gap < 1e-10);
            }
        }
    }

    #[test]
    fn tangential_without_properness() {
        // a large random s-holomorphic pair rarely gives a proper embedding,
        // but the quads are always tangential
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let iso = square_lattice(1.0, 4, 4, GridBoundary::Wired).unwrap();
        let cover = DoubleCover::ups_times(&iso.dual, &Varpi::empty());
        let basis = sholo::sholo_basis(&iso.dual, &cover, &iso.theta, false);
        let f1 = sholo::random_spinor(&basis, &cover, &mut rng);
        let f2 = sholo::random_spinor(&basis, &cover, &mut rng);
        let s = build_sembedding(&iso.dual, &iso.weights, &f1, &f2, sholo::default_base(&iso.dual)).unwrap();
        let rep = properness_check(&s, &iso.dual);
        assert!(rep.tangential_max < 1e-10);
        assert!(s.center_gap < 1e-10);
    }

    #[test]
    fn overlapping_configuration_is_reported() {
        let iso = square_lattice(1.0, 3, 3, GridBoundary::Wired).unwrap();
        let s0 = iso_embedding(&iso.map, &iso.dual, &iso.weights);
        let mut bullet = s0.bullet.clone();
        // fold the centre vertex across its neighbour
        let centre = iso.dual.bullet_of[4];
        bullet[centre] += C64::new(1.6, 0.0);
        let s = SEmbedding { bullet, ..s0 };
        let rep = properness_check(&s, &iso.dual);
        assert!(!rep.proper);
        assert!(!rep.overlaps.is_empty(), "{rep:?}");
    }

    #[test]
    fn unit_square_and_rhombus_geometry() {
        let dual_map = square_lattice(1.0, 3, 3, GridBoundary::Wired).unwrap();
        let s = iso_embedding(&dual_map.map, &dual_map.dual, &dual_map.weights);
        let g = quad_geometry(&s, &dual_map.dual, 0).unwrap();
        // quads are squares of side δ = 1/√2 with inradius δ/2
        assert!(g.phi.iter().all(|p| (p - FRAC_PI_4).abs() < 1e-12));
        assert!((g.r - 0.5 / 2f64.sqrt()).abs() < 1e-12);
        let tri = rhombic_lattice(RhombicKind::Triangular, 3, 3, 1.0, GridBoundary::Wired).unwrap();
        let s = iso_embedding(&tri.map, &tri.dual, &tri.weights);
        for z in 0..tri.dual.quads.len() {
            let g = quad_geometry(&s, &tri.dual, z).unwrap();
            let t = tri.theta[z];
            assert!((g.r - t.sin() * t.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn square_quads_recover_critical_weight() {
        let iso = square_lattice(1.0, 4, 4, GridBoundary::Wired).unwrap();
        let s = iso_embedding(&iso.map, &iso.dual, &iso.weights);
        let rec = recover_weights(&s, &iso.dual).unwrap();
        assert!(rec.x().iter().all(|x| (x - (2f64.sqrt() - 1.0)).abs() < 1e-12));
        assert!(rec.form_gap < 1e-12);
        assert!(rec.propagation_residual < 1e-12);
    }

    #[test]
    fn round_trip_recovers_weights() {
        for seed in 0..10 {
            let (_, dual, w, s) = perturbed(10 + seed, 4, 0.15);
            let rec = recover_weights(&s, &dual).unwrap();
            let input = sholo::quad_thetas(&dual, &w);
            for (a, b) in rec.theta.iter().zip(&input) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            assert!(rec.form_gap < 1e-10);
            assert!(rec.propagation_residual < 1e-10);
            // the recovered spinor is the original one up to a global sign
            let sgn = if (rec.spinor[0] * s.spinor[0].conj()).re > 0.0 { 1.0 } else { -1.0 };
            let gap = rec.spinor.iter().zip(&s.spinor).map(|(a, b)| (a - b * sgn).norm()).fold(0.0, f64::max);
            assert!(gap < 1e-9, "{gap}");
        }
    }

    #[test]
    fn isoradial_reduction() {
        for iso in [
            square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Triangular, 4, 4, 1.0, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Honeycomb, 3, 3, 1.0, GridBoundary::Wired).unwrap(),
            rhombic_lattice(RhombicKind::Rectangular { theta: 0.5 }, 4, 4, 1.0, GridBoundary::Wired).unwrap(),
        ] {
            let s = iso_embedding(&iso.map, &iso.dual, &iso.weights);
            let lap = s_laplacian(&s, &iso.dual).unwrap();
            for z in 0..iso.dual.quads.len() {
                let t = iso.theta[z];
                assert!((lap.a_bullet[z] - t.tan() / iso.delta).abs() < 1e-12);
                assert!((lap.a_circ[z] - 1.0 / (t.tan() * iso.delta)).abs() < 1e-12);
            }
            assert!(lap.b.iter().all(|b| b.abs() < 1e-12));
            assert_eq!(lap.matrix, lap.matrix.transpose());
        }
    }

    #[test]
    fn local_form_of_coefficients() {
        for seed in 0..4 {
            let (map, dual, _, s) = perturbed(20 + seed, 5, 0.1);
            let lap = s_laplacian(&s, &dual).unwrap();
            let (ib, _) = interior_lambda_of(&map, &dual);
            let nb = dual.n_bullet;
            for &b in &ib {
                let loc = local_coefficients(&s, &dual, &lap, b).unwrap();
                for &(v1, a) in &loc.a_bullet {
                    assert!((lap.matrix[(b, v1)] - a).abs() < 1e-10);
                }
                for &([u0, u1], a) in &loc.a_circ {
                    assert!((lap.matrix[(nb + u0, nb + u1)] + a).abs() < 1e-10);
                }
                for &(u, bb) in &loc.b {
                    assert!((lap.matrix[(b, nb + u)] - bb).abs() < 1e-10, "{} vs {bb}", lap.matrix[(b, nb + u)]);
                }
            }
        }
    }

    #[test]
    fn s_subharmonicity_and_equality_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (map, dual, _, s) = perturbed(31, 5, 0.1);
        let lap = s_laplacian(&s, &dual).unwrap();
        let (f1, f2) = s.spinor_pair();
        let (ib, ic) = interior_lambda_of(&map, &dual);
        for v in [LambdaVertex::Bullet(ib[0]), LambdaVertex::Bullet(ib[ib.len() - 1]), LambdaVertex::Circ(ic[0])] {
            for f in [&f1, &f2] {
                let (val, eq) = subharmonicity_check(&s, &dual, &lap, f, v, 1e-9).unwrap();
                assert!(val.abs() < 1e-10 && eq, "{v:?}: {val}");
            }
            let (local, q) = local_form(&dual, &lap, v);
            let ev = SymmetricEigen::new(q).eigenvalues;
            let scale = ev.amax();
            assert!(ev.iter().all(|&e| e > -1e-10 * scale), "{ev}");
            assert_eq!(ev.iter().filter(|&&e| e.abs() < 1e-8 * scale).count(), 2, "{ev}");
            let nc = dual.corners.len();
            for _ in 0..200 {
                let c: Vec<f64> = (0..local.basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let f = local.spinor(nc, &c);
                let (val, eq) = subharmonicity_check(&s, &dual, &lap, &f, v, 1e-9).unwrap();
                assert!(val >= -1e-12, "{val}");
                assert!(!eq || val.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dbar_normalizations_and_l_s() {
        for seed in 0..4 {
            let (_, dual, _, s) = perturbed(40 + seed, 5, 0.1);
            let d = dbar_s(&s, &dual).unwrap();
            let sv = s.lambda();
            let one = vec![C64::new(1.0, 0.0); sv.len()];
            let sbar: Vec<C64> = sv.iter().map(|x| x.conj()).collect();
            assert!(d.apply(&dual, &one).iter().all(|x| x.norm() < 1e-12));
            assert!(d.apply(&dual, &sv).iter().all(|x| x.norm() < 1e-12));
            assert!(d.apply(&dual, &sbar).iter().all(|x| (x - 1.0).norm() < 1e-12));
            let l = l_s(&s, &dual, sholo::default_base(&dual)).unwrap();
            assert!(l.loop_closure < 1e-12);
            let lv: Vec<C64> = l.bullet.iter().chain(&l.circ).map(|&x| C64::new(x, 0.0)).collect();
            let worst = d.apply(&dual, &lv).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "{worst}");
            // a different base shifts by a constant only
            let l2 = l_s(&s, &dual, LambdaVertex::Bullet(0)).unwrap();
            let shift = l2.bullet[0] - l.bullet[0];
            assert!(l.circ.iter().zip(&l2.circ).all(|(a, b)| (b - a - shift).abs() < 1e-12));
        }
    }

    #[test]
    fn factorization_of_s_laplacian() {
        let iso = square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap();
        let s = iso_embedding(&iso.map, &iso.dual, &iso.weights);
        let r = factorization_s_check(&iso.map, &s, &iso.dual).unwrap();
        assert!(r.residual < 1e-10 && r.conjugate_residual < 1e-10, "{r:?}");
        for seed in 0..10 {
            let (map, dual, _, s) = perturbed(50 + seed, 5, 0.1);
            let r = factorization_s_check(&map, &s, &dual).unwrap();
            assert!(r.residual < 1e-9 && r.conjugate_residual < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn factorization_is_rotation_invariant() {
        let (map, dual, w, s) = perturbed(61, 4, 0.1);
        let (f1, f2) = s.spinor_pair();
        let a = 0.7f64;
        let rot = |x: f64, y: f64| (a.cos() * x - a.sin() * y, a.sin() * x + a.cos() * y);
        let g1 = CornerSpinor { values: f1.values.iter().zip(&f2.values).map(|(&x, &y)| rot(x, y).0).collect(), cover: f1.cover.clone() };
        let g2 = CornerSpinor { values: f1.values.iter().zip(&f2.values).map(|(&x, &y)| rot(x, y).1).collect(), cover: f1.cover.clone() };
        let s2 = build_sembedding(&dual, &w, &g1, &g2, sholo::default_base(&dual)).unwrap();
        let r1 = factorization_s_check(&map, &s, &dual).unwrap();
        let r2 = factorization_s_check(&map, &s2, &dual).unwrap();
        assert!(r1.residual < 1e-9 && r2.residual < 1e-9);
        let (l1, l2) = (s_laplacian(&s, &dual).unwrap(), s_laplacian(&s2, &dual).unwrap());
        assert!((&l1.matrix - &l2.matrix).amax() < 1e-9);
    }

    #[test]
    fn harmonic_conjugates() {
        let iso = square_lattice(1.0, 5, 5, GridBoundary::Wired).unwrap();
        let s = iso_embedding(&iso.map, &iso.dual, &iso.weights);
        let n = s.lambda().len();
        let c = harmonic_conjugate(&iso.map, &s, &iso.dual, &vec![2.0; n]).unwrap();
        assert!(c.h2.iter().all(|x| x.abs() < 1e-9));
        let re: Vec<f64> = s.lambda().iter().map(|p| p.re).collect();
        let c = harmonic_conjugate(&iso.map, &s, &iso.dual, &re).unwrap();
        assert!(c.residual < 1e-10);
        let im0 = s.lambda()[0].im;
        for (h, p) in c.h2.iter().zip(s.lambda()) {
            assert!((h - (p.im - im0)).abs() < 1e-9);
        }
        let back = harmonic_conjugate(&iso.map, &s, &iso.dual, &c.h2).unwrap();
        for (h, r) in back.h2.iter().zip(&re) {
            assert!((h + (r - re[0])).abs() < 1e-9);
        }
        let bumpy: Vec<f64> = (0..n).map(|k| (k * k % 7) as f64).collect();
        assert!(matches!(harmonic_conjugate(&iso.map, &s, &iso.dual, &bumpy), Err(Error::Input(_))));
    }
}

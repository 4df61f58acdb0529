//! Doubly-periodic weighted graphs: the periodic spinor kernel that detects
//! criticality, periodic s-embeddings `S = H_{F1 + κF2}`, the choice of κ
//! making `L_S` periodic, and a measurement harness.

use crate::error::{Error, Result};
use crate::geom::{self, C64};
use crate::sembed::{dbar_quad, quad_coefficients, quad_geometry_of};
use crate::sholo::propagation_terms;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::Serialize;
use std::collections::{HashMap, VecDeque};
use std::f64::consts::FRAC_PI_4;

/// An edge of the fundamental domain; the head lives in the copy translated
/// by `shift[0] ω1 + shift[1] ω2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PEdge {
    pub ends: [usize; 2],
    pub shift: [i32; 2],
}

/// Fundamental domain of a doubly-periodic planar graph, with its rotation
/// system on the torus.
#[derive(Clone, Debug)]
pub struct PeriodicMap {
    pub pos: Vec<C64>,
    pub periods: [C64; 2],
    pub edges: Vec<PEdge>,
    out: Vec<Vec<usize>>,
    face_of: Vec<usize>,
    faces: Vec<Vec<usize>>,
}

/// A corner `(v, f)`: the face copy sits at block `face_shift` relative to `v`.
#[derive(Clone, Copy, Debug)]
pub struct PCorner {
    pub v: usize,
    pub f: usize,
    pub face_shift: [i32; 2],
    /// `v − (face point)` in the plane
    pub dir: C64,
}

/// Quad of an edge; `c[p][q] = (v_p, u_q)`, `u0` right of `v0 → v1`.
#[derive(Clone, Copy, Debug)]
pub struct PQuad {
    pub edge: usize,
    pub c: [[usize; 2]; 2],
    /// lift signs along the loop `c00, c10, c11, c01`
    pub signs: [f64; 4],
}

fn add(a: [i32; 2], b: [i32; 2]) -> [i32; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn neg(a: [i32; 2]) -> [i32; 2] {
    [-a[0], -a[1]]
}

impl PeriodicMap {
    pub fn new(pos: Vec<C64>, periods: [C64; 2], edges: Vec<PEdge>) -> Result<Self> {
        if geom::cross(periods[0], periods[1]) <= 0.0 {
            return Err(Error::Embedding("periods must be linearly independent and positively oriented".into()));
        }
        let n = pos.len();
        if edges.iter().any(|e| e.ends.iter().any(|&v| v >= n)) {
            return Err(Error::Input("edge endpoint out of range".into()));
        }
        let mut pm = PeriodicMap { pos, periods, edges, out: vec![Vec::new(); n], face_of: Vec::new(), faces: Vec::new() };
        for h in 0..2 * pm.edges.len() {
            let v = pm.tail(h);
            pm.out[v].push(h);
        }
        for v in 0..n {
            let mut o = std::mem::take(&mut pm.out[v]);
            o.sort_by(|&a, &b| pm.vec(a).arg().partial_cmp(&pm.vec(b).arg()).unwrap());
            for w in o.windows(2) {
                if (pm.vec(w[0]).arg() - pm.vec(w[1]).arg()).abs() < 1e-12 {
                    return Err(Error::Embedding(format!("overlapping edges at vertex {v}")));
                }
            }
            if o.is_empty() {
                return Err(Error::Embedding(format!("isolated vertex {v}")));
            }
            pm.out[v] = o;
        }
        let nh = 2 * pm.edges.len();
        pm.face_of = vec![usize::MAX; nh];
        for h0 in 0..nh {
            if pm.face_of[h0] != usize::MAX {
                continue;
            }
            let f = pm.faces.len();
            let mut cyc = Vec::new();
            let mut h = h0;
            while pm.face_of[h] == usize::MAX {
                pm.face_of[h] = f;
                cyc.push(h);
                h = pm.next(h);
            }
            if h != h0 {
                return Err(Error::Embedding("inconsistent rotation system".into()));
            }
            pm.faces.push(cyc);
        }
        let chi = n as i64 - pm.edges.len() as i64 + pm.faces.len() as i64;
        if chi != 0 {
            return Err(Error::Embedding(format!("not a torus map: V − E + F = {chi}")));
        }
        Ok(pm)
    }

    pub fn num_vertices(&self) -> usize {
        self.pos.len()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn tail(&self, h: usize) -> usize {
        self.edges[h / 2].ends[h % 2]
    }
    pub fn head(&self, h: usize) -> usize {
        self.edges[h / 2].ends[1 - h % 2]
    }
    /// Block of the head copy relative to the tail.
    pub fn shift(&self, h: usize) -> [i32; 2] {
        let s = self.edges[h / 2].shift;
        if h.is_multiple_of(2) {
            s
        } else {
            neg(s)
        }
    }
    pub fn translate(&self, s: [i32; 2]) -> C64 {
        self.periods[0] * f64::from(s[0]) + self.periods[1] * f64::from(s[1])
    }
    /// Displacement from tail to head.
    pub fn vec(&self, h: usize) -> C64 {
        self.pos[self.head(h)] + self.translate(self.shift(h)) - self.pos[self.tail(h)]
    }
    /// Next half-edge along the face on the left.
    pub fn next(&self, h: usize) -> usize {
        let b = self.head(h);
        let o = &self.out[b];
        let i = o.iter().position(|&x| x == (h ^ 1)).unwrap();
        o[(i + o.len() - 1) % o.len()]
    }

    /// Face boundary unwrapped into the plane: `(half-edge, tail block)`.
    fn face_walk(&self, f: usize) -> Vec<(usize, [i32; 2])> {
        let mut k = [0, 0];
        self.faces[f]
            .iter()
            .map(|&h| {
                let here = k;
                k = add(k, self.shift(h));
                (h, here)
            })
            .collect()
    }

    /// Face point: circumcenter of cyclic faces, else the vertex mean.
    pub fn face_point(&self, f: usize) -> C64 {
        let pts: Vec<C64> = self.face_walk(f).iter().map(|&(h, k)| self.pos[self.tail(h)] + self.translate(k)).collect();
        if pts.len() >= 3 {
            if let Some(c) = geom::circumcenter(pts[0], pts[1], pts[2]) {
                let r = (pts[0] - c).norm();
                if pts.iter().all(|p| ((p - c).norm() - r).abs() < 1e-9 * r) {
                    return c;
                }
            }
        }
        pts.iter().sum::<C64>() / pts.len() as f64
    }

    /// Corners (one per half-edge, the angle opened by it) and quads.
    pub fn dual(&self) -> Result<PeriodicDual> {
        let fp: Vec<C64> = (0..self.num_faces()).map(|f| self.face_point(f)).collect();
        let mut corners = vec![PCorner { v: 0, f: 0, face_shift: [0, 0], dir: C64::new(0.0, 0.0) }; 2 * self.edges.len()];
        for f in 0..self.num_faces() {
            for (h, k) in self.face_walk(f) {
                let v = self.tail(h);
                let dir = self.pos[v] + self.translate(k) - fp[f];
                if dir.norm() < 1e-12 {
                    return Err(Error::Geometry(format!("corner at half-edge {h} is degenerate")));
                }
                corners[h] = PCorner { v, f, face_shift: neg(k), dir };
            }
        }
        let eta = |c: usize| C64::from_polar(1.0, -0.5 * corners[c].dir.arg());
        let mut quads = Vec::with_capacity(self.edges.len());
        for e in 0..self.edges.len() {
            let h = 2 * e;
            let c = [[self.next(h ^ 1), h], [h ^ 1, self.next(h)]];
            let lc = [c[0][0], c[1][0], c[1][1], c[0][1]];
            // continuity of the Dirac phase along the loop
            let mut signs = [1.0; 4];
            let mut prod = 1.0;
            for k in 0..4 {
                let (a, b) = (lc[k], lc[(k + 1) % 4]);
                let turn = geom::wrap(corners[b].dir.arg() - corners[a].dir.arg());
                let cont = eta(a) * C64::from_polar(1.0, -0.5 * turn);
                let s = if (cont - eta(b)).norm() < 1.0 { 1.0 } else { -1.0 };
                prod *= s;
                if k < 3 {
                    signs[k + 1] = signs[k] * s;
                }
            }
            if prod > 0.0 {
                return Err(Error::Geometry(format!("quad of edge {e} is not star-shaped around its center")));
            }
            quads.push(PQuad { edge: e, c, signs });
        }
        Ok(PeriodicDual { n_v: self.num_vertices(), n_f: self.num_faces(), corners, quads, face_points: fp })
    }
}

/// Corners and quads of a periodic map.
#[derive(Clone, Debug)]
pub struct PeriodicDual {
    pub n_v: usize,
    pub n_f: usize,
    pub corners: Vec<PCorner>,
    pub quads: Vec<PQuad>,
    pub face_points: Vec<C64>,
}

impl PeriodicDual {
    fn loop_corners(&self, z: usize) -> [usize; 4] {
        let c = self.quads[z].c;
        [c[0][0], c[1][0], c[1][1], c[0][1]]
    }

    /// Lifted loop values of a (complex) spinor.
    fn lifted(&self, f: &[C64], z: usize) -> [C64; 4] {
        let lc = self.loop_corners(z);
        let s = self.quads[z].signs;
        [f[lc[0]] * s[0], f[lc[1]] * s[1], f[lc[2]] * s[2], f[lc[3]] * s[3]]
    }

    /// Λ node ids of a quad `[v•0, v°0, v•1, v°1]` and their blocks relative to `v•0`.
    fn quad_nodes(&self, pm: &PeriodicMap, z: usize) -> ([usize; 4], [[i32; 2]; 4]) {
        let q = &self.quads[z];
        let e = pm.edges[q.edge];
        let (c00, c01) = (self.corners[q.c[0][0]], self.corners[q.c[0][1]]);
        (
            [e.ends[0], self.n_v + c00.f, e.ends[1], self.n_v + c01.f],
            [[0, 0], c00.face_shift, e.shift, c01.face_shift],
        )
    }

    /// Propagation equations of the periodic system.
    pub fn propagation_matrix(&self, thetas: &[f64]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(4 * self.quads.len(), self.corners.len());
        for z in 0..self.quads.len() {
            let lc = self.loop_corners(z);
            let sg = self.quads[z].signs;
            for k in 0..4 {
                for (j, c) in propagation_terms(k, thetas[z]) {
                    a[(4 * z + k, lc[j])] += c * sg[j];
                }
            }
        }
        a
    }
}

/// `Z²` with an `n × m` fundamental domain and unit mesh.
pub fn square_torus(n: usize, m: usize) -> Result<PeriodicMap> {
    if n == 0 || m == 0 {
        return Err(Error::Input("empty fundamental domain".into()));
    }
    let idx = |i: usize, j: usize| j * n + i;
    let pos = (0..m).flat_map(|j| (0..n).map(move |i| C64::new(i as f64, j as f64))).collect();
    let mut edges = Vec::new();
    for j in 0..m {
        for i in 0..n {
            edges.push(PEdge { ends: [idx(i, j), idx((i + 1) % n, j)], shift: [i32::from(i + 1 == n), 0] });
            edges.push(PEdge { ends: [idx(i, j), idx(i, (j + 1) % m)], shift: [0, i32::from(j + 1 == m)] });
        }
    }
    PeriodicMap::new(pos, [C64::new(n as f64, 0.0), C64::new(0.0, m as f64)], edges)
}

/// Triangular lattice with a one-vertex fundamental domain and unit edges.
pub fn triangular_torus() -> Result<PeriodicMap> {
    let w = C64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
    let edges = vec![
        PEdge { ends: [0, 0], shift: [1, 0] },
        PEdge { ends: [0, 0], shift: [0, 1] },
        PEdge { ends: [0, 0], shift: [-1, 1] },
    ];
    PeriodicMap::new(vec![C64::new(0.0, 0.0)], [C64::new(1.0, 0.0), w], edges)
}

/// Measured dimension of the periodic kernel, with the spinors when it is 2.
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub dimension: usize,
    /// singular values in increasing order
    pub singular_values: Vec<f64>,
    /// first singular value above the threshold over the last one below it
    pub gap: f64,
    #[serde(skip)]
    pub pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// Kernel of the periodic propagation system (equivalently of the periodic
/// Kac–Ward matrix) for weights `x` per edge. The returned pair is
/// orthonormal and oriented so that `κ = i` gives counterclockwise quads.
pub fn periodic_kernel(pm: &PeriodicMap, pd: &PeriodicDual, x: &[f64]) -> Result<KernelReport> {
    if x.len() != pm.edges.len() {
        return Err(Error::Shape(format!("{} weights for {} edges", x.len(), pm.edges.len())));
    }
    if pm.edges.len() > 200 {
        return Err(Error::Size { what: "periodic kernel".into(), needed: pm.edges.len(), budget: 200 });
    }
    let thetas: Vec<f64> = pd.quads.iter().map(|q| 2.0 * x[q.edge].atan()).collect();
    let a = pd.propagation_matrix(&thetas);
    // right singular vectors from the eigenvectors of AᵀA
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let smax = sv.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let dimension = sv.iter().filter(|&&s| s < 1e-8 * smax).count();
    let below = if dimension == 0 { 1e-16 * smax } else { sv[dimension - 1].max(1e-16 * smax) };
    let gap = sv.get(dimension).copied().unwrap_or(smax) / below;
    let pair = if dimension == 2 {
        let col = |k: usize| -> Vec<f64> { eig.eigenvectors.column(order[k]).iter().copied().collect() };
        let (f1, mut f2) = (col(0), col(1));
        let f: Vec<C64> = f1.iter().zip(&f2).map(|(&a, &b)| C64::new(a, b)).collect();
        let area: f64 = (0..pd.quads.len()).map(|z| geom::signed_area(&local_quad(pd, &f, z))).sum();
        if area < 0.0 {
            f2.iter_mut().for_each(|v| *v = -*v);
        }
        Some((f1, f2))
    } else {
        None
    };
    Ok(KernelReport { dimension, singular_values: sv, gap, pair })
}

/// Image quad of `z` from the corner increments, with `S(v°0) = 0`.
fn local_quad(pd: &PeriodicDual, f: &[C64], z: usize) -> [C64; 4] {
    let c = pd.quads[z].c;
    let sq = |k: usize| f[k] * f[k];
    let v0 = sq(c[0][0]);
    [v0, C64::new(0.0, 0.0), sq(c[1][0]), v0 - sq(c[0][1])]
}

/// Quad center from the corner products.
fn local_center(pd: &PeriodicDual, f: &[C64], z: usize, theta: f64) -> C64 {
    let l = pd.lifted(f, z);
    let p = local_quad(pd, f, z);
    let (sn, cs) = theta.sin_cos();
    let cands = [p[0] + l[0] * l[3] * cs, p[2] - l[1] * l[2] * cs, p[1] + l[0] * l[1] * sn, p[3] + l[2] * l[3] * sn];
    cands.iter().sum::<C64>() / 4.0
}

fn combine(pair: &(Vec<f64>, Vec<f64>), kappa: C64) -> Vec<C64> {
    pair.0.iter().zip(&pair.1).map(|(&a, &b)| a + kappa * b).collect()
}

type NodeKey = (usize, [i32; 2]);

/// `S = H_{F1 + κF2}` on a block of fundamental domains.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicSEmbedding {
    pub kappa: [f64; 2],
    /// positions of the Λ nodes (vertices, then faces) in block (0, 0)
    #[serde(skip)]
    pub base: Vec<C64>,
    /// measured shifts of S under the two periods
    #[serde(skip)]
    pub periods: [C64; 2],
    /// conformal modulus `τ = P2 / P1` of the image fundamental domain
    pub tau: [f64; 2],
    pub quasi_periodicity_residual: f64,
    #[serde(skip)]
    pub values: HashMap<NodeKey, C64>,
}

pub fn build_periodic_sembedding(
    _pm: &PeriodicMap,
    pd: &PeriodicDual,
    pair: &(Vec<f64>, Vec<f64>),
    kappa: C64,
    blocks: usize,
) -> Result<PeriodicSEmbedding> {
    let f = combine(pair, kappa);
    let incr: Vec<C64> = f.iter().map(|x| x * x).collect();
    let scale = incr.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    let ref_dir = incr.iter().copied().find(|x| x.norm() > 1e-9 * scale).unwrap_or(C64::new(1.0, 0.0));
    if scale == 0.0 || incr.iter().all(|x| (x * ref_dir.conj()).im.abs() < 1e-10 * scale * ref_dir.norm()) {
        return Err(Error::DegenerateSpinor("corner increments are collinear".into()));
    }
    let b = blocks.max(2) as i32;
    let inside = |k: [i32; 2]| k[0] >= 0 && k[1] >= 0 && k[0] < b && k[1] < b;
    let mut adj: HashMap<NodeKey, Vec<(NodeKey, C64)>> = HashMap::new();
    for (c, corner) in pd.corners.iter().enumerate() {
        for i in 0..b {
            for j in 0..b {
                let kv = [i, j];
                let kf = add(kv, corner.face_shift);
                if !inside(kf) {
                    continue;
                }
                let (nv, nf) = ((corner.v, kv), (pd.n_v + corner.f, kf));
                adj.entry(nf).or_default().push((nv, incr[c]));
                adj.entry(nv).or_default().push((nf, -incr[c]));
            }
        }
    }
    let root: NodeKey = (0, [0, 0]);
    let mut values: HashMap<NodeKey, C64> = HashMap::from([(root, C64::new(0.0, 0.0))]);
    let mut q = VecDeque::from([root]);
    let mut worst: f64 = 0.0;
    while let Some(a) = q.pop_front() {
        let ha = values[&a];
        for &(nb, d) in adj.get(&a).map(|v| v.as_slice()).unwrap_or(&[]) {
            let want = ha + d;
            match values.get(&nb) {
                None => {
                    values.insert(nb, want);
                    q.push_back(nb);
                }
                Some(&h) => worst = worst.max((h - want).norm()),
            }
        }
    }
    if worst > 1e-9 * scale.max(1.0) {
        return Err(Error::NonIntegrable { residual: worst });
    }
    let n = pd.n_v + pd.n_f;
    let get = |id: usize, k: [i32; 2]| {
        values.get(&(id, k)).copied().ok_or_else(|| Error::Input(format!("node {id} not reached in block {k:?}")))
    };
    let base: Vec<C64> = (0..n).map(|id| get(id, [0, 0])).collect::<Result<_>>()?;
    let periods = [get(0, [1, 0])? - base[0], get(0, [0, 1])? - base[0]];
    let mut resid: f64 = 0.0;
    for (&(id, k), &h) in &values {
        for (d, p) in [([1, 0], periods[0]), ([0, 1], periods[1])] {
            if let Some(&h2) = values.get(&(id, add(k, d))) {
                resid = resid.max((h2 - h - p).norm());
            }
        }
    }
    let tau = periods[1] / periods[0];
    Ok(PeriodicSEmbedding {
        kappa: [kappa.re, kappa.im],
        base,
        periods,
        tau: [tau.re, tau.im],
        quasi_periodicity_residual: resid,
        values,
    })
}

/// Defects of `L_S` along the two periods as functions of κ: each is
/// `A + 2B Re κ + C |κ|²`, returned as `[[A, B, C]; 2]`.
pub fn l_s_defect_coefficients(pm: &PeriodicMap, pd: &PeriodicDual, pair: &(Vec<f64>, Vec<f64>)) -> Result<[[f64; 3]; 2]> {
    let mut out = [[0.0; 3]; 2];
    let parts: [Box<dyn Fn(usize) -> f64>; 3] = [
        Box::new(|c| pair.0[c] * pair.0[c]),
        Box::new(|c| pair.0[c] * pair.1[c]),
        Box::new(|c| pair.1[c] * pair.1[c]),
    ];
    for (k, part) in parts.iter().enumerate() {
        let incr: Vec<C64> = (0..pd.corners.len()).map(|c| C64::new(part(c), 0.0)).collect();
        let p = cycle_defects(pm, pd, &incr)?;
        out[0][k] = p[0].re;
        out[1][k] = p[1].re;
    }
    Ok(out)
}

/// Change of an additive function along the two periods, given increments
/// `H(v) − H(f) = incr[c]` per corner.
fn cycle_defects(pm: &PeriodicMap, pd: &PeriodicDual, incr: &[C64]) -> Result<[C64; 2]> {
    // spanning-tree potential on the torus graph with block offsets
    let n = pd.n_v + pd.n_f;
    let mut adj: Vec<Vec<(usize, [i32; 2], C64)>> = vec![Vec::new(); n];
    for (c, k) in pd.corners.iter().enumerate() {
        adj[pd.n_v + k.f].push((k.v, neg(k.face_shift), incr[c]));
        adj[k.v].push((pd.n_v + k.f, k.face_shift, -incr[c]));
    }
    let mut pot: Vec<Option<(C64, [i32; 2])>> = vec![None; n];
    pot[0] = Some((C64::new(0.0, 0.0), [0, 0]));
    let mut q = VecDeque::from([0usize]);
    // each non-tree edge closes a cycle with homology `dk`; collect them
    let mut cycles: Vec<([i32; 2], C64)> = Vec::new();
    while let Some(a) = q.pop_front() {
        let (ha, ka) = pot[a].unwrap();
        for &(b, s, d) in &adj[a] {
            let (hb, kb) = (ha + d, add(ka, s));
            match pot[b] {
                None => {
                    pot[b] = Some((hb, kb));
                    q.push_back(b);
                }
                Some((h, k)) => {
                    let dk = [kb[0] - k[0], kb[1] - k[1]];
                    cycles.push((dk, hb - h));
                }
            }
        }
    }
    if pot.iter().any(|p| p.is_none()) {
        return Err(Error::Embedding("torus graph is disconnected".into()));
    }
    // solve P · dk = defect in least squares over all cycles
    let _ = pm;
    let m = DMatrix::from_fn(cycles.len(), 2, |r, j| f64::from(cycles[r].0[j]));
    let svd = SVD::new(m, true, true);
    let rhs_re = DVector::from_iterator(cycles.len(), cycles.iter().map(|c| c.1.re));
    let rhs_im = DVector::from_iterator(cycles.len(), cycles.iter().map(|c| c.1.im));
    let re = svd.solve(&rhs_re, 1e-12).map_err(|e| Error::Input(e.to_string()))?;
    let im = svd.solve(&rhs_im, 1e-12).map_err(|e| Error::Input(e.to_string()))?;
    Ok([C64::new(re[0], im[0]), C64::new(re[1], im[1])])
}

/// κ in the upper half plane making `L_S` periodic.
#[derive(Clone, Debug, Serialize)]
pub struct KappaL {
    pub kappa: [f64; 2],
    /// largest period defect of `L_S` at κ, relative to `Σ|F|²`
    pub residual: f64,
    /// false when the two defect equations do not pin κ down
    pub unique: bool,
}

/// Solve both defect equations, which are linear in `(Re κ, |κ|²)`.
pub fn find_kappa_l(pm: &PeriodicMap, pd: &PeriodicDual, pair: &(Vec<f64>, Vec<f64>)) -> Result<KappaL> {
    let k = l_s_defect_coefficients(pm, pd, pair)?;
    // [2B1 C1; 2B2 C2] (t, s) = −(A1, A2)
    let m = nalgebra::Matrix2::new(2.0 * k[0][1], k[0][2], 2.0 * k[1][1], k[1][2]);
    let det = m.determinant();
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if det.abs() < 1e-10 * scale * scale {
        return Err(Error::Input("L_S defects do not determine κ".into()));
    }
    let ts = m.try_inverse().unwrap() * nalgebra::Vector2::new(-k[0][0], -k[1][0]);
    let (t, s) = (ts[0], ts[1]);
    if s <= t * t {
        return Err(Error::Input("no κ off the real line makes L_S periodic".into()));
    }
    let kappa = C64::new(t, (s - t * t).sqrt());
    let residual = l_s_defect(pm, pd, pair, kappa)?;
    Ok(KappaL { kappa: [kappa.re, kappa.im], residual, unique: true })
}

/// Largest relative period defect of `L_S` at κ.
pub fn l_s_defect(pm: &PeriodicMap, pd: &PeriodicDual, pair: &(Vec<f64>, Vec<f64>), kappa: C64) -> Result<f64> {
    let f = combine(pair, kappa);
    let incr: Vec<C64> = f.iter().map(|x| C64::new(x.norm_sqr(), 0.0)).collect();
    let total: f64 = incr.iter().map(|x| x.re).sum::<f64>().max(f64::MIN_POSITIVE);
    let d = cycle_defects(pm, pd, &incr)?;
    Ok(d[0].norm().max(d[1].norm()) / total)
}

/// Periodic `Δ_S` over the Λ nodes of the fundamental domain, and its
/// coefficients in the order (a•, a° per quad, b per corner).
pub fn periodic_s_laplacian(pm: &PeriodicMap, pd: &PeriodicDual, pair: &(Vec<f64>, Vec<f64>), kappa: C64, x: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let f = combine(pair, kappa);
    let n = pd.n_v + pd.n_f;
    let mut m = DMatrix::zeros(n, n);
    let nq = pd.quads.len();
    let mut coef = vec![0.0; 2 * nq + pd.corners.len()];
    for z in 0..nq {
        let theta = 2.0 * x[pd.quads[z].edge].atan();
        let p = local_quad(pd, &f, z);
        let g = quad_geometry_of(p, local_center(pd, &f, z, theta)).map_err(|_| Error::Geometry(format!("quad {z} is degenerate")))?;
        let (ab, ac, terms) = quad_coefficients(&g, theta);
        coef[z] = ab;
        coef[nq + z] = ac;
        let (ids, _) = pd.quad_nodes(pm, z);
        for (a, b, w) in [(ids[0], ids[2], ab), (ids[1], ids[3], -ac)] {
            if a != b {
                m[(a, b)] += w;
                m[(b, a)] += w;
                m[(a, a)] -= w;
                m[(b, b)] -= w;
            }
        }
        let c = pd.quads[z].c;
        for p in 0..2 {
            for q in 0..2 {
                coef[2 * nq + c[p][q]] += terms[p][q];
                let (a, b) = (ids[2 * p], ids[1 + 2 * q]);
                m[(a, b)] += terms[p][q];
                m[(b, a)] += terms[p][q];
                m[(a, a)] -= terms[p][q];
                m[(b, b)] -= terms[p][q];
            }
        }
    }
    Ok((m, coef))
}

/// Relative distance between two coefficient vectors up to a positive factor.
pub fn projective_gap(a: &[f64], b: &[f64]) -> f64 {
    let (ab, aa): (f64, f64) = (a.iter().zip(b).map(|(x, y)| x * y).sum(), a.iter().map(|x| x * x).sum());
    let lambda = ab / aa.max(f64::MIN_POSITIVE);
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (lambda * x - y).abs()).fold(0.0, f64::max) / scale
}

/// Periodic `∂̄_S` (quads × Λ nodes of the fundamental domain).
pub fn periodic_dbar(pm: &PeriodicMap, pd: &PeriodicDual, pair: &(Vec<f64>, Vec<f64>), kappa: C64, x: &[f64]) -> Result<DMatrix<C64>> {
    let f = combine(pair, kappa);
    let mut m = DMatrix::zeros(pd.quads.len(), pd.n_v + pd.n_f);
    for z in 0..pd.quads.len() {
        let theta = 2.0 * x[pd.quads[z].edge].atan();
        let (w, _) = dbar_quad(local_quad(pd, &f, z), local_center(pd, &f, z, theta))?;
        let (ids, _) = pd.quad_nodes(pm, z);
        for k in 0..4 {
            m[(z, ids[k])] += w[k];
        }
    }
    Ok(m)
}

fn null_dim_real(m: &DMatrix<f64>) -> usize {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.amax().max(f64::MIN_POSITIVE);
    m.ncols() - sv.iter().filter(|&&s| s > 1e-9 * smax).count()
}

fn null_dim_complex(m: &DMatrix<C64>) -> usize {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.amax().max(f64::MIN_POSITIVE);
    m.ncols() - sv.iter().filter(|&&s| s > 1e-9 * smax).count()
}

/// `[Δ_S g(S)](v)` for the vertices of block `center`, from the quad instances
/// of a built embedding.
fn apply_to_function(
    pm: &PeriodicMap,
    pd: &PeriodicDual,
    emb: &PeriodicSEmbedding,
    pair: &(Vec<f64>, Vec<f64>),
    x: &[f64],
    center: [i32; 2],
    g: impl Fn(C64) -> C64,
) -> Result<Vec<C64>> {
    let kappa = C64::new(emb.kappa[0], emb.kappa[1]);
    let f = combine(pair, kappa);
    let n = pd.n_v + pd.n_f;
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut hits = vec![0usize; n];
    for z in 0..pd.quads.len() {
        let theta = 2.0 * x[pd.quads[z].edge].atan();
        let geo = quad_geometry_of(local_quad(pd, &f, z), local_center(pd, &f, z, theta))?;
        let (ab, ac, terms) = quad_coefficients(&geo, theta);
        let (ids, offs) = pd.quad_nodes(pm, z);
        let mut pairs = vec![(0usize, 2usize, ab), (1, 3, -ac)];
        for p in 0..2 {
            for q in 0..2 {
                pairs.push((2 * p, 1 + 2 * q, terms[p][q]));
            }
        }
        for bi in -2..=2 {
            for bj in -2..=2 {
                let base = add(center, [bi, bj]);
                let keys: Vec<NodeKey> = (0..4).map(|k| (ids[k], add(base, offs[k]))).collect();
                let vals: Option<Vec<C64>> = keys.iter().map(|k| emb.values.get(k).copied()).collect();
                let Some(vals) = vals else { continue };
                for &(a, b, w) in &pairs {
                    for (s, t) in [(a, b), (b, a)] {
                        if keys[s].1 == center {
                            out[keys[s].0] += w * (g(vals[t]) - g(vals[s]));
                            hits[keys[s].0] += 1;
                        }
                    }
                }
            }
        }
    }
    if hits.contains(&0) {
        return Err(Error::Input("block window too small".into()));
    }
    Ok(out)
}

/// Measurements around the doubly-periodic conjectures; nothing is asserted.
#[derive(Clone, Debug, Serialize)]
pub struct HarnessReport {
    pub kernel: KernelReport,
    pub kappa_l: Option<KappaL>,
    /// `(κ, all image quads counterclockwise, all clockwise)` over a grid
    pub orientation: Vec<([f64; 2], bool, bool)>,
    pub ker_delta_s: usize,
    pub ker_dbar_generic: usize,
    pub ker_dbar_at_kappa_l: Option<usize>,
    /// `max |∂̄_S L_S|` at κ_L
    pub dbar_l_s: Option<f64>,
    /// largest `|Δ_S S|` at κ_L (S is s-harmonic)
    pub delta_s_of_s: Option<f64>,
    /// least-squares defect of `Δ_S(S² + ρ) = 0` over periodic ρ
    pub rho_defect: Option<f64>,
    pub rho_norm: Option<f64>,
}

pub fn conjecture_harness(pm: &PeriodicMap, x: &[f64]) -> Result<HarnessReport> {
    let pd = pm.dual()?;
    let kernel = periodic_kernel(pm, &pd, x)?;
    let Some(pair) = kernel.pair.clone() else {
        return Err(Error::Input(format!("no periodic kernel pair (dimension {})", kernel.dimension)));
    };
    let mut orientation = Vec::new();
    for re in [-1.0, 0.0, 1.0] {
        for im in [-1.0, 0.5, 1.0, 2.0] {
            let f = combine(&pair, C64::new(re, im));
            let areas: Vec<f64> = (0..pd.quads.len()).map(|z| geom::signed_area(&local_quad(&pd, &f, z))).collect();
            orientation.push(([re, im], areas.iter().all(|&a| a > 0.0), areas.iter().all(|&a| a < 0.0)));
        }
    }
    let kappa_l = find_kappa_l(pm, &pd, &pair).ok();
    let generic = kappa_l.as_ref().map(|k| C64::new(k.kappa[0] + 0.3, k.kappa[1] * 1.4)).unwrap_or(C64::new(0.3, 1.4));
    let (lap, _) = periodic_s_laplacian(pm, &pd, &pair, generic, x)?;
    let ker_delta_s = null_dim_real(&lap);
    let ker_dbar_generic = null_dim_complex(&periodic_dbar(pm, &pd, &pair, generic, x)?);
    let mut rep = HarnessReport {
        kernel,
        kappa_l: kappa_l.clone(),
        orientation,
        ker_delta_s,
        ker_dbar_generic,
        ker_dbar_at_kappa_l: None,
        dbar_l_s: None,
        delta_s_of_s: None,
        rho_defect: None,
        rho_norm: None,
    };
    if let Some(k) = kappa_l {
        let kl = C64::new(k.kappa[0], k.kappa[1]);
        let d = periodic_dbar(pm, &pd, &pair, kl, x)?;
        rep.ker_dbar_at_kappa_l = Some(null_dim_complex(&d));
        // L_S on the fundamental domain: vertices minus faces increments
        let f = combine(&pair, kl);
        let l = periodic_potential(&pd, &f.iter().map(|v| C64::new(v.norm_sqr(), 0.0)).collect::<Vec<_>>());
        let dl = &d * DVector::from_vec(l);
        rep.dbar_l_s = Some(dl.iter().map(|v| v.norm()).fold(0.0, f64::max));
        let emb = build_periodic_sembedding(pm, &pd, &pair, kl, 5)?;
        let ds = apply_to_function(pm, &pd, &emb, &pair, x, [2, 2], |s| s)?;
        rep.delta_s_of_s = Some(ds.iter().map(|v| v.norm()).fold(0.0, f64::max));
        let ds2 = apply_to_function(pm, &pd, &emb, &pair, x, [2, 2], |s| s * s)?;
        let (lap, _) = periodic_s_laplacian(pm, &pd, &pair, kl, x)?;
        let svd = SVD::new(lap.clone(), true, true);
        let smax = svd.singular_values.amax().max(f64::MIN_POSITIVE);
        let mut defect: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for part in 0..2 {
            let rhs = DVector::from_iterator(ds2.len(), ds2.iter().map(|v| if part == 0 { -v.re } else { -v.im }));
            let rho = svd.solve(&rhs, 1e-10 * smax).map_err(|e| Error::Input(e.to_string()))?;
            defect = defect.max((&lap * &rho - &rhs).amax());
            norm = norm.max(rho.amax());
        }
        rep.rho_defect = Some(defect);
        rep.rho_norm = Some(norm);
    }
    Ok(rep)
}

/// Values on the fundamental domain of an additive function with periodic
/// increments, fixed to 0 at node 0 (only meaningful when it is periodic).
fn periodic_potential(pd: &PeriodicDual, incr: &[C64]) -> Vec<C64> {
    let n = pd.n_v + pd.n_f;
    let mut adj: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    for (c, k) in pd.corners.iter().enumerate() {
        adj[pd.n_v + k.f].push((k.v, incr[c]));
        adj[k.v].push((pd.n_v + k.f, -incr[c]));
    }
    let mut h: Vec<Option<C64>> = vec![None; n];
    h[0] = Some(C64::new(0.0, 0.0));
    let mut q = VecDeque::from([0usize]);
    while let Some(a) = q.pop_front() {
        for &(b, d) in &adj[a] {
            if h[b].is_none() {
                h[b] = Some(h[a].unwrap() + d);
                q.push_back(b);
            }
        }
    }
    h.into_iter().map(|v| v.unwrap_or_default()).collect()
}

/// Critical weights of the square lattice.
pub fn square_critical_x(pm: &PeriodicMap) -> Vec<f64> {
    vec![(FRAC_PI_4 / 2.0).tan(); pm.edges.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_maps() {
        let pm = square_torus(1, 1).unwrap();
        assert_eq!((pm.num_vertices(), pm.edges.len(), pm.num_faces()), (1, 2, 1));
        let pd = pm.dual().unwrap();
        assert_eq!((pd.corners.len(), pd.quads.len()), (4, 2));
        let pm = square_torus(3, 2).unwrap();
        assert_eq!((pm.num_vertices(), pm.edges.len(), pm.num_faces()), (6, 12, 6));
        let tri = triangular_torus().unwrap();
        assert_eq!((tri.num_vertices(), tri.edges.len(), tri.num_faces()), (1, 3, 2));
        assert!(matches!(
            PeriodicMap::new(vec![C64::new(0.0, 0.0)], [C64::new(1.0, 0.0), C64::new(2.0, 0.0)], vec![]),
            Err(Error::Embedding(_))
        ));
    }

    #[test]
    fn kernel_detects_criticality() {
        for pm in [square_torus(1, 1).unwrap(), square_torus(2, 2).unwrap()] {
            let pd = pm.dual().unwrap();
            let xc = square_critical_x(&pm);
            let rep = periodic_kernel(&pm, &pd, &xc).unwrap();
            assert_eq!(rep.dimension, 2, "{:?}", rep.singular_values);
            assert!(rep.gap >= 1e3);
            for dx in [0.05, -0.05] {
                let x: Vec<f64> = xc.iter().map(|v| v + dx).collect();
                let rep = periodic_kernel(&pm, &pd, &x).unwrap();
                assert_eq!(rep.dimension, 0, "{:?}", rep.singular_values);
                assert!(rep.gap >= 1e3);
                assert!(rep.pair.is_none());
            }
        }
    }

    #[test]
    fn decoupled_weights_have_no_pair() {
        let pm = square_torus(2, 2).unwrap();
        let pd = pm.dual().unwrap();
        let x: Vec<f64> = (0..pm.edges.len()).map(|e| if e % 2 == 0 { 0.0 } else { 2f64.sqrt() - 1.0 }).collect();
        let rep = periodic_kernel(&pm, &pd, &x).unwrap();
        assert_ne!(rep.dimension, 2);
        assert!(rep.pair.is_none());
    }

    #[test]
    fn rhombic_tori_are_critical() {
        let tri = triangular_torus().unwrap();
        let pd = tri.dual().unwrap();
        let x = vec![(std::f64::consts::FRAC_PI_6 / 2.0).tan(); 3];
        assert_eq!(periodic_kernel(&tri, &pd, &x).unwrap().dimension, 2);
        // rectangular: θ_h + θ_v = π/2
        let pm = square_torus(1, 1).unwrap();
        let pd = pm.dual().unwrap();
        let th = 0.6f64;
        let x = vec![(th / 2.0).tan(), ((std::f64::consts::FRAC_PI_2 - th) / 2.0).tan()];
        assert_eq!(periodic_kernel(&pm, &pd, &x).unwrap().dimension, 2);
    }

    #[test]
    fn square_lattice_embedding_and_kappa_l() {
        let pm = square_torus(1, 1).unwrap();
        let pd = pm.dual().unwrap();
        let x = square_critical_x(&pm);
        let pair = periodic_kernel(&pm, &pd, &x).unwrap().pair.unwrap();
        let emb = build_periodic_sembedding(&pm, &pd, &pair, C64::new(0.0, 1.0), 3).unwrap();
        assert!(emb.quasi_periodicity_residual < 1e-12);
        // similarity with Z²: the image periods are orthogonal and of equal length
        let tau = C64::new(emb.tau[0], emb.tau[1]);
        assert!((tau - C64::new(0.0, 1.0)).norm() < 1e-10, "{tau}");
        let k = find_kappa_l(&pm, &pd, &pair).unwrap();
        assert!((C64::new(k.kappa[0], k.kappa[1]) - C64::new(0.0, 1.0)).norm() < 1e-10);
        assert!(k.residual <= 1e-8);
        let conj = l_s_defect(&pm, &pd, &pair, C64::new(0.0, -1.0)).unwrap();
        assert!((conj - k.residual).abs() < 1e-14);
        assert!(l_s_defect(&pm, &pd, &pair, C64::new(0.4, 1.2)).unwrap() > 1e-3);
        assert!(matches!(
            build_periodic_sembedding(&pm, &pd, &pair, C64::new(0.7, 0.0), 3),
            Err(Error::DegenerateSpinor(_))
        ));
    }

    #[test]
    fn laplacian_is_projectively_invariant() {
        let pm = square_torus(2, 2).unwrap();
        let pd = pm.dual().unwrap();
        let x = square_critical_x(&pm);
        let pair = periodic_kernel(&pm, &pd, &x).unwrap().pair.unwrap();
        let (_, c0) = periodic_s_laplacian(&pm, &pd, &pair, C64::new(0.0, 1.0), &x).unwrap();
        for k in [C64::new(0.3, 0.8), C64::new(-1.0, 2.0), C64::new(0.1, 0.3)] {
            let (_, c1) = periodic_s_laplacian(&pm, &pd, &pair, k, &x).unwrap();
            assert!(projective_gap(&c0, &c1) < 1e-9);
        }
    }

    #[test]
    fn harness_on_square_lattice() {
        let pm = square_torus(2, 2).unwrap();
        let rep = conjecture_harness(&pm, &square_critical_x(&pm)).unwrap();
        assert_eq!(rep.ker_delta_s, 2);
        assert_eq!(rep.ker_dbar_generic, 1);
        assert_eq!(rep.ker_dbar_at_kappa_l, Some(2));
        assert!(rep.dbar_l_s.unwrap() < 1e-8);
        assert!(rep.delta_s_of_s.unwrap() < 1e-8);
        assert!(rep.rho_defect.unwrap() < 1e-8 && rep.rho_norm.unwrap() < 1e-8);
        let off: Vec<f64> = square_critical_x(&pm).iter().map(|v| v + 0.05).collect();
        assert!(conjecture_harness(&pm, &off).is_err());
    }
}

//! Exact enumeration oracle.
//!
//! Every subgraph with a prescribed odd-degree set `V` is `C0 ⊕ ∂S` where
//! `C0` is a fixed path system pairing `V` and `S` ranges over subsets of
//! inner faces. The loop walks the subsets in Gray-code order, so each step
//! flips one face boundary. Weights are multiplied per byte of edges from
//! precomputed tables.

use crate::error::{Error, Result};
use crate::geom;
use crate::planar_map::{dual_pair, CircKind, DualPair, EdgeKind, PlanarMap, UFace};
use crate::weights::IsingWeights;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Largest number of inner faces the oracle will enumerate over.
pub const FACE_BUDGET: usize = 24;

type Mask = Vec<u64>;

fn mask_new(m: usize) -> Mask {
    vec![0; m.div_ceil(64).max(1)]
}
fn mask_flip(a: &mut Mask, e: usize) {
    a[e / 64] ^= 1 << (e % 64);
}
fn mask_xor(a: &mut Mask, b: &Mask) {
    for (x, y) in a.iter_mut().zip(b) {
        *x ^= *y;
    }
}
fn mask_parity(a: &Mask, b: &Mask) -> bool {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum::<u32>() % 2 == 1
}
fn mask_of(m: usize, edges: impl IntoIterator<Item = usize>) -> Mask {
    let mut k = mask_new(m);
    for e in edges {
        mask_flip(&mut k, e);
    }
    k
}

/// Correlator request: disorders at G vertices, spins at G faces, fermions at corners.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorRequest {
    #[serde(default)]
    pub disorders: Vec<usize>,
    #[serde(default)]
    pub spins: Vec<usize>,
    #[serde(default)]
    pub corners: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorValue {
    pub value: f64,
    pub sheet: String,
    #[serde(rename = "Z")]
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionFunction {
    /// sum over even subgraphs
    pub z: f64,
    /// spins on faces, `∏ x^{-1/2} Z`, when all quad weights are positive
    pub z_circ: Option<f64>,
    /// spins on G• vertices, `2^{|V•|} ∏ (1 − x²)^{-1/2} Z`, when all quad weights are below 1
    pub z_bullet: Option<f64>,
}

/// Enumeration engine bound to one weighted map.
pub struct Oracle<'a> {
    map: &'a PlanarMap,
    x: Vec<f64>,
    m: usize,
    face_masks: Vec<Mask>,
    /// BFS tree of G from vertex 0: parent half-edge per vertex
    vparent: Vec<Option<usize>>,
    /// dual BFS tree from the outer face over G• edges: parent edge per face
    fparent: Vec<Option<(usize, usize)>>,
    dual: Option<DualPair>,
    z: f64,
}

impl<'a> Oracle<'a> {
    pub fn new(map: &'a PlanarMap, w: &IsingWeights) -> Result<Self> {
        let inner: Vec<usize> = map.inner_faces().collect();
        if inner.len() > FACE_BUDGET {
            return Err(Error::Size { what: "inner faces".into(), needed: inner.len(), budget: FACE_BUDGET });
        }
        let m = map.num_edges();
        let face_masks = inner.iter().map(|&f| mask_of(m, map.face(f).iter().map(|&h| map.edge_of(h)))).collect();
        let n = map.num_vertices();
        let mut vparent = vec![None; n];
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut q = VecDeque::from([0]);
        while let Some(v) = q.pop_front() {
            for &h in map.out(v) {
                let u = map.head(h);
                if !seen[u] {
                    seen[u] = true;
                    vparent[u] = Some(h);
                    q.push_back(u);
                }
            }
        }
        let nf = map.num_faces();
        let mut fparent = vec![None; nf];
        let mut fseen = vec![false; nf];
        let outer = map.outer_face();
        fseen[outer] = true;
        let mut q = VecDeque::from([outer]);
        while let Some(f) = q.pop_front() {
            let mut nb: Vec<(usize, usize)> = map
                .face(f)
                .iter()
                .filter(|&&h| map.edge_kind(map.edge_of(h)) != EdgeKind::Free)
                .map(|&h| (map.face_of(map.twin(h)), map.edge_of(h)))
                .collect();
            nb.sort();
            for (g, e) in nb {
                if !fseen[g] {
                    fseen[g] = true;
                    fparent[g] = Some((f, e));
                    q.push_back(g);
                }
            }
        }
        let dual = dual_pair(map).ok();
        let mut o = Oracle { map, x: w.as_slice().to_vec(), m, face_masks, vparent, fparent, dual, z: 0.0 };
        o.z = o.even_sum(&[], &mask_new(m));
        Ok(o)
    }

    pub fn map(&self) -> &PlanarMap {
        self.map
    }
    pub fn dual(&self) -> Option<&DualPair> {
        self.dual.as_ref()
    }
    fn need_dual(&self) -> Result<&DualPair> {
        self.dual.as_ref().ok_or_else(|| Error::Input("map has bridges, corners are unavailable".into()))
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn partition_function(&self) -> PartitionFunction {
        let map = self.map;
        let quads: Vec<usize> = (0..self.m).filter(|&e| map.edge_kind(e) != EdgeKind::Free).collect();
        let z_circ = quads
            .iter()
            .all(|&e| self.x[e] > 0.0)
            .then(|| quads.iter().map(|&e| self.x[e].powf(-0.5)).product::<f64>() * self.z);
        let n_bullet = self.dual.as_ref().map(|d| d.n_bullet).unwrap_or_else(|| bullet_count(map));
        let z_bullet = quads.iter().all(|&e| self.x[e] < 1.0).then(|| {
            2f64.powi(n_bullet as i32) * quads.iter().map(|&e| (1.0 - self.x[e] * self.x[e]).powf(-0.5)).product::<f64>()
                * self.z
        });
        PartitionFunction { z: self.z, z_circ, z_bullet }
    }

    /// Edges on the tree path from `v` to the root.
    pub fn root_path(&self, mut v: usize) -> Vec<usize> {
        let mut p = Vec::new();
        while let Some(h) = self.vparent[v] {
            p.push(self.map.edge_of(h));
            v = self.map.tail(h);
        }
        p
    }

    /// Dual path from face `f` to the outer face crossing only G• edges.
    pub fn dual_root_path(&self, mut f: usize) -> Result<Vec<usize>> {
        if f >= self.map.num_faces() {
            return Err(Error::Input(format!("face {f} does not exist")));
        }
        let mut p = Vec::new();
        while f != self.map.outer_face() {
            let (g, e) = self.fparent[f]
                .ok_or_else(|| Error::Input(format!("face {f} cannot reach a wired arc")))?;
            p.push(e);
            f = g;
        }
        Ok(p)
    }

    fn odd_set(vs: &[usize]) -> Vec<usize> {
        let mut v = vs.to_vec();
        v.sort();
        let mut out = Vec::new();
        let mut k = 0;
        while k < v.len() {
            let mut j = k;
            while j < v.len() && v[j] == v[k] {
                j += 1;
            }
            if (j - k) % 2 == 1 {
                out.push(v[k]);
            }
            k = j;
        }
        out
    }

    fn base_config(&self, vs: &[usize]) -> Result<Mask> {
        let odd = Self::odd_set(vs);
        if odd.iter().any(|&v| v >= self.map.num_vertices()) {
            return Err(Error::Input("disorder vertex does not exist".into()));
        }
        let mut c0 = mask_new(self.m);
        for &v in &odd {
            for e in self.root_path(v) {
                mask_flip(&mut c0, e);
            }
        }
        // an odd set would need the root as an extra endpoint
        if odd.len() % 2 == 1 {
            return Err(Error::Input("odd total number of disorders".into()));
        }
        Ok(c0)
    }

    fn chunk_tables(&self, x: &[f64]) -> Vec<[f64; 256]> {
        (0..self.m.div_ceil(8))
            .map(|k| {
                let mut t = [1.0; 256];
                for b in 0..256usize {
                    let mut p = 1.0;
                    for i in 0..8 {
                        let e = 8 * k + i;
                        if b >> i & 1 == 1 && e < self.m {
                            p *= x[e];
                        }
                    }
                    t[b] = p;
                }
                t
            })
            .collect()
    }

    fn weight(tables: &[[f64; 256]], c: &Mask) -> f64 {
        let mut p = 1.0;
        for (k, t) in tables.iter().enumerate() {
            let byte = (c[k / 8] >> (8 * (k % 8))) & 0xff;
            p *= t[byte as usize];
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    }

    /// `Σ_{C ∈ E(G; vs)} x(C) (−1)^{|C ∩ γ_k|}` for each sign mask, in one pass.
    fn sums_with(&self, vs: &[usize], gammas: &[Mask], x: &[f64]) -> Result<Vec<f64>> {
        let c0 = self.base_config(vs)?;
        let tables = self.chunk_tables(x);
        let f = self.face_masks.len();
        let total: u64 = 1 << f;
        let block_bits = f.min(12);
        let blocks = total >> block_bits;
        let per_block: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let start = b << block_bits;
                let mut c = c0.clone();
                let g0 = start ^ (start >> 1);
                for (i, fm) in self.face_masks.iter().enumerate() {
                    if g0 >> i & 1 == 1 {
                        mask_xor(&mut c, fm);
                    }
                }
                let mut acc = vec![0.0; gammas.len()];
                for s in start..start + (1 << block_bits) {
                    if s > start {
                        let i = s.trailing_zeros() as usize;
                        mask_xor(&mut c, &self.face_masks[i]);
                    }
                    let w = Self::weight(&tables, &c);
                    if w != 0.0 {
                        for (a, g) in acc.iter_mut().zip(gammas) {
                            *a += if mask_parity(&c, g) { -w } else { w };
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; gammas.len()];
        for acc in per_block {
            for (o, a) in out.iter_mut().zip(acc) {
                *o += a;
            }
        }
        Ok(out)
    }

    fn even_sum(&self, vs: &[usize], gamma: &Mask) -> f64 {
        self.sums_with(vs, std::slice::from_ref(gamma), &self.x).map(|v| v[0]).unwrap_or(f64::NAN)
    }

    /// Unnormalized `Φ(V, γ) = Σ_{C ∈ E(G;V)} x(C) (−1)^{|C ∩ γ|}`.
    pub fn phi(&self, vs: &[usize], gamma: &[usize]) -> Result<f64> {
        Ok(self.sums_with(vs, &[mask_of(self.m, gamma.iter().copied())], &self.x)?[0])
    }

    /// `Φ(V, γ_k)` for several sign sets at once.
    pub fn phi_multi(&self, vs: &[usize], gammas: &[Vec<usize>]) -> Result<Vec<f64>> {
        let masks: Vec<Mask> = gammas.iter().map(|g| mask_of(self.m, g.iter().copied())).collect();
        self.sums_with(vs, &masks, &self.x)
    }

    fn spin_mask(&self, faces: &[usize]) -> Result<Vec<usize>> {
        let mut g = Vec::new();
        for &f in faces {
            g.extend(self.dual_root_path(f)?);
        }
        Ok(g)
    }

    /// `E°[σ_{u_1} ... σ_{u_n}]` with `σ_out = +1`; faces are G face ids.
    pub fn spin_correlator(&self, faces: &[usize]) -> Result<f64> {
        Ok(self.phi(&[], &self.spin_mask(faces)?)? / self.z)
    }

    /// `E°[μ_{v_1} ... μ_{v_m}] = Σ_{C ∈ E(G;V)} x(C) / Z`.
    pub fn disorder_correlator(&self, vertices: &[usize]) -> Result<f64> {
        Ok(self.phi(vertices, &[])? / self.z)
    }

    /// Disorder correlator through explicit disorder lines: `x(γ) Σ_C x^{[γ]}(C) / Z`
    /// where `x_e ↦ 1/x_e` on the lines. Lines are edge lists whose odd-degree
    /// set must be exactly the disorder set.
    pub fn disorder_correlator_lines(&self, vertices: &[usize], lines: &[Vec<usize>]) -> Result<f64> {
        let mut deg = vec![0u8; self.map.num_vertices()];
        let mut on_line = mask_new(self.m);
        for line in lines {
            for &e in line {
                if e >= self.m {
                    return Err(Error::Input(format!("line edge {e} does not exist")));
                }
                mask_flip(&mut on_line, e);
            }
        }
        let line_edges: Vec<usize> = (0..self.m).filter(|&e| on_line[e / 64] >> (e % 64) & 1 == 1).collect();
        for &e in &line_edges {
            let [a, b] = self.map.edge(e);
            deg[a] ^= 1;
            deg[b] ^= 1;
        }
        let want = Self::odd_set(vertices);
        let got: Vec<usize> = (0..deg.len()).filter(|&v| deg[v] == 1).collect();
        if got != want {
            return Err(Error::Input("disorder lines do not pair the disorder vertices".into()));
        }
        let mut x = self.x.clone();
        let mut prefactor = 1.0;
        for &e in &line_edges {
            if x[e] == 0.0 {
                return Err(Error::DegenerateLine(e));
            }
            prefactor *= x[e];
            x[e] = 1.0 / x[e];
        }
        let s = self.sums_with(&[], &[mask_new(self.m)], &x)?[0];
        Ok(prefactor * s / self.z)
    }

    /// `E°[μ_{v_1}...μ_{v_m} σ_{u_1}...σ_{u_n}] = Φ(V, ⊕ π(u)) / Z`.
    pub fn mixed_kc(&self, vertices: &[usize], faces: &[usize]) -> Result<f64> {
        Ok(self.phi(vertices, &self.spin_mask(faces)?)? / self.z)
    }

    /// G face id of a G° vertex; wired boundary duals map to the outer face.
    pub fn face_of_circ(&self, u: usize) -> Result<usize> {
        let d = self.need_dual()?;
        match d.circ.get(u) {
            Some(CircKind::Face(f)) => Ok(*f),
            Some(CircKind::Wired(_)) => Ok(self.map.outer_face()),
            None => Err(Error::Input(format!("G° vertex {u} does not exist"))),
        }
    }

    /// Edge set of `π(u)` for a G° vertex.
    pub fn circ_path(&self, u: usize) -> Result<Vec<usize>> {
        let f = self.face_of_circ(u)?;
        self.dual_root_path(f)
    }

    /// Fermionic correlator `⟨χ_{c_1} ... χ_{c_k} μ... σ...⟩` on the reference
    /// sheet. The Kadanoff–Ceva value is multiplied by a pairwise sign `τ` that
    /// makes it antisymmetric in the corners and Pfaffian-consistent.
    pub fn mixed_correlator(&self, req: &CorrelatorRequest) -> Result<CorrelatorValue> {
        let value = if req.corners.is_empty() {
            self.mixed_kc(&req.disorders, &req.spins)?
        } else {
            let d = self.need_dual()?;
            for (r, &c) in req.corners.iter().enumerate() {
                if c >= d.corners.len() {
                    return Err(Error::Input(format!("corner {c} does not exist")));
                }
                if req.corners[..r].contains(&c) {
                    return Err(Error::Input(format!("corner {c} inserted twice")));
                }
            }
            let mut vs = req.disorders.clone();
            let mut gamma = self.spin_mask(&req.spins)?;
            for &c in &req.corners {
                vs.push(d.corners[c].v);
                gamma.extend(self.circ_path(d.corners[c].u)?);
            }
            let kc = self.phi(&vs, &gamma)? / self.z;
            let mut sign = 1;
            for r in 0..req.corners.len() {
                for s in r + 1..req.corners.len() {
                    sign *= self.tau(req.corners[r], req.corners[s])?;
                }
            }
            kc * f64::from(sign)
        };
        Ok(CorrelatorValue { value, sheet: "reference".into(), z: self.z })
    }

    /// Two-point fermion `⟨χ_c χ_d O⟩`.
    pub fn fermion2(&self, c: usize, d: usize, disorders: &[usize], spins: &[usize]) -> Result<f64> {
        let req = CorrelatorRequest { disorders: disorders.to_vec(), spins: spins.to_vec(), corners: vec![c, d] };
        Ok(self.mixed_correlator(&req)?.value)
    }

    /// Exchange sign between two corners. Built from the winding of the
    /// polyline `v_c → u_c → (inner dual tree) → u_d → v_d` and from the
    /// crossing parity of any primal path `v_c → v_d` with the dual loop
    /// `tree(u_c, u_d) ⊕ π(u_c) ⊕ π(u_d)`.
    pub fn tau(&self, c: usize, d: usize) -> Result<i8> {
        let dual = self.need_dual()?;
        self.map.require_star_faces()?;
        let tree = InnerDualTree::new(self.map, dual);
        let (cc, dd) = (&dual.corners[c], &dual.corners[d]);
        let (pts, tree_edges) = tree.polyline(self.map, dual, c, d);
        let dirs: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).arg()).collect();
        let turning: f64 = dirs.windows(2).map(|w| geom::wrap(w[1] - w[0])).sum();
        let a_c = dual.corner_arg(self.map, c);
        let a_d = dual.corner_arg(self.map, d);
        let mm = (turning - (a_d - a_c - std::f64::consts::PI)) / geom::TAU;
        if (mm - mm.round()).abs() > 1e-6 {
            return Err(Error::Geometry("exchange winding is not an integer".into()));
        }
        let sg: i8 = if (mm.round() as i64).rem_euclid(2) == 0 { 1 } else { -1 };
        let mut loop_mask = mask_of(self.m, tree_edges);
        mask_xor(&mut loop_mask, &mask_of(self.m, self.circ_path(cc.u)?));
        mask_xor(&mut loop_mask, &mask_of(self.m, self.circ_path(dd.u)?));
        let mut p = mask_of(self.m, self.root_path(cc.v));
        mask_xor(&mut p, &mask_of(self.m, self.root_path(dd.v)));
        Ok(if mask_parity(&p, &loop_mask) { -sg } else { sg })
    }

    /// `⟨ε_z⟩ = E°[σ_{u0} σ_{u1}] − 2^{−1/2}` for the quad `z`.
    pub fn energy_density(&self, z: usize) -> Result<f64> {
        let d = self.need_dual()?;
        let q = d.quads.get(z).ok_or_else(|| Error::Input(format!("quad {z} does not exist")))?;
        let f0 = self.face_of_circ(q.u[0])?;
        let f1 = self.face_of_circ(q.u[1])?;
        Ok(self.spin_correlator(&[f0, f1])? - std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Same quantity through the disorder form `2^{−1/2} − E°[μ_{v0} μ_{v1}]`.
    pub fn energy_density_dual(&self, z: usize) -> Result<f64> {
        let d = self.need_dual()?;
        let q = d.quads.get(z).ok_or_else(|| Error::Input(format!("quad {z} does not exist")))?;
        Ok(std::f64::consts::FRAC_1_SQRT_2 - self.disorder_correlator(&q.v)?)
    }

    /// Real observable `X(c) = ⟨χ_c O⟩` imported to the reference sheet of
    /// Υ×_ϖ for `O = μ_{disorders} σ_{spins}`, one value per corner.
    pub fn corner_observable(&self, disorders: &[usize], spins: &[usize]) -> Result<CornerObservable> {
        let dual = self.need_dual()?;
        let map = self.map;
        let gamma_o = self.spin_mask(spins)?;
        let nc = dual.corners.len();
        // raw Kadanoff–Ceva values grouped by vertex
        let mut raw = vec![0.0; nc];
        for v in 0..map.num_vertices() {
            let cs = dual.corners_at_vertex(v);
            if cs.is_empty() {
                continue;
            }
            let mut vs = disorders.to_vec();
            vs.push(v);
            if Self::odd_set(&vs).len() % 2 == 1 {
                return Err(Error::Input("observable needs an odd number of disorders".into()));
            }
            let gammas: Vec<Vec<usize>> = cs
                .iter()
                .map(|&c| {
                    let mut g = gamma_o.clone();
                    g.extend(self.circ_path(dual.corners[c].u)?);
                    Ok(g)
                })
                .collect::<Result<_>>()?;
            let vals = self.phi_multi(&vs, &gammas)?;
            for (&c, val) in cs.iter().zip(vals) {
                raw[c] = val / self.z;
            }
        }
        let varpi = crate::planar_map::Varpi::new(
            Self::odd_set(disorders),
            spins.iter().filter_map(|&f| dual.circ_of_face.get(f).copied().flatten()).collect(),
        );
        let cover = crate::planar_map::DoubleCover::ups_times(dual, &varpi);
        // relative signs between raw values across each Υ-edge
        let vset = Self::odd_set(disorders);
        let gmask = mask_of(self.m, gamma_o.iter().copied());
        let rel: Vec<i8> = dual
            .ups_edges
            .iter()
            .enumerate()
            .map(|(k, e)| -> Result<i8> {
                let (a, b) = (&dual.corners[e.a], &dual.corners[e.b]);
                let t = if a.v == b.v {
                    // u changes around a fixed vertex
                    let mut l = mask_of(self.m, self.circ_path(a.u)?);
                    mask_xor(&mut l, &mask_of(self.m, self.circ_path(b.u)?));
                    if let crate::planar_map::CellKind::Quad(z) = e.cell {
                        mask_flip(&mut l, dual.quads[z].edge);
                    }
                    let mut vs = vset.clone();
                    vs.push(a.v);
                    let mut c0 = mask_new(self.m);
                    for v in Self::odd_set(&vs) {
                        mask_xor(&mut c0, &mask_of(self.m, self.root_path(v)));
                    }
                    if mask_parity(&c0, &l) { -1 } else { 1 }
                } else {
                    let edge = match e.cell {
                        crate::planar_map::CellKind::Quad(z) => dual.quads[z].edge,
                        crate::planar_map::CellKind::FreeTriangle(fe) => fe,
                        crate::planar_map::CellKind::WiredTriangle(_) => unreachable!("wired triangles keep v"),
                    };
                    let mut g = gmask.clone();
                    mask_xor(&mut g, &mask_of(self.m, self.circ_path(a.u)?));
                    if g[edge / 64] >> (edge % 64) & 1 == 1 { -1 } else { 1 }
                };
                Ok(t * cover.sign[k])
            })
            .collect::<Result<_>>()?;
        let g = crate::planar_map::gauge_from_edge_signs(dual, &rel)?;
        let values = raw.iter().zip(&g).map(|(r, s)| r * f64::from(*s)).collect();
        Ok(CornerObservable { values, cover, varpi })
    }

    /// Same as [`Oracle::phi`] in exact rational arithmetic.
    pub fn phi_exact(&self, x: &[BigRational], vs: &[usize], gamma: &[usize]) -> Result<BigRational> {
        if x.len() != self.m {
            return Err(Error::Input("one rational weight per edge is required".into()));
        }
        let mut x = x.to_vec();
        for (e, w) in x.iter_mut().enumerate() {
            if self.map.edge_kind(e) == EdgeKind::Free {
                *w = BigRational::one();
            }
        }
        let g = mask_of(self.m, gamma.iter().copied());
        let mut c = self.base_config(vs)?;
        let f = self.face_masks.len();
        let mut total = BigRational::zero();
        for s in 0u64..1 << f {
            if s > 0 {
                mask_xor(&mut c, &self.face_masks[s.trailing_zeros() as usize]);
            }
            let mut w = BigRational::one();
            for (e, xe) in x.iter().enumerate() {
                if c[e / 64] >> (e % 64) & 1 == 1 {
                    w *= xe;
                }
            }
            if mask_parity(&c, &g) {
                total -= w;
            } else {
                total += w;
            }
        }
        Ok(total)
    }

    /// Exact `Z(G)` for rational weights.
    pub fn partition_function_exact(&self, x: &[BigRational]) -> Result<BigRational> {
        self.phi_exact(x, &[], &[])
    }
}

fn bullet_count(map: &PlanarMap) -> usize {
    // components after keeping only free edges
    let n = map.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut count = n;
    for e in 0..map.num_edges() {
        if map.edge_kind(e) == EdgeKind::Free {
            let [a, b] = map.edge(e);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
    }
    count
}

/// Per-corner values of an enumerated observable on the reference sheet of Υ×_ϖ.
#[derive(Clone, Debug)]
pub struct CornerObservable {
    pub values: Vec<f64>,
    pub cover: crate::planar_map::DoubleCover,
    pub varpi: crate::planar_map::Varpi,
}

/// Breadth-first tree over inner faces (adjacent through interior edges);
/// wired boundary duals hang off it through their edge.
struct InnerDualTree {
    parent: Vec<Option<(usize, usize)>>,
}

impl InnerDualTree {
    fn new(map: &PlanarMap, dual: &DualPair) -> Self {
        let nf = map.num_faces();
        let mut parent = vec![None; nf];
        let mut seen = vec![false; nf];
        if let Some(root) = map.inner_faces().next() {
            seen[root] = true;
            let mut q = VecDeque::from([root]);
            while let Some(f) = q.pop_front() {
                let mut nb: Vec<(usize, usize)> = map
                    .face(f)
                    .iter()
                    .map(|&h| (map.face_of(map.twin(h)), map.edge_of(h)))
                    .filter(|&(g, _)| g != map.outer_face())
                    .collect();
                nb.sort();
                for (g, e) in nb {
                    if !seen[g] {
                        seen[g] = true;
                        parent[g] = Some((f, e));
                        q.push_back(g);
                    }
                }
            }
        }
        let _ = dual;
        InnerDualTree { parent }
    }

    fn to_root(&self, mut f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut fs = vec![f];
        let mut es = Vec::new();
        while let Some((g, e)) = self.parent[f] {
            fs.push(g);
            es.push(e);
            f = g;
        }
        (fs, es)
    }

    /// Inner face carrying a G° vertex, and the extra edge for wired duals.
    fn anchor(map: &PlanarMap, dual: &DualPair, u: usize) -> (usize, Option<usize>) {
        match dual.circ[u] {
            CircKind::Face(f) => (f, None),
            CircKind::Wired(e) => {
                let [h, t] = map.edge_half_edges(e);
                let f = if map.face_of(h) == map.outer_face() { map.face_of(t) } else { map.face_of(h) };
                (f, Some(e))
            }
        }
    }

    /// Polyline points and crossed edges for the exchange of corners `c`, `d`.
    fn polyline(&self, map: &PlanarMap, dual: &DualPair, c: usize, d: usize) -> (Vec<geom::C64>, Vec<usize>) {
        let (uc, ud) = (dual.corners[c].u, dual.corners[d].u);
        if uc == ud {
            let pts = vec![map.pos(dual.corners[c].v), dual.circ_pos[uc], map.pos(dual.corners[d].v)];
            return (pts, Vec::new());
        }
        let (fc, ec) = Self::anchor(map, dual, uc);
        let (fd, ed) = Self::anchor(map, dual, ud);
        let (mut fa, mut ea) = self.to_root(fc);
        let (mut fb, mut eb) = self.to_root(fd);
        while fa.len() > 1 && fb.len() > 1 && fa[fa.len() - 2] == fb[fb.len() - 2] {
            fa.pop();
            fb.pop();
            ea.pop();
            eb.pop();
        }
        let mut faces = fa;
        faces.extend(fb.into_iter().rev().skip(1));
        let mut edges = ea;
        edges.extend(eb.into_iter().rev());
        // consecutive face points are joined through the midpoint of the
        // shared edge so that the polyline crosses exactly that edge
        let mid = |e: usize| {
            let [a, b] = map.edge(e);
            0.5 * (map.pos(a) + map.pos(b))
        };
        let mut pts = vec![map.pos(dual.corners[c].v)];
        if let Some(e) = ec {
            pts.push(dual.circ_pos[uc]);
            pts.push(mid(e));
        }
        for (k, &f) in faces.iter().enumerate() {
            if k > 0 {
                pts.push(mid(edges[k - 1]));
            }
            pts.push(dual.circ_pos[dual.circ_of_face[f].unwrap()]);
        }
        if let Some(e) = ed {
            pts.push(mid(e));
            pts.push(dual.circ_pos[ud]);
        }
        pts.push(map.pos(dual.corners[d].v));
        edges.extend(ec);
        edges.extend(ed);
        (pts, edges)
    }
}

/// True when the dual face id is an actual face of Υ (not the outer one).
pub fn is_bounded_ups_face(f: UFace) -> bool {
    !matches!(f, UFace::Outer)
}

/// Rational weights helper: `p/q` per edge.
pub fn rational(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Direct sum over spin configurations on inner faces (`σ_out = +1`):
/// `Z°(G) = Σ_σ Π_e x_e^{−σ_{u−}σ_{u+}/2}`; free edges do not interact.
pub fn spin_sum_faces(map: &PlanarMap, w: &IsingWeights) -> Result<f64> {
    let inner: Vec<usize> = map.inner_faces().collect();
    if inner.len() > FACE_BUDGET {
        return Err(Error::Size { what: "inner faces".into(), needed: inner.len(), budget: FACE_BUDGET });
    }
    let mut slot = vec![usize::MAX; map.num_faces()];
    for (k, &f) in inner.iter().enumerate() {
        slot[f] = k;
    }
    let pairs: Vec<(usize, usize, f64)> = (0..map.num_edges())
        .filter(|&e| map.edge_kind(e) != EdgeKind::Free)
        .map(|e| {
            let [h, t] = map.edge_half_edges(e);
            (slot[map.face_of(h)], slot[map.face_of(t)], w.x(e).sqrt())
        })
        .collect();
    let spin = |s: u64, k: usize| if k == usize::MAX || s >> k & 1 == 0 { 1.0 } else { -1.0 };
    let total = (0u64..1 << inner.len())
        .into_par_iter()
        .map(|s| {
            pairs.iter().map(|&(a, b, r)| if spin(s, a) * spin(s, b) > 0.0 { 1.0 / r } else { r }).product::<f64>()
        })
        .sum();
    Ok(total)
}

/// Direct sum over spin configurations on G• vertices with `tanh(K_e) = x_e`.
pub fn spin_sum_vertices(map: &PlanarMap, w: &IsingWeights) -> Result<f64> {
    let n = map.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in 0..map.num_edges() {
        if map.edge_kind(e) == EdgeKind::Free {
            let [a, b] = map.edge(e);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut nb = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if id[r] == usize::MAX {
            id[r] = nb;
            nb += 1;
        }
    }
    if nb > 26 {
        return Err(Error::Size { what: "G• vertices".into(), needed: nb, budget: 26 });
    }
    let pairs: Vec<(usize, usize, f64)> = (0..map.num_edges())
        .filter(|&e| map.edge_kind(e) != EdgeKind::Free)
        .map(|e| {
            let [a, b] = map.edge(e);
            (id[find(&mut parent, a)], id[find(&mut parent, b)], w.x(e).atanh())
        })
        .collect();
    let total = (0u64..1 << nb)
        .into_par_iter()
        .map(|s| {
            let e: f64 = pairs
                .iter()
                .map(|&(a, b, k)| if (s >> a & 1) == (s >> b & 1) { k } else { -k })
                .sum();
            e.exp()
        })
        .sum();
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_map, square_grid, GridBoundary, RandomMapOptions};
    use crate::geom::C64;
    use crate::planar_map::build_map;
    use crate::weights::X_CRIT_SQUARE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ngon(n: usize) -> PlanarMap {
        let pos: Vec<C64> = (0..n).map(|k| C64::from_polar(1.0, geom::TAU * k as f64 / n as f64)).collect();
        let edges: Vec<[usize; 2]> = (0..n).map(|k| [k, (k + 1) % n]).collect();
        build_map(&pos, &edges, &[]).unwrap()
    }

    #[test]
    fn edgeless_graph() {
        let m = build_map(&[C64::new(0.0, 0.0)], &[], &[]).unwrap();
        let w = IsingWeights::new(&m, vec![]).unwrap();
        assert_eq!(Oracle::new(&m, &w).unwrap().z(), 1.0);
    }

    #[test]
    fn n_cycle() {
        for n in 3..7 {
            let m = ngon(n);
            let x = 0.37;
            let w = IsingWeights::uniform(&m, x).unwrap();
            let o = Oracle::new(&m, &w).unwrap();
            assert!((o.z() - (1.0 + x.powi(n as i32))).abs() < 1e-14);
            let f = m.inner_faces().next().unwrap();
            let want = (1.0 - x.powi(n as i32)) / (1.0 + x.powi(n as i32));
            assert!((o.spin_correlator(&[f]).unwrap() - want).abs() < 1e-14);
            assert!((o.spin_correlator(&[f, f]).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_boundary() {
        let m = square_grid(3, 3, 1.0, GridBoundary::Wired).unwrap();
        let w = IsingWeights::uniform(&m, 0.0).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        for f in m.inner_faces() {
            assert_eq!(o.spin_correlator(&[f]).unwrap(), 1.0);
        }
    }

    #[test]
    fn exact_four_cycle() {
        let m = ngon(4);
        let w = IsingWeights::uniform(&m, 0.5).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        let z = o.partition_function_exact(&vec![rational(1, 2); 4]).unwrap();
        assert_eq!(z, rational(17, 16));
    }

    #[test]
    fn dual_spin_sums_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = random_map(&mut rng, RandomMapOptions { vertices: 7, max_edges: 12, bridgeless: false, mixed_boundary: 0.5 })
                .unwrap();
            let x: Vec<f64> = (0..m.num_edges()).map(|_| rng.random_range(0.05..0.95)).collect();
            let w = IsingWeights::new(&m, x).unwrap();
            let o = Oracle::new(&m, &w).unwrap();
            let pf = o.partition_function();
            let zc = spin_sum_faces(&m, &w).unwrap();
            let zb = spin_sum_vertices(&m, &w).unwrap();
            assert!((zc / pf.z_circ.unwrap() - 1.0).abs() < 1e-10);
            assert!((zb / pf.z_bullet.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn disorder_lines_are_path_independent() {
        let m = square_grid(3, 3, 1.0, GridBoundary::Wired).unwrap();
        let w = IsingWeights::uniform(&m, 0.3).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        let e = |a: usize, b: usize| m.edges().iter().position(|&[p, q]| (p == a && q == b) || (p == b && q == a)).unwrap();
        let direct = o.disorder_correlator(&[0, 4]).unwrap();
        let l1 = o.disorder_correlator_lines(&[0, 4], &[vec![e(0, 1), e(1, 4)]]).unwrap();
        let l2 = o.disorder_correlator_lines(&[0, 4], &[vec![e(0, 3), e(3, 4)]]).unwrap();
        assert!((l1 - direct).abs() < 1e-12 && (l2 - direct).abs() < 1e-12);
        assert!(o.disorder_correlator_lines(&[0, 4], &[vec![e(0, 1)]]).is_err());
        assert_eq!(o.disorder_correlator(&[]).unwrap(), 1.0);
    }

    #[test]
    fn energy_density_two_forms() {
        let m = square_grid(4, 4, 1.0, GridBoundary::Wired).unwrap();
        let w = IsingWeights::uniform(&m, X_CRIT_SQUARE).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        let d = o.dual().unwrap();
        for z in 0..d.quads.len() {
            let a = o.energy_density(z).unwrap();
            let b = o.energy_density_dual(z).unwrap();
            assert!((a - b).abs() < 1e-12, "quad {z}: {a} vs {b}");
        }
    }

    #[test]
    fn fermions_anticommute() {
        let m = square_grid(3, 3, 1.0, GridBoundary::Wired).unwrap();
        let w = IsingWeights::uniform(&m, 0.4).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        let nc = o.dual().unwrap().corners.len();
        for c in 0..nc {
            for d in 0..nc {
                if c == d {
                    continue;
                }
                let a = o.fermion2(c, d, &[], &[]).unwrap();
                let b = o.fermion2(d, c, &[], &[]).unwrap();
                let dd = o.dual().unwrap();
                assert!((a + b).abs() < 1e-12, "c={c} d={d} v=({},{}) u=({},{}) {a} {b}", dd.corners[c].v, dd.corners[d].v, dd.corners[c].u, dd.corners[d].u);
            }
        }
        let req = CorrelatorRequest { corners: vec![0, 0], ..Default::default() };
        assert!(o.mixed_correlator(&req).is_err());
    }

    #[test]
    fn corner_observable_propagates_across_quads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut quads = 0;
        for trial in 0..6 {
            let m = match trial {
                0 => square_grid(4, 4, 1.0, GridBoundary::Wired).unwrap(),
                1 => square_grid(4, 4, 1.0, GridBoundary::crossing()).unwrap(),
                _ => {
                    let opt = RandomMapOptions { vertices: 8, max_edges: 15, bridgeless: true, mixed_boundary: 0.6 };
                    random_map(&mut rng, opt).unwrap()
                }
            };
            let x = (0..m.num_edges()).map(|_| rng.random_range(0.1..0.9)).collect();
            let w = IsingWeights::new(&m, x).unwrap();
            let o = Oracle::new(&m, &w).unwrap();
            let d = o.dual().unwrap();
            let inner: Vec<usize> = m.inner_faces().collect();
            let dis = [rng.random_range(0..m.num_vertices())];
            let obs = o.corner_observable(&dis, &[inner[0], inner[inner.len() - 1]]).unwrap();
            for z in 0..d.quads.len() {
                let (s, c) = (2.0 * w.x(d.quads[z].edge).atan()).sin_cos();
                let l = obs.cover.lift_quad(d, z, &obs.values);
                // loop values continued periodically with a sign flip per turn
                let at = |k: i32| if k.div_euclid(4) % 2 == 0 { 1.0 } else { -1.0 } * l[k.rem_euclid(4) as usize];
                for k in 0..4 {
                    // even steps of the loop move the vertex, odd steps the face
                    let (same_v, other) = if k % 2 == 0 { (at(k - 1), at(k + 1)) } else { (at(k + 1), at(k - 1)) };
                    assert!((at(k) - c * same_v - s * other).abs() < 1e-9, "trial {trial} quad {z}");
                }
                quads += 1;
            }
        }
        assert!(quads > 60, "{quads}");
    }

    #[test]
    fn non_star_faces_reject_exchange_signs() {
        // a U-shaped face: no interior point sees all of it
        let pos = [(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (2.0, 3.0), (2.0, 1.0), (1.0, 1.0), (1.0, 3.0), (0.0, 3.0)];
        let pos: Vec<C64> = pos.iter().map(|&(x, y)| C64::new(x, y)).collect();
        let edges: Vec<[usize; 2]> = (0..8).map(|k| [k, (k + 1) % 8]).collect();
        let m = build_map(&pos, &edges, &[]).unwrap();
        let w = IsingWeights::uniform(&m, 0.5).unwrap();
        let o = Oracle::new(&m, &w).unwrap();
        assert!(matches!(o.tau(0, 5), Err(Error::Geometry(_))));
        assert!(o.z() > 1.0);
    }
}

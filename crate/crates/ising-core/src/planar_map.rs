//! Embedded planar maps with straight edges, their bipartite dual pair
//! (G•, G°), quads, corners, the corner graph Υ(G) and double covers of it.
//!
//! Half-edges are numbered in lexicographic order of (tail vertex, direction
//! angle), so that every matrix indexed by oriented edges has a reproducible
//! layout.

use crate::error::{Error, Result};
use crate::geom::{self, C64};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Wired,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArc {
    #[serde(rename = "type")]
    pub kind: ArcKind,
    pub edges: Vec<usize>,
}

impl BoundaryArc {
    pub fn wired(edges: Vec<usize>) -> Self {
        BoundaryArc { kind: ArcKind::Wired, edges }
    }
    pub fn free(edges: Vec<usize>) -> Self {
        BoundaryArc { kind: ArcKind::Free, edges }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Interior,
    Wired,
    Free,
}

/// Combinatorial map of a connected straight-line plane graph.
#[derive(Clone, Debug)]
pub struct PlanarMap {
    pos: Vec<C64>,
    edges: Vec<[usize; 2]>,
    tail: Vec<usize>,
    head: Vec<usize>,
    edge_of: Vec<usize>,
    twin: Vec<usize>,
    next: Vec<usize>,
    face_of: Vec<usize>,
    out: Vec<Vec<usize>>,
    faces: Vec<Vec<usize>>,
    outer: usize,
    edge_he: Vec<[usize; 2]>,
    kind: Vec<EdgeKind>,
    arcs: Vec<BoundaryArc>,
}

const EPS: f64 = 1e-12;

/// Build a map from positions, an edge list and a boundary-arc specification.
/// An empty arc list means "the whole outer boundary is one wired arc".
pub fn build_map(positions: &[C64], edge_list: &[[usize; 2]], arcs: &[BoundaryArc]) -> Result<PlanarMap> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::Embedding("no vertices".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (k, &[a, b]) in edge_list.iter().enumerate() {
        if a >= n || b >= n {
            return Err(Error::Embedding(format!("edge {k} references a missing vertex")));
        }
        if a == b {
            return Err(Error::Embedding(format!("edge {k} is a loop")));
        }
        if (positions[a] - positions[b]).norm() < EPS {
            return Err(Error::Geometry(format!("edge {k} has zero length")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::Embedding(format!("edge {k} is a multiple edge")));
        }
    }
    check_crossings(positions, edge_list)?;

    let m = edge_list.len();
    // half-edge candidates (tail, head, edge, angle), then sort
    let mut cand: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(2 * m);
    for (k, &[a, b]) in edge_list.iter().enumerate() {
        cand.push((a, b, k, (positions[b] - positions[a]).arg()));
        cand.push((b, a, k, (positions[a] - positions[b]).arg()));
    }
    cand.sort_by(|x, y| x.0.cmp(&y.0).then(x.3.partial_cmp(&y.3).unwrap()));
    let tail: Vec<usize> = cand.iter().map(|c| c.0).collect();
    let head: Vec<usize> = cand.iter().map(|c| c.1).collect();
    let edge_of: Vec<usize> = cand.iter().map(|c| c.2).collect();
    let mut edge_he = vec![[usize::MAX; 2]; m];
    for (h, c) in cand.iter().enumerate() {
        let side = usize::from(c.0 != edge_list[c.2][0]);
        edge_he[c.2][side] = h;
    }
    let twin: Vec<usize> = (0..2 * m)
        .map(|h| {
            let e = edge_of[h];
            if edge_he[e][0] == h { edge_he[e][1] } else { edge_he[e][0] }
        })
        .collect();
    let mut out = vec![Vec::new(); n];
    for h in 0..2 * m {
        out[tail[h]].push(h);
    }
    for (v, list) in out.iter().enumerate() {
        for w in list.windows(2) {
            if (cand[w[1]].3 - cand[w[0]].3).abs() < 1e-12 {
                return Err(Error::Embedding(format!("overlapping edges at vertex {v}")));
            }
        }
    }
    let mut rot = vec![0usize; 2 * m];
    for list in &out {
        for (k, &h) in list.iter().enumerate() {
            rot[h] = k;
        }
    }
    // face successor: the out-edge at the head that comes clockwise after the twin
    let next: Vec<usize> = (0..2 * m)
        .map(|h| {
            let t = twin[h];
            let list = &out[head[h]];
            list[(rot[t] + list.len() - 1) % list.len()]
        })
        .collect();

    // connectivity
    let mut comp = vec![false; n];
    comp[0] = true;
    let mut q = VecDeque::from([0usize]);
    while let Some(v) = q.pop_front() {
        for &h in &out[v] {
            if !comp[head[h]] {
                comp[head[h]] = true;
                q.push_back(head[h]);
            }
        }
    }
    if comp.iter().any(|c| !c) {
        return Err(Error::Embedding("graph is not connected".into()));
    }

    let mut face_of = vec![usize::MAX; 2 * m];
    let mut faces: Vec<Vec<usize>> = Vec::new();
    for h0 in 0..2 * m {
        if face_of[h0] != usize::MAX {
            continue;
        }
        let id = faces.len();
        let mut cyc = Vec::new();
        let mut h = h0;
        while face_of[h] == usize::MAX {
            face_of[h] = id;
            cyc.push(h);
            h = next[h];
        }
        faces.push(cyc);
    }
    if faces.is_empty() {
        faces.push(Vec::new());
    }
    let area = |f: &Vec<usize>| -> f64 {
        f.iter().map(|&h| geom::cross(positions[tail[h]], positions[head[h]])).sum::<f64>() / 2.0
    };
    let outer = (0..faces.len())
        .min_by(|&a, &b| area(&faces[a]).partial_cmp(&area(&faces[b])).unwrap())
        .unwrap();
    if n as i64 - m as i64 + faces.len() as i64 != 2 {
        return Err(Error::Embedding(format!(
            "Euler characteristic {} != 2",
            n as i64 - m as i64 + faces.len() as i64
        )));
    }

    let mut map = PlanarMap {
        pos: positions.to_vec(),
        edges: edge_list.to_vec(),
        tail,
        head,
        edge_of,
        twin,
        next,
        face_of,
        out,
        faces,
        outer,
        edge_he,
        kind: vec![EdgeKind::Interior; m],
        arcs: Vec::new(),
    };
    map.set_arcs(arcs)?;
    Ok(map)
}

fn check_crossings(pos: &[C64], edges: &[[usize; 2]]) -> Result<()> {
    let scale = pos.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    for (i, &[a, b]) in edges.iter().enumerate() {
        for (v, &p) in pos.iter().enumerate() {
            if v != a && v != b && geom::point_on_open_segment(p, pos[a], pos[b], eps) {
                return Err(Error::Embedding(format!("vertex {v} lies on edge {i}")));
            }
        }
        for (j, &[c, d]) in edges.iter().enumerate().skip(i + 1) {
            if a == c || a == d || b == c || b == d {
                continue;
            }
            if geom::segments_meet(pos[a], pos[b], pos[c], pos[d], eps) {
                return Err(Error::Embedding(format!("edges {i} and {j} cross")));
            }
        }
    }
    Ok(())
}

impl PlanarMap {
    fn set_arcs(&mut self, arcs: &[BoundaryArc]) -> Result<()> {
        let walk: Vec<usize> = self.faces[self.outer].iter().map(|&h| self.edge_of[h]).collect();
        let mut on_boundary = vec![false; self.edges.len()];
        for &e in &walk {
            on_boundary[e] = true;
        }
        let mut order: Vec<usize> = Vec::new();
        for &e in &walk {
            if !order.contains(&e) {
                order.push(e);
            }
        }
        let arcs: Vec<BoundaryArc> = if arcs.is_empty() {
            if order.is_empty() { Vec::new() } else { vec![BoundaryArc::wired(order.clone())] }
        } else {
            arcs.to_vec()
        };
        let mut owner = vec![usize::MAX; self.edges.len()];
        for (k, arc) in arcs.iter().enumerate() {
            if arc.edges.is_empty() {
                return Err(Error::Boundary(format!("arc {k} is empty")));
            }
            for &e in &arc.edges {
                if e >= self.edges.len() || !on_boundary[e] {
                    return Err(Error::Boundary(format!("edge {e} of arc {k} is not a boundary edge")));
                }
                if owner[e] != usize::MAX {
                    return Err(Error::Boundary(format!("edge {e} belongs to two arcs")));
                }
                owner[e] = k;
            }
        }
        if let Some(e) = order.iter().find(|&&e| owner[e] == usize::MAX) {
            return Err(Error::Boundary(format!("boundary edge {e} is not covered by any arc")));
        }
        // contiguity along the outer walk
        if arcs.len() > 1 {
            for k in 0..arcs.len() {
                let runs = (0..walk.len())
                    .filter(|&i| owner[walk[i]] == k && owner[walk[(i + walk.len() - 1) % walk.len()]] != k)
                    .count();
                if runs != 1 {
                    return Err(Error::Boundary(format!("arc {k} is not contiguous along the boundary")));
                }
            }
        }
        if !order.is_empty() && !arcs.iter().any(|a| a.kind == ArcKind::Wired) {
            return Err(Error::Boundary("at least one wired arc is required".into()));
        }
        for e in 0..self.edges.len() {
            self.kind[e] = if !on_boundary[e] {
                EdgeKind::Interior
            } else if arcs[owner[e]].kind == ArcKind::Wired {
                EdgeKind::Wired
            } else {
                EdgeKind::Free
            };
        }
        self.arcs = arcs;
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.pos.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_half_edges(&self) -> usize {
        self.tail.len()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn positions(&self) -> &[C64] {
        &self.pos
    }
    pub fn pos(&self, v: usize) -> C64 {
        self.pos[v]
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }
    pub fn tail(&self, h: usize) -> usize {
        self.tail[h]
    }
    pub fn head(&self, h: usize) -> usize {
        self.head[h]
    }
    pub fn edge_of(&self, h: usize) -> usize {
        self.edge_of[h]
    }
    pub fn twin(&self, h: usize) -> usize {
        self.twin[h]
    }
    /// Successor of `h` along the face to its left.
    pub fn next(&self, h: usize) -> usize {
        self.next[h]
    }
    pub fn face_of(&self, h: usize) -> usize {
        self.face_of[h]
    }
    /// Outgoing half-edges of `v` in counterclockwise order.
    pub fn out(&self, v: usize) -> &[usize] {
        &self.out[v]
    }
    pub fn face(&self, f: usize) -> &[usize] {
        &self.faces[f]
    }
    pub fn outer_face(&self) -> usize {
        self.outer
    }
    pub fn inner_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(move |&f| f != self.outer)
    }
    /// Half-edges of edge `e`: `[a→b, b→a]` for `e = (a, b)`.
    pub fn edge_half_edges(&self, e: usize) -> [usize; 2] {
        self.edge_he[e]
    }
    pub fn edge_kind(&self, e: usize) -> EdgeKind {
        self.kind[e]
    }
    pub fn arcs(&self) -> &[BoundaryArc] {
        &self.arcs
    }
    pub fn direction(&self, h: usize) -> C64 {
        self.pos[self.head[h]] - self.pos[self.tail[h]]
    }
    pub fn arg(&self, h: usize) -> f64 {
        self.direction(h).arg()
    }
    pub fn degree(&self, v: usize) -> usize {
        self.out[v].len()
    }
    pub fn face_vertices(&self, f: usize) -> Vec<usize> {
        self.faces[f].iter().map(|&h| self.tail[h]).collect()
    }
    pub fn face_area(&self, f: usize) -> f64 {
        geom::signed_area(&self.face_vertices(f).iter().map(|&v| self.pos[v]).collect::<Vec<_>>())
    }
    /// Edges on the outer face in walk order (a bridge appears twice).
    pub fn outer_walk(&self) -> Vec<usize> {
        self.faces[self.outer].iter().map(|&h| self.edge_of[h]).collect()
    }
    pub fn is_free_vertex(&self, v: usize) -> bool {
        self.out[v].iter().any(|&h| self.kind[self.edge_of[h]] == EdgeKind::Free)
    }
    pub fn euler_characteristic(&self) -> i64 {
        self.pos.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
    /// A bounded face position: the circumcenter when the face is cyclic,
    /// else the vertex average, provided the point sees every vertex of the
    /// face. Otherwise the centroid of the face kernel.
    pub fn face_point(&self, f: usize) -> C64 {
        let pts: Vec<C64> = self.face_vertices(f).iter().map(|&v| self.pos[v]).collect();
        let mean = pts.iter().sum::<C64>() / pts.len() as f64;
        let visible = |p: C64| geom::strictly_in_kernel(&pts, p, 1e-9);
        if pts.len() >= 3 {
            if let Some(c) = geom::circumcenter(pts[0], pts[1], pts[2]) {
                let r = (pts[0] - c).norm();
                if pts.iter().all(|p| ((p - c).norm() - r).abs() < 1e-9 * r.max(1.0)) && visible(c) {
                    return c;
                }
            }
        }
        if visible(mean) {
            return mean;
        }
        let ker = geom::polygon_kernel(&pts);
        if !ker.is_empty() {
            let c = geom::polygon_centroid(&ker);
            if visible(c) {
                return c;
            }
        }
        mean
    }

    /// Fails unless every bounded face is star-shaped around its face point.
    pub fn require_star_faces(&self) -> Result<()> {
        match self.inner_faces().find(|&f| !self.is_star_face(f)) {
            Some(f) => Err(Error::Geometry(format!("face {f} is not star-shaped; corner spinors are ambiguous"))),
            None => Ok(()),
        }
    }

    /// Whether the face point sees every vertex of the bounded face `f`.
    pub fn is_star_face(&self, f: usize) -> bool {
        let pts: Vec<C64> = self.face_vertices(f).iter().map(|&v| self.pos[v]).collect();
        geom::strictly_in_kernel(&pts, self.face_point(f), 1e-9)
    }

}

// ---------------------------------------------------------------------------
// bipartite dual pair, quads, corners, Υ(G)

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircKind {
    /// an inner face of G
    Face(usize),
    /// the extra dual vertex attached to a wired boundary edge
    Wired(usize),
}

/// Quad `(v•0, v°0, v•1, v°1)`, listed counterclockwise.
#[derive(Clone, Debug)]
pub struct Quad {
    pub edge: usize,
    /// endpoints of the edge as G vertices
    pub v: [usize; 2],
    /// the same endpoints as G• vertices (free arcs collapsed)
    pub vb: [usize; 2],
    /// G° vertices, `u[0]` right of `v0→v1`, `u[1]` left of it
    pub u: [usize; 2],
    /// corners `c[p][q] = (v_p, u_q)`
    pub c: [[usize; 2]; 2],
    /// Υ-edges along the loop c00 → c10 → c11 → c01 → c00
    pub sides: [usize; 4],
}

impl Quad {
    /// Corners along the quad loop.
    pub fn loop_corners(&self) -> [usize; 4] {
        [self.c[0][0], self.c[1][0], self.c[1][1], self.c[0][1]]
    }
}

#[derive(Clone, Debug)]
pub struct Corner {
    pub v: usize,
    pub u: usize,
    /// outgoing half-edge at `v` that opens the angle, for inner-face corners
    pub he: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Quad(usize),
    FreeTriangle(usize),
    WiredTriangle(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UFace {
    Quad(usize),
    Vertex(usize),
    Circ(usize),
    Outer,
}

/// An edge of the corner graph, oriented `a → b`.
#[derive(Clone, Debug)]
pub struct UpsEdge {
    pub a: usize,
    pub b: usize,
    pub cell: CellKind,
    pub faces: [usize; 2],
    /// rotation of the direction `v(c) − u(c)` when moving from `a` to `b`
    pub rot: f64,
}

#[derive(Clone, Debug)]
pub struct DualPair {
    pub n_bullet: usize,
    pub bullet_of: Vec<usize>,
    pub circ: Vec<CircKind>,
    pub circ_pos: Vec<C64>,
    pub circ_of_face: Vec<Option<usize>>,
    pub circ_of_wired_edge: Vec<Option<usize>>,
    pub quads: Vec<Quad>,
    pub quad_of_edge: Vec<Option<usize>>,
    pub corners: Vec<Corner>,
    pub corner_of_he: Vec<Option<usize>>,
    pub ups_edges: Vec<UpsEdge>,
    pub ups_faces: Vec<UFace>,
    /// free boundary edges (one triangle each)
    pub free_triangles: Vec<usize>,
    /// boundary vertices carrying a wired triangle
    pub wired_triangles: Vec<usize>,
}

impl DualPair {
    pub fn num_circ(&self) -> usize {
        self.circ.len()
    }
    pub fn outer_face_id(&self) -> usize {
        self.ups_faces.len() - 1
    }
    pub fn corner_pos(&self, map: &PlanarMap, c: usize) -> (C64, C64) {
        (map.pos(self.corners[c].v), self.circ_pos[self.corners[c].u])
    }
    /// principal `arg(v(c) − u(c))`
    pub fn corner_arg(&self, map: &PlanarMap, c: usize) -> f64 {
        let (v, u) = self.corner_pos(map, c);
        (v - u).arg()
    }
    pub fn is_wired_circ(&self, u: usize) -> bool {
        matches!(self.circ[u], CircKind::Wired(_))
    }
    /// Corners incident to a G vertex (in no particular order).
    pub fn corners_at_vertex(&self, v: usize) -> Vec<usize> {
        (0..self.corners.len()).filter(|&c| self.corners[c].v == v).collect()
    }
    pub fn corners_at_circ(&self, u: usize) -> Vec<usize> {
        (0..self.corners.len()).filter(|&c| self.corners[c].u == u).collect()
    }
    /// Quads containing a given corner.
    pub fn quads_at_corner(&self, c: usize) -> Vec<usize> {
        (0..self.quads.len())
            .filter(|&z| self.quads[z].loop_corners().contains(&c))
            .collect()
    }
}

/// Union-find over free edges.
fn bullet_classes(map: &PlanarMap) -> (usize, Vec<usize>) {
    let n = map.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for e in 0..map.num_edges() {
        if map.edge_kind(e) == EdgeKind::Free {
            let [a, b] = map.edge(e);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut out = vec![0; n];
    let mut count = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if id[r] == usize::MAX {
            id[r] = count;
            count += 1;
        }
        out[v] = id[r];
    }
    (count, out)
}

pub fn dual_pair(map: &PlanarMap) -> Result<DualPair> {
    let m = map.num_edges();
    for e in 0..m {
        let [h, t] = map.edge_half_edges(e);
        if map.face_of(h) == map.face_of(t) {
            return Err(Error::Boundary(format!("edge {e} is a bridge; bridges carry no quad")));
        }
    }
    let (n_bullet, bullet_of) = bullet_classes(map);
    let mut circ = Vec::new();
    let mut circ_pos = Vec::new();
    let mut circ_of_face = vec![None; map.num_faces()];
    for f in map.inner_faces() {
        circ_of_face[f] = Some(circ.len());
        circ.push(CircKind::Face(f));
        circ_pos.push(map.face_point(f));
    }
    let mut circ_of_wired_edge = vec![None; m];
    for e in 0..m {
        if map.edge_kind(e) == EdgeKind::Wired {
            let [h, t] = map.edge_half_edges(e);
            let inner = if map.face_of(h) == map.outer_face() { map.face_of(t) } else { map.face_of(h) };
            let [a, b] = map.edge(e);
            let u = circ_pos[circ_of_face[inner].unwrap()];
            circ_of_wired_edge[e] = Some(circ.len());
            circ.push(CircKind::Wired(e));
            circ_pos.push(map.pos(a) + map.pos(b) - u);
        }
    }

    // corners
    let mut corners = Vec::new();
    let mut corner_of_he = vec![None; map.num_half_edges()];
    for h in 0..map.num_half_edges() {
        let f = map.face_of(h);
        if f != map.outer_face() {
            corner_of_he[h] = Some(corners.len());
            corners.push(Corner { v: map.tail(h), u: circ_of_face[f].unwrap(), he: Some(h) });
        }
    }
    let mut wired_corner = vec![[usize::MAX; 2]; m];
    for e in 0..m {
        if let Some(u) = circ_of_wired_edge[e] {
            let [a, b] = map.edge(e);
            wired_corner[e] = [corners.len(), corners.len() + 1];
            corners.push(Corner { v: a, u, he: None });
            corners.push(Corner { v: b, u, he: None });
        }
    }

    // faces of Υ: quads, vertices with own face, inner G° vertices, outer
    let mut quad_of_edge = vec![None; m];
    let mut nq = 0;
    for e in 0..m {
        if map.edge_kind(e) != EdgeKind::Free {
            quad_of_edge[e] = Some(nq);
            nq += 1;
        }
    }
    let mut ups_faces: Vec<UFace> = (0..nq).map(UFace::Quad).collect();
    let mut vface = vec![usize::MAX; map.num_vertices()];
    for v in 0..map.num_vertices() {
        if !map.is_free_vertex(v) {
            vface[v] = ups_faces.len();
            ups_faces.push(UFace::Vertex(v));
        }
    }
    let mut cface = vec![usize::MAX; circ.len()];
    for (u, k) in circ.iter().enumerate() {
        if let CircKind::Face(_) = k {
            cface[u] = ups_faces.len();
            ups_faces.push(UFace::Circ(u));
        }
    }
    let outer_id = ups_faces.len();
    ups_faces.push(UFace::Outer);
    let vf = |v: usize| if vface[v] == usize::MAX { outer_id } else { vface[v] };
    let cf = |u: usize| if cface[u] == usize::MAX { outer_id } else { cface[u] };

    let mut quads = Vec::with_capacity(nq);
    let mut ups_edges = Vec::new();
    for e in 0..m {
        let Some(z) = quad_of_edge[e] else { continue };
        let [h, t] = map.edge_half_edges(e);
        let [a, b] = map.edge(e);
        let outer = map.outer_face();
        let side = |hh: usize, end_tail: usize, end_head: usize| -> (usize, usize, usize) {
            // (u, corner at tail of hh, corner at head of hh) on the face left of hh
            let f = map.face_of(hh);
            if f == outer {
                let u = circ_of_wired_edge[e].unwrap();
                let wc = wired_corner[e];
                let pick = |v: usize| if map.edge(e)[0] == v { wc[0] } else { wc[1] };
                (u, pick(end_tail), pick(end_head))
            } else {
                (
                    circ_of_face[f].unwrap(),
                    corner_of_he[hh].unwrap(),
                    corner_of_he[map.next(hh)].unwrap(),
                )
            }
        };
        let (u1, c01, c11) = side(h, a, b);
        let (u0, c10, c00) = side(t, b, a);
        let base = ups_edges.len();
        let pts = [map.pos(a), circ_pos[u0], map.pos(b), circ_pos[u1]];
        let interior = |k: usize| geom::ccw_angle(pts[(k + 1) % 4] - pts[k], pts[(k + 3) % 4] - pts[k]);
        let qf = z;
        ups_edges.push(UpsEdge { a: c00, b: c10, cell: CellKind::Quad(z), faces: [qf, cf(u0)], rot: -interior(1) });
        ups_edges.push(UpsEdge { a: c10, b: c11, cell: CellKind::Quad(z), faces: [qf, vf(b)], rot: -interior(2) });
        ups_edges.push(UpsEdge { a: c11, b: c01, cell: CellKind::Quad(z), faces: [qf, cf(u1)], rot: -interior(3) });
        ups_edges.push(UpsEdge { a: c01, b: c00, cell: CellKind::Quad(z), faces: [qf, vf(a)], rot: -interior(0) });
        quads.push(Quad {
            edge: e,
            v: [a, b],
            vb: [bullet_of[a], bullet_of[b]],
            u: [u0, u1],
            c: [[c00, c01], [c10, c11]],
            sides: [base, base + 1, base + 2, base + 3],
        });
    }
    let mut free_triangles = Vec::new();
    for e in 0..m {
        if map.edge_kind(e) != EdgeKind::Free {
            continue;
        }
        let [h0, t0] = map.edge_half_edges(e);
        let h = if map.face_of(h0) == map.outer_face() { t0 } else { h0 };
        let u = circ_of_face[map.face_of(h)].unwrap();
        let (pa, pb, pu) = (map.pos(map.tail(h)), map.pos(map.head(h)), circ_pos[u]);
        ups_edges.push(UpsEdge {
            a: corner_of_he[h].unwrap(),
            b: corner_of_he[map.next(h)].unwrap(),
            cell: CellKind::FreeTriangle(e),
            faces: [cf(u), outer_id],
            rot: geom::ccw_angle(pa - pu, pb - pu),
        });
        free_triangles.push(e);
    }
    let mut wired_triangles = Vec::new();
    for v in 0..map.num_vertices() {
        let list = map.out(v);
        let d = list.len();
        for k in 0..d {
            let (hk, hn) = (list[k], list[(k + 1) % d]);
            if map.face_of(hk) != map.outer_face() {
                continue;
            }
            let (e1, e2) = (map.edge_of(hk), map.edge_of(hn));
            if map.edge_kind(e1) != EdgeKind::Wired || map.edge_kind(e2) != EdgeKind::Wired || e1 == e2 {
                continue;
            }
            let pick = |e: usize| if map.edge(e)[0] == v { wired_corner[e][0] } else { wired_corner[e][1] };
            let (ca, cb) = (pick(e1), pick(e2));
            let pv = map.pos(v);
            let (ua, ub) = (circ_pos[corners[ca].u], circ_pos[corners[cb].u]);
            // coincident circs (a reflex corner of a rhombic patch) sweep zero, not a full turn
            let sweep = geom::ccw_angle(ua - pv, ub - pv);
            let sweep = if geom::TAU - sweep < 1e-9 { 0.0 } else { sweep };
            ups_edges.push(UpsEdge {
                a: ca,
                b: cb,
                cell: CellKind::WiredTriangle(v),
                faces: [vf(v), outer_id],
                rot: sweep,
            });
            wired_triangles.push(v);
        }
    }
    let dp = DualPair {
        n_bullet,
        bullet_of,
        circ,
        circ_pos,
        circ_of_face,
        circ_of_wired_edge,
        quads,
        quad_of_edge,
        corners,
        corner_of_he,
        ups_edges,
        ups_faces,
        free_triangles,
        wired_triangles,
    };
    Ok(dp)
}

// ---------------------------------------------------------------------------
// double covers of Υ(G)

/// Branch data for Υ×_ϖ: the spin/disorder insertions that toggle branching.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Varpi {
    /// G vertices carrying a disorder
    pub vertices: Vec<usize>,
    /// G° vertices carrying a spin
    pub faces: Vec<usize>,
}

impl Varpi {
    pub fn empty() -> Self {
        Varpi::default()
    }
    pub fn new(vertices: Vec<usize>, faces: Vec<usize>) -> Self {
        Varpi { vertices, faces }
    }
}

/// A double cover of Υ(G) stored as a sign per Υ-edge: continuing the
/// reference sheet at `a` across edge `a → b` lands on `sign · (reference at b)`.
#[derive(Clone, Debug)]
pub struct DoubleCover {
    pub sign: Vec<i8>,
    pub branch: Vec<bool>,
}

impl DoubleCover {
    /// Cover branching over exactly the faces flagged in `branch` (the outer
    /// face is adjusted to make the total even). Cuts are breadth-first dual
    /// paths from each branch face to the outer face.
    pub fn with_branch(dual: &DualPair, mut branch: Vec<bool>) -> Self {
        let nf = dual.ups_faces.len();
        let outer = dual.outer_face_id();
        branch[outer] = false;
        let odd = branch.iter().filter(|&&b| b).count() % 2 == 1;
        branch[outer] = odd;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf];
        for (k, e) in dual.ups_edges.iter().enumerate() {
            adj[e.faces[0]].push((e.faces[1], k));
            adj[e.faces[1]].push((e.faces[0], k));
        }
        for a in adj.iter_mut() {
            a.sort();
        }
        let mut parent = vec![usize::MAX; nf];
        let mut seen = vec![false; nf];
        let mut order = Vec::with_capacity(nf);
        seen[outer] = true;
        let mut q = VecDeque::from([outer]);
        while let Some(f) = q.pop_front() {
            order.push(f);
            for &(g, k) in &adj[f] {
                if !seen[g] {
                    seen[g] = true;
                    parent[g] = k;
                    q.push_back(g);
                }
            }
        }
        let mut count: Vec<usize> = branch.iter().map(|&b| usize::from(b)).collect();
        let mut sign = vec![1i8; dual.ups_edges.len()];
        for &f in order.iter().rev() {
            if f == outer {
                continue;
            }
            let k = parent[f];
            if count[f] % 2 == 1 {
                sign[k] = -1;
            }
            let e = &dual.ups_edges[k];
            let p = if e.faces[0] == f { e.faces[1] } else { e.faces[0] };
            count[p] += count[f];
        }
        DoubleCover { sign, branch }
    }

    /// Trivial cover: no branching at all.
    pub fn trivial(dual: &DualPair) -> Self {
        DoubleCover { sign: vec![1; dual.ups_edges.len()], branch: vec![false; dual.ups_faces.len()] }
    }

    /// Υ×_ϖ: branching over every face of Υ except the insertions of ϖ.
    pub fn ups_times(dual: &DualPair, varpi: &Varpi) -> Self {
        DoubleCover::with_branch(dual, branch_set(dual, varpi, true))
    }

    /// Υ_ϖ: branching only over the insertions of ϖ.
    pub fn ups_varpi(dual: &DualPair, varpi: &Varpi) -> Self {
        DoubleCover::with_branch(dual, branch_set(dual, varpi, false))
    }

    /// Product of signs along a closed Υ-path given as a corner sequence.
    pub fn holonomy(&self, dual: &DualPair, cycle: &[usize]) -> Result<i8> {
        let mut s = 1i8;
        for k in 0..cycle.len() {
            let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            let e = dual
                .ups_edges
                .iter()
                .position(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
                .ok_or_else(|| Error::Input(format!("corners {a} and {b} are not adjacent in Υ")))?;
            s *= self.sign[e];
        }
        Ok(s)
    }

    /// Product of signs over a set of Υ-edges.
    pub fn edge_set_parity(&self, edges: &[usize]) -> i8 {
        edges.iter().map(|&k| self.sign[k]).product()
    }

    /// Signs of the four loop steps of quad `z`.
    pub fn quad_signs(&self, dual: &DualPair, z: usize) -> [i8; 4] {
        let s = dual.quads[z].sides;
        [self.sign[s[0]], self.sign[s[1]], self.sign[s[2]], self.sign[s[3]]]
    }

    /// Lift of the quad loop c00, c10, c11, c01 starting on the reference
    /// sheet of c00. The value after a full turn is `-lift[0]` on Υ×.
    pub fn lift_quad(&self, dual: &DualPair, z: usize, f: &[f64]) -> [f64; 4] {
        let q = &dual.quads[z];
        let lc = q.loop_corners();
        let s = self.quad_signs(dual, z);
        let mut acc = 1.0;
        let mut out = [0.0; 4];
        out[0] = f[lc[0]];
        for k in 1..4 {
            acc *= f64::from(s[k - 1]);
            out[k] = acc * f[lc[k]];
        }
        out
    }
}

fn branch_set(dual: &DualPair, varpi: &Varpi, all: bool) -> Vec<bool> {
    let outer = dual.outer_face_id();
    let mut branch: Vec<bool> = (0..dual.ups_faces.len()).map(|f| all && f != outer).collect();
    for &v in &varpi.vertices {
        if let Some(f) = dual.ups_faces.iter().position(|x| *x == UFace::Vertex(v)) {
            branch[f] = !branch[f];
        }
    }
    for &u in &varpi.faces {
        if let Some(f) = dual.ups_faces.iter().position(|x| *x == UFace::Circ(u)) {
            branch[f] = !branch[f];
        }
    }
    branch
}

// ---------------------------------------------------------------------------
// Dirac spinor

/// Per-corner Dirac phases on the reference sheet of a given cover of type Υ×.
#[derive(Clone, Debug)]
pub struct DiracPhase {
    pub varsigma: C64,
    pub values: Vec<C64>,
}

/// Sign of the continuation of `exp[-(i/2) arg(v−u)]` (principal branch) across
/// each Υ-edge.
pub fn dirac_edge_signs(map: &PlanarMap, dual: &DualPair) -> Result<Vec<i8>> {
    dual.ups_edges
        .iter()
        .map(|e| {
            let (aa, ab) = (dual.corner_arg(map, e.a), dual.corner_arg(map, e.b));
            let k = (aa + e.rot - ab) / geom::TAU;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::Geometry(format!("corner rotation mismatch on Υ-edge {}→{}", e.a, e.b)));
            }
            Ok(if (k.round() as i64).rem_euclid(2) == 0 { 1 } else { -1 })
        })
        .collect()
}

/// η_c = ς exp[-(i/2) arg(v(c) − u(c))] transported to the reference sheet of
/// `cover`, which must branch over every face of Υ(G).
pub fn dirac_spinor(map: &PlanarMap, dual: &DualPair, cover: &DoubleCover, varsigma: C64) -> Result<DiracPhase> {
    for c in 0..dual.corners.len() {
        let (v, u) = dual.corner_pos(map, c);
        if (v - u).norm() < 1e-14 {
            return Err(Error::Geometry(format!("corner {c} is degenerate")));
        }
    }
    let d = dirac_edge_signs(map, dual)?;
    let rel: Vec<i8> = d.iter().zip(&cover.sign).map(|(a, b)| a * b).collect();
    let g = gauge_from_edge_signs(dual, &rel)
        .map_err(|_| Error::Sheet("cover does not match the Dirac monodromy".into()))?;
    let values = (0..dual.corners.len())
        .map(|c| varsigma * C64::from_polar(1.0, -0.5 * dual.corner_arg(map, c)) * f64::from(g[c]))
        .collect();
    Ok(DiracPhase { varsigma, values })
}

/// Solve `g(b) = rel(a→b) g(a)` over Υ, `g = 1` at each component root.
/// Fails if the relative signs are not a coboundary.
pub fn gauge_from_edge_signs(dual: &DualPair, rel: &[i8]) -> Result<Vec<i8>> {
    let n = dual.corners.len();
    let mut adj: Vec<Vec<(usize, i8)>> = vec![Vec::new(); n];
    for (k, e) in dual.ups_edges.iter().enumerate() {
        adj[e.a].push((e.b, rel[k]));
        adj[e.b].push((e.a, rel[k]));
    }
    let mut g = vec![0i8; n];
    for root in 0..n {
        if g[root] != 0 {
            continue;
        }
        g[root] = 1;
        let mut q = VecDeque::from([root]);
        while let Some(a) = q.pop_front() {
            for &(b, s) in &adj[a] {
                let want = g[a] * s;
                if g[b] == 0 {
                    g[b] = want;
                    q.push_back(b);
                } else if g[b] != want {
                    return Err(Error::Sheet(format!("inconsistent signs at corner {b}")));
                }
            }
        }
    }
    Ok(g)
}

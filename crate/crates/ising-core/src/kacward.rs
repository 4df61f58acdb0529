//! Kac–Ward matrices, their real antisymmetric form and fermionic
//! correlators obtained from the inverse.

use crate::error::{Error, Result};
use crate::geom::{self, C64};
use crate::ising_enum::Oracle;
use crate::pfaffian::{pfaffian, pfaffian_of};
use crate::planar_map::{CircKind, DualPair, PlanarMap};
use crate::weights::IsingWeights;
use nalgebra::DMatrix;
use serde::Serialize;

/// Transition matrix `T` on half-edges: `T[h, h']` is nonzero when `h'`
/// leaves the head of `h` without backtracking, with the half-angle turning
/// phase and `√(x x')`.
pub fn transition(map: &PlanarMap, w: &IsingWeights) -> DMatrix<C64> {
    let n = map.num_half_edges();
    let mut t = DMatrix::zeros(n, n);
    for h in 0..n {
        let xh = w.x(map.edge_of(h));
        for &h2 in map.out(map.head(h)) {
            if h2 == map.twin(h) {
                continue;
            }
            let turn = geom::wrap(map.arg(h2) - map.arg(h));
            t[(h, h2)] = C64::from_polar((xh * w.x(map.edge_of(h2))).sqrt(), 0.5 * turn);
        }
    }
    t
}

/// The Kac–Ward matrix `I − T`.
pub fn kac_ward(map: &PlanarMap, w: &IsingWeights) -> DMatrix<C64> {
    let n = map.num_half_edges();
    DMatrix::identity(n, n) - transition(map, w)
}

/// Real antisymmetric matrix `K̂ = i U* J (I − T) U`, with
/// `U = diag(ς e^{−(i/2) arg h})` and `J` swapping each half-edge with its twin.
/// Returns the real part and the largest imaginary entry dropped.
pub fn k_hat(map: &PlanarMap, w: &IsingWeights, varsigma: C64) -> (DMatrix<f64>, f64) {
    let kw = kac_ward(map, w);
    let n = kw.nrows();
    let u: Vec<C64> = (0..n).map(|h| varsigma * C64::from_polar(1.0, -0.5 * map.arg(h))).collect();
    let mut re = DMatrix::zeros(n, n);
    let mut imag: f64 = 0.0;
    for h in 0..n {
        let row = map.twin(h);
        for h2 in 0..n {
            let k = kw[(row, h2)];
            if k == C64::new(0.0, 0.0) {
                continue;
            }
            let v = C64::i() * u[h].conj() * k * u[h2];
            re[(h, h2)] = v.re;
            imag = imag.max(v.im.abs());
        }
    }
    (re, imag)
}

/// Consistency checks between the Kac–Ward determinant, the Pfaffian of
/// `K̂` and (when given) an exact partition function.
#[derive(Clone, Debug, Serialize)]
pub struct KacWardReport {
    pub half_edges: usize,
    pub det_re: f64,
    pub det_im: f64,
    pub pfaffian: f64,
    pub khat_imag: f64,
    pub khat_asym: f64,
    pub z_reference: Option<f64>,
    /// largest relative error among `det = Z²`, `|Pf K̂| = Z`, `Pf² = det`
    pub rel_error: f64,
}

impl KacWardReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error <= tol && self.khat_imag <= tol && self.khat_asym <= tol
    }
}

pub fn verify(map: &PlanarMap, w: &IsingWeights, z_reference: Option<f64>) -> Result<KacWardReport> {
    let det = kac_ward(map, w).determinant();
    let (kh, imag) = k_hat(map, w, C64::from_polar(1.0, std::f64::consts::FRAC_PI_4));
    let asym = (&kh + kh.transpose()).amax();
    let pf = pfaffian(&kh)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut err = rel(pf * pf, det.re).max(det.im.abs() / det.re.abs().max(f64::MIN_POSITIVE));
    if let Some(z) = z_reference {
        err = err.max(rel(det.re, z * z)).max(rel(pf.abs(), z));
    }
    Ok(KacWardReport {
        half_edges: kh.nrows(),
        det_re: det.re,
        det_im: det.im,
        pfaffian: pf,
        khat_imag: imag,
        khat_asym: asym,
        z_reference,
        rel_error: err,
    })
}

/// Partition function `|Pf K̂|` (normalized so that the empty configuration counts 1).
pub fn partition_function(map: &PlanarMap, w: &IsingWeights) -> Result<f64> {
    let (kh, _) = k_hat(map, w, C64::new(1.0, 0.0));
    Ok(pfaffian(&kh)?.abs())
}

/// How a fermionic correlator was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KacWard,
    OracleFallback,
}

/// Fermionic correlators `⟨χ_{c1} … χ_{ck}⟩` from the inverse Kac–Ward matrix.
pub struct Fermions<'a> {
    map: &'a PlanarMap,
    dual: &'a DualPair,
    sqrt_x: Vec<f64>,
    r: DMatrix<C64>,
}

impl<'a> Fermions<'a> {
    pub fn new(map: &'a PlanarMap, dual: &'a DualPair, w: &IsingWeights) -> Result<Self> {
        map.require_star_faces()?;
        let r = kac_ward(map, w)
            .try_inverse()
            .ok_or_else(|| Error::Domain("Kac–Ward matrix is singular".into()))?;
        let sqrt_x = (0..map.num_edges()).map(|e| w.x(e).sqrt()).collect();
        Ok(Fermions { map, dual, sqrt_x, r })
    }

    /// `⟨χ_c χ_d⟩` for corners at distinct vertices.
    pub fn two_point(&self, c: usize, d: usize) -> Result<f64> {
        let (map, dual) = (self.map, self.dual);
        let nc = dual.corners.len();
        if c >= nc || d >= nc {
            return Err(Error::Input(format!("corner index out of range (have {nc})")));
        }
        let (vc, vd) = (dual.corners[c].v, dual.corners[d].v);
        if vc == vd {
            return Err(Error::Input("corners share a vertex".into()));
        }
        let ac = dual.corner_arg(map, c);
        let ad = dual.corner_arg(map, d);
        let tc = turn_table(map, dual, c);
        let td = turn_table(map, dual, d);
        let mut g = C64::new(0.0, 0.0);
        for (&e, &te) in map.out(vc).iter().zip(&tc) {
            let left = C64::from_polar(self.sqrt_x[map.edge_of(e)], 0.5 * te);
            for (&e2, &t2) in map.out(vd).iter().zip(&td) {
                let right = C64::from_polar(self.sqrt_x[map.edge_of(e2)], -0.5 * t2);
                g += left * self.r[(e, map.twin(e2))] * right;
            }
        }
        let v = -C64::i() * g * C64::from_polar(1.0, -0.5 * (ad - ac));
        if v.im.abs() > 1e-8 * v.norm().max(1.0) {
            return Err(Error::Geometry(format!("two-point value is not real ({})", v.im)));
        }
        Ok(v.re)
    }

    /// `⟨χ_{c1} … χ_{ck}⟩` as the Pfaffian of two-point values. Pairs at a
    /// common vertex are taken from `oracle` when given, otherwise rejected.
    pub fn correlator(&self, corners: &[usize], oracle: Option<&Oracle>) -> Result<(f64, Method)> {
        if corners.len() % 2 == 1 {
            return Ok((0.0, Method::KacWard));
        }
        for (i, c) in corners.iter().enumerate() {
            if corners[..i].contains(c) {
                return Err(Error::Input(format!("corner {c} appears twice")));
            }
        }
        let mut method = Method::KacWard;
        let k = corners.len();
        let mut m = vec![vec![0.0; k]; k];
        for r in 0..k {
            for s in r + 1..k {
                let (c, d) = (corners[r], corners[s]);
                m[r][s] = if self.dual.corners[c].v == self.dual.corners[d].v {
                    let o = oracle.ok_or_else(|| {
                        Error::Input("corners share a vertex; an enumeration oracle is needed".into())
                    })?;
                    method = Method::OracleFallback;
                    o.fermion2(c, d, &[], &[])?
                } else {
                    self.two_point(c, d)?
                };
            }
        }
        Ok((pfaffian_of(k, |r, s| m[r][s])?, method))
    }
}


/// Turning angles from the corner direction `v − u` to each half-edge out of
/// `v`, with the branch cut inside the angle of the face the corner looks into.
fn turn_table(map: &PlanarMap, dual: &DualPair, c: usize) -> Vec<f64> {
    let v = dual.corners[c].v;
    let ac = dual.corner_arg(map, c);
    let h_out = match dual.corners[c].he {
        Some(h) => h,
        None => {
            let e = match dual.circ[dual.corners[c].u] {
                CircKind::Wired(e) => e,
                CircKind::Face(_) => unreachable!("face corners carry a half-edge"),
            };
            let h = map.edge_half_edges(e).into_iter().find(|&h| map.face_of(h) == map.outer_face()).unwrap();
            if map.tail(h) == v { h } else { map.next(h) }
        }
    };
    let h_in = *map.face(map.face_of(h_out)).iter().find(|&&h| map.next(h) == h_out).unwrap();
    let alpha = (map.arg(map.twin(h_in)) - map.arg(h_out)).rem_euclid(geom::TAU);
    let alpha = if alpha == 0.0 { geom::TAU } else { alpha };
    let cut = (map.arg(h_out) + 0.5 * alpha - ac).rem_euclid(geom::TAU);
    map.out(v)
        .iter()
        .map(|&e| {
            let t = (map.arg(e) - ac).rem_euclid(geom::TAU);
            if t > cut { t - geom::TAU } else { t }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_map, square_grid, GridBoundary, RandomMapOptions};
    use crate::planar_map::dual_pair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(map: &PlanarMap, rng: &mut ChaCha8Rng) -> IsingWeights {
        let x = (0..map.num_edges()).map(|_| rng.random_range(0.1..0.9)).collect();
        IsingWeights::new(map, x).unwrap()
    }

    #[test]
    fn determinant_is_z_squared_on_grid() {
        let map = square_grid(4, 4, 1.0, GridBoundary::Wired).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_weights(&map, &mut rng);
        let z = Oracle::new(&map, &w).unwrap().z();
        let rep = verify(&map, &w, Some(z)).unwrap();
        assert!(rep.passes(1e-10), "{rep:?}");
    }

    #[test]
    fn determinant_is_z_squared_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let opt = RandomMapOptions { vertices: 9, max_edges: 18, bridgeless: false, mixed_boundary: 0.5 };
            let map = random_map(&mut rng, opt).unwrap();
            let w = random_weights(&map, &mut rng);
            let z = Oracle::new(&map, &w).unwrap().z();
            let rep = verify(&map, &w, Some(z)).unwrap();
            assert!(rep.passes(1e-9), "{rep:?}");
        }
    }

    #[test]
    fn two_point_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for trial in 0..12 {
            let map = if trial == 0 {
                square_grid(4, 4, 1.0, GridBoundary::crossing()).unwrap()
            } else {
                let opt = RandomMapOptions { vertices: 8, max_edges: 15, bridgeless: true, mixed_boundary: 0.6 };
                random_map(&mut rng, opt).unwrap()
            };
            let w = random_weights(&map, &mut rng);
            let oracle = Oracle::new(&map, &w).unwrap();
            let dual = dual_pair(&map).unwrap();
            let f = Fermions::new(&map, &dual, &w).unwrap();
            let nc = dual.corners.len();
            for c in 0..nc {
                for d in 0..nc {
                    if dual.corners[c].v == dual.corners[d].v {
                        continue;
                    }
                    let kw = f.two_point(c, d).unwrap();
                    let en = oracle.fermion2(c, d, &[], &[]).unwrap();
                    assert!((kw - en).abs() < 1e-9, "trial {trial} corners {c},{d}: {kw} vs {en}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn four_point_is_pfaffian() {
        let map = square_grid(4, 4, 1.0, GridBoundary::Wired).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_weights(&map, &mut rng);
        let oracle = Oracle::new(&map, &w).unwrap();
        let dual = dual_pair(&map).unwrap();
        let f = Fermions::new(&map, &dual, &w).unwrap();
        let nc = dual.corners.len();
        for _ in 0..30 {
            let cs: Vec<usize> = (0..4).map(|_| rng.random_range(0..nc)).collect();
            let vs: Vec<usize> = cs.iter().map(|&c| dual.corners[c].v).collect();
            if (0..4).any(|i| vs[..i].contains(&vs[i])) {
                continue;
            }
            let (pf, method) = f.correlator(&cs, None).unwrap();
            assert_eq!(method, Method::KacWard);
            let req = crate::ising_enum::CorrelatorRequest { disorders: vec![], spins: vec![], corners: cs };
            let en = oracle.mixed_correlator(&req).unwrap().value;
            assert!((pf - en).abs() < 1e-9, "{pf} vs {en}");
        }
    }

    #[test]
    fn shared_vertex_needs_oracle() {
        let map = square_grid(3, 3, 1.0, GridBoundary::Wired).unwrap();
        let w = IsingWeights::uniform(&map, 0.4).unwrap();
        let dual = dual_pair(&map).unwrap();
        let f = Fermions::new(&map, &dual, &w).unwrap();
        let cs = dual.corners_at_vertex(4);
        assert!(f.correlator(&cs[..2], None).is_err());
        let oracle = Oracle::new(&map, &w).unwrap();
        let (_, m) = f.correlator(&cs[..2], Some(&oracle)).unwrap();
        assert_eq!(m, Method::OracleFallback);
    }
}

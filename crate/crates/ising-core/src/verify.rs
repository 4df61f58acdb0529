//! The verification suite: one function per acceptance criterion, each
//! returning a pass/fail line with the measured numbers. Shared by the
//! acceptance test target and `ising verify-all`.

use crate::error::Result;
use crate::fk::{self, FkGraph};
use crate::gen::{random_map, square_grid, GridBoundary, RandomMapOptions};
use crate::ising_enum::{spin_sum_faces, spin_sum_vertices, CorrelatorRequest, Oracle};
use crate::isoradial::{
    boundary_h_check, interior_lambda, interior_lambda_of, iso_factorization_check, positivity_check, rhombic_lattice,
    square_lattice, IsoradialMap, LocalSpinors, RhombicKind,
};
use crate::kacward::{self, Fermions};
use crate::periodic;
use crate::pfaffian::pfaffian_of;
use crate::planar_map::{dual_pair, DualPair, EdgeKind, PlanarMap};
use crate::sembed::{
    build_sembedding, dbar_s, factorization_s_check, isoradial_pair, l_s, local_form, perturbed_isoradial,
    recover_weights, s_laplacian, subharmonicity_check, SEmbedding,
};
use crate::sholo::{self, default_base, integrate_hf, CornerSpinor, LambdaVertex};
use crate::weights::{IsingWeights, X_CRIT_SQUARE};
use crate::C64;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::SQRT_2;
use std::time::Instant;

pub const CRITERIA: usize = 13;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

/// Sizes of the sampled checks. `full` matches the acceptance tolerances;
/// `quick` shrinks sample counts for a fast smoke run.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub trials_scale: f64,
    pub mc_samples: usize,
}

impl Budget {
    pub fn full() -> Self {
        Budget { trials_scale: 1.0, mc_samples: 1_000_000 }
    }
    pub fn quick() -> Self {
        Budget { trials_scale: 0.1, mc_samples: 100_000 }
    }
    fn n(&self, full: usize) -> usize {
        ((full as f64 * self.trials_scale).ceil() as usize).max(1)
    }
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "Kramers-Wannier consistency",
        2 => "Kac-Ward determinant",
        3 => "Pfaffian four-point identity",
        4 => "propagation equation",
        5 => "H_F closure and boundary conditions",
        6 => "isoradial positivity",
        7 => "s-embedding subharmonicity",
        8 => "weight recovery round trip",
        9 => "factorizations",
        10 => "isoradial reduction of the s-Laplacian",
        11 => "FK crossing identity",
        12 => "Edwards-Sokal coupling",
        13 => "periodic criticality",
        _ => "unknown",
    }
}

pub fn run(id: usize, budget: Budget) -> CriterionResult {
    let t0 = Instant::now();
    let out = match id {
        1 => c1(budget),
        2 => c2(budget),
        3 => c3(),
        4 => c4(budget),
        5 => c5(),
        6 => c6(budget),
        7 => c7(budget),
        8 => c8(),
        9 => c9(),
        10 => c10(),
        11 => c11(budget),
        12 => c12(budget),
        13 => c13(),
        _ => Ok((false, "no such criterion".to_string())),
    };
    let seconds = t0.elapsed().as_secs_f64();
    let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, title: title(id), pass, detail, seconds }
}

pub fn run_all(budget: Budget) -> Vec<CriterionResult> {
    (1..=CRITERIA).map(|id| run(id, budget)).collect()
}

type Outcome = Result<(bool, String)>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_weights(map: &PlanarMap, rng: &mut ChaCha8Rng) -> Result<IsingWeights> {
    let x = (0..map.num_edges()).map(|_| rng.random_range(0.05..0.95)).collect();
    IsingWeights::new(map, x)
}

fn c1(b: Budget) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let n = b.n(50);
    for _ in 0..n {
        let map = random_map(&mut rng, RandomMapOptions { vertices: 8, max_edges: 16, bridgeless: false, mixed_boundary: 0.5 })?;
        let w = random_weights(&map, &mut rng)?;
        let pf = Oracle::new(&map, &w)?.partition_function();
        let (zc, zb) = (spin_sum_faces(&map, &w)?, spin_sum_vertices(&map, &w)?);
        if let (Some(c), Some(v)) = (pf.z_circ, pf.z_bullet) {
            worst = worst.max(rel(zc, c)).max(rel(zb, v));
        } else {
            worst = f64::INFINITY;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((worst <= 1e-10 && secs <= 60.0, format!("{n} maps, max rel error {worst:.2e}")))
}

fn c2(b: Budget) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    let n = b.n(100);
    for _ in 0..n {
        let map = random_map(&mut rng, RandomMapOptions { vertices: 9, max_edges: 18, bridgeless: false, mixed_boundary: 0.5 })?;
        let w = random_weights(&map, &mut rng)?;
        let z = Oracle::new(&map, &w)?.z();
        let rep = kacward::verify(&map, &w, Some(z))?;
        worst = worst.max(rep.rel_error).max(rep.khat_imag).max(rep.khat_asym);
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((worst <= 1e-9 && secs <= 120.0, format!("{n} maps, max rel error {worst:.2e}")))
}

fn c3() -> Outcome {
    let map = square_grid(4, 4, 1.0, GridBoundary::Wired)?;
    let w = IsingWeights::uniform(&map, X_CRIT_SQUARE)?;
    let oracle = Oracle::new(&map, &w)?;
    let dual = dual_pair(&map)?;
    let f = Fermions::new(&map, &dual, &w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let nc = dual.corners.len();
    let (mut worst_enum, mut worst_kw, mut count) = (0.0f64, 0.0f64, 0);
    while count < 40 {
        let cs: Vec<usize> = (0..4).map(|_| rng.random_range(0..nc)).collect();
        let vs: Vec<usize> = cs.iter().map(|&c| dual.corners[c].v).collect();
        if (0..4).any(|i| vs[..i].contains(&vs[i])) {
            continue;
        }
        let four = oracle.mixed_correlator(&CorrelatorRequest { disorders: vec![], spins: vec![], corners: cs.clone() })?.value;
        let mut two = [[0.0; 4]; 4];
        for r in 0..4 {
            for s in r + 1..4 {
                two[r][s] = oracle.fermion2(cs[r], cs[s], &[], &[])?;
            }
        }
        let pf_enum = pfaffian_of(4, |r, s| two[r][s])?;
        let (pf_kw, _) = f.correlator(&cs, None)?;
        let scale = four.abs().max(1e-3);
        worst_enum = worst_enum.max((pf_enum - four).abs() / scale);
        worst_kw = worst_kw.max((pf_kw - four).abs() / scale);
        count += 1;
    }
    let pass = worst_enum <= 1e-8 && worst_kw <= 1e-8;
    Ok((pass, format!("{count} quadruples, Pf(enumerated) {worst_enum:.2e}, Pf(Kac-Ward) {worst_kw:.2e}")))
}

fn c4(b: Budget) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    let mut quads = 0;
    let patterns = b.n(20);
    for n in [4, 5] {
        let map = square_grid(n, n, 1.0, GridBoundary::Wired)?;
        let w = IsingWeights::uniform(&map, X_CRIT_SQUARE)?;
        let oracle = Oracle::new(&map, &w)?;
        let dual = oracle.dual().expect("grid has a dual").clone();
        let thetas = sholo::quad_thetas(&dual, &w);
        let inner: Vec<usize> = map.inner_faces().collect();
        for _ in 0..patterns {
            let nd = if rng.random_bool(0.5) { 1 } else { 3 };
            let ns = rng.random_range(0..3);
            let mut dis: Vec<usize> = Vec::new();
            while dis.len() < nd {
                let v = rng.random_range(0..map.num_vertices());
                if !dis.contains(&v) {
                    dis.push(v);
                }
            }
            let spins: Vec<usize> = (0..ns).map(|_| inner[rng.random_range(0..inner.len())]).collect();
            let obs: CornerSpinor = oracle.corner_observable(&dis, &spins)?.into();
            for (z, q) in dual.quads.iter().enumerate() {
                if map.edge_kind(q.edge) != EdgeKind::Interior {
                    continue;
                }
                let r = sholo::check_propagation(&obs, &dual, z, thetas[z]);
                worst = r.iter().fold(worst, |m, x| m.max(x.abs()));
                quads += 1;
            }
        }
    }
    Ok((worst <= 1e-9, format!("{} patterns, {quads} quad checks, max residual {worst:.2e}", 2 * patterns)))
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut closure, mut wired_abs, mut wired_min, mut free_max, mut violations, mut runs) =
        (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0usize, 0);
    for bc in ["wfwf", "wwff", "wfff"] {
        let iso = square_lattice(1.0, 4, 4, GridBoundary::parse(bc)?)?;
        let oracle = Oracle::new(&iso.map, &iso.weights)?;
        let d = &iso.dual;
        let inner: Vec<usize> = iso.map.inner_faces().collect();
        for _ in 0..5 {
            let v = rng.random_range(0..iso.map.num_vertices());
            let f = inner[rng.random_range(0..inner.len())];
            let obs: CornerSpinor = oracle.corner_observable(&[v], &[f])?.into();
            let h = integrate_hf(d, &obs, default_base(d), 0.0, 1e-9)?;
            let rep = boundary_h_check(&iso.map, d, &h, 1e-9);
            closure = closure.max(h.loop_closure);
            wired_abs = wired_abs.max(rep.wired_max_abs);
            wired_min = wired_min.min(rep.wired_min_normal);
            free_max = free_max.max(rep.free_max_normal);
            violations += rep.violations.len();
            runs += 1;
        }
    }
    let pass = closure <= 1e-12 && wired_abs <= 1e-12 && wired_min >= -1e-12 && free_max <= 1e-12 && violations == 0;
    Ok((
        pass,
        format!(
            "{runs} observables, closure {closure:.2e}, |H| on wired {wired_abs:.2e}, min wired normal {wired_min:.2e}, max free normal {free_max:.2e}, {violations} violations"
        ),
    ))
}

fn c6(b: Budget) -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let lattices: Vec<IsoradialMap> = vec![
        square_lattice(1.0, 6, 6, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Triangular, 5, 5, 1.0, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Honeycomb, 4, 4, 1.0, GridBoundary::Wired)?,
    ];
    let total = b.n(10_000);
    let (mut min_bullet, mut max_circ, mut trials) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    let mut stars = Vec::new();
    for (k, iso) in lattices.iter().enumerate() {
        let (ib, ic) = interior_lambda(iso);
        stars.extend(ib.iter().map(|&v| (k, LambdaVertex::Bullet(v))));
        stars.extend(ic.iter().map(|&u| (k, LambdaVertex::Circ(u))));
    }
    let locals: Vec<LocalSpinors> = stars.iter().map(|&(k, v)| LocalSpinors::new(&lattices[k], v)).collect();
    while trials < total {
        let i = trials % stars.len();
        let (k, v) = stars[i];
        let iso = &lattices[k];
        let c: Vec<f64> = (0..locals[i].basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let val = positivity_check(iso, &locals[i].spinor(iso.dual.corners.len(), &c), v, 1e-9)?;
        match v {
            LambdaVertex::Bullet(_) => min_bullet = min_bullet.min(val),
            LambdaVertex::Circ(_) => max_circ = max_circ.max(val),
        }
        trials += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = min_bullet >= -1e-12 && max_circ <= 1e-12 && secs <= 30.0;
    Ok((pass, format!("{trials} spinors on square, triangular and hexagonal lattices, min Δ• {min_bullet:.2e}, max Δ° {max_circ:.2e}")))
}

fn perturbed(seed: u64, n: usize, eps: f64) -> Result<(PlanarMap, DualPair, IsingWeights, SEmbedding)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = square_grid(n, n, 1.0, GridBoundary::Wired)?;
    let dual = dual_pair(&map)?;
    let (w, s) = perturbed_isoradial(&map, &dual, eps, &mut rng)?;
    Ok((map, dual, w, s))
}

fn c7(b: Budget) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let total = b.n(10_000);
    let (mut min_val, mut trials, mut rank_failures, mut stars_checked) = (f64::INFINITY, 0, 0, 0);
    for seed in 0..3 {
        let (map, dual, _, s) = perturbed(700 + seed, 5, 0.1)?;
        let lap = s_laplacian(&s, &dual)?;
        let (ib, ic) = interior_lambda_of(&map, &dual);
        let verts: Vec<LambdaVertex> =
            ib.iter().map(|&v| LambdaVertex::Bullet(v)).chain(ic.iter().map(|&u| LambdaVertex::Circ(u))).collect();
        let nc = dual.corners.len();
        for &v in &verts {
            let (local, q) = local_form(&dual, &lap, v);
            let eig = SymmetricEigen::new(q.clone());
            let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
            let zero: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k].abs() < 1e-8 * scale).collect();
            // the null directions of the form are exactly span{F1, F2}
            let mut ok = zero.len() == 2;
            for &k in &zero {
                let coeff: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let (_, in_span) = subharmonicity_check(&s, &dual, &lap, &local.spinor(nc, &coeff), v, 1e-9)?;
                ok &= in_span;
            }
            let (f1, f2) = s.spinor_pair();
            for f in [&f1, &f2] {
                let (val, in_span) = subharmonicity_check(&s, &dual, &lap, f, v, 1e-9)?;
                ok &= in_span && val.abs() <= 1e-10;
            }
            if !ok {
                rank_failures += 1;
            }
            stars_checked += 1;
        }
        let per = total.div_ceil(3);
        for t in 0..per {
            let v = verts[t % verts.len()];
            let local = LocalSpinors::with_thetas(&dual, &lap.theta, v);
            let c: Vec<f64> = (0..local.basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (val, _) = subharmonicity_check(&s, &dual, &lap, &local.spinor(nc, &c), v, 1e-9)?;
            min_val = min_val.min(val);
            trials += 1;
        }
    }
    let pass = min_val >= -1e-12 && rank_failures == 0;
    Ok((pass, format!("{trials} trials, min Δ_S H_F {min_val:.2e}, equality-set rank failures {rank_failures}/{stars_checked}")))
}

fn c8() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (_, dual, w, s) = perturbed(800 + seed, 4, 0.15)?;
        let rec = recover_weights(&s, &dual)?;
        let input = sholo::quad_thetas(&dual, &w);
        worst = rec.theta.iter().zip(&input).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    let iso = square_lattice(1.0, 4, 4, GridBoundary::Wired)?;
    let (f1, f2) = isoradial_pair(&iso.map, &iso.dual)?;
    let s = build_sembedding(&iso.dual, &iso.weights, &f1, &f2, default_base(&iso.dual))?;
    let sq = recover_weights(&s, &iso.dual)?.x().iter().fold(0.0f64, |m, x| m.max((x - (SQRT_2 - 1.0)).abs()));
    Ok((worst <= 1e-10 && sq <= 1e-12, format!("10 instances, max θ error {worst:.2e}, square quads |x − (√2 − 1)| {sq:.2e}")))
}

fn c9() -> Outcome {
    let mut iso_res: f64 = 0.0;
    for iso in [
        square_lattice(1.0, 6, 6, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Triangular, 5, 5, 1.0, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Rectangular { theta: 0.6 }, 5, 5, 1.0, GridBoundary::Wired)?,
    ] {
        let (a, c) = iso_factorization_check(&iso);
        iso_res = iso_res.max(a).max(c);
    }
    let (mut s_res, mut lit, mut norm, mut ls) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..5 {
        let (map, dual, _, s) = perturbed(900 + seed, 5, 0.1)?;
        let r = factorization_s_check(&map, &s, &dual)?;
        s_res = s_res.max(r.residual).max(r.conjugate_residual);
        lit = lit.max(r.literal_residual);
        let d = dbar_s(&s, &dual)?;
        let sv = s.lambda();
        let one = vec![C64::new(1.0, 0.0); sv.len()];
        let sbar: Vec<C64> = sv.iter().map(|x| x.conj()).collect();
        for x in d.apply(&dual, &one).iter().chain(&d.apply(&dual, &sv)) {
            norm = norm.max(x.norm());
        }
        for x in d.apply(&dual, &sbar) {
            norm = norm.max((x - 1.0).norm());
        }
        let l = l_s(&s, &dual, default_base(&dual))?;
        let lv: Vec<C64> = l.bullet.iter().chain(&l.circ).map(|&x| C64::new(x, 0.0)).collect();
        ls = d.apply(&dual, &lv).iter().fold(ls, |m, x| m.max(x.norm()));
    }
    let pass = iso_res <= 1e-9 && s_res <= 1e-9 && norm <= 1e-12 && ls <= 1e-10;
    Ok((
        pass,
        format!(
            "isoradial {iso_res:.2e}, s-embedding {s_res:.2e} (with the opposite sign: {lit:.2e}), ∂̄_S normalizations {norm:.2e}, ∂̄_S L_S {ls:.2e}"
        ),
    ))
}

fn c10() -> Outcome {
    let mut worst: f64 = 0.0;
    for iso in [
        square_lattice(1.0, 5, 5, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Triangular, 4, 4, 1.0, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Honeycomb, 3, 3, 1.0, GridBoundary::Wired)?,
        rhombic_lattice(RhombicKind::Rectangular { theta: 0.5 }, 4, 4, 1.0, GridBoundary::Wired)?,
    ] {
        let (f1, f2) = isoradial_pair(&iso.map, &iso.dual)?;
        let s = build_sembedding(&iso.dual, &iso.weights, &f1, &f2, default_base(&iso.dual))?;
        let lap = s_laplacian(&s, &iso.dual)?;
        for z in 0..iso.dual.quads.len() {
            let t = iso.theta[z];
            worst = worst.max((lap.a_bullet[z] - t.tan() / iso.delta).abs());
            worst = worst.max((lap.a_circ[z] - 1.0 / (t.tan() * iso.delta)).abs());
        }
        worst = lap.b.iter().fold(worst, |m, b| m.max(b.abs()));
    }
    Ok((worst <= 1e-12, format!("4 rhombic lattices, max coefficient error {worst:.2e}")))
}

fn c11(b: Budget) -> Outcome {
    // every grid quad with at most 20 interacting edges, at three weights
    let mut worst: f64 = 0.0;
    let mut domains = 0;
    for wd in 3..=6 {
        for ht in 3..=6 {
            for x in [0.25, X_CRIT_SQUARE, 0.6] {
                let map = square_grid(wd, ht, 1.0, GridBoundary::crossing())?;
                let g = FkGraph::new(&map, &IsingWeights::uniform(&map, x)?)?;
                if g.num_edges() > 20 {
                    continue;
                }
                let r = fk::crossing_exact(&g)?;
                worst = worst.max(r.rho_residual.unwrap_or(f64::INFINITY));
                domains += 1;
            }
        }
    }
    let map = fk::self_dual_quad(3)?;
    let g = FkGraph::new(&map, &IsingWeights::uniform(&map, X_CRIT_SQUARE)?)?;
    let iso = fk::duality_isomorphism(&g)?.is_some();
    let r = fk::crossing_exact(&g)?;
    let pl = r.p_loops.unwrap_or(f64::NAN);
    let target = SQRT_2 - 1.0;
    let t0 = Instant::now();
    let big = fk::self_dual_quad(16)?;
    let gb = FkGraph::new(&big, &IsingWeights::uniform(&big, X_CRIT_SQUARE)?)?;
    let mc = fk::crossing_mc(&gb, b.mc_samples, 11)?;
    let secs = t0.elapsed().as_secs_f64();
    let se = mc.stderr.unwrap_or(f64::INFINITY);
    let pass = worst <= 1e-12
        && iso
        && (pl - 0.5).abs() <= 1e-10
        && (r.p_fk - target).abs() <= 1e-9
        && (mc.p_fk - target).abs() <= 3.0 * se
        && secs <= 300.0;
    Ok((
        pass,
        format!(
            "{domains} quads, max |P^FK − ϱ(P^loops)| {worst:.2e}; self-dual quad (isomorphism {}) P^loops {pl:.12}, P^FK {:.12}; MC 17×16 P^FK {:.5} ± {se:.5} over {} samples in {secs:.0} s",
            if iso { "found" } else { "missing" },
            r.p_fk,
            mc.p_fk,
            mc.samples.unwrap_or(0)
        ),
    ))
}

fn c12(b: Budget) -> Outcome {
    let map = square_grid(3, 3, 1.0, GridBoundary::Wired)?;
    let w = IsingWeights::uniform(&map, X_CRIT_SQUARE)?;
    let g = FkGraph::new(&map, &w)?;
    let oracle = Oracle::new(&map, &w)?;
    let faces: Vec<usize> = map.inner_faces().collect();
    let mut sets: Vec<Vec<usize>> = faces.iter().map(|&f| vec![f]).collect();
    for i in 0..faces.len() {
        for j in i + 1..faces.len() {
            sets.push(vec![faces[i], faces[j]]);
        }
    }
    sets.push(faces.clone());
    let exact: Vec<f64> = sets.iter().map(|s| oracle.spin_correlator(s)).collect::<Result<_>>()?;
    let obs_sets = sets.clone();
    let est = fk::mc_estimate(&g, b.mc_samples, 12, sets.len(), move |_, _, spins, out| {
        for (o, s) in out.iter_mut().zip(&obs_sets) {
            *o = s.iter().map(|&f| f64::from(spins[f])).product();
        }
    })?;
    let worst_sigma = est
        .mean
        .iter()
        .zip(&est.stderr)
        .zip(&exact)
        .map(|((m, se), e)| (m - e).abs() / se.max(1e-300))
        .fold(0.0, f64::max);
    // spin correlators as cluster-parity events, exactly on 2 × 3
    let small = square_grid(2, 3, 1.0, GridBoundary::Wired)?;
    let ws = IsingWeights::uniform(&small, 0.37)?;
    let gs = FkGraph::new(&small, &ws)?;
    let os = Oracle::new(&small, &ws)?;
    let sf: Vec<usize> = small.inner_faces().collect();
    let mut parity: f64 = 0.0;
    for s in [vec![sf[0]], vec![sf[1]], sf.clone()] {
        let p = fk::fk_exact(&gs, &s)?.even_clusters.unwrap_or(f64::NAN);
        parity = parity.max((p - os.spin_correlator(&s)?).abs());
    }
    let pass = worst_sigma <= 3.0 && parity <= 1e-12;
    Ok((
        pass,
        format!("{} correlators on 3×3 over {} samples, worst deviation {worst_sigma:.2}σ; parity identity on 2×3 {parity:.2e}", sets.len(), est.samples),
    ))
}

fn c13() -> Outcome {
    let pm = periodic::square_torus(1, 1)?;
    let pd = pm.dual()?;
    let xc = periodic::square_critical_x(&pm);
    let k0 = periodic::periodic_kernel(&pm, &pd, &xc)?;
    let mut ok = k0.dimension == 2 && k0.gap >= 1e3;
    let mut dims = vec![k0.dimension];
    let mut min_gap = k0.gap;
    for dx in [0.05, -0.05] {
        let x: Vec<f64> = xc.iter().map(|v| v + dx).collect();
        let k = periodic::periodic_kernel(&pm, &pd, &x)?;
        ok &= k.dimension == 0 && k.gap >= 1e3;
        dims.push(k.dimension);
        min_gap = min_gap.min(k.gap);
    }
    let Some(pair) = k0.pair else {
        return Ok((false, format!("kernel dimensions {dims:?}, no spinor pair")));
    };
    let kl = periodic::find_kappa_l(&pm, &pd, &pair)?;
    let kappa = C64::new(kl.kappa[0], kl.kappa[1]);
    ok &= (kappa - C64::new(0.0, 1.0)).norm() <= 1e-8 && kl.residual <= 1e-8;
    let pm2 = periodic::square_torus(2, 2)?;
    let pd2 = pm2.dual()?;
    let x2 = periodic::square_critical_x(&pm2);
    let pair2 = periodic::periodic_kernel(&pm2, &pd2, &x2)?.pair.ok_or_else(|| crate::Error::Input("2×2 torus is not critical".into()))?;
    let (_, c0) = periodic::periodic_s_laplacian(&pm2, &pd2, &pair2, C64::new(0.0, 1.0), &x2)?;
    let mut proj: f64 = 0.0;
    for k in [C64::new(0.3, 0.8), C64::new(-1.0, 2.0), C64::new(0.1, 0.3)] {
        let (_, c1) = periodic::periodic_s_laplacian(&pm2, &pd2, &pair2, k, &x2)?;
        proj = proj.max(periodic::projective_gap(&c0, &c1));
    }
    ok &= proj <= 1e-9;
    Ok((
        ok,
        format!(
            "kernel dimensions {dims:?} (min gap {min_gap:.1e}), κ_L = {:.3e}{:+.12}i with defect {:.2e}, projective gap {proj:.2e}",
            kl.kappa[0], kl.kappa[1], kl.residual
        ),
    ))
}

//! `ising`: generators, correlators, verification suites and experiment
//! harnesses over graph JSON files.
//!
//! Exit codes: 0 success, 1 input error (JSON on stderr), 2 a check failed
//! (the residual report is still written).

use clap::{Args, Parser, Subcommand, ValueEnum};
use ising_core::fk::{self, FkGraph};
use ising_core::gen::{random_map, GridBoundary, RandomMapOptions};
use ising_core::io::GraphJson;
use ising_core::ising_enum::{CorrelatorRequest, Oracle};
use ising_core::isoradial::{
    boundary_h_check, interior_lambda, iso_factorization_check, positivity_check, rhombic_lattice, square_lattice,
    IsoradialMap, LocalSpinors, RhombicKind,
};
use ising_core::periodic;
use ising_core::planar_map::{dual_pair, EdgeKind, PlanarMap};
use ising_core::sembed::{build_sembedding, isoradial_pair, perturbed_isoradial, properness_check, recover_weights};
use ising_core::sholo::{self, default_base, integrate_hf, CornerSpinor, LambdaVertex};
use ising_core::svg;
use ising_core::verify::{self, Budget};
use ising_core::weights::X_CRIT_SQUARE;
use ising_core::{Error, IsingWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ising", version, about = "Planar Ising model toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a graph JSON file
    Gen(GenArgs),
    /// Exact correlator by enumeration
    Correlate(CorrelateArgs),
    /// Kac-Ward determinant and Pfaffian checks
    Kacward {
        #[command(subcommand)]
        cmd: KacwardCmd,
    },
    /// Propagation equation and H_F checks for an enumerated observable
    SholoCheck(SholoArgs),
    /// Positivity and factorization checks on an isoradial graph
    IsoCheck(IsoArgs),
    /// s-embeddings
    Sembed {
        #[command(subcommand)]
        cmd: SembedCmd,
    },
    /// Doubly periodic criticality harness
    Periodic(PeriodicArgs),
    /// FK random-cluster experiments
    Fk {
        #[command(subcommand)]
        cmd: FkCmd,
    },
    /// Run the whole verification suite
    VerifyAll(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Lattice {
    Square,
    Rectangular,
    Triangular,
    Honeycomb,
    Random,
    SelfDualQuad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// output file (stdout when absent)
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    lattice: Lattice,
    /// vertices per side (cells per side for rhombic patches, k for the self-dual quad)
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// second side, defaults to n
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// wired, crossing, or four letters w/f for bottom, right, top, left
    #[arg(long, default_value = "wired")]
    bc: String,
    /// uniform weight; isoradial lattices default to their critical weights
    #[arg(long)]
    x: Option<f64>,
    /// rhombus half-angle for the rectangular lattice
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    max_edges: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    graph: PathBuf,
    /// uniform weight used when the graph file has none
    #[arg(long)]
    weights: Option<f64>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON {"disorders": [...], "spins": [...], "corners": [...]}
    #[arg(long)]
    request: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum KacwardCmd {
    Verify {
        #[command(flatten)]
        graph: GraphArgs,
        /// extra trials with random weights on the same map
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct SholoArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON {"disorders": [...], "spins": [...]}; odd number of disorders
    #[arg(long)]
    request: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// SVG of H_F on Λ
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IsoArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spinors {
    /// the isoradial pair from the Dirac spinor
    Dirac,
    /// isoradial angles moved by up to --eps
    Perturbed,
}

#[derive(Subcommand)]
enum SembedCmd {
    Build {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "dirac")]
        spinors: Spinors,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Torus {
    Square,
    Triangular,
}

#[derive(Args)]
struct PeriodicArgs {
    #[arg(long, value_enum, default_value = "square")]
    lattice: Torus,
    /// fundamental domain size for the square torus
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// uniform shift of every weight away from criticality
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Subcommand)]
enum FkCmd {
    /// Crossing probability of a quad (two wired and two free arcs)
    Crossing {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// smaller sample counts
    #[arg(long)]
    quick: bool,
    /// comma-separated criterion ids
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Input(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Embedding(_) => "embedding",
        Error::Boundary(_) => "boundary",
        Error::Geometry(_) => "geometry",
        Error::Size { .. } => "size",
        Error::Input(_) => "input",
        Error::DegenerateLine(_) => "degenerate_line",
        Error::Shape(_) => "shape",
        Error::NonIntegrable { .. } => "non_integrable",
        Error::DegenerateSpinor(_) => "degenerate_spinor",
        Error::Sheet(_) => "sheet",
        Error::Domain(_) => "domain",
        Error::McBudget(_) => "mc_budget",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim()}));
            return ExitCode::from(1);
        }
    };
    if let Some(n) = std::env::var("ISING_SEMBED_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("{}", json!({"error": error_kind(&e), "message": e.to_string()}));
            ExitCode::from(1)
        }
        Err(Failure::Check(what)) => {
            eprintln!("{}", json!({"error": "check_failed", "message": what}));
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Correlate(a) => correlate(a),
        Cmd::Kacward { cmd: KacwardCmd::Verify { graph, trials, tol, seed, common } } => {
            kacward_verify(graph, trials, tol, seed, common)
        }
        Cmd::SholoCheck(a) => sholo_check(a),
        Cmd::IsoCheck(a) => iso_check(a),
        Cmd::Sembed { cmd: SembedCmd::Build { graph, spinors, eps, seed, svg, tol, common } } => {
            sembed_build(&graph, spinors, eps, seed, svg, tol, common)
        }
        Cmd::Periodic(a) => periodic_harness(a),
        Cmd::Fk { cmd: FkCmd::Crossing { graph, mode, samples, seed, tol, common } } => {
            fk_crossing(graph, mode, samples, seed, tol, common)
        }
        Cmd::VerifyAll(a) => verify_all(a),
    }
}

fn check_tol(tol: f64) -> Result<f64, Failure> {
    if (1e-14..=1e-3).contains(&tol) {
        Ok(tol)
    } else {
        Err(Error::Input(format!("tolerance {tol:e} outside [1e-14, 1e-3]")).into())
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(e.into())),
        None => {
            // a closed pipe (`| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{}", text.trim_end());
            Ok(())
        }
    }
}

/// JSON by default; CSV flattens a flat object into `key,value` rows.
fn emit(common: &Common, v: &Value) -> Result<(), Failure> {
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(v).expect("report serializes") + "\n",
        Format::Csv => {
            let mut s = String::from("key,value\n");
            if let Value::Object(m) = v {
                for (k, x) in m {
                    let cell = match x {
                        Value::String(t) => t.clone(),
                        other => other.to_string(),
                    };
                    s.push_str(&format!("{k},\"{}\"\n", cell.replace('"', "\"\"")));
                }
            }
            s
        }
    };
    write_text(common.out.as_deref(), &text)
}

fn load_model(g: &GraphArgs, default_x: Option<f64>) -> Result<(PlanarMap, IsingWeights), Failure> {
    let json = GraphJson::load(&g.graph)?;
    Ok(json.to_model(g.weights.or(default_x))?)
}

fn gen(a: GenArgs) -> Outcome {
    let m = a.m.unwrap_or(a.n);
    let bc = GridBoundary::parse(&a.bc)?;
    let iso = |r: ising_core::Result<IsoradialMap>| -> Result<(PlanarMap, IsingWeights), Failure> {
        let i = r?;
        Ok((i.map, i.weights))
    };
    let (map, w) = match a.lattice {
        Lattice::Square => iso(square_lattice(a.delta, a.n, m, bc))?,
        Lattice::Rectangular => iso(rhombic_lattice(RhombicKind::Rectangular { theta: a.theta }, a.n, m, a.delta, bc))?,
        Lattice::Triangular => iso(rhombic_lattice(RhombicKind::Triangular, a.n, m, a.delta, bc))?,
        Lattice::Honeycomb => iso(rhombic_lattice(RhombicKind::Honeycomb, a.n, m, a.delta, bc))?,
        Lattice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let opt = RandomMapOptions { vertices: a.n, max_edges: a.max_edges, bridgeless: false, mixed_boundary: 0.5 };
            let map = random_map(&mut rng, opt)?;
            let x = (0..map.num_edges()).map(|_| rng.random_range(0.05..0.95)).collect();
            let w = IsingWeights::new(&map, x)?;
            (map, w)
        }
        Lattice::SelfDualQuad => {
            let map = fk::self_dual_quad(a.n)?;
            let w = IsingWeights::uniform(&map, X_CRIT_SQUARE)?;
            (map, w)
        }
    };
    let w = match a.x {
        Some(x) => IsingWeights::uniform(&map, x)?,
        None => w,
    };
    let text = GraphJson::from_map(&map, Some(&w)).to_string_pretty() + "\n";
    write_text(a.common.out.as_deref(), &text)
}

fn correlate(a: CorrelateArgs) -> Outcome {
    let (map, w) = load_model(&a.graph, None)?;
    let text = std::fs::read_to_string(&a.request).map_err(|e| Failure::Input(e.into()))?;
    let req: CorrelatorRequest = serde_json::from_str(&text).map_err(|e| Failure::Input(e.into()))?;
    let v = Oracle::new(&map, &w)?.mixed_correlator(&req)?;
    emit(&a.common, &serde_json::to_value(v).expect("serializes"))
}

fn kacward_verify(g: GraphArgs, trials: usize, tol: f64, seed: u64, common: Common) -> Outcome {
    let tol = check_tol(tol)?;
    let (map, w0) = load_model(&g, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let mut pass = true;
    for t in 0..=trials {
        let w = if t == 0 {
            w0.clone()
        } else {
            IsingWeights::new(&map, (0..map.num_edges()).map(|_| rng.random_range(0.05..0.95)).collect())?
        };
        // the oracle is only a reference while enumeration is affordable
        let z = Oracle::new(&map, &w).ok().map(|o| o.z());
        let r = ising_core::kacward::verify(&map, &w, z)?;
        pass &= r.passes(tol);
        reports.push(r);
    }
    let worst = reports.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    emit(&common, &json!({"pass": pass, "tol": tol, "max_rel_error": worst, "trials": reports}))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("Kac-Ward residual {worst:e} above {tol:e}")))
    }
}

fn sholo_check(a: SholoArgs) -> Outcome {
    let tol = check_tol(a.tol)?;
    let (map, w) = load_model(&a.graph, None)?;
    let text = std::fs::read_to_string(&a.request).map_err(|e| Failure::Input(e.into()))?;
    let req: CorrelatorRequest = serde_json::from_str(&text).map_err(|e| Failure::Input(e.into()))?;
    if !req.corners.is_empty() {
        return Err(Error::Input("the observable carries its own corner; pass disorders and spins only".into()).into());
    }
    let oracle = Oracle::new(&map, &w)?;
    let dual = dual_pair(&map)?;
    let obs: CornerSpinor = oracle.corner_observable(&req.disorders, &req.spins)?.into();
    let thetas = sholo::quad_thetas(&dual, &w);
    let mut prop: f64 = 0.0;
    for (z, q) in dual.quads.iter().enumerate() {
        if map.edge_kind(q.edge) == EdgeKind::Interior {
            prop = sholo::check_propagation(&obs, &dual, z, thetas[z]).iter().fold(prop, |m, r| m.max(r.abs()));
        }
    }
    let h = integrate_hf(&dual, &obs, default_base(&dual), 0.0, tol)?;
    let b = boundary_h_check(&map, &dual, &h, tol);
    if let Some(p) = &a.svg {
        let (pts, vals) = lambda_field(&map, &dual, &h);
        std::fs::write(p, svg::field_svg(&pts, &vals, "H_F")).map_err(|e| Failure::Input(e.into()))?;
    }
    let pass = prop <= tol && h.loop_closure <= tol && b.violations.is_empty();
    emit(
        &a.common,
        &json!({"pass": pass, "propagation_residual": prop, "loop_closure": h.loop_closure, "boundary": b}),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check("observable fails the propagation or boundary checks".into()))
    }
}

/// Positions and values of H on Λ: G vertices at their positions, faces at their dual points.
fn lambda_field(
    map: &PlanarMap,
    dual: &ising_core::planar_map::DualPair,
    h: &sholo::HFunction,
) -> (Vec<ising_core::C64>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for v in 0..map.num_vertices() {
        pts.push(map.pos(v));
        vals.push(h.bullet[dual.bullet_of[v]]);
    }
    for (u, p) in dual.circ_pos.iter().enumerate() {
        pts.push(*p);
        vals.push(h.circ[u]);
    }
    (pts, vals)
}

fn iso_check(a: IsoArgs) -> Outcome {
    let tol = check_tol(a.tol)?;
    let json = GraphJson::load(&a.graph)?;
    let iso = IsoradialMap::from_map(json.to_map()?, 1e-3)?;
    let (ib, ic) = interior_lambda(&iso);
    let stars: Vec<LambdaVertex> =
        ib.iter().map(|&v| LambdaVertex::Bullet(v)).chain(ic.iter().map(|&u| LambdaVertex::Circ(u))).collect();
    if stars.is_empty() {
        return Err(Error::Input("graph has no interior vertices".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let nc = iso.dual.corners.len();
    let (mut min_bullet, mut max_circ) = (f64::INFINITY, f64::NEG_INFINITY);
    let locals: Vec<LocalSpinors> = stars.iter().map(|&v| LocalSpinors::new(&iso, v)).collect();
    for t in 0..a.trials {
        let k = t % stars.len();
        let c: Vec<f64> = (0..locals[k].basis.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let val = positivity_check(&iso, &locals[k].spinor(nc, &c), stars[k], 1e-9)?;
        match stars[k] {
            LambdaVertex::Bullet(_) => min_bullet = min_bullet.min(val),
            LambdaVertex::Circ(_) => max_circ = max_circ.max(val),
        }
    }
    let (fb, fc) = iso_factorization_check(&iso);
    let pass = min_bullet >= -tol && max_circ <= tol && fb.max(fc) <= 1e-9;
    emit(
        &a.common,
        &json!({
            "pass": pass, "delta": iso.delta, "trials": a.trials,
            "min_delta_bullet": finite_or_null(min_bullet), "max_delta_circ": finite_or_null(max_circ),
            "factorization_bullet": fb, "factorization_circ": fc,
        }),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check("isoradial positivity or factorization fails".into()))
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn sembed_build(
    graph: &Path,
    spinors: Spinors,
    eps: f64,
    seed: u64,
    svg_out: Option<PathBuf>,
    tol: f64,
    common: Common,
) -> Outcome {
    let tol = check_tol(tol)?;
    let json = GraphJson::load(graph)?;
    let map = json.to_map()?;
    let dual = dual_pair(&map)?;
    let (w, s) = match spinors {
        Spinors::Dirac => {
            let iso = IsoradialMap::from_map(map.clone(), 1e-3)?;
            let (f1, f2) = isoradial_pair(&map, &dual)?;
            let s = build_sembedding(&dual, &iso.weights, &f1, &f2, default_base(&dual))?;
            (iso.weights, s)
        }
        Spinors::Perturbed => perturbed_isoradial(&map, &dual, eps, &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let proper = properness_check(&s, &dual);
    let rec = recover_weights(&s, &dual)?;
    let input = sholo::quad_thetas(&dual, &w);
    let theta_err = rec.theta.iter().zip(&input).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut warning = false;
    if let Some(p) = &svg_out {
        let r = svg::sembedding_svg(&s, &dual);
        warning = r.warning;
        std::fs::write(p, r.svg).map_err(|e| Failure::Input(e.into()))?;
    }
    let pt = |z: &ising_core::C64| [z.re, z.im];
    let pass = proper.proper && theta_err <= tol && rec.propagation_residual <= tol;
    emit(
        &common,
        &json!({
            "pass": pass, "proper": proper, "svg_warning": warning,
            "theta_recovery_error": theta_err, "center_gap": s.center_gap,
            "propagation_residual": rec.propagation_residual,
            "bullet": s.bullet.iter().map(pt).collect::<Vec<_>>(),
            "circ": s.circ.iter().map(pt).collect::<Vec<_>>(),
            "center": s.center.iter().map(pt).collect::<Vec<_>>(),
        }),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check("embedding is not proper or does not reproduce its weights".into()))
    }
}

fn periodic_harness(a: PeriodicArgs) -> Outcome {
    let (pm, x) = match a.lattice {
        Torus::Square => {
            let pm = periodic::square_torus(a.n, a.n)?;
            let x = periodic::square_critical_x(&pm);
            (pm, x)
        }
        Torus::Triangular => {
            let pm = periodic::triangular_torus()?;
            let x = vec![(std::f64::consts::FRAC_PI_6 / 2.0).tan(); pm.edges.len()];
            (pm, x)
        }
    };
    let x: Vec<f64> = x.iter().map(|v| v + a.shift).collect();
    let rep = periodic::conjecture_harness(&pm, &x)?;
    emit(&a.common, &serde_json::to_value(&rep).expect("serializes"))
}

fn fk_crossing(g: GraphArgs, mode: Mode, samples: usize, seed: u64, tol: f64, common: Common) -> Outcome {
    let tol = check_tol(tol)?;
    let (map, w) = load_model(&g, Some(X_CRIT_SQUARE))?;
    let fg = FkGraph::new(&map, &w)?;
    let rep = match mode {
        Mode::Exact => fk::crossing_exact(&fg)?,
        Mode::Mc => fk::crossing_mc(&fg, samples, seed)?,
    };
    let mut v = serde_json::to_value(&rep).expect("serializes");
    v["mode"] = json!(match mode {
        Mode::Exact => "exact",
        Mode::Mc => "mc",
    });
    v["edges"] = json!(fg.num_edges());
    emit(&common, &v)?;
    match rep.rho_residual {
        Some(r) if r > tol => Err(Failure::Check(format!("crossing identity residual {r:e} above {tol:e}"))),
        _ => Ok(()),
    }
}

fn verify_all(a: VerifyArgs) -> Outcome {
    let budget = if a.quick { Budget::quick() } else { Budget::full() };
    let ids: Vec<usize> = if a.only.is_empty() { (1..=verify::CRITERIA).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > verify::CRITERIA) {
        return Err(Error::Input(format!("no criterion {bad}")).into());
    }
    let mut results = Vec::new();
    for id in ids {
        let r = verify::run(id, budget);
        eprintln!("{r}");
        results.push(r);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    let text = match a.common.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({"quick": a.quick, "failed": failed, "criteria": results})).expect("serializes")
                + "\n"
        }
        Format::Csv => {
            let mut s = String::from("id,title,pass,seconds,detail\n");
            for r in &results {
                s.push_str(&format!("{},\"{}\",{},{:.3},\"{}\"\n", r.id, r.title, r.pass, r.seconds, r.detail.replace('"', "\"\"")));
            }
            s
        }
    };
    write_text(a.common.out.as_deref(), &text)?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("{failed} criteria failed")))
    }
}

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use prym_core::cm::{cm_residual, cm_rhs, integrate, theta_zero_comparison, zeros_in_window, CMState};
use prym_core::conditions::{
    jacobian_linear_solve, pde_residual_jacobian, pde_residual_prym, prym_linear_solve, search_flow_vectors,
    solved_flow_data, SearchError, SearchOptions,
};
use prym_core::data::{
    self, load_flow_data, load_prym_spectral_data, load_spectral_data, random_ppav, save_flow_data, FlowData, Mode,
};
use prym_core::divisor::{condition_c_residual, sample_theta_divisor, sys_residual, track_root};
use prym_core::psdo::{self, PsdoOp};
use prym_core::spectral::{self, SpectralInput};
use prym_core::theta::{theta_char, validate_period_matrix, Characteristic};
use prym_core::wave::{self, WaveGrid};
use prym_core::{DerivativeSpec, Error, Jet2, PeriodMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::Report;
use crate::{Ctx, Failure};

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn parse_c(s: &str) -> Result<C, Failure> {
    C::from_str(s.trim()).map_err(|_| Failure::input(format!("not a complex number: {s:?}")))
}

fn parse_cvec(s: &str) -> Result<Vec<C>, Failure> {
    s.split(',').map(parse_c).collect()
}

fn parse_pair(s: &str, sep: char) -> Result<(usize, usize), Failure> {
    let bad = || Failure::input(format!("expected A{sep}B, got {s:?}"));
    let (a, b) = s.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn z_or_zero(z: &Option<String>, g: usize) -> Result<Vec<C>, Failure> {
    match z {
        Some(s) => {
            let v = parse_cvec(s)?;
            if v.len() != g {
                return Err(Error::DimensionMismatch { expected: g, got: v.len() }.into());
            }
            Ok(v)
        }
        None => Ok(vec![c(0.0, 0.0); g]),
    }
}

/// Solved genus-one Prym data used when no file is given.
fn default_flow(seed: u64) -> Result<FlowData, Failure> {
    let b = random_ppav(1, seed)?;
    Ok(solved_flow_data(Mode::Prym, &b, &[c(1.0, 0.0)], &[c(0.6, 0.2)], &[c(0.2, 0.15)])?.0)
}

fn flow_or_default(ctx: &mut Ctx, path: &Option<PathBuf>) -> Result<FlowData, Failure> {
    match path {
        Some(p) => Ok(load_flow_data(&ctx.read(p)?)?),
        None => {
            ctx.param("default_flow_seed", ctx.seed());
            default_flow(ctx.seed())
        }
    }
}

fn xt_samples(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn indecomposability(r: &mut Report) {
    r.warn("hypothesis not checked: B is assumed indecomposable");
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ThetaEvalArgs {
    /// JSON document with a "B" (or "Pi") period matrix; random_ppav(genus, seed) otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    genus: usize,
    /// Comma-separated complex entries, e.g. "0.1+0.2i,0.3".
    #[arg(long)]
    z: Option<String>,
    /// Characteristic entries (0 or 0.5), comma-separated.
    #[arg(long = "char")]
    characteristic: Option<String>,
    /// Derivative direction (repeatable, at most 4).
    #[arg(long = "dir")]
    dirs: Vec<String>,
}

fn matrix_from_document(bytes: &[u8]) -> Result<PeriodMatrix, Failure> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let m = v
        .get("B")
        .or_else(|| v.get("Pi"))
        .ok_or_else(|| Error::Schema("document has neither \"B\" nor \"Pi\"".into()))?;
    Ok(validate_period_matrix(&data::matrix_from_json(m, "B")?)?)
}

pub fn theta_eval(a: &ThetaEvalArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let b = match &a.data {
        Some(p) => matrix_from_document(&ctx.read(p)?)?,
        None => {
            ctx.param("genus", a.genus);
            ctx.param("seed", ctx.seed());
            random_ppav(a.genus, ctx.seed())?
        }
    };
    let g = b.genus();
    let z = z_or_zero(&a.z, g)?;
    let eps = match &a.characteristic {
        Some(s) => {
            let e: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::input(format!("bad characteristic {s:?}"))))
                .collect::<Result<_, _>>()?;
            if e.len() != g {
                return Err(Error::DimensionMismatch { expected: g, got: e.len() }.into());
            }
            Characteristic::new(&e)?
        }
        None => Characteristic::zero(g),
    };
    let dirs = a.dirs.iter().map(|d| parse_cvec(d)).collect::<Result<Vec<_>, _>>()?;
    if dirs.iter().any(|d| d.len() != g) {
        return Err(Failure::input("derivative direction length differs from the genus"));
    }
    let spec = DerivativeSpec::new(dirs)?;
    let tol = ctx.threshold("theta-eval", "tolerance");
    ctx.param("z", format!("{z:?}"));
    ctx.param("char", format!("{eps:?}"));
    ctx.param("dirs", format!("{:?}", spec.directions()));
    ctx.param("tolerance", tol);
    let r = theta_char(&eps, &z, &b, &spec, tol)?;
    let mut rep = Report::new("theta-eval", String::new());
    rep.metric("error_bound", r.error_bound, tol);
    rep.value("re", r.value.re);
    rep.value("im", r.value.im);
    rep.value("lattice_points", r.lattice_points_used as f64);
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// FlowData document.
    #[arg(long)]
    data: PathBuf,
    /// Shift vector Z of the PDE samples.
    #[arg(long)]
    z: Option<String>,
}

pub fn check(a: &CheckArgs, mode: Mode, ctx: &mut Ctx) -> Result<Report, Failure> {
    let section = match mode {
        Mode::Jacobian => "check-jacobian",
        Mode::Prym => "check-prym",
    };
    let d = load_flow_data(&ctx.read(&a.data)?)?;
    let z = z_or_zero(&a.z, d.genus())?;
    let n = ctx.samples(section);
    let (solve_tol, pde_tol) = (ctx.threshold(section, "solve"), ctx.threshold(section, "pde"));
    ctx.param("samples", n);
    ctx.param("seed", ctx.seed());
    ctx.param("z", format!("{z:?}"));
    ctx.param("thresholds", format!("{solve_tol:e},{pde_tol:e}"));
    let mut rep = Report::new(section, String::new());
    if d.mode != mode {
        rep.warn(format!("data declares mode {:?}; checking as {:?}", d.mode, mode));
    }
    let solve = match mode {
        Mode::Jacobian => jacobian_linear_solve(&d.b, &d.u, &d.v, &d.a)?,
        Mode::Prym => prym_linear_solve(&d.b, &d.u, &d.v, &d.a)?,
    };
    rep.metric("solve_residual", solve.residual, solve_tol);
    for (k, v) in &solve.solved_constants {
        rep.value(format!("solved_{k}_re"), v.re);
        rep.value(format!("solved_{k}_im"), v.im);
    }
    let samples = xt_samples(ctx.seed(), n);
    let pde = match mode {
        Mode::Jacobian => pde_residual_jacobian(&d, &samples, &z)?,
        Mode::Prym => pde_residual_prym(&d, &samples, &z)?,
    };
    rep.metric("pde_residual", pde, pde_tol);
    indecomposability(&mut rep);
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Jacobian,
    Prym,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Source of B (any document with "B"); random_ppav(genus, seed) otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    genus: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Prym)]
    mode: ModeArg,
    #[arg(long)]
    restarts: Option<usize>,
    /// Write the best FlowData here.
    #[arg(long)]
    flow_out: Option<PathBuf>,
}

pub fn search(a: &SearchArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let seed = ctx.seed();
    let b = match &a.data {
        Some(p) => matrix_from_document(&ctx.read(p)?)?,
        None => {
            let g = a.genus.unwrap_or_else(|| ctx.config.count("search", "genus"));
            ctx.param("genus", g);
            random_ppav(g, seed)?
        }
    };
    let mode = match a.mode {
        ModeArg::Jacobian => Mode::Jacobian,
        ModeArg::Prym => Mode::Prym,
    };
    let tol = ctx.threshold("search", "tolerance");
    let restarts = a.restarts.unwrap_or_else(|| ctx.config.count("search", "restarts"));
    ctx.param("seed", seed);
    ctx.param("mode", mode.as_str());
    ctx.param("restarts", restarts);
    ctx.param("tolerance", tol);
    let opts = SearchOptions { restarts, threshold: tol, ..Default::default() };
    let mut rep = Report::new("search", String::new());
    let result = match search_flow_vectors(&b, mode, seed, &opts) {
        Ok(r) => r,
        Err(SearchError::NoConvergence(r)) => {
            rep.warn(format!("no restart reached {tol:e}"));
            *r
        }
        Err(SearchError::Failed(e)) => return Err(e.into()),
    };
    rep.metric("residual", result.residual, tol);
    rep.series.insert("restart_residuals".into(), result.trace.iter().map(|t| t.residual).collect());
    if let (Some(flow), Some(path)) = (&result.flow, &a.flow_out) {
        std::fs::write(path, save_flow_data(flow)).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    indecomposability(&mut rep);
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct DataArgs {
    /// FlowData document; solved genus-one Prym data from random_ppav(1, seed) otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    z: Option<String>,
}

pub fn divisor_test(a: &DataArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = flow_or_default(ctx, &a.data)?;
    let n = ctx.samples("divisor-test");
    let tol = ctx.threshold("divisor-test", "tolerance");
    ctx.param("samples", n);
    ctx.param("seed", ctx.seed());
    ctx.param("tolerance", tol);
    let pts = sample_theta_divisor(&d.b, ctx.seed(), n)?;
    let mut rep = Report::new("divisor-test", String::new());
    let mut worst = 0.0f64;
    let mut tiny = 0;
    let mut all = Vec::new();
    for s in &pts {
        match condition_c_residual(&d.b, &d.u, &d.v, s) {
            Ok(r) => {
                worst = worst.max(r);
                all.push(r);
            }
            Err(Error::AllTermsTiny) => tiny += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if tiny > 0 {
        rep.warn(format!("{tiny} samples skipped: all products below the floor"));
    }
    if all.is_empty() {
        return Err(Error::EmptySamples.into());
    }
    rep.metric("condition_c_residual", worst, tol);
    rep.series.insert("residuals".into(), all);
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RootTrackArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Initial guess for η(0); the first zero found near the origin otherwise.
    #[arg(long)]
    guess: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
}

fn first_zero(d: &FlowData, z: &[C]) -> Result<C, Failure> {
    let zs = zeros_in_window(d, z, (c(-1.5, -1.5), c(1.5, 1.5)), 0.0)?;
    zs.first().copied().ok_or_else(|| Error::NoZeros.into())
}

pub fn root_track(a: &RootTrackArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = flow_or_default(ctx, &a.data.data)?;
    let z = z_or_zero(&a.data.z, d.genus())?;
    let t_end = a.t_end.unwrap_or_else(|| ctx.config.num("root-track", "t_end"));
    let nodes = a.nodes.unwrap_or_else(|| ctx.config.count("root-track", "nodes"));
    let tol = ctx.threshold("root-track", "tolerance");
    let guess = match &a.guess {
        Some(s) => parse_c(s)?,
        None => first_zero(&d, &z)?,
    };
    ctx.param("z", format!("{z:?}"));
    ctx.param("guess", guess);
    ctx.param("t_end", t_end);
    ctx.param("nodes", nodes);
    ctx.param("tolerance", tol);
    let tr = track_root(&d, &z, (0.0, t_end), nodes, guess)?;
    let res = sys_residual(&tr);
    let mut rep = Report::new("root-track", String::new());
    let valid: Vec<f64> = res.iter().flatten().copied().collect();
    let degenerate = res.len() - valid.len();
    if degenerate > 0 {
        rep.warn(format!("{degenerate} degenerate nodes (η̇ ≈ 0) excluded"));
    }
    if valid.is_empty() {
        return Err(Error::DegenerateRoot.into());
    }
    rep.metric("sys_residual", valid.iter().cloned().fold(0.0, f64::max), tol);
    rep.value("degenerate_nodes", degenerate as f64);
    rep.series.insert("eta_re".into(), tr.eta.iter().map(|e| e.re).collect());
    rep.series.insert("eta_im".into(), tr.eta.iter().map(|e| e.im).collect());
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct WaveArgs {
    /// Modulus of the genus-one curve.
    #[arg(long, default_value = "0+1i")]
    tau: String,
    /// u = 2v(ln θ)''(x + vt + z) + c.
    #[arg(long, default_value_t = 0.1)]
    v: f64,
    #[arg(long, default_value = "0.1")]
    z: String,
    #[arg(long, default_value_t = 0.3)]
    c: f64,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Use finite differences in t instead of exact t-Taylor data.
    #[arg(long)]
    fd: bool,
    /// Skip the refinement run.
    #[arg(long)]
    no_refine: bool,
}

pub fn wave_build(a: &WaveArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let (tau, z) = (parse_c(&a.tau)?, parse_c(&a.z)?);
    let grid_s = ctx.common.grid.clone().unwrap_or_else(|| ctx.config.text("wave-build", "grid"));
    let (nx, nt) = parse_pair(&grid_s, 'x')?;
    let order = a.order.unwrap_or_else(|| ctx.config.count("wave-build", "order"));
    let t_end = a.t_end.unwrap_or_else(|| ctx.config.num("wave-build", "t_end"));
    let tol = ctx.threshold("wave-build", "tolerance");
    let min_ratio = ctx.config.num("wave-build", "refinement");
    for (k, v) in [("tau", tau.to_string()), ("v", a.v.to_string()), ("z", z.to_string()), ("c", a.c.to_string())] {
        ctx.param(k, v);
    }
    ctx.param("grid", format!("{nx}x{nt}"));
    ctx.param("order", order);
    ctx.param("t_end", t_end);
    ctx.param("fd", a.fd);
    ctx.param("refine", !a.no_refine);
    ctx.param("tolerance", tol);
    let ut = wave::genus_one_potential(tau, a.v, z, a.c)?;
    let u = |x: f64, t: f64| ut(x, t, 1)[0];
    let grid = WaveGrid::new(nx, nt, 0.0, t_end)?;
    let build = |g: WaveGrid| {
        if a.fd {
            wave::build_wave_periodic(&u, g, order, 0.0)
        } else {
            wave::build_wave_periodic_taylor(&ut, g, order, 0.0)
        }
    };
    let ws = build(grid)?;
    let r1 = wave::wave_pde_residual(&ws, &u);
    let mut rep = Report::new("wave-build", String::new());
    for (s, r) in r1.iter().enumerate() {
        rep.metric(format!("residual_{s}"), *r, tol);
    }
    rep.value("b_re", ws.b.re);
    rep.value("b_im", ws.b.im);
    rep.series.insert("periodicity_defect".into(), ws.periodicity_defect.clone());
    if !a.no_refine {
        let r2 = wave::wave_pde_residual(&build(grid.refined())?, &u);
        // order 0 is zero up to rounding and carries no convergence information
        let worst = (1..r1.len()).map(|s| r2[s] / r1[s]).fold(0.0, f64::max);
        rep.metric("inverse_refinement_ratio", worst, 1.0 / min_ratio);
        rep.series.insert("residual_refined".into(), r2);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------

fn random_op(rng: &mut ChaCha8Rng, lo: i32, hi: i32, nt: usize) -> Result<PsdoOp<C>, Failure> {
    let base = (c(0.0, 0.0), c(0.0, 0.0));
    let jets = (lo..=hi)
        .map(|_| {
            let v: Vec<C> = (0..2 * nt).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            Jet2::from_fn(base, 2, nt, |a, b| v[a * nt + b])
        })
        .collect();
    Ok(PsdoOp::from_jets(base, lo, jets, None)?)
}

pub fn psdo_verify(a: &DataArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = flow_or_default(ctx, &a.data)?;
    if d.genus() != 1 {
        return Err(Error::GenusOutOfRange(d.genus()).into());
    }
    let z = match &a.z {
        Some(_) => z_or_zero(&a.z, 1)?,
        None => vec![c(0.13, 0.21)],
    };
    let jo = ctx.common.jet_orders.clone().unwrap_or_else(|| ctx.config.text("psdo-verify", "jet_orders"));
    let (nx, nt) = parse_pair(&jo, ',')?;
    let s = ctx.config.count("psdo-verify", "order");
    let n = ctx.samples("psdo-verify");
    let (tol, pair_tol) = (ctx.threshold("psdo-verify", "tolerance"), ctx.threshold("psdo-verify", "pairing"));
    ctx.param("z", format!("{z:?}"));
    ctx.param("jet_orders", format!("{nx},{nt}"));
    ctx.param("order", s);
    ctx.param("samples", n);
    ctx.param("seed", ctx.seed());
    ctx.param("thresholds", format!("{tol:e},{pair_tol:e}"));
    let base = (c(0.0, 0.0), c(0.0, 0.0));
    let tw = psdo::theta_wave_jets(&d, &z, base, s, nx, nt)?;
    let (phi, l) = psdo::build_phi_and_l(&tw.xi, s)?;
    let mut rep = Report::new("psdo-verify", String::new());
    rep.metric("wave_equation", psdo::check_wave_equation(&phi, &tw.u, tw.b)?, tol);
    rep.metric("symbol_identity", psdo::check_symbol_identity(&phi, &l)?, tol);
    rep.metric("adjoint_relation", psdo::check_adjoint_relation(&l)?, tol);
    for m in 2..=3 {
        rep.metric(format!("plus_adjoint_{m}"), psdo::check_plus_adjoint(&l, m)?, tol);
    }
    for m in 0..=2 {
        rep.metric(format!("odd_residue_{m}"), psdo::check_odd_residue(&l, m)?, tol);
        rep.metric(format!("even_residue_{m}"), psdo::check_even_residue(&l, m)?, tol);
    }
    rep.metric("j_series", psdo::check_j_series(&phi, &l, 4)?, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let mut worst = 0.0f64;
    for _ in 0..n {
        let d1 = random_op(&mut rng, -3, 3, 12)?;
        let d2 = random_op(&mut rng, -3, 3, 12)?;
        let (lhs, rhs, dev) = psdo::pairing_residue_identity(&d1, &d2)?;
        worst = worst.max(dev / lhs.magnitude().max(rhs.magnitude()).max(1.0));
    }
    rep.metric("pairing", worst, pair_tol);
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CmArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Result<CMState, Failure> {
    loop {
        let x: Vec<C> = (0..n).map(|_| c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
        let v: Vec<C> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let s = CMState::new(x, v, 0.0)?;
        if s.min_separation() > 0.1 {
            return Ok(s);
        }
    }
}

pub fn cm_sim(a: &CmArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = flow_or_default(ctx, &a.data.data)?;
    let z = match &a.data.z {
        Some(_) => z_or_zero(&a.data.z, d.genus())?,
        None => vec![c(0.05, -0.1); d.genus()],
    };
    let n = ctx.samples("cm-sim");
    let t_end = a.t_end.unwrap_or_else(|| ctx.config.num("cm-sim", "t_end"));
    let nodes = a.nodes.unwrap_or_else(|| ctx.config.count("cm-sim", "nodes"));
    let tol = ctx.threshold("cm-sim", "tolerance");
    let rhs_tol = ctx.threshold("cm-sim", "rhs");
    let mom_tol = ctx.threshold("cm-sim", "momentum");
    ctx.param("z", format!("{z:?}"));
    ctx.param("samples", n);
    ctx.param("seed", ctx.seed());
    ctx.param("t_end", t_end);
    ctx.param("nodes", nodes);
    ctx.param("thresholds", format!("{tol:e},{rhs_tol:e},{mom_tol:e}"));
    let mut rep = Report::new("cm-sim", String::new());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let mut worst = 0.0f64;
    for k in 0..n {
        let s = random_state(&mut rng, 2 + k % 5)?;
        let acc = cm_rhs(&s)?;
        worst = cm_residual(&s, &acc)?.into_iter().fold(worst, f64::max);
    }
    rep.metric("sum_form_residual", worst, rhs_tol);
    let mut s0 = random_state(&mut rng, 4)?;
    s0.xdot.iter_mut().for_each(|v| *v *= 0.05);
    let p0: C = s0.xdot.iter().sum();
    let tr = integrate(&s0, 10.0, 1e-9)?;
    let drift = tr.iter().map(|s| (s.xdot.iter().sum::<C>() - p0).norm()).fold(0.0, f64::max);
    rep.metric("momentum_drift", drift, mom_tol);
    let x0 = first_zero(&d, &z)?;
    let w = (x0 - c(0.05, 0.05), x0 + c(0.05, 0.05));
    let cmp = theta_zero_comparison(&d, &z, w, (0.0, t_end), nodes)?;
    rep.metric("cm_deviation", cmp.cm_deviation, tol);
    rep.metric("sys_deviation", cmp.sys_deviation, tol);
    if let Some(p) = cmp.positions.first() {
        rep.series.insert("zero_re".into(), p.iter().map(|e| e.re).collect());
        rep.series.insert("zero_im".into(), p.iter().map(|e| e.im).collect());
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SpectralArgs {
    /// Spectral data (two-point or Prym form); the bundled genus-one dataset otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
}

pub fn spectral_check(a: &SpectralArgs, ctx: &mut Ctx) -> Result<Report, Failure> {
    enum Loaded {
        Two(data::SpectralData),
        Prym(data::PrymSpectralData),
    }
    let loaded = match &a.data {
        Some(p) => {
            let bytes = ctx.read(p)?;
            if data::is_prym_spectral_document(&bytes) {
                Loaded::Prym(load_prym_spectral_data(&bytes)?)
            } else {
                Loaded::Two(load_spectral_data(&bytes)?)
            }
        }
        None => {
            ctx.param("dataset", "bundled");
            Loaded::Prym(spectral::bundled_dataset())
        }
    };
    let n = ctx.samples("spectral-check");
    let tol = ctx.threshold("spectral-check", "tolerance");
    ctx.param("samples", n);
    ctx.param("seed", ctx.seed());
    ctx.param("tolerance", tol);
    let (input, labels): (SpectralInput, Vec<String>) = match &loaded {
        Loaded::Two(sd) => (SpectralInput::TwoPoint(sd), sd.points.iter().map(|p| p.label.clone()).collect()),
        Loaded::Prym(pd) => (SpectralInput::Prym(pd), pd.points.iter().map(|p| p.label.clone()).collect()),
    };
    let mut rep = Report::new("spectral-check", String::new());
    let xt = xt_samples(ctx.seed(), n);
    let mut worst = 0.0f64;
    let mut used = 0;
    let mut skipped = 0;
    for smp in spectral::grid_samples(labels.iter().map(|s| s.as_str()), &xt) {
        match spectral::h_equation_residual(input, std::slice::from_ref(&smp)) {
            Ok(r) => {
                worst = worst.max(r);
                used += 1;
            }
            Err(Error::OnDivisor) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if skipped > 0 {
        rep.warn(format!("{skipped} samples on the theta divisor skipped"));
    }
    if used == 0 {
        return Err(Error::EmptySamples.into());
    }
    rep.metric("h_residual", worst, tol);
    if let Loaded::Two(sd) = &loaded {
        let dev = labels
            .iter()
            .map(|l| spectral::ba_eval(sd, l, &spectral::Times::new()).map(|v| (v - 1.0).norm()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rep.metric("ba_zero_deviation", dev, ctx.config.num("spectral-check", "ba_zero"));
    }
    Ok(rep)
}

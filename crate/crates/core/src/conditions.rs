//! Linear solves and residuals for the Jacobian condition (heat/KP-type addition formula)
//! and the Prym condition (Schrödinger-type addition formula), PDE residual checks for
//! the corresponding wave functions, the flow-vector search and the Kummer map.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::data::{is_zero_vec, FlowData, Mode};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::theta::{theta_char, theta_partials, Characteristic, DerivativeSpec, ThetaPartials};
use crate::PeriodMatrix;

type C = Complex64;

/// Absolute target for theta sums inside the pipelines.
pub const THETA_TARGET: f64 = 1e-15;
const PDE_FLOOR: f64 = 1e-14;

fn cz() -> C {
    C::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    /// max |per_characteristic| / scale.
    pub residual: f64,
    pub solved_constants: BTreeMap<String, C>,
    pub per_characteristic: Vec<C>,
    pub scale: f64,
}

/// Partials of Θ[ε,0] = θ[ε,0](2·|2B) at A/2 for every ε, sharing one copy of 2B.
fn level2_rows(
    b: &PeriodMatrix,
    u: &[C],
    v: &[C],
    a: &[C],
    max_u: usize,
    max_v: usize,
) -> Result<Vec<ThetaPartials<f64>>> {
    let g = b.genus();
    for (name, w) in [("U", u), ("V", v), ("A", a)] {
        if w.len() != g {
            let _ = name;
            return Err(Error::DimensionMismatch { expected: g, got: w.len() });
        }
    }
    let b2 = b.scaled(2.0)?;
    let u2: Vec<C> = u.iter().map(|&x| x * 2.0).collect();
    let v2: Vec<C> = v.iter().map(|&x| x * 2.0).collect();
    // Θ(A/2) = θ(A | 2B)
    Characteristic::all(g)
        .iter()
        .map(|eps| theta_partials(eps, a, &b2, &u2, &v2, max_u, max_v, THETA_TARGET))
        .collect()
}

/// Least squares (minimum norm) for a complex system via SVD.
fn lstsq(m: &DMatrix<C>, rhs: &DVector<C>) -> Result<DVector<C>> {
    let amax = m.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !(amax > 0.0) || !amax.is_finite() {
        return Err(Error::DegenerateSystem);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(rhs, smax * 1e-14).map_err(|_| Error::DegenerateSystem)
}

fn report(
    coeffs: &[Vec<C>],
    rhs: &[C],
    names: &[&str],
    extra_scale: &[f64],
) -> Result<(ConditionReport, Vec<C>)> {
    let rows = coeffs.len();
    let cols = names.len();
    let m = DMatrix::from_fn(rows, cols, |i, j| coeffs[i][j]);
    let r = DVector::from_fn(rows, |i, _| rhs[i]);
    let x = lstsq(&m, &r)?;
    let per: Vec<C> = (0..rows)
        .map(|i| (0..cols).fold(cz(), |acc, j| acc + coeffs[i][j] * x[j]) - rhs[i])
        .collect();
    let scale = extra_scale.iter().cloned().fold(0.0, f64::max);
    let residual = per.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    let solved = names.iter().zip(x.iter()).map(|(n, v)| (n.to_string(), *v)).collect();
    Ok((
        ConditionReport { residual, solved_constants: solved, per_characteristic: per, scale },
        x.iter().cloned().collect(),
    ))
}

/// Solve ∂_VΘ − ∂_U²Θ − 2p∂_UΘ + μΘ = 0 (all ε, at A/2) for (p, μ = E − p²).
pub fn jacobian_linear_solve(b: &PeriodMatrix, u: &[C], v: &[C], a: &[C]) -> Result<ConditionReport> {
    if is_zero_vec(u) {
        return Err(Error::ZeroVector("U"));
    }
    let rows = level2_rows(b, u, v, a, 2, 1)?;
    let mut coeffs = Vec::new();
    let mut rhs = Vec::new();
    let mut scales = Vec::new();
    for r in &rows {
        let (th, tu, tuu, tv) = (r.get(0, 0), r.get(1, 0), r.get(2, 0), r.get(0, 1));
        coeffs.push(vec![-2.0 * tu, th]);
        rhs.push(tuu - tv);
        scales.push([th.norm(), tu.norm(), tuu.norm(), tv.norm()].into_iter().fold(0.0, f64::max));
    }
    let (mut rep, x) = report(&coeffs, &rhs, &["p", "mu"], &scales)?;
    rep.solved_constants.insert("E".into(), x[1] + x[0] * x[0]);
    Ok(rep)
}

/// Solve ∂²_{UV}Θ + p∂_VΘ + E∂_UΘ + C'Θ = 0 (all ε, at A/2) for (p, E, C').
///
/// C' is the raw constant of the bilinear system; the potential constant of
/// u = 2∂²_{xt} ln θ + C is C = C' − pE and is reported as "C" (C' as "C_bilinear").
pub fn prym_linear_solve(b: &PeriodMatrix, u: &[C], v: &[C], a: &[C]) -> Result<ConditionReport> {
    if is_zero_vec(u) {
        return Err(Error::ZeroVector("U"));
    }
    if is_zero_vec(v) {
        return Err(Error::ZeroVector("V"));
    }
    let rows = level2_rows(b, u, v, a, 1, 1)?;
    let mut coeffs = Vec::new();
    let mut rhs = Vec::new();
    let mut scales = Vec::new();
    for r in &rows {
        let (th, tu, tv, tuv) = (r.get(0, 0), r.get(1, 0), r.get(0, 1), r.get(1, 1));
        coeffs.push(vec![tv, tu, th]);
        rhs.push(-tuv);
        scales.push([th.norm(), tu.norm(), tv.norm(), tuv.norm()].into_iter().fold(0.0, f64::max));
    }
    let (mut rep, x) = report(&coeffs, &rhs, &["p", "E", "C_bilinear"], &scales)?;
    rep.solved_constants.insert("C".into(), x[2] - x[0] * x[1]);
    Ok(rep)
}

/// FlowData carrying the constants of a solve.
pub fn solved_flow_data(
    mode: Mode,
    b: &PeriodMatrix,
    u: &[C],
    v: &[C],
    a: &[C],
) -> Result<(FlowData, ConditionReport)> {
    let rep = match mode {
        Mode::Jacobian => jacobian_linear_solve(b, u, v, a)?,
        Mode::Prym => prym_linear_solve(b, u, v, a)?,
    };
    let k = &rep.solved_constants;
    let c = match mode {
        Mode::Jacobian => None,
        Mode::Prym => Some(k["C"]),
    };
    let d = FlowData::new(mode, b.clone(), u.to_vec(), v.to_vec(), a.to_vec(), k["p"], k["E"], c)?;
    Ok((d, rep))
}

// ---------------------------------------------------------------------------
// PDE residuals

/// Normalized Taylor jet of θ(z₀ + U·dx + V·dt) to orders (nx−1, nt−1), based at `base`.
pub fn theta_jet(
    b: &PeriodMatrix,
    z0: &[C],
    u: &[C],
    v: &[C],
    nx: usize,
    nt: usize,
    base: (C, C),
) -> Result<Jet2<C>> {
    let p = theta_partials(&Characteristic::zero(b.genus()), z0, b, u, v, nx - 1, nt - 1, THETA_TARGET)?;
    let fact = |n: usize| (1..=n).fold(1.0, |f, k| f * k as f64);
    Ok(Jet2::from_fn(base, nx, nt, |i, j| p.get(i, j) / (fact(i) * fact(j))))
}

/// |∇θ(z)| (Euclidean norm of the complex gradient).
pub fn gradient_norm(b: &PeriodMatrix, z: &[C]) -> Result<f64> {
    let g = b.genus();
    let mut s = 0.0;
    for k in 0..g {
        let mut e = vec![cz(); g];
        e[k] = C::new(1.0, 0.0);
        let d = DerivativeSpec::new(vec![e])?;
        s += theta_char(&Characteristic::zero(g), z, b, &d, THETA_TARGET)?.value.norm_sqr();
    }
    Ok(s.sqrt())
}

/// Sample-skipping test: |θ(z)| < 1e−8·(1 + |∇θ(z)|).
pub fn near_divisor(b: &PeriodMatrix, z: &[C], theta_value: C) -> Result<bool> {
    if theta_value.norm() >= 1e-8 * (1.0 + 1e4) {
        // cheap exit: far from the divisor unless the gradient is huge
        let grad = gradient_norm(b, z)?;
        return Ok(theta_value.norm() < 1e-8 * (1.0 + grad));
    }
    let grad = gradient_norm(b, z)?;
    Ok(theta_value.norm() < 1e-8 * (1.0 + grad))
}

fn exp_jet(p: C, e: C, x0: C, t0: C, nx: usize, nt: usize) -> Jet2<C> {
    let fact = |n: usize| (1..=n).fold(1.0, |f, k| f * k as f64);
    let scale = (p * x0 + e * t0).exp();
    Jet2::from_fn((x0, t0), nx, nt, |a, b| {
        scale * p.powu(a as u32) * e.powu(b as u32) / (fact(a) * fact(b))
    })
}

fn flow_point(d: &FlowData, z: &[C], x: C, t: C) -> Vec<C> {
    (0..d.genus()).map(|k| d.u[k] * x + d.v[k] * t + z[k]).collect()
}

/// Jets of ψ = θ(A+z)/θ(z)·e^{px+Et} and τ = θ(z) at z = Ux+Vt+Z; None on the divisor.
fn psi_tau_jets(d: &FlowData, z: &[C], x: C, t: C, nx: usize, nt: usize) -> Result<Option<(Jet2<C>, Jet2<C>)>> {
    let zp = flow_point(d, z, x, t);
    let za: Vec<C> = zp.iter().zip(&d.a).map(|(a, b)| a + b).collect();
    let tau = theta_jet(&d.b, &zp, &d.u, &d.v, nx, nt, (x, t))?;
    if near_divisor(&d.b, &zp, tau.value())? {
        return Ok(None);
    }
    let phi = theta_jet(&d.b, &za, &d.u, &d.v, nx, nt, (x, t))?;
    let psi = phi.div(&tau)?.mul(&exp_jet(d.p, d.e, x, t, nx, nt))?;
    Ok(Some((psi, tau)))
}

fn check_samples<T>(samples: &[T]) -> Result<()> {
    if samples.is_empty() {
        Err(Error::EmptySamples)
    } else {
        Ok(())
    }
}

/// Max over samples of |(∂_y − ∂_x² + u)ψ| / max(|∂_x²ψ|, |uψ|, floor), u = −2∂_x² ln θ.
pub fn pde_residual_jacobian(d: &FlowData, samples: &[(f64, f64)], z: &[C]) -> Result<f64> {
    check_samples(samples)?;
    let mut worst: Option<f64> = None;
    for &(x, y) in samples {
        let (x, y) = (C::new(x, 0.0), C::new(y, 0.0));
        let Some((psi, tau)) = psi_tau_jets(d, z, x, y, 3, 2)? else { continue };
        let u = tau.ln()?.diff_x().diff_x().scale(&C::new(-2.0, 0.0));
        let psi_y = psi.coeff(0, 1);
        let psi_xx = psi.coeff(2, 0) * 2.0;
        let upsi = u.value() * psi.value();
        let r = (psi_y - psi_xx + upsi).norm() / psi_xx.norm().max(upsi.norm()).max(PDE_FLOOR);
        worst = Some(worst.map_or(r, |w: f64| w.max(r)));
    }
    worst.ok_or(Error::EmptySamples)
}

/// Max over samples of |(∂_x∂_t + u)ψ| / max(|∂_x∂_tψ|, |uψ|, floor), u = 2∂²_{xt} ln θ + C.
pub fn pde_residual_prym(d: &FlowData, samples: &[(f64, f64)], z: &[C]) -> Result<f64> {
    check_samples(samples)?;
    let cst = d.c_or_zero();
    let mut worst: Option<f64> = None;
    for &(x, t) in samples {
        let (x, t) = (C::new(x, 0.0), C::new(t, 0.0));
        let Some((psi, tau)) = psi_tau_jets(d, z, x, t, 2, 2)? else { continue };
        let u = tau.ln()?.diff_x().diff_t().scale(&C::new(2.0, 0.0)).add_constant(&cst);
        let psi_xt = psi.coeff(1, 1);
        let upsi = u.value() * psi.value();
        let r = (psi_xt + upsi).norm() / psi_xt.norm().max(upsi.norm()).max(PDE_FLOOR);
        worst = Some(worst.map_or(r, |w: f64| w.max(r)));
    }
    worst.ok_or(Error::EmptySamples)
}

// ---------------------------------------------------------------------------
// Flow-vector search

#[derive(Clone, Debug, PartialEq)]
pub struct RestartRecord {
    pub index: usize,
    pub residual: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub flow: Option<FlowData>,
    pub residual: f64,
    /// Per-restart outcomes ordered by (residual, restart index).
    pub trace: Vec<RestartRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchError {
    /// Best residual stayed above the threshold; the best candidate is attached.
    NoConvergence(Box<SearchResult>),
    Failed(Error),
}

impl std::fmt::Display for SearchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchError::NoConvergence(r) => write!(
                f,
                "no convergence: best residual {:e} after {} restarts",
                r.residual,
                r.trace.len()
            ),
            SearchError::Failed(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SearchError {}

impl From<Error> for SearchError {
    fn from(e: Error) -> Self {
        SearchError::Failed(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub restarts: usize,
    pub threshold: f64,
    pub max_evaluations: usize,
    pub step_tolerance: f64,
    /// Levenberg–Marquardt polish after the simplex stage.
    pub polish: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            restarts: 20,
            threshold: 1e-8,
            max_evaluations: 5000,
            step_tolerance: 1e-12,
            polish: true,
        }
    }
}

fn unpack(x: &[f64], g: usize) -> (Vec<C>, Vec<C>, Vec<C>) {
    let vec_at = |off: usize| -> Vec<C> { (0..g).map(|k| C::new(x[off + k], x[off + g + k])).collect() };
    let normalize = |w: Vec<C>| -> Vec<C> {
        let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            w.into_iter().map(|z| z / n).collect()
        } else {
            w
        }
    };
    (normalize(vec_at(0)), normalize(vec_at(2 * g)), vec_at(4 * g))
}

fn condition_report(mode: Mode, b: &PeriodMatrix, x: &[f64]) -> Result<ConditionReport> {
    let (u, v, a) = unpack(x, b.genus());
    match mode {
        Mode::Jacobian => jacobian_linear_solve(b, &u, &v, &a),
        Mode::Prym => prym_linear_solve(b, &u, &v, &a),
    }
}

fn objective(mode: Mode, b: &PeriodMatrix, x: &[f64]) -> f64 {
    match condition_report(mode, b, x) {
        Ok(r) if r.residual.is_finite() => r.residual,
        _ => 1e3,
    }
}

/// Residual vector (re, im of each equation value over scale) for the polish stage.
fn residual_vector(mode: Mode, b: &PeriodMatrix, x: &[f64]) -> Option<Vec<f64>> {
    let r = condition_report(mode, b, x).ok()?;
    if !r.residual.is_finite() {
        return None;
    }
    Some(r.per_characteristic.iter().flat_map(|z| [z.re / r.scale, z.im / r.scale]).collect())
}

/// Nelder–Mead with dimension-adaptive coefficients. Returns (x, f, evaluations).
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    xtol: f64,
    ftarget: f64,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    loop {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]).then(i.cmp(&j)));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fs = idx.iter().map(|&i| fs[i]).collect();
        let diam = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if evals >= max_evals || diam < xtol || fs[0] <= ftarget {
            return (simplex[0].clone(), fs[0], evals);
        }
        let centroid: Vec<f64> =
            (0..n).map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect()
        };
        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < fs[0] {
            let xe = along(-alpha * beta);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                fs[n] = fe;
            } else {
                simplex[n] = xr;
                fs[n] = fr;
            }
        } else if fr < fs[n - 1] {
            simplex[n] = xr;
            fs[n] = fr;
        } else {
            let (xc, fc) = if fr < fs[n] {
                let xc = along(-alpha * gamma);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(gamma);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < fs[n].min(fr) {
                simplex[n] = xc;
                fs[n] = fc;
            } else {
                for i in 1..=n {
                    for k in 0..n {
                        simplex[i][k] = simplex[0][k] + delta * (simplex[i][k] - simplex[0][k]);
                    }
                    fs[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
}

/// Levenberg–Marquardt on a residual vector with a central-difference Jacobian.
fn levenberg_marquardt(
    r: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    x0: &[f64],
    max_iter: usize,
    rtol: f64,
) -> (Vec<f64>, usize) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some(mut rx) = r(&x) else { return (x, 1) };
    let mut evals = 1;
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let mut cost = norm2(&rx);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        if rx.iter().fold(0.0f64, |m, a| m.max(a.abs())) <= rtol {
            break;
        }
        let m = rx.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        let mut ok = true;
        for k in 0..n {
            let h = 1e-7 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            match (r(&xp), r(&xm)) {
                (Some(a), Some(b)) => {
                    for i in 0..m {
                        jac[(i, k)] = (a[i] - b[i]) / (2.0 * h);
                    }
                }
                _ => ok = false,
            }
            evals += 2;
        }
        if !ok {
            break;
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_vec(rx.clone());
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            evals += 1;
            if let Some(rn) = r(&xn) {
                let cn = norm2(&rn);
                if cn < cost {
                    x = xn;
                    rx = rn;
                    cost = cn;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (x, evals)
}

/// Multi-start search over (U, V, A) ∈ C^{3g} minimizing the linear-solve residual.
/// U and V are normalized to unit length (scaling them is a symmetry of the problem).
pub fn search_flow_vectors(
    b: &PeriodMatrix,
    mode: Mode,
    seed: u64,
    opts: &SearchOptions,
) -> std::result::Result<SearchResult, SearchError> {
    let g = b.genus();
    if opts.restarts == 0 {
        return Err(SearchError::NoConvergence(Box::new(SearchResult {
            flow: None,
            residual: f64::INFINITY,
            trace: Vec::new(),
        })));
    }
    let mut runs: Vec<(f64, usize, Vec<f64>, usize)> = (0..opts.restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)));
            let mut x0: Vec<f64> = (0..6 * g).map(|_| rng.random_range(-1.0..1.0)).collect();
            // A spread over a fundamental cell
            for k in 4 * g..6 * g {
                x0[k] *= 0.5;
            }
            let f = |x: &[f64]| objective(mode, b, x);
            let ftarget = opts.threshold * 1e-3;
            let (mut x, mut fx, mut evals) =
                nelder_mead(&f, &x0, 0.2, opts.max_evaluations, opts.step_tolerance, ftarget);
            if opts.polish && fx > 1e-14 {
                let rv = |x: &[f64]| residual_vector(mode, b, x);
                let (xp, e) = levenberg_marquardt(&rv, &x, 200, 1e-15);
                evals += e;
                let fp = f(&xp);
                evals += 1;
                if fp < fx {
                    x = xp;
                    fx = fp;
                }
            }
            (fx, index, x, evals)
        })
        .collect();
    runs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let trace = runs
        .iter()
        .map(|(r, i, _, e)| RestartRecord { index: *i, residual: *r, evaluations: *e })
        .collect();
    let (best_r, _, best_x, _) = runs.swap_remove(0);
    let (u, v, a) = unpack(&best_x, g);
    let flow = solved_flow_data(mode, b, &u, &v, &a).ok().map(|(d, _)| d);
    let result = SearchResult { flow, residual: best_r, trace };
    if best_r <= opts.threshold && result.flow.is_some() {
        Ok(result)
    } else {
        Err(SearchError::NoConvergence(Box::new(result)))
    }
}

/// Kummer coordinates (Θ[ε,0](Z))_ε in lexicographic ε order, scaled so the largest
/// coordinate equals 1.
pub fn kummer_image(z: &[C], b: &PeriodMatrix) -> Result<Vec<C>> {
    let g = b.genus();
    let none = DerivativeSpec::none();
    let coords: Vec<C> = Characteristic::all(g)
        .iter()
        .map(|eps| crate::theta::level2_theta(eps, z, b, &none, THETA_TARGET).map(|r| r.value))
        .collect::<Result<_>>()?;
    let (imax, big) = coords
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(i, m), (j, c)| if c.norm() > m { (j, c.norm()) } else { (i, m) });
    if !(big > 1e-14) {
        return Err(Error::AllZero);
    }
    let pivot = coords[imax];
    Ok(coords.iter().map(|c| c / pivot).collect())
}

/// Random flow vectors for negative controls: U, V with uniform(−1, 1) parts, A uniform on
/// the torus (A = x + By with x, y uniform in [0, 1)^g).
pub fn random_flow_vectors(rng: &mut impl Rng, b: &PeriodMatrix) -> (Vec<C>, Vec<C>, Vec<C>) {
    let g = b.genus();
    let mut draw = || -> Vec<C> { (0..g).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect() };
    let u = draw();
    let v = draw();
    let x: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
    let a = (0..g).map(|j| C::new(x[j], 0.0) + (0..g).map(|k| b.get(j, k) * y[k]).sum::<C>()).collect();
    (u, v, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::random_ppav;
    use crate::theta::{level2_theta, validate_period_matrix};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn b_i() -> PeriodMatrix {
        validate_period_matrix(&[vec![c(0.0, 1.0)]]).unwrap()
    }

    #[test]
    fn jacobian_genus_one_example() {
        let rep = jacobian_linear_solve(&b_i(), &[c(0.7, 0.0)], &[c(0.3, 0.1)], &[c(0.2, 0.4)]).unwrap();
        assert!(rep.residual <= 1e-10, "{}", rep.residual);
        assert_eq!(rep.per_characteristic.len(), 2);
        assert_eq!(
            jacobian_linear_solve(&b_i(), &[c(0.0, 0.0)], &[c(0.3, 0.1)], &[c(0.2, 0.4)]),
            Err(Error::ZeroVector("U"))
        );
    }

    #[test]
    fn prym_genus_one_is_underdetermined() {
        for seed in 0..5 {
            let b = random_ppav(1, seed).unwrap();
            let rep = prym_linear_solve(&b, &[c(0.6, 0.2)], &[c(-0.3, 0.5)], &[c(0.1, 0.3)]).unwrap();
            assert!(rep.residual <= 1e-12);
        }
        let b = random_ppav(2, 0).unwrap();
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        assert_eq!(
            prym_linear_solve(&b, &[c(1.0, 0.0), c(0.0, 0.0)], &zero, &zero),
            Err(Error::ZeroVector("V"))
        );
    }

    #[test]
    fn equation_values_match_independent_recomputation() {
        // rebuild each equation from single directional level-two evaluations
        let b = random_ppav(2, 5).unwrap();
        let u = vec![c(0.4, 0.1), c(-0.2, 0.3)];
        let v = vec![c(0.1, -0.5), c(0.6, 0.2)];
        let a = vec![c(0.3, 0.2), c(-0.1, 0.15)];
        let half: Vec<C> = a.iter().map(|x| x / 2.0).collect();
        let rep = prym_linear_solve(&b, &u, &v, &a).unwrap();
        let k = &rep.solved_constants;
        for (i, eps) in Characteristic::all(2).iter().enumerate() {
            let ev = |dirs: Vec<Vec<C>>| {
                level2_theta(eps, &half, &b, &DerivativeSpec::new(dirs).unwrap(), 1e-15).unwrap().value
            };
            let val = ev(vec![u.clone(), v.clone()])
                + k["p"] * ev(vec![v.clone()])
                + k["E"] * ev(vec![u.clone()])
                + k["C_bilinear"] * ev(vec![]);
            assert!((val - rep.per_characteristic[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn scaling_flow_vectors_rescales_equations() {
        let b = random_ppav(2, 8).unwrap();
        let u = vec![c(0.4, 0.1), c(-0.2, 0.3)];
        let v = vec![c(0.1, -0.5), c(0.6, 0.2)];
        let a = vec![c(0.3, 0.2), c(-0.1, 0.15)];
        let (lam, mu) = (c(1.7, -0.4), c(-0.3, 0.9));
        let r0 = prym_linear_solve(&b, &u, &v, &a).unwrap();
        let us: Vec<C> = u.iter().map(|x| x * lam).collect();
        let vs: Vec<C> = v.iter().map(|x| x * mu).collect();
        let r1 = prym_linear_solve(&b, &us, &vs, &a).unwrap();
        for (x, y) in r0.per_characteristic.iter().zip(&r1.per_characteristic) {
            assert!((x * lam * mu - y).norm() < 1e-10 * (1.0 + y.norm()));
        }
        assert!((r1.solved_constants["p"] - r0.solved_constants["p"] * lam).norm() < 1e-9);
    }

    #[test]
    fn pde_residuals_on_solved_genus_one_data() {
        let b = random_ppav(1, 4).unwrap();
        let (d, _) = solved_flow_data(Mode::Prym, &b, &[c(0.6, 0.2)], &[c(-0.3, 0.5)], &[c(0.1, 0.3)]).unwrap();
        let z = [c(0.05, 0.1)];
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (0.13 * k as f64, -0.07 * k as f64)).collect();
        assert!(pde_residual_prym(&d, &samples, &z).unwrap() < 1e-8);
        let mut bad = d.clone();
        bad.c = Some(bad.c.unwrap() + 0.1);
        assert!(pde_residual_prym(&bad, &samples, &z).unwrap() > 1e-2);
        assert_eq!(pde_residual_prym(&d, &[], &z), Err(Error::EmptySamples));

        let (dj, _) = solved_flow_data(Mode::Jacobian, &b_i(), &[c(0.7, 0.0)], &[c(0.3, 0.1)], &[c(0.2, 0.4)]).unwrap();
        assert!(pde_residual_jacobian(&dj, &samples, &z).unwrap() < 1e-8);
        let mut badj = dj.clone();
        badj.e += 0.1;
        assert!(pde_residual_jacobian(&badj, &samples, &z).unwrap() > 1e-2);
    }

    #[test]
    fn samples_on_divisor_are_skipped() {
        let (d, _) = solved_flow_data(Mode::Prym, &b_i(), &[c(1.0, 0.0)], &[c(0.5, 0.0)], &[c(0.1, 0.3)]).unwrap();
        // θ(z|i) vanishes at z = (1 + i)/2
        let z = [c(0.5, 0.5)];
        assert_eq!(pde_residual_prym(&d, &[(0.0, 0.0)], &z), Err(Error::EmptySamples));
    }

    #[test]
    fn kummer_properties() {
        let b = random_ppav(2, 1).unwrap();
        let z = vec![c(0.2, 0.1), c(-0.3, 0.25)];
        let mz: Vec<C> = z.iter().map(|x| -x).collect();
        let k1 = kummer_image(&z, &b).unwrap();
        let k2 = kummer_image(&mz, &b).unwrap();
        for (a, b) in k1.iter().zip(&k2) {
            assert!((a - b).norm() < 1e-12);
        }
        let k = kummer_image(&[c(0.0, 0.0)], &b_i()).unwrap();
        assert!((k[0] - 1.0).norm() < 1e-15);
        assert!((k[1].re - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn genus_one_search_is_immediate() {
        let b = random_ppav(1, 2).unwrap();
        let opts = SearchOptions { restarts: 2, ..Default::default() };
        let r = search_flow_vectors(&b, Mode::Prym, 7, &opts).unwrap();
        assert!(r.residual <= 1e-12);
        assert_eq!(
            search_flow_vectors(&b, Mode::Prym, 7, &SearchOptions { restarts: 0, ..Default::default() }),
            Err(SearchError::NoConvergence(Box::new(SearchResult {
                flow: None,
                residual: f64::INFINITY,
                trace: vec![]
            })))
        );
    }
}

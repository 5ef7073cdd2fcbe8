//! Theta-divisor sampling, the quartic divisor condition, root tracking of τ(x, t) = 0
//! and Laurent data of u = 2∂²_{xt} ln τ + C at the root.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::conditions::{gradient_norm, theta_jet, THETA_TARGET};
use crate::data::{is_zero_vec, FlowData};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::theta::{theta_char, theta_partials, Characteristic, DerivativeSpec};
use crate::PeriodMatrix;

type C = Complex64;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_STEPS: usize = 50;
const RETRIES: usize = 10;
const MEMBERSHIP: f64 = 1e-10;
const SIMPLE_TOL: f64 = 1e-8;
const PRODUCT_FLOOR: f64 = 1e-20;

fn cz() -> C {
    C::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivisorSample {
    pub z: Vec<C>,
    pub theta_abs: f64,
    pub grad_scale: f64,
}

impl DivisorSample {
    /// Re-evaluate θ and ∇θ at the stored point and check |θ| ≤ 1e−10·(1+|∇θ|).
    pub fn verify(&self, b: &PeriodMatrix) -> Result<bool> {
        let th = theta0(b, &self.z)?;
        let grad = gradient_norm(b, &self.z)?;
        Ok(th.norm() <= MEMBERSHIP * (1.0 + grad))
    }
}

fn theta0(b: &PeriodMatrix, z: &[C]) -> Result<C> {
    Ok(theta_char(&Characteristic::zero(b.genus()), z, b, &DerivativeSpec::none(), THETA_TARGET)?.value)
}

/// θ(z₀ + sW) and its s-derivative.
fn theta_along(b: &PeriodMatrix, z0: &[C], w: &[C], s: C) -> Result<(C, C)> {
    let z: Vec<C> = z0.iter().zip(w).map(|(a, d)| a + s * d).collect();
    let p = theta_partials(&Characteristic::zero(b.genus()), &z, b, w, w, 1, 0, THETA_TARGET)?;
    Ok((p.get(0, 0), p.get(1, 0)))
}

fn newton_line(b: &PeriodMatrix, z0: &[C], w: &[C]) -> Result<Option<Vec<C>>> {
    let mut s = cz();
    for _ in 0..NEWTON_STEPS {
        let (f, df) = theta_along(b, z0, w, s)?;
        if df.norm() == 0.0 || !df.is_finite() {
            return Ok(None);
        }
        let step = f / df;
        s -= step;
        if !s.is_finite() || s.norm() > 10.0 {
            return Ok(None);
        }
        if step.norm() <= NEWTON_TOL * (1.0 + s.norm()) {
            return Ok(Some(z0.iter().zip(w).map(|(a, d)| a + s * d).collect()));
        }
    }
    Ok(None)
}

/// Seeded Newton sampling of {θ = 0}: random base point in the fundamental cell, random
/// complex direction, scalar Newton along the line.
pub fn sample_theta_divisor(b: &PeriodMatrix, seed: u64, count: usize) -> Result<Vec<DivisorSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let g = b.genus();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..=RETRIES {
            let x: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
            let m: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
            let z0: Vec<C> = (0..g)
                .map(|j| {
                    let bm: C = (0..g).map(|k| b.get(j, k) * m[k]).sum();
                    bm + x[j]
                })
                .collect();
            let mut w: Vec<C> =
                (0..g).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            w.iter_mut().for_each(|z| *z /= n);
            let Some(z) = newton_line(b, &z0, &w)? else { continue };
            let th = theta0(b, &z)?.norm();
            let grad = gradient_norm(b, &z)?;
            if th <= MEMBERSHIP * (1.0 + grad) {
                found = Some(DivisorSample { z, theta_abs: th, grad_scale: grad });
                break;
            }
        }
        out.push(found.ok_or(Error::SamplingFailed)?);
    }
    Ok(out)
}

/// Relative size of
/// θ_Uθ_Vθ_UUVV + θ_UUθ_VVθ_UV − θ_UUθ_Vθ_UVV − θ_Uθ_VVθ_UUV at a divisor point.
pub fn condition_c_residual(b: &PeriodMatrix, u: &[C], v: &[C], s: &DivisorSample) -> Result<f64> {
    if is_zero_vec(u) {
        return Err(Error::ZeroVector("U"));
    }
    if is_zero_vec(v) {
        return Err(Error::ZeroVector("V"));
    }
    let p = theta_partials(&Characteristic::zero(b.genus()), &s.z, b, u, v, 2, 2, THETA_TARGET)?;
    let d = |a, c| p.get(a, c);
    let terms = [
        d(1, 0) * d(0, 1) * d(2, 2),
        d(2, 0) * d(0, 2) * d(1, 1),
        -(d(2, 0) * d(0, 1) * d(1, 2)),
        -(d(1, 0) * d(0, 2) * d(2, 1)),
    ];
    let big = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
    if big < PRODUCT_FLOOR {
        return Err(Error::AllTermsTiny);
    }
    Ok(terms.iter().sum::<C>().norm() / big)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootTrack {
    pub t_nodes: Vec<C>,
    pub eta: Vec<C>,
    pub eta_dot: Vec<C>,
    pub eta_ddot: Vec<C>,
    pub v: Vec<C>,
    pub w: Vec<C>,
    pub v_dot: Vec<C>,
}

/// τ and its derivatives up to (2, 2) at (x, t).
fn tau_partials(d: &FlowData, z: &[C], x: C, t: C) -> Result<crate::theta::ThetaPartials<f64>> {
    let zp: Vec<C> = (0..d.genus()).map(|k| d.u[k] * x + d.v[k] * t + z[k]).collect();
    theta_partials(&Characteristic::zero(d.genus()), &zp, &d.b, &d.u, &d.v, 2, 2, THETA_TARGET)
}

fn grad_at(d: &FlowData, z: &[C], x: C, t: C) -> Result<f64> {
    let zp: Vec<C> = (0..d.genus()).map(|k| d.u[k] * x + d.v[k] * t + z[k]).collect();
    gradient_norm(&d.b, &zp)
}

/// Newton in x on τ(·, t) = 0.
fn root_newton(d: &FlowData, z: &[C], guess: C, t: C) -> Result<C> {
    find_root(d, z, guess, t, 1.0)
}

/// Newton in x on τ(·, t) = 0, giving up when the iterate leaves the disc of `radius`
/// around the guess.
pub fn find_root(d: &FlowData, z: &[C], guess: C, t: C, radius: f64) -> Result<C> {
    let mut x = guess;
    for _ in 0..NEWTON_STEPS {
        let p = tau_partials(d, z, x, t)?;
        let (f, fx) = (p.get(0, 0), p.get(1, 0));
        if fx.norm() == 0.0 {
            return Err(Error::RootLost(t.re));
        }
        let step = f / fx;
        x -= step;
        if !x.is_finite() || (x - guess).norm() > radius {
            return Err(Error::RootLost(t.re));
        }
        if step.norm() <= 1e-13 * (1.0 + x.norm()) {
            return Ok(x);
        }
    }
    Err(Error::RootLost(t.re))
}

/// η̇ and η̈ from implicit differentiation of τ(η(t), t) = 0:
/// η̇ = −τ_t/τ_x, η̈ = −(τ_xx η̇² + 2τ_xt η̇ + τ_tt)/τ_x.
pub fn root_derivatives(d: &FlowData, z: &[C], eta: C, t: C) -> Result<(C, C)> {
    let p = tau_partials(d, z, eta, t)?;
    let fx = p.get(1, 0);
    let grad = grad_at(d, z, eta, t)?;
    if fx.norm() < SIMPLE_TOL * (1.0 + grad) {
        return Err(Error::NotSimple(fx.norm()));
    }
    let ed = -p.get(0, 1) / fx;
    let edd = -(p.get(2, 0) * ed * ed + p.get(1, 1) * ed * 2.0 + p.get(0, 2)) / fx;
    Ok((ed, edd))
}

/// Continue the simple root η(t) of τ(x, t) = θ(Ux+Vt+Z) over `nodes` equally spaced
/// times in `t_span`, starting from Newton at `guess`.
pub fn track_root(d: &FlowData, z: &[C], t_span: (f64, f64), nodes: usize, guess: C) -> Result<RootTrack> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("nodes must be at least 1".into()));
    }
    if z.len() != d.genus() {
        return Err(Error::DimensionMismatch { expected: d.genus(), got: z.len() });
    }
    let ts: Vec<C> = (0..nodes)
        .map(|k| {
            let s = if nodes == 1 { 0.0 } else { k as f64 / (nodes - 1) as f64 };
            C::new(t_span.0 + s * (t_span.1 - t_span.0), 0.0)
        })
        .collect();
    let mut tr = RootTrack {
        t_nodes: ts.clone(),
        eta: vec![],
        eta_dot: vec![],
        eta_ddot: vec![],
        v: vec![],
        w: vec![],
        v_dot: vec![],
    };
    let mut predicted = guess;
    for (k, &t) in ts.iter().enumerate() {
        let eta = root_newton(d, z, predicted, t)?;
        let (ed, edd) = root_derivatives(d, z, eta, t)?;
        let (v, w, vd) = laurent_coeffs_u(d, z, t, eta)?;
        tr.eta.push(eta);
        tr.eta_dot.push(ed);
        tr.eta_ddot.push(edd);
        tr.v.push(v);
        tr.w.push(w);
        tr.v_dot.push(vd);
        if let Some(&tn) = ts.get(k + 1) {
            let dt = tn - t;
            predicted = eta + ed * dt + edd * dt * dt * 0.5;
        }
    }
    Ok(tr)
}

/// Univariate series in t stored as a jet with one x-coefficient.
fn tseries(base: (C, C), coeffs: &[C]) -> Jet2<C> {
    Jet2::from_fn(base, 1, coeffs.len(), |_, b| coeffs[b])
}

/// Taylor series in (t − t₀) along the root: η(t), and v(t), w(t) of
/// u = 2η̇/(x−η)² + v + w(x−η) + … . Each list holds `n` normalized coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct RootSeries {
    pub eta: Vec<C>,
    pub v: Vec<C>,
    pub w: Vec<C>,
}

impl RootSeries {
    pub fn eta_dot(&self) -> Vec<C> {
        (1..self.eta.len()).map(|k| self.eta[k] * k as f64).collect()
    }
}

/// Laurent data of u along the root as t-series with `n` coefficients.
///
/// τ is factored as (X − e(T))·h(X, T) around (η, t), e the root as a series in T; the
/// regular part of u is then R = 2∂²_{xt} ln h + C, and v(T) = R(e(T), T),
/// w(T) = R_x(e(T), T).
pub fn root_laurent_series(d: &FlowData, z: &[C], t: C, eta: C, n: usize) -> Result<RootSeries> {
    let n = n.max(1);
    // h_a is exact through T^(NX−a−2); a ≤ n+1 is needed through T^n
    let nx = 2 * n + 4;
    let nt = n + 2;
    let base = (eta, t);
    let zp: Vec<C> = (0..d.genus()).map(|k| d.u[k] * eta + d.v[k] * t + z[k]).collect();
    let tau = theta_jet(&d.b, &zp, &d.u, &d.v, nx, nt, base)?;
    let grad = gradient_norm(&d.b, &zp)?;
    if tau.coeff(1, 0).norm() < SIMPLE_TOL * (1.0 + grad) {
        return Err(Error::NotSimple(tau.coeff(1, 0).norm()));
    }
    // X-coefficients of τ as series in T
    let ca: Vec<Jet2<C>> =
        (0..nx).map(|a| tseries(base, &(0..nt).map(|b| tau.coeff(a, b)).collect::<Vec<_>>())).collect();
    let dca: Vec<Jet2<C>> = (1..nx).map(|a| ca[a].scale(&C::new(a as f64, 0.0))).collect();
    let mut e = Jet2::zeros(base, 1, nt);
    for _ in 0..nt + 2 {
        let f = horner(&ca, &e)?;
        let df = horner(&dca, &e)?;
        e = e.sub(&f.div(&df)?)?;
    }
    // synthetic division by (X − e): h_a = C_{a+1} + e·h_{a+1}
    let mut h = vec![Jet2::zeros(base, 1, nt); nx - 1];
    h[nx - 2] = ca[nx - 1].clone();
    for a in (0..nx - 2).rev() {
        h[a] = ca[a + 1].add(&e.mul(&h[a + 1])?)?;
    }
    let hj = Jet2::from_fn(base, n + 2, n + 1, |a, b| h[a].coeff(0, b));
    let r = hj.ln()?.diff_x().diff_t().scale(&C::new(2.0, 0.0)).add_constant(&d.c_or_zero());
    let rx = r.diff_x();
    let compose = |j: &Jet2<C>| -> Result<Vec<C>> {
        let (jx, jt) = j.sizes();
        let rows: Vec<Jet2<C>> =
            (0..jx).map(|a| tseries(base, &(0..jt).map(|b| j.coeff(a, b)).collect::<Vec<_>>())).collect();
        let s = horner(&rows, &e.truncate(1, jt))?;
        Ok((0..n).map(|k| s.coeff(0, k)).collect())
    };
    Ok(RootSeries {
        eta: (0..=n).map(|k| if k == 0 { eta + e.coeff(0, 0) } else { e.coeff(0, k) }).collect(),
        v: compose(&r)?,
        w: compose(&rx)?,
    })
}

fn horner(coeffs: &[Jet2<C>], e: &Jet2<C>) -> Result<Jet2<C>> {
    let mut acc = coeffs[coeffs.len() - 1].clone();
    for c in coeffs[..coeffs.len() - 1].iter().rev() {
        acc = acc.mul(e)?.add(c)?;
    }
    Ok(acc)
}

/// (v, w, v̇) with u = 2η̇/(x−η)² + v + w(x−η) + …, v̇ the total t-derivative of v.
pub fn laurent_coeffs_u(d: &FlowData, z: &[C], t: C, eta: C) -> Result<(C, C, C)> {
    let s = root_laurent_series(d, z, t, eta, 2)?;
    Ok((s.v[0], s.w[0], s.v[1]))
}

/// Per-node relative residual of η̈v − η̇v̇ + 2η̇²w; `None` marks degenerate nodes (η̇ ≈ 0).
pub fn sys_residual(track: &RootTrack) -> Vec<Option<f64>> {
    (0..track.eta.len())
        .map(|k| {
            let (ed, edd) = (track.eta_dot[k], track.eta_ddot[k]);
            let (v, w, vd) = (track.v[k], track.w[k], track.v_dot[k]);
            if ed.norm() < 1e-10 {
                return None;
            }
            let terms = [edd * v, -(ed * vd), ed * ed * w * 2.0];
            let floor = 1e-6 * (1.0 + ed.norm()).powi(3) * (1.0 + v.norm());
            let big = terms.iter().map(|t| t.norm()).fold(floor, f64::max);
            Some(terms.iter().sum::<C>().norm() / big)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::solved_flow_data;
    use crate::data::{random_ppav, Mode};
    use crate::theta::validate_period_matrix;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn genus_one_samples_hit_the_odd_half_period() {
        let b = validate_period_matrix(&[vec![c(0.0, 1.0)]]).unwrap();
        let s = sample_theta_divisor(&b, 3, 8).unwrap();
        for p in &s {
            let w = p.z[0] - c(0.5, 0.5);
            assert!((w.re - w.re.round()).abs() < 1e-9 && (w.im - w.im.round()).abs() < 1e-9, "{:?}", p.z);
            assert!(p.verify(&b).unwrap());
        }
        assert_eq!(s, sample_theta_divisor(&b, 3, 8).unwrap());
    }

    #[test]
    fn condition_c_symmetries() {
        let b = random_ppav(2, 3).unwrap();
        let s = &sample_theta_divisor(&b, 1, 1).unwrap()[0];
        let u = [c(0.3, 0.2), c(-0.5, 0.1)];
        let v = [c(0.1, 0.4), c(0.2, -0.3)];
        let r = condition_c_residual(&b, &u, &v, s).unwrap();
        let rs = condition_c_residual(&b, &v, &u, s).unwrap();
        assert!((r - rs).abs() < 1e-12 * (1.0 + r));
        let (l, m) = (c(2.0, 1.0), c(-0.4, 0.7));
        let ul: Vec<C> = u.iter().map(|x| x * l).collect();
        let vm: Vec<C> = v.iter().map(|x| x * m).collect();
        let rl = condition_c_residual(&b, &ul, &vm, s).unwrap();
        assert!((r - rl).abs() < 1e-10 * (1.0 + r));
    }

    fn genus2_prym() -> (FlowData, Vec<C>) {
        // flow vectors from a converged search on random_ppav(2, 0)
        let b = random_ppav(2, 0).unwrap();
        let r = crate::conditions::search_flow_vectors(
            &b,
            Mode::Prym,
            1,
            &crate::conditions::SearchOptions { restarts: 2, ..Default::default() },
        )
        .unwrap();
        (r.flow.unwrap(), vec![c(0.1, 0.05), c(-0.2, 0.1)])
    }

    fn root_near(d: &FlowData, z: &[C], t: C) -> C {
        // scan a few starting points for a Newton-convergent simple root
        for k in 0..400 {
            let g = c(-2.0 + 0.2 * (k % 20) as f64, -2.0 + 0.2 * (k / 20) as f64);
            if let Ok(x) = root_newton(d, z, g, t) {
                if root_derivatives(d, z, x, t).is_ok() {
                    return x;
                }
            }
        }
        panic!("no root found");
    }

    #[test]
    fn eta_derivatives_match_finite_differences() {
        let (d, z) = genus2_prym();
        let eta0 = root_near(&d, &z, c(0.0, 0.0));
        let h = 1e-3;
        let tr = track_root(&d, &z, (-h, h), 3, eta0).unwrap();
        let fd1 = (tr.eta[2] - tr.eta[0]) / (2.0 * h);
        let fd2 = (tr.eta[2] - tr.eta[1] * 2.0 + tr.eta[0]) / (h * h);
        assert!((fd1 - tr.eta_dot[1]).norm() < 1e-6 * (1.0 + fd1.norm()));
        assert!((fd2 - tr.eta_ddot[1]).norm() < 1e-4 * (1.0 + fd2.norm()));
        let rev = track_root(&d, &z, (h, -h), 3, tr.eta[2]).unwrap();
        for k in 0..3 {
            assert!((rev.eta[k] - tr.eta[2 - k]).norm() < 1e-12);
        }
    }

    /// u(x, t) pointwise from first and mixed derivatives of τ.
    fn u_point(d: &FlowData, z: &[C], x: C, t: C) -> C {
        let p = tau_partials(d, z, x, t).unwrap();
        let (f, fx, ft, fxt) = (p.get(0, 0), p.get(1, 0), p.get(0, 1), p.get(1, 1));
        (fxt * f - fx * ft) / (f * f) * 2.0 + d.c_or_zero()
    }

    #[test]
    fn laurent_data_matches_circle_fit() {
        let (d, z) = genus2_prym();
        let t = c(0.0, 0.0);
        let eta = root_near(&d, &z, t);
        let (ed, _) = root_derivatives(&d, &z, eta, t).unwrap();
        let (v, w, vd) = laurent_coeffs_u(&d, &z, t, eta).unwrap();
        // 5-point fit on a circle of radius 1e-2: exact for a quartic regular part
        let r = 1e-2;
        let mut v_fit = c(0.0, 0.0);
        let mut w_fit = c(0.0, 0.0);
        for k in 0..5 {
            let om = C::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 5.0);
            let dx = om * r;
            let reg = u_point(&d, &z, eta + dx, t) - ed * 2.0 / (dx * dx);
            v_fit += reg / 5.0;
            w_fit += reg / dx / 5.0;
        }
        assert!((v - v_fit).norm() < 1e-6 * (1.0 + v.norm()), "{v} {v_fit}");
        assert!((w - w_fit).norm() < 1e-5 * (1.0 + w.norm()), "{w} {w_fit}");
        // v̇ against a centered difference of v along the tracked root
        let h = 1e-4;
        let tr = track_root(&d, &z, (-h, h), 3, eta).unwrap();
        let fd = (tr.v[2] - tr.v[0]) / (2.0 * h);
        assert!((fd - vd).norm() < 1e-5 * (1.0 + vd.norm()), "{fd} {vd}");
        // the constant C enters only v
        let mut d2 = d.clone();
        d2.c = Some(d.c.unwrap() + 0.25);
        let (v2, w2, vd2) = laurent_coeffs_u(&d2, &z, t, eta).unwrap();
        assert!((v2 - v - 0.25).norm() < 1e-10);
        assert!((w2 - w).norm() < 1e-10 && (vd2 - vd).norm() < 1e-10);
    }

    #[test]
    fn sys_holds_on_solved_genus_two_data_and_fails_when_perturbed() {
        let (d, z) = genus2_prym();
        let eta0 = root_near(&d, &z, c(0.0, 0.0));
        let tr = track_root(&d, &z, (0.0, 0.5), 11, eta0).unwrap();
        let res = sys_residual(&tr);
        assert!(res.iter().flatten().all(|&r| r <= 1e-6), "{res:?}");
        // the perturbation shows up as |δη̈|/|η̈v|; rescale to |v| = O(1) so δ = 0.1 is visible
        let small = d.rescaled(c(0.25, 0.0), c(0.25, 0.0));
        let tr = track_root(&small, &z, (0.0, 8.0), 11, eta0 * 4.0).unwrap();
        assert!(sys_residual(&tr).iter().flatten().all(|&r| r <= 1e-6));
        let mut bad = small.clone();
        bad.c = Some(small.c.unwrap() + 0.1);
        let trb = track_root(&bad, &z, (0.0, 8.0), 11, eta0 * 4.0).unwrap();
        let resb = sys_residual(&trb);
        assert!(resb.iter().flatten().filter(|&&r| r >= 1e-2).count() >= 9, "{resb:?} {}", trb.v[0]);
    }

    #[test]
    fn genus_one_pipeline() {
        let b = random_ppav(1, 6).unwrap();
        let (d, _) = solved_flow_data(Mode::Prym, &b, &[c(0.8, 0.1)], &[c(-0.4, 0.3)], &[c(0.2, 0.1)]).unwrap();
        let s = sample_theta_divisor(&b, 2, 10).unwrap();
        for p in &s {
            assert!(condition_c_residual(&b, &d.u, &d.v, p).unwrap() <= 1e-6);
        }
        let z = [c(0.05, -0.1)];
        let eta0 = root_near(&d, &z, c(0.0, 0.0));
        let tr = track_root(&d, &z, (0.0, 2.0), 21, eta0).unwrap();
        assert!(sys_residual(&tr).iter().flatten().all(|&r| r <= 1e-6));
    }
}

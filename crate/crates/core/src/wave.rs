//! Formal wave solutions ψ = e^{kt + bx/k} Σ ξ_s k^{−s} of (∂_x∂_t + u)ψ = 0 for a potential
//! periodic in x with period 1, the Laurent step of the pole recursion, and the witness
//! for the three leading Laurent equations at a simple pole.
//!
//! Recursion: ξ'_{s+1} + ∂²_{xt}ξ_s + (u + b)ξ_s + b∂_tξ_{s−1} = 0, ξ₀ = 1, b = −⟨u⟩.
//! x-operations are spectral; t-derivatives are 7-point finite differences, or exact when
//! the t-Taylor coefficients of u are supplied.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::theta::{theta_partials, validate_period_matrix, Characteristic};

type C = Complex64;

/// Finite-difference weights (Fornberg): `w[m][j]` for the m-th derivative at `z`.
pub fn fd_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveGrid {
    /// x nodes per period (x_j = x₀ + j/nx).
    pub nx: usize,
    /// t nodes, including both ends of [t0, t1].
    pub nt: usize,
    pub t0: f64,
    pub t1: f64,
}

impl WaveGrid {
    pub fn new(nx: usize, nt: usize, t0: f64, t1: f64) -> Result<Self> {
        if nx < 8 || nt < 8 || !(t1 > t0) {
            return Err(Error::InvalidArgument("wave grid needs nx, nt ≥ 8 and t1 > t0".into()));
        }
        Ok(WaveGrid { nx, nt, t0, t1 })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.nt - 1) as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    pub fn x(&self, x0: f64, j: usize) -> f64 {
        x0 + j as f64 / self.nx as f64
    }

    /// Same t-window, both steps halved.
    pub fn refined(&self) -> Self {
        WaveGrid { nx: 2 * self.nx, nt: 2 * self.nt - 1, ..*self }
    }
}

/// Grid values are stored row-major in t: `v[it * nx + ix]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveSeries {
    pub order: usize,
    pub x0: f64,
    pub grid: WaveGrid,
    /// Dressing constant b = −⟨u⟩.
    pub b: C,
    /// ξ₀ … ξ_S.
    pub xi: Vec<Vec<C>>,
    /// Integration functions c₀ … c_S on the t-nodes.
    pub c: Vec<Vec<C>>,
    /// max_t |ξ_s(x+1, t) − ξ_s(x, t)| per order.
    pub periodicity_defect: Vec<f64>,
}

impl WaveSeries {
    /// ξ_s at an arbitrary x on t-node `it` by trigonometric interpolation.
    pub fn interpolate(&self, s: usize, x: f64, it: usize) -> C {
        let n = self.grid.nx;
        let row = &self.xi[s][it * n..(it + 1) * n];
        let mut sp = Spectral::new(n);
        let hat = sp.forward(row);
        let xr = x - self.x0;
        let mut acc = C::new(0.0, 0.0);
        for (k, h) in hat.iter().enumerate() {
            let kk = wavenumber(k, n);
            if 2 * k == n {
                acc += h * (std::f64::consts::PI * n as f64 * xr).cos();
            } else {
                acc += h * C::from_polar(1.0, 2.0 * std::f64::consts::PI * kk * xr);
            }
        }
        acc
    }
}

fn wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Spectral { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    /// Fourier coefficients f̂_k with f(x_j) = Σ f̂_k e^{2πik(x_j−x₀)}.
    fn forward(&mut self, row: &[C]) -> Vec<C> {
        let mut buf = row.to_vec();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    fn inverse(&mut self, hat: &[C]) -> Vec<C> {
        let mut buf = hat.to_vec();
        self.inv.process(&mut buf);
        buf
    }

    fn deriv(&mut self, row: &[C]) -> Vec<C> {
        let n = self.n;
        let mut hat = self.forward(row);
        for (k, h) in hat.iter_mut().enumerate() {
            if 2 * k == n {
                *h = C::new(0.0, 0.0);
            } else {
                *h *= C::new(0.0, 2.0 * std::f64::consts::PI * wavenumber(k, n));
            }
        }
        self.inverse(&hat)
    }

    /// ∫_{x₀}^{x} f on the nodes, and the mean of f (the drift per period).
    fn antideriv(&mut self, row: &[C]) -> (Vec<C>, C) {
        let n = self.n;
        let mut hat = self.forward(row);
        let mean = hat[0];
        hat[0] = C::new(0.0, 0.0);
        for (k, h) in hat.iter_mut().enumerate().skip(1) {
            if 2 * k == n {
                *h = C::new(0.0, 0.0);
            } else {
                *h /= C::new(0.0, 2.0 * std::f64::consts::PI * wavenumber(k, n));
            }
        }
        let p0: C = hat.iter().sum();
        let p = self.inverse(&hat);
        let out = (0..n).map(|j| mean * (j as f64 / n as f64) + p[j] - p0).collect();
        (out, mean)
    }
}

/// Finite-difference ∂_t on the grid with `width`-point stencils (one-sided at the ends).
struct TDiff {
    nt: usize,
    width: usize,
    stencils: Vec<(usize, Vec<f64>)>,
}

impl TDiff {
    fn new(grid: &WaveGrid, width: usize) -> Self {
        let nt = grid.nt;
        let h = grid.dt();
        let stencils = (0..nt)
            .map(|it| {
                let start = it.saturating_sub(width / 2).min(nt - width);
                let nodes: Vec<f64> = (0..width).map(|j| (start + j) as f64 * h).collect();
                let w = fd_weights(it as f64 * h, &nodes, 1);
                (start, w[1].clone())
            })
            .collect();
        TDiff { nt, width, stencils }
    }

    fn apply(&self, f: &[C], nx: usize) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); f.len()];
        for it in 0..self.nt {
            let (start, w) = &self.stencils[it];
            for (j, wj) in w.iter().enumerate().take(self.width) {
                let src = &f[(start + j) * nx..(start + j + 1) * nx];
                for ix in 0..nx {
                    out[it * nx + ix] += src[ix] * *wj;
                }
            }
        }
        out
    }

    fn apply_series(&self, f: &[C]) -> Vec<C> {
        self.apply(f, 1)
    }
}

/// ∫_{t0}^{t_k} f on the nodes, integrating 6-point local interpolants.
fn cumulative_integral(f: &[C], grid: &WaveGrid) -> Vec<C> {
    let nt = grid.nt;
    let h = grid.dt();
    let width = 6.min(nt);
    let mut out = vec![C::new(0.0, 0.0); nt];
    for j in 0..nt - 1 {
        let start = j.saturating_sub(2).min(nt - width);
        let nodes: Vec<f64> = (0..width).map(|i| (start + i) as f64 * h).collect();
        let w = fd_weights(j as f64 * h, &nodes, width - 1);
        // ∫_0^h Σ_m f^{(m)}(t_j) s^m/m! ds
        let mut fact = 1.0;
        let mut acc = C::new(0.0, 0.0);
        for (m, wm) in w.iter().enumerate() {
            fact *= (m + 1) as f64;
            let d: C = (0..width).map(|i| f[start + i] * wm[i]).sum();
            acc += d * h.powi(m as i32 + 1) / fact;
        }
        out[j + 1] = out[j] + acc;
    }
    out
}

fn sample(u: &dyn Fn(f64, f64) -> C, grid: &WaveGrid, x0: f64) -> Vec<C> {
    let mut v = Vec::with_capacity(grid.nx * grid.nt);
    for it in 0..grid.nt {
        for ix in 0..grid.nx {
            v.push(u(grid.x(x0, ix), grid.t(it)));
        }
    }
    v
}

fn row_means(f: &[C], nx: usize) -> Vec<C> {
    f.chunks(nx).map(|r| r.iter().sum::<C>() / nx as f64).collect()
}

const PERIOD_TOL: f64 = 1e-8;

/// Periodically normalized wave coefficients ξ₁ … ξ_S for a potential with u(x+1, t) = u(x, t).
///
/// ξ_s = ξ⁰_s + c_s(t) with ξ⁰_s = −∂_tξ_{s−1} − ∫_{x₀}^x [(u+b)ξ_{s−1} + b∂_tξ_{s−2}];
/// c_{s−1} is fixed by periodicity of ξ_{s+1}:
/// ċ_{s−1} = −(1/b)⟨(u+b)ξ⁰_s⟩ − ∂_t⟨ξ⁰_{s−1}⟩, normalized by ⟨ξ_{s−1}⟩(t0) = 0.
pub fn build_wave_periodic(
    u: &dyn Fn(f64, f64) -> C,
    grid: WaveGrid,
    order: usize,
    x0: f64,
) -> Result<WaveSeries> {
    if order == 0 || order > 10 {
        return Err(Error::InvalidArgument("order must be in 1..=10".into()));
    }
    let (nx, nt) = (grid.nx, grid.nt);
    // periodicity of the input
    let mut defect = 0.0f64;
    for it in 0..nt {
        let t = grid.t(it);
        let (a, b) = (u(x0, t), u(x0 + 1.0, t));
        let d = (a - b).norm() / (1.0 + a.norm());
        if !d.is_finite() {
            return Err(Error::NonFinite("u".into()));
        }
        defect = defect.max(d);
    }
    if defect > PERIOD_TOL {
        return Err(Error::NotPeriodic(defect));
    }
    let ug = sample(u, &grid, x0);
    if ug.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("u".into()));
    }
    let means = row_means(&ug, nx);
    let b = -means[0];
    let drift = means.iter().map(|m| (m + b).norm()).fold(0.0, f64::max);
    if drift > PERIOD_TOL * (1.0 + b.norm()) {
        return Err(Error::InvalidArgument(format!("mean of u over a period varies in t by {drift:e}")));
    }
    let dressed = b.norm() > 1e-12;
    let upb: Vec<C> = ug.iter().map(|z| z + b).collect();
    // Ψ = ∫_{x₀}^x (u + b), periodic
    let mut sp = Spectral::new(nx);
    let psi: Vec<C> = upb.chunks(nx).flat_map(|r| sp.antideriv(r).0).collect();
    let td = TDiff::new(&grid, 7);

    let zero = vec![C::new(0.0, 0.0); nx * nt];
    let mut xi: Vec<Vec<C>> = vec![vec![C::new(1.0, 0.0); nx * nt]];
    let mut cs: Vec<Vec<C>> = vec![vec![C::new(1.0, 0.0); nt]];
    // raw ξ⁰ of the current top level
    // ξ₀ ≡ 1 is differentiated exactly
    let dt_of = |s: usize, xi: &[Vec<C>]| -> Vec<C> {
        if s == 0 {
            zero.clone()
        } else {
            td.apply(&xi[s], nx)
        }
    };
    let raw = |dt_prev: Vec<C>, xi_prev: &[C], dt_prev2: Vec<C>, sp: &mut Spectral| -> Vec<C> {
        let integrand: Vec<C> =
            (0..nx * nt).map(|k| upb[k] * xi_prev[k] + b * dt_prev2[k]).collect();
        let mut out = Vec::with_capacity(nx * nt);
        for it in 0..nt {
            let (f, _) = sp.antideriv(&integrand[it * nx..(it + 1) * nx]);
            for ix in 0..nx {
                out.push(-dt_prev[it * nx + ix] - f[ix]);
            }
        }
        out
    };
    for s in 1..=order + 1 {
        let dt_prev2 = if s >= 2 { dt_of(s - 2, &xi) } else { zero.clone() };
        let mut top = raw(dt_of(s - 1, &xi), &xi[s - 1], dt_prev2, &mut sp);
        if s >= 2 {
            // fix c_{s−1}
            let mean_prev = row_means(&xi[s - 1], nx);
            let rate: Vec<C> = if dressed {
                let weighted: Vec<C> = (0..nx * nt).map(|k| upb[k] * top[k]).collect();
                let m = row_means(&weighted, nx);
                let dmean = td.apply_series(&mean_prev);
                (0..nt).map(|it| -m[it] / b - dmean[it]).collect()
            } else {
                td.apply_series(&mean_prev).iter().map(|z| -z).collect()
            };
            let c0 = -mean_prev[0];
            let c: Vec<C> = cumulative_integral(&rate, &grid).iter().map(|z| z + c0).collect();
            for it in 0..nt {
                for ix in 0..nx {
                    let k = it * nx + ix;
                    xi[s - 1][k] += c[it];
                    top[k] += -rate[it] - c[it] * psi[k];
                }
            }
            cs.push(c);
        }
        if s <= order {
            xi.push(top);
        }
    }
    // drift of each final ξ_s over one period
    let mut periodicity_defect = vec![0.0];
    for s in 1..=order {
        let prev2 = if s >= 2 { dt_of(s - 2, &xi) } else { zero.clone() };
        let integrand: Vec<C> = (0..nx * nt).map(|k| upb[k] * xi[s - 1][k] + b * prev2[k]).collect();
        let d = row_means(&integrand, nx).iter().map(|z| z.norm()).fold(0.0, f64::max);
        periodicity_defect.push(d);
    }
    Ok(WaveSeries { order, x0, grid, b, xi, c: cs, periodicity_defect })
}

/// Coefficient planes of t-jets on the grid: `planes[j][it * nx + ix]` is the j-th normalized
/// Taylor coefficient in (t − t_it).
type Planes = Vec<Vec<C>>;

fn planes_dt(a: &Planes) -> Planes {
    (1..a.len()).map(|j| a[j].iter().map(|z| z * j as f64).collect()).collect()
}

fn planes_mul(a: &Planes, b: &Planes) -> Planes {
    let n = a.len().min(b.len());
    (0..n)
        .map(|j| {
            let mut out = vec![C::new(0.0, 0.0); a[0].len()];
            for i in 0..=j {
                for (o, (x, y)) in out.iter_mut().zip(a[i].iter().zip(&b[j - i])) {
                    *o += x * y;
                }
            }
            out
        })
        .collect()
}

fn planes_lin(terms: &[(C, &Planes)]) -> Planes {
    let n = terms.iter().map(|(_, p)| p.len()).min().unwrap_or(0);
    let len = terms[0].1[0].len();
    (0..n)
        .map(|j| {
            let mut out = vec![C::new(0.0, 0.0); len];
            for (c, p) in terms {
                for (o, x) in out.iter_mut().zip(&p[j]) {
                    *o += c * x;
                }
            }
            out
        })
        .collect()
}

/// Row means of every plane: `out[j][it]`.
fn planes_means(a: &Planes, nx: usize) -> Vec<Vec<C>> {
    a.iter().map(|p| row_means(p, nx)).collect()
}

fn planes_antideriv(a: &Planes, nx: usize, sp: &mut Spectral) -> Planes {
    a.iter().map(|p| p.chunks(nx).flat_map(|r| sp.antideriv(r).0).collect()).collect()
}

/// ∫_{t0}^{t_k} f from Taylor data at the nodes (`f[j][it]`, normalized): two-point Hermite
/// quadrature ∫_0^h f = Σ_{j<m} w_j h^{j+1}(f^{(j)}(0) + (−1)^j f^{(j)}(h)),
/// w_j = m!(2m−j−1)! / ((2m)!(m−j−1)!(j+1)!).
fn hermite_cumulative(f: &[Vec<C>], grid: &WaveGrid) -> Vec<C> {
    let fact = |n: usize| (1..=n).fold(1.0, |a, k| a * k as f64);
    let m = f.len().min(5);
    let h = grid.dt();
    let w: Vec<f64> = (0..m)
        .map(|j| fact(m) * fact(2 * m - j - 1) / (fact(2 * m) * fact(m - j - 1) * fact(j + 1)))
        .collect();
    let mut out = vec![C::new(0.0, 0.0); grid.nt];
    for k in 0..grid.nt - 1 {
        let mut acc = C::new(0.0, 0.0);
        for j in 0..m {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += (f[j][k] + f[j][k + 1] * sign) * fact(j) * w[j] * h.powi(j as i32 + 1);
        }
        out[k + 1] = out[k] + acc;
    }
    out
}

/// As [`build_wave_periodic`], for a potential whose t-Taylor coefficients are known:
/// `u_taylor(x, t, n)` returns n normalized coefficients of u(x, t + ·). Every t-derivative
/// in the recursion is then exact and c_s(t) is integrated by Hermite quadrature.
pub fn build_wave_periodic_taylor(
    u_taylor: &dyn Fn(f64, f64, usize) -> Vec<C>,
    grid: WaveGrid,
    order: usize,
    x0: f64,
) -> Result<WaveSeries> {
    if order == 0 || order > 10 {
        return Err(Error::InvalidArgument("order must be in 1..=10".into()));
    }
    let (nx, nt) = (grid.nx, grid.nt);
    let len = order + 6;
    let mut defect = 0.0f64;
    for it in 0..nt {
        let t = grid.t(it);
        let (a, b) = (u_taylor(x0, t, 1)[0], u_taylor(x0 + 1.0, t, 1)[0]);
        let d = (a - b).norm() / (1.0 + a.norm());
        if !d.is_finite() {
            return Err(Error::NonFinite("u".into()));
        }
        defect = defect.max(d);
    }
    if defect > PERIOD_TOL {
        return Err(Error::NotPeriodic(defect));
    }
    let mut u: Planes = vec![Vec::with_capacity(nx * nt); len];
    for it in 0..nt {
        for ix in 0..nx {
            let c = u_taylor(grid.x(x0, ix), grid.t(it), len);
            if c.len() < len || c.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFinite("u".into()));
            }
            for j in 0..len {
                u[j].push(c[j]);
            }
        }
    }
    let means = row_means(&u[0], nx);
    let b = -means[0];
    let drift = means.iter().map(|m| (m + b).norm()).fold(0.0, f64::max);
    if drift > PERIOD_TOL * (1.0 + b.norm()) {
        return Err(Error::InvalidArgument(format!("mean of u over a period varies in t by {drift:e}")));
    }
    let dressed = b.norm() > 1e-12;
    let mut upb = u.clone();
    upb[0].iter_mut().for_each(|z| *z += b);
    let mut sp = Spectral::new(nx);
    let psi = planes_antideriv(&upb, nx, &mut sp);
    let one = C::new(1.0, 0.0);
    let zero_planes = |n: usize| -> Planes { vec![vec![C::new(0.0, 0.0); nx * nt]; n] };

    let mut xi: Vec<Planes> = vec![{
        let mut p = zero_planes(len);
        p[0].iter_mut().for_each(|z| *z = one);
        p
    }];
    let mut cs: Vec<Vec<C>> = vec![vec![one; nt]];
    for s in 1..=order + 1 {
        let dprev = planes_dt(&xi[s - 1]);
        let dprev2 = if s >= 2 { planes_dt(&xi[s - 2]) } else { zero_planes(len) };
        let integrand = planes_lin(&[(one, &planes_mul(&upb, &xi[s - 1])), (b, &dprev2)]);
        let f = planes_antideriv(&integrand, nx, &mut sp);
        let mut top = planes_lin(&[(-one, &dprev), (-one, &f)]);
        if s >= 2 {
            let mean_prev = planes_means(&xi[s - 1], nx);
            let dmean: Vec<Vec<C>> =
                (1..mean_prev.len()).map(|j| mean_prev[j].iter().map(|z| z * j as f64).collect()).collect();
            let weighted = planes_means(&planes_mul(&upb, &top), nx);
            let n = dmean.len().min(weighted.len());
            let rate: Vec<Vec<C>> = (0..n)
                .map(|j| {
                    (0..nt)
                        .map(|it| if dressed { -weighted[j][it] / b - dmean[j][it] } else { -dmean[j][it] })
                        .collect()
                })
                .collect();
            let c0 = -mean_prev[0][0];
            let cval: Vec<C> = hermite_cumulative(&rate, &grid).iter().map(|z| z + c0).collect();
            // c as a jet at every node: value, then ċ/j
            let cj: Vec<Vec<C>> = std::iter::once(cval.clone())
                .chain((0..n).map(|j| rate[j].iter().map(|z| z / (j + 1) as f64).collect()))
                .collect();
            let cplanes: Planes =
                cj.iter().map(|row| (0..nx * nt).map(|k| row[k / nx]).collect()).collect();
            let rplanes: Planes =
                rate.iter().map(|row| (0..nx * nt).map(|k| row[k / nx]).collect()).collect();
            xi[s - 1] = planes_lin(&[(one, &xi[s - 1]), (one, &cplanes)]);
            let cpsi = planes_mul(&cplanes, &psi);
            top = planes_lin(&[(one, &top), (-one, &rplanes), (-one, &cpsi)]);
            cs.push(cval);
        }
        if s <= order {
            xi.push(top);
        }
    }
    let values: Vec<Vec<C>> = xi.iter().map(|p| p[0].clone()).collect();
    let mut periodicity_defect = vec![0.0];
    for s in 1..=order {
        let prev2 = if s >= 2 { planes_dt(&xi[s - 2]) } else { zero_planes(1) };
        let integrand: Vec<C> = (0..nx * nt).map(|k| upb[0][k] * xi[s - 1][0][k] + b * prev2[0][k]).collect();
        let d = row_means(&integrand, nx).iter().map(|z| z.norm()).fold(0.0, f64::max);
        periodicity_defect.push(d);
    }
    Ok(WaveSeries { order, x0, grid, b, xi: values, c: cs, periodicity_defect })
}

const RESIDUAL_FLOOR: f64 = 1e-300;

/// Per order s = 0 … S−1: max_grid |∂_xξ_{s+1} + ∂²_{xt}ξ_s + (u+b)ξ_s + b∂_tξ_{s−1}| over
/// max(max_grid |uξ_s|, floor). t-derivatives use independent 5-point (4th order) stencils.
pub fn wave_pde_residual(ws: &WaveSeries, u: &dyn Fn(f64, f64) -> C) -> Vec<f64> {
    let grid = ws.grid;
    let (nx, nt) = (grid.nx, grid.nt);
    let ug = sample(u, &grid, ws.x0);
    let td = TDiff::new(&grid, 5);
    let mut sp = Spectral::new(nx);
    let b = ws.b;
    let mut out = Vec::new();
    for s in 0..ws.order {
        let zero = vec![C::new(0.0, 0.0); nx * nt];
        let dtx = if s == 0 { zero.clone() } else { td.apply(&ws.xi[s], nx) };
        let dtm = if s >= 2 { td.apply(&ws.xi[s - 1], nx) } else { zero };
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for it in 0..nt {
            let r = it * nx..(it + 1) * nx;
            let dnext = sp.deriv(&ws.xi[s + 1][r.clone()]);
            let dxt = sp.deriv(&dtx[r.clone()]);
            for ix in 0..nx {
                let k = it * nx + ix;
                let val = dnext[ix] + dxt[ix] + (ug[k] + b) * ws.xi[s][k] + b * dtm[k];
                num = num.max(val.norm());
                den = den.max((ug[k] * ws.xi[s][k]).norm());
            }
        }
        out.push(if num == 0.0 { 0.0 } else { num / den.max(RESIDUAL_FLOOR) });
    }
    out
}

// ---------------------------------------------------------------------------
// Pole recursion and the leading Laurent equations. Series are normalized Taylor
// coefficients in (t − t₀).

fn ser_mul(a: &[C], b: &[C]) -> Vec<C> {
    let n = a.len().min(b.len());
    (0..n).map(|k| (0..=k).map(|i| a[i] * b[k - i]).sum()).collect()
}

fn ser_diff(a: &[C]) -> Vec<C> {
    (1..a.len()).map(|k| a[k] * k as f64).collect()
}

fn ser_lin(terms: &[(C, &[C])]) -> Vec<C> {
    let n = terms.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
    (0..n).map(|k| terms.iter().map(|(c, s)| c * s[k]).sum()).collect()
}

fn ser_div(a: &[C], b: &[C]) -> Result<Vec<C>> {
    let n = a.len().min(b.len());
    if n == 0 {
        return Ok(vec![]);
    }
    if b[0].norm() == 0.0 {
        return Err(Error::ZeroLeadingTerm);
    }
    let mut q = vec![C::new(0.0, 0.0); n];
    for k in 0..n {
        let s: C = (1..=k).map(|i| b[i] * q[k - i]).sum();
        q[k] = (a[k] - s) / b[0];
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaurentStep {
    pub r_next: Vec<C>,
    pub r_next_1: Vec<C>,
    /// |v r_s + 2η̇ r_{s1}| at t₀.
    pub residue_in: f64,
    /// |v r_{s+1} + 2η̇ r_{s+1,1}| at t₀.
    pub residue_next: f64,
}

/// One step of the pole recursion for ξ_s = r_s/(x−η) + r_{s0} + r_{s1}(x−η) + …:
/// r_{s+1} = −ṙ_s + 2η̇r_{s0}, r_{s+1,1} = −v r_{s0} − w r_s − ṙ_{s1}.
pub fn laurent_step(
    r_s: &[C],
    r_s0: &[C],
    r_s1: &[C],
    eta_dot: &[C],
    v: &[C],
    w: &[C],
) -> Result<LaurentStep> {
    let lens = [r_s.len(), r_s0.len(), r_s1.len(), eta_dot.len(), v.len(), w.len()];
    if lens.iter().any(|&l| l == 0) || r_s.len() < 2 || r_s1.len() < 2 {
        return Err(Error::InvalidArgument("series too short for a time derivative".into()));
    }
    if eta_dot[0].norm() == 0.0 {
        return Err(Error::DegenerateRoot);
    }
    let two = C::new(2.0, 0.0);
    let one = C::new(1.0, 0.0);
    let r_next = ser_lin(&[(-one, &ser_diff(r_s)), (two, &ser_mul(eta_dot, r_s0))]);
    let r_next_1 = ser_lin(&[
        (-one, &ser_mul(v, r_s0)),
        (-one, &ser_mul(w, r_s)),
        (-one, &ser_diff(r_s1)),
    ]);
    let residue_in = (v[0] * r_s[0] + two * eta_dot[0] * r_s1[0]).norm();
    let residue_next = if r_next.is_empty() || r_next_1.is_empty() {
        f64::NAN
    } else {
        (v[0] * r_next[0] + two * eta_dot[0] * r_next_1[0]).norm()
    };
    Ok(LaurentStep { r_next, r_next_1, residue_in, residue_next })
}

/// r_{s1} making the residue v r_s + 2η̇ r_{s1} vanish identically in t.
pub fn residue_free_r1(r_s: &[C], eta_dot: &[C], v: &[C]) -> Result<Vec<C>> {
    let num: Vec<C> = ser_mul(v, r_s).iter().map(|z| -z).collect();
    let den: Vec<C> = eta_dot.iter().map(|z| z * 2.0).collect();
    ser_div(&num, &den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaurentWitness {
    pub beta: Vec<C>,
    pub gamma: Vec<C>,
    /// |α̇ − 2η̇β|, |2η̇γ + αv|, |γ̇ + vβ + αw| at t₀.
    pub eq1: f64,
    pub eq2: f64,
    pub eq3: f64,
}

/// For ψ₀ = α/(x−η) + β + γ(x−η) + … solve the first two leading equations for β, γ
/// and evaluate all three. The third then equals α(η̈v − η̇v̇ + 2η̇²w)/(2η̇²).
pub fn laurent_witness(alpha: &[C], eta_dot: &[C], v: &[C], w: &[C]) -> Result<LaurentWitness> {
    if eta_dot.is_empty() || eta_dot[0].norm() == 0.0 {
        return Err(Error::DegenerateRoot);
    }
    if alpha.len() < 3 || eta_dot.len() < 2 || v.len() < 2 || w.is_empty() {
        return Err(Error::InvalidArgument("series too short".into()));
    }
    let two_ed: Vec<C> = eta_dot.iter().map(|z| z * 2.0).collect();
    let beta = ser_div(&ser_diff(alpha), &two_ed)?;
    let gamma: Vec<C> = ser_div(&ser_mul(alpha, v), &two_ed)?.iter().map(|z| -z).collect();
    let eq1 = (ser_diff(alpha)[0] - two_ed[0] * beta[0]).norm();
    let eq2 = (two_ed[0] * gamma[0] + alpha[0] * v[0]).norm();
    let eq3 = (ser_diff(&gamma)[0] + v[0] * beta[0] + alpha[0] * w[0]).norm();
    Ok(LaurentWitness { beta, gamma, eq1, eq2, eq3 })
}

/// u(x, t) = 2v ∂²_x ln θ(x + vt + z | τ) + cst, genus 1 (period 1 in x), as t-Taylor
/// coefficients for [`build_wave_periodic_taylor`]. Panics-free: a failed theta evaluation
/// yields NaN, which the build rejects.
pub fn genus_one_potential(tau: C, v: f64, z: C, cst: f64) -> Result<impl Fn(f64, f64, usize) -> Vec<C>> {
    let b = validate_period_matrix(&[vec![tau]])?;
    let one = C::new(1.0, 0.0);
    Ok(move |x: f64, t: f64, n: usize| {
        let nan = vec![C::new(f64::NAN, 0.0); n];
        let Ok(p) = theta_partials(&Characteristic::zero(1), &[C::new(x + v * t, 0.0) + z], &b, &[one], &[one], n + 2, 0, 1e-16)
        else {
            return nan;
        };
        let mut f = 1.0;
        let th: Vec<C> = (0..n + 3)
            .map(|k| {
                if k > 0 {
                    f *= k as f64;
                }
                p.get(k, 0) / f
            })
            .collect();
        let Ok(l) = Jet2::from_fn((C::new(0.0, 0.0), C::new(0.0, 0.0)), n + 3, 1, |a, _| th[a]).ln() else {
            return nan;
        };
        // d^k/dt^k / k! of 2v ∂²ln θ at w = x + vt + z: v^k (k+2)(k+1) ℓ_{k+2}
        (0..n)
            .map(|k| {
                let base = l.coeff(k + 2, 0) * ((k + 2) * (k + 1)) as f64 * 2.0 * v * v.powi(k as i32);
                if k == 0 {
                    base + cst
                } else {
                    base
                }
            })
            .collect()
    })
}

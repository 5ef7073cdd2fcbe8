//! Pole dynamics: ẍ_i = 2Σ_{j≠i} ẋ_iẋ_j/(x_i − x_j), its equivalent sum form, an adaptive
//! Dormand–Prince integrator, and comparison with zeros of τ(x, t) = θ(Ux+Vt+Z).

use num_complex::Complex64;

use crate::data::FlowData;
use crate::divisor::{find_root, root_derivatives, root_laurent_series, track_root};
use crate::error::{Error, Result};

type C = Complex64;

pub const SEPARATION_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CMState {
    pub x: Vec<C>,
    pub xdot: Vec<C>,
    pub t: f64,
}

impl CMState {
    pub fn new(x: Vec<C>, xdot: Vec<C>, t: f64) -> Result<Self> {
        if x.len() != xdot.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: xdot.len() });
        }
        if x.iter().chain(&xdot).any(|z| !z.is_finite()) || !t.is_finite() {
            return Err(Error::NonFinite("state".into()));
        }
        Ok(CMState { x, xdot, t })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                m = m.min((self.x[i] - self.x[j]).norm());
            }
        }
        m
    }

    fn check(&self, floor: f64) -> Result<()> {
        let s = self.min_separation();
        if s < floor {
            Err(Error::Collision(s))
        } else {
            Ok(())
        }
    }
}

fn accel(x: &[C], xd: &[C]) -> Vec<C> {
    (0..x.len())
        .map(|i| {
            let s: C = (0..x.len()).filter(|&j| j != i).map(|j| xd[j] / (x[i] - x[j])).sum();
            xd[i] * s * 2.0
        })
        .collect()
}

pub fn cm_rhs(s: &CMState) -> Result<Vec<C>> {
    s.check(SEPARATION_FLOOR)?;
    Ok(accel(&s.x, &s.xdot))
}

/// Per particle |Σ_{j≠i}[(ẍ_iẋ_j − ẋ_iẍ_j)/(x_i−x_j)² − 2ẋ_iẋ_j(ẋ_i+ẋ_j)/(x_i−x_j)³]|,
/// relative to the largest summand.
pub fn cm_residual(s: &CMState, acc: &[C]) -> Result<Vec<f64>> {
    s.check(SEPARATION_FLOOR)?;
    if acc.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: acc.len() });
    }
    let (x, v) = (&s.x, &s.xdot);
    Ok((0..s.n())
        .map(|i| {
            let mut sum = C::new(0.0, 0.0);
            let mut big = 0.0f64;
            for j in (0..s.n()).filter(|&j| j != i) {
                let d = x[i] - x[j];
                let terms = [
                    acc[i] * v[j] / (d * d),
                    -(v[i] * acc[j]) / (d * d),
                    -(v[i] * v[j] * (v[i] + v[j]) * 2.0) / (d * d * d),
                ];
                for t in terms {
                    big = big.max(t.norm());
                    sum += t;
                }
            }
            if big == 0.0 {
                0.0
            } else {
                sum.norm() / big
            }
        })
        .collect())
}

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// y = (x, ẋ) ↦ (ẋ, ẍ).
fn flow(y: &[C]) -> Vec<C> {
    let n = y.len() / 2;
    let mut out = y[n..].to_vec();
    out.extend(accel(&y[..n], &y[n..]));
    out
}

fn min_sep(x: &[C]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            m = m.min((x[i] - x[j]).norm());
        }
    }
    m
}

/// Adaptive Dormand–Prince integration from `s0` to `t_end` (either direction); the
/// per-step error estimate is kept below `tol·(1 + |y|)` componentwise. Returns the
/// accepted states, starting with `s0` and ending at `t_end`.
pub fn integrate(s0: &CMState, t_end: f64, tol: f64) -> Result<Vec<CMState>> {
    if !(tol > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument("tolerance must be positive and t_end finite".into()));
    }
    s0.check(SEPARATION_FLOOR)?;
    let n = s0.n();
    let mut out = vec![s0.clone()];
    let span = t_end - s0.t;
    if span == 0.0 || n == 0 {
        return Ok(out);
    }
    let dir = span.signum();
    let mut y: Vec<C> = s0.x.iter().chain(&s0.xdot).cloned().collect();
    let mut t = s0.t;
    let mut h = dir * (span.abs() * 1e-3).min(0.1).max(1e-6 * span.abs());
    let mut k1 = flow(&y);
    while (t_end - t) * dir > 0.0 {
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow(t));
        }
        let mut ks = vec![k1.clone()];
        for st in 0..6 {
            let yi: Vec<C> = (0..2 * n).map(|c| y[c] + ks.iter().enumerate().map(|(r, k)| k[c] * A[st][r]).sum::<C>() * h).collect();
            if min_sep(&yi[..n]) < SEPARATION_FLOOR {
                return Err(Error::Collision(min_sep(&yi[..n])));
            }
            ks.push(flow(&yi));
        }
        let y5: Vec<C> = (0..2 * n).map(|c| y[c] + (0..7).map(|r| ks[r][c] * B5[r]).sum::<C>() * h).collect();
        let err = (0..2 * n)
            .map(|c| {
                let e: C = (0..7).map(|r| ks[r][c] * (B5[r] - B4[r])).sum::<C>() * h;
                e.norm() / (tol * (1.0 + y[c].norm().max(y5[c].norm())))
            })
            .fold(0.0, f64::max);
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            t = if (t + h - t_end) * dir >= 0.0 { t_end } else { t + h };
            y = y5;
            k1 = ks.swap_remove(6); // FSAL
            out.push(CMState { x: y[..n].to_vec(), xdot: y[n..].to_vec(), t });
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(out)
}

/// Comparison of tracked zeros of τ with the pole dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroComparison {
    /// Zeros of τ(·, t₀) found in the window.
    pub zeros: Vec<C>,
    pub t_nodes: Vec<f64>,
    /// positions[i][k]: zero i at node k.
    pub positions: Vec<Vec<C>>,
    /// max over interior nodes of |ẍ_fd − cm_rhs| relative to the larger of the two, floored
    /// at 1e−6·(1 + max|ẋ|²).
    pub cm_deviation: f64,
    /// Same against the acceleration implied by η̈v − η̇v̇ + 2η̇²w = 0.
    pub sys_deviation: f64,
}

/// Zeros of τ(·, t₀) in the rectangle `window = (lo, hi)` (corners in the complex x-plane)
/// by Newton from a grid of starting points; duplicates within 1e−8 are merged.
pub fn zeros_in_window(d: &FlowData, z: &[C], window: (C, C), t0: f64) -> Result<Vec<C>> {
    let (lo, hi) = window;
    let inside = |x: C| x.re >= lo.re && x.re <= hi.re && x.im >= lo.im && x.im <= hi.im;
    let grid = 16;
    let radius = (hi - lo).norm().max(1.0);
    let mut found: Vec<C> = Vec::new();
    let t = C::new(t0, 0.0);
    for a in 0..=grid {
        for b in 0..=grid {
            let g = C::new(
                lo.re + (hi.re - lo.re) * a as f64 / grid as f64,
                lo.im + (hi.im - lo.im) * b as f64 / grid as f64,
            );
            let Ok(x) = find_root(d, z, g, t, radius) else { continue };
            if inside(x) && root_derivatives(d, z, x, t).is_ok() && found.iter().all(|f| (f - x).norm() > 1e-8) {
                found.push(x);
            }
        }
    }
    found.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(found)
}

/// Track every zero in the window over `t_span` with `nodes` nodes; ẍ from second differences
/// of the track, ẋ from implicit differentiation.
pub fn theta_zero_comparison(
    d: &FlowData,
    z: &[C],
    window: (C, C),
    t_span: (f64, f64),
    nodes: usize,
) -> Result<ZeroComparison> {
    if nodes < 3 {
        return Err(Error::InvalidArgument("need at least 3 nodes".into()));
    }
    let zeros = zeros_in_window(d, z, window, t_span.0)?;
    if zeros.is_empty() {
        return Err(Error::NoZeros);
    }
    let tracks = zeros.iter().map(|&x| track_root(d, z, t_span, nodes, x)).collect::<Result<Vec<_>>>()?;
    let h = (t_span.1 - t_span.0) / (nodes - 1) as f64;
    let mut cm_dev = 0.0f64;
    let mut sys_dev = 0.0f64;
    for k in 1..nodes - 1 {
        let x: Vec<C> = tracks.iter().map(|tr| tr.eta[k]).collect();
        let xd: Vec<C> = tracks.iter().map(|tr| tr.eta_dot[k]).collect();
        let fd: Vec<C> =
            tracks.iter().map(|tr| (tr.eta[k + 1] - tr.eta[k] * 2.0 + tr.eta[k - 1]) / (h * h)).collect();
        let floor = 1e-6 * (1.0 + xd.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max));
        let pred = cm_rhs(&CMState::new(x.clone(), xd.clone(), tr_t(t_span, nodes, k))?)?;
        for i in 0..x.len() {
            cm_dev = cm_dev.max((fd[i] - pred[i]).norm() / fd[i].norm().max(pred[i].norm()).max(floor));
            let t = C::new(tr_t(t_span, nodes, k), 0.0);
            let s = root_laurent_series(d, z, t, x[i], 2)?;
            let (v, w, vd) = (s.v[0], s.w[0], s.v[1]);
            if v.norm() > 1e-12 {
                let acc = (xd[i] * vd - xd[i] * xd[i] * w * 2.0) / v;
                sys_dev = sys_dev.max((fd[i] - acc).norm() / fd[i].norm().max(acc.norm()).max(floor));
            }
        }
    }
    Ok(ZeroComparison {
        zeros,
        t_nodes: (0..nodes).map(|k| tr_t(t_span, nodes, k)).collect(),
        positions: tracks.into_iter().map(|tr| tr.eta).collect(),
        cm_deviation: cm_dev,
        sys_deviation: sys_dev,
    })
}

fn tr_t(span: (f64, f64), nodes: usize, k: usize) -> f64 {
    span.0 + (span.1 - span.0) * k as f64 / (nodes - 1) as f64
}

//! Riemann theta functions θ[ε,0](z|B) with directional derivatives and a rigorous
//! truncation bound.
//!
//! The lattice sum is centred on its dominant terms: with c = (Im B)⁻¹ Im z every
//! summand has modulus exp(π cᵀYc)·exp(−π‖n+c‖²_Y), so the constant factor is pulled out
//! in log form and only points of the ellipsoid ‖n+c‖_Y ≤ R are visited (Fincke–Pohst
//! enumeration over the Cholesky factor of Y = Im B). Re z is reduced modulo Z^g with the
//! exact sign factor exp(2πi(k,ε)).

use num_complex::Complex;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::scalar::{cst, Real};

pub const DEFAULT_LATTICE_CAP: usize = 10_000_000;
const MAX_RADIUS: f64 = 60.0;
const RADIUS_STEP: f64 = 0.05;

/// Lattice-point cap; `PRYM_MAX_LATTICE` overrides the default of 10⁷.
pub fn lattice_cap() -> usize {
    std::env::var("PRYM_MAX_LATTICE")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(DEFAULT_LATTICE_CAP)
}

/// Symmetric g×g complex matrix with positive definite imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodMatrix<T> {
    genus: usize,
    entries: Vec<Complex<T>>,
    // Upper-triangular R with Im B = RᵀR (row-major).
    chol: Vec<T>,
    im_inv: Vec<T>,
}

impl<T: Real> PeriodMatrix<T> {
    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn get(&self, j: usize, k: usize) -> Complex<T> {
        self.entries[j * self.genus + k]
    }

    pub fn rows(&self) -> Vec<Vec<Complex<T>>> {
        (0..self.genus)
            .map(|j| (0..self.genus).map(|k| self.get(j, k)).collect())
            .collect()
    }

    /// Im B.
    pub fn im(&self, j: usize, k: usize) -> T {
        self.entries[j * self.genus + k].im
    }

    /// The matrix multiplied by a positive real factor (used for 2B).
    pub fn scaled(&self, factor: T) -> Result<Self> {
        let raw: Vec<Vec<Complex<T>>> = self
            .rows()
            .into_iter()
            .map(|r| r.into_iter().map(|e| e * factor).collect())
            .collect();
        validate_period_matrix(&raw)
    }

    /// Lower bound on half the shortest nonzero vector of the lattice Z^g in the Y-norm.
    fn packing_radius(&self) -> f64 {
        let g = self.genus;
        let tr: f64 = (0..g).map(|i| self.im_inv[i * g + i].to_f64().unwrap()).sum();
        0.5 / tr.sqrt()
    }

    /// ‖R^{-T} d‖ for complex d: bounds |(n,d)| ≤ ‖Rn‖·‖R^{-T}d‖.
    fn dual_norm(&self, d: &[Complex<T>]) -> f64 {
        let g = self.genus;
        let mut w = vec![Complex::new(T::zero(), T::zero()); g];
        // Rᵀ w = d, Rᵀ lower-triangular
        for i in 0..g {
            let mut acc = d[i];
            for j in 0..i {
                acc = acc - w[j] * self.chol[j * g + i];
            }
            w[i] = acc / self.chol[i * g + i];
        }
        w.iter().map(|x| x.norm_sqr().to_f64().unwrap()).sum::<f64>().sqrt()
    }

    /// c = Y⁻¹ y.
    fn centre(&self, y: &[T]) -> Vec<T> {
        let g = self.genus;
        (0..g)
            .map(|i| (0..g).fold(T::zero(), |acc, j| acc + self.im_inv[i * g + j] * y[j]))
            .collect()
    }
}

/// Validate with the default symmetrization tolerance 1e−10 (relative to the largest entry).
pub fn validate_period_matrix<T: Real>(raw: &[Vec<Complex<T>>]) -> Result<PeriodMatrix<T>> {
    validate_period_matrix_tol(raw, cst(1e-10))
}

/// Check squareness and finiteness, symmetrize within `tol`, and Cholesky-factor Im B.
pub fn validate_period_matrix_tol<T: Real>(
    raw: &[Vec<Complex<T>>],
    tol: T,
) -> Result<PeriodMatrix<T>> {
    let g = raw.len();
    if g == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let mut scale = T::one();
    for row in raw {
        if row.len() != g {
            return Err(Error::DimensionMismatch { expected: g, got: row.len() });
        }
        for e in row {
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(Error::NonFinite("period matrix entry".into()));
            }
            scale = scale.max(e.norm());
        }
    }
    let half = cst::<T>(0.5);
    let mut entries = vec![Complex::new(T::zero(), T::zero()); g * g];
    let mut worst = T::zero();
    for j in 0..g {
        for k in 0..g {
            let d = (raw[j][k] - raw[k][j]).norm();
            worst = worst.max(d);
            entries[j * g + k] = if j == k {
                raw[j][k]
            } else {
                (raw[j][k] + raw[k][j]) * half
            };
        }
    }
    if worst > tol * scale {
        return Err(Error::NotSymmetric(worst.to_f64().unwrap()));
    }
    // enforce exact symmetry of the stored value
    for j in 0..g {
        for k in 0..j {
            entries[j * g + k] = entries[k * g + j];
        }
    }
    let y: Vec<T> = entries.iter().map(|e| e.im).collect();
    let lower = cholesky(&y, g).ok_or(Error::NotPositiveDefinite)?;
    let mut chol = vec![T::zero(); g * g];
    for i in 0..g {
        for j in 0..g {
            chol[i * g + j] = lower[j * g + i];
        }
    }
    let im_inv = spd_inverse(&lower, g);
    Ok(PeriodMatrix { genus: g, entries, chol, im_inv })
}

fn cholesky<T: Real>(a: &[T], g: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); g * g];
    for i in 0..g {
        for j in 0..=i {
            let mut s = a[i * g + j];
            for k in 0..j {
                s = s - l[i * g + k] * l[j * g + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * g + i] = s.sqrt();
            } else {
                l[i * g + j] = s / l[j * g + j];
            }
        }
    }
    Some(l)
}

fn spd_inverse<T: Real>(l: &[T], g: usize) -> Vec<T> {
    let mut inv = vec![T::zero(); g * g];
    for col in 0..g {
        let mut y = vec![T::zero(); g];
        for i in 0..g {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s = s - l[i * g + k] * y[k];
            }
            y[i] = s / l[i * g + i];
        }
        let mut x = vec![T::zero(); g];
        for i in (0..g).rev() {
            let mut s = y[i];
            for k in i + 1..g {
                s = s - l[k * g + i] * x[k];
            }
            x[i] = s / l[i * g + i];
        }
        for i in 0..g {
            inv[i * g + col] = x[i];
        }
    }
    inv
}

/// Half-integer characteristic ε ∈ {0, 1/2}^g.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Characteristic {
    half: Vec<bool>,
}

impl Characteristic {
    pub fn zero(g: usize) -> Self {
        Characteristic { half: vec![false; g] }
    }

    pub fn new<T: Real>(eps: &[T]) -> Result<Self> {
        let half = eps
            .iter()
            .map(|&e| {
                if e == T::zero() {
                    Ok(false)
                } else if e == cst(0.5) {
                    Ok(true)
                } else {
                    Err(Error::BadCharacteristic)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Characteristic { half })
    }

    /// The i-th characteristic in lexicographic order (first coordinate most significant).
    pub fn from_index(index: usize, g: usize) -> Self {
        Characteristic { half: (0..g).map(|k| (index >> (g - 1 - k)) & 1 == 1).collect() }
    }

    /// All 2^g characteristics in lexicographic order.
    pub fn all(g: usize) -> Vec<Self> {
        (0..1usize << g).map(|i| Self::from_index(i, g)).collect()
    }

    pub fn genus(&self) -> usize {
        self.half.len()
    }

    pub fn is_half(&self, k: usize) -> bool {
        self.half[k]
    }

    pub fn values<T: Real>(&self) -> Vec<T> {
        self.half.iter().map(|&h| if h { cst(0.5) } else { T::zero() }).collect()
    }
}

/// Up to four derivative directions.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DerivativeSpec<T> {
    directions: Vec<Vec<Complex<T>>>,
}

impl<T: Real> DerivativeSpec<T> {
    pub fn none() -> Self {
        DerivativeSpec { directions: Vec::new() }
    }

    pub fn new(directions: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if directions.len() > 4 {
            return Err(Error::TooManyDerivatives(directions.len()));
        }
        if directions.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("derivative direction".into()));
        }
        Ok(DerivativeSpec { directions })
    }

    pub fn directions(&self) -> &[Vec<Complex<T>>] {
        &self.directions
    }

    pub fn order(&self) -> usize {
        self.directions.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaResult<T> {
    pub value: Complex<T>,
    pub error_bound: T,
    pub lattice_points_used: usize,
}

/// Mixed partials ∂_U^a ∂_V^b θ for a ≤ max_u, b ≤ max_v.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaPartials<T> {
    pub max_u: usize,
    pub max_v: usize,
    values: Vec<Complex<T>>,
    errors: Vec<T>,
    pub lattice_points_used: usize,
}

impl<T: Real> ThetaPartials<T> {
    pub fn get(&self, a: usize, b: usize) -> Complex<T> {
        self.values[a * (self.max_v + 1) + b]
    }

    pub fn error(&self, a: usize, b: usize) -> T {
        self.errors[a * (self.max_v + 1) + b]
    }

    pub fn max_error(&self) -> T {
        self.errors.iter().fold(T::zero(), |m, &e| m.max(e))
    }
}

/// log of (g/δ^g)∫_{R−2δ}^∞ (τ+2δ+s)^N (τ+δ)^{g−1} e^{−πτ²} dτ, an upper bound for
/// Σ_{‖p‖>R} (‖p‖+s)^N e^{−π‖p‖²} over any point set with pairwise distances ≥ 2δ.
fn log_tail(radius: f64, order: usize, g: usize, delta: f64, s: f64) -> f64 {
    let lo = (radius - 2.0 * delta).max(0.0);
    let a = 2.0 * delta + s;
    // coefficients of (τ+a)^N (τ+δ)^{g−1}
    let mut poly = vec![1.0f64];
    let mul = |p: &Vec<f64>, c: f64| {
        let mut out = vec![0.0; p.len() + 1];
        for (k, &pk) in p.iter().enumerate() {
            out[k] += pk * c;
            out[k + 1] += pk;
        }
        out
    };
    for _ in 0..order {
        poly = mul(&poly, a);
    }
    for _ in 1..g {
        poly = mul(&poly, delta);
    }
    // J_k = e^{π lo²} ∫_lo^∞ τ^k e^{−πτ²} dτ
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut j = vec![0.0f64; poly.len()];
    j[0] = if lo <= 3.0 {
        0.5 * erfc(std::f64::consts::PI.sqrt() * lo) * (std::f64::consts::PI * lo * lo).exp()
    } else {
        1.0 / (two_pi * lo)
    };
    if j.len() > 1 {
        j[1] = 1.0 / two_pi;
    }
    for k in 2..j.len() {
        j[k] = lo.powi(k as i32 - 1) / two_pi + (k as f64 - 1.0) / two_pi * j[k - 2];
    }
    let sum: f64 = poly.iter().zip(&j).map(|(p, q)| p * q).sum();
    (g as f64 / delta.powi(g as i32)).ln() - std::f64::consts::PI * lo * lo + sum.ln()
}

fn ball_volume(g: usize) -> f64 {
    // ω_g = π^{g/2} / Γ(g/2 + 1)
    let pi = std::f64::consts::PI;
    match g {
        0 => 1.0,
        1 => 2.0,
        _ => ball_volume(g - 2) * 2.0 * pi / g as f64,
    }
}

struct RadiusRequest {
    order: usize,
    log_prefactor: f64,
    log_target: f64,
}

/// Smallest radius (on a fixed grid) meeting every request, with the lattice-cap guard.
fn choose_radius<T: Real>(b: &PeriodMatrix<T>, s: f64, reqs: &[RadiusRequest]) -> Result<f64> {
    let g = b.genus;
    let delta = b.packing_radius();
    let start = (1.0f64).max(2.0 * delta);
    let mut radius = start;
    loop {
        let ok = reqs
            .iter()
            .all(|r| r.log_prefactor + log_tail(radius, r.order, g, delta, s) <= r.log_target);
        if ok {
            break;
        }
        radius += RADIUS_STEP;
        if radius > MAX_RADIUS {
            return Err(Error::TargetTooSmall { radius, cap: lattice_cap() });
        }
    }
    let det: f64 = (0..g).map(|i| b.chol[i * g + i].to_f64().unwrap()).product();
    let estimate = ball_volume(g) * (radius + 2.0 * delta).powi(g as i32) / det;
    if estimate > lattice_cap() as f64 {
        return Err(Error::TargetTooSmall { radius, cap: lattice_cap() });
    }
    Ok(radius)
}

/// Radius R such that the lattice tail outside the Y-ellipsoid of radius R is below
/// `target_error`, uniformly over arguments whose imaginary part is reduced to the
/// fundamental cell (|c_k| ≤ 1/2).
pub fn truncation_radius<T: Real>(b: &PeriodMatrix<T>, target_error: T) -> Result<T> {
    let target = target_error.to_f64().unwrap();
    if !(target > 0.0) {
        return Err(Error::InvalidArgument("target_error must be positive".into()));
    }
    let g = b.genus;
    let s: f64 = (0..g).map(|k| 0.5 * b.im(k, k).to_f64().unwrap().sqrt()).sum();
    let req = RadiusRequest {
        order: 0,
        log_prefactor: std::f64::consts::PI * s * s,
        log_target: target.ln(),
    };
    Ok(cst(choose_radius(b, s, &[req])?))
}

/// Visit every n ∈ Z^g + ε with ‖R(n+c)‖² ≤ radius², passing (n, ‖R(n+c)‖²).
fn enumerate<T: Real, F: FnMut(&[T], T)>(
    b: &PeriodMatrix<T>,
    eps: &Characteristic,
    c: &[T],
    radius: T,
    visit: &mut F,
) -> Result<usize> {
    struct State<'a, T, F> {
        r: &'a [T],
        g: usize,
        eps: Vec<T>,
        c: &'a [T],
        r2: T,
        cap: usize,
        count: usize,
        n: Vec<T>,
        v: Vec<T>,
        visit: &'a mut F,
    }
    fn rec<T: Real, F: FnMut(&[T], T)>(st: &mut State<'_, T, F>, i: usize, partial: T) -> Result<()> {
        let g = st.g;
        let rii = st.r[i * g + i];
        let mut mu = T::zero();
        for j in i + 1..g {
            mu = mu + st.r[i * g + j] * st.v[j];
        }
        mu = mu / rii;
        let rem = st.r2 - partial;
        if rem < T::zero() {
            return Ok(());
        }
        let w = rem.sqrt() / rii;
        let shift = st.c[i] + st.eps[i];
        let lo = (-mu - w - shift).ceil().to_i64().unwrap();
        let hi = (-mu + w - shift).floor().to_i64().unwrap();
        for m in lo..=hi {
            let ni = T::from_i64(m).unwrap() + st.eps[i];
            let vi = ni + st.c[i];
            let t = rii * (vi + mu);
            let p = partial + t * t;
            if p > st.r2 {
                continue;
            }
            st.n[i] = ni;
            st.v[i] = vi;
            if i == 0 {
                st.count += 1;
                if st.count > st.cap {
                    return Err(Error::TargetTooSmall {
                        radius: st.r2.sqrt().to_f64().unwrap(),
                        cap: st.cap,
                    });
                }
                (st.visit)(&st.n, p);
            } else {
                rec(st, i - 1, p)?;
            }
        }
        Ok(())
    }
    let g = b.genus;
    let mut st = State {
        r: &b.chol,
        g,
        eps: eps.values(),
        c,
        r2: radius * radius,
        cap: lattice_cap(),
        count: 0,
        n: vec![T::zero(); g],
        v: vec![T::zero(); g],
        visit,
    };
    rec(&mut st, g - 1, T::zero())?;
    Ok(st.count)
}

fn check_vec<T: Real>(v: &[Complex<T>], g: usize, what: &str) -> Result<()> {
    if v.len() != g {
        return Err(Error::DimensionMismatch { expected: g, got: v.len() });
    }
    if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// Core evaluator: for each exponent vector e (one entry per direction) returns
/// Σ_n Π_j (2πi(n,d_j))^{e_j} exp(2πi(z,n) + πi(Bn,n)), n ∈ Z^g + ε, each within its
/// absolute target.
fn theta_sums<T: Real>(
    eps: &Characteristic,
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    dirs: &[&[Complex<T>]],
    monos: &[Vec<usize>],
    targets: &[f64],
) -> Result<(Vec<ThetaResult<T>>, usize)> {
    let g = b.genus;
    check_vec(z, g, "argument z")?;
    if eps.genus() != g {
        return Err(Error::DimensionMismatch { expected: g, got: eps.genus() });
    }
    for d in dirs {
        check_vec(d, g, "derivative direction")?;
    }
    // reduce Re z modulo Z^g
    let mut sign_flip = false;
    let mut x = Vec::with_capacity(g);
    let mut y = Vec::with_capacity(g);
    for k in 0..g {
        let shift = z[k].re.round();
        if eps.is_half(k) && shift.to_i64().unwrap().rem_euclid(2) == 1 {
            sign_flip = !sign_flip;
        }
        x.push(z[k].re - shift);
        y.push(z[k].im);
    }
    let c = b.centre(&y);
    let log_mag = (0..g).fold(T::zero(), |acc, k| acc + c[k] * y[k]) * T::PI();
    let log_mag_f = log_mag.to_f64().unwrap();
    let max_log = T::max_value().ln().to_f64().unwrap() - 40.0;
    if log_mag_f > max_log {
        return Err(Error::Overflow(log_mag_f));
    }
    let s = (log_mag_f / std::f64::consts::PI).max(0.0).sqrt();
    let norms: Vec<f64> = dirs.iter().map(|d| b.dual_norm(d)).collect();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let reqs: Vec<RadiusRequest> = monos
        .iter()
        .zip(targets)
        .map(|(e, &t)| {
            let order: usize = e.iter().sum();
            let mut lp = log_mag_f + order as f64 * ln2pi;
            for (j, &ej) in e.iter().enumerate() {
                if ej > 0 {
                    lp += ej as f64 * norms[j].max(1e-300).ln();
                }
            }
            RadiusRequest { order, log_prefactor: lp, log_target: t.ln() }
        })
        .collect();
    let radius = choose_radius(b, s, &reqs)?;
    let max_exp: Vec<usize> = (0..dirs.len())
        .map(|j| monos.iter().map(|e| e[j]).max().unwrap_or(0))
        .collect();

    let zero = Complex::new(T::zero(), T::zero());
    let mut sums = vec![zero; monos.len()];
    let mut abs_sums = vec![T::zero(); monos.len()];
    let two_pi = T::PI() + T::PI();
    let mut powers: Vec<Vec<Complex<T>>> = max_exp.iter().map(|&m| vec![zero; m + 1]).collect();
    let mut visit = |n: &[T], q: T| {
        let mut phase = T::zero();
        for j in 0..g {
            phase = phase + two_pi * x[j] * n[j];
            let mut bn = T::zero();
            for k in 0..g {
                bn = bn + b.entries[j * g + k].re * n[k];
            }
            phase = phase + T::PI() * bn * n[j];
        }
        let mag = (-T::PI() * q).exp();
        let term = Complex::new(mag * phase.cos(), mag * phase.sin());
        for (j, d) in dirs.iter().enumerate() {
            let mut nd = zero;
            for k in 0..g {
                nd = nd + d[k] * n[k];
            }
            let p = Complex::new(T::zero(), two_pi) * nd;
            powers[j][0] = Complex::new(T::one(), T::zero());
            for e in 1..=max_exp[j] {
                powers[j][e] = powers[j][e - 1] * p;
            }
        }
        for (i, e) in monos.iter().enumerate() {
            let mut t = term;
            for (j, &ej) in e.iter().enumerate() {
                if ej > 0 {
                    t = t * powers[j][ej];
                }
            }
            sums[i] = sums[i] + t;
            abs_sums[i] = abs_sums[i] + t.norm();
        }
    };
    let count = enumerate(b, eps, &c, cst(radius), &mut visit)?;
    let delta = b.packing_radius();
    let scale = log_mag.exp();
    let sign = if sign_flip { -T::one() } else { T::one() };
    let roundoff_factor = T::epsilon() * cst(8.0 + 2.0 * g as f64);
    let out = sums
        .iter()
        .zip(&abs_sums)
        .zip(&reqs)
        .map(|((&sum, &abs_sum), r)| {
            let tail = (r.log_prefactor + log_tail(radius, r.order, g, delta, s)).exp();
            let value = sum * (scale * sign);
            let round = roundoff_factor * (abs_sum * scale + value.norm());
            ThetaResult {
                value,
                error_bound: cst::<T>(tail) + round,
                lattice_points_used: count,
            }
        })
        .collect();
    Ok((out, count))
}

/// θ[ε,0](z|B) with the derivatives listed in `d`.
pub fn theta_char<T: Real>(
    eps: &Characteristic,
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    d: &DerivativeSpec<T>,
    target_error: T,
) -> Result<ThetaResult<T>> {
    let target = target_error.to_f64().unwrap();
    if !(target > 0.0) {
        return Err(Error::InvalidArgument("target_error must be positive".into()));
    }
    let dirs: Vec<&[Complex<T>]> = d.directions.iter().map(|v| v.as_slice()).collect();
    let mono = vec![vec![1usize; dirs.len()]];
    let (res, _) = theta_sums(eps, z, b, &dirs, &mono, &[target])?;
    Ok(res[0])
}

/// θ(z|B) with derivatives.
pub fn theta<T: Real>(
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    d: &DerivativeSpec<T>,
    target_error: T,
) -> Result<ThetaResult<T>> {
    theta_char(&Characteristic::zero(b.genus), z, b, d, target_error)
}

/// Θ[ε,0](z) = θ[ε,0](2z|2B); each derivative direction picks up the chain-rule factor 2.
pub fn level2_theta<T: Real>(
    eps: &Characteristic,
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    d: &DerivativeSpec<T>,
    target_error: T,
) -> Result<ThetaResult<T>> {
    let two = cst::<T>(2.0);
    let b2 = b.scaled(two)?;
    let z2: Vec<Complex<T>> = z.iter().map(|&c| c * two).collect();
    let d2 = DerivativeSpec::new(
        d.directions.iter().map(|v| v.iter().map(|&c| c * two).collect()).collect(),
    )?;
    theta_char(eps, &z2, &b2, &d2, target_error)
}

/// All mixed partials ∂_U^a ∂_V^b θ[ε,0](z|B), a ≤ max_u, b ≤ max_v, from one lattice pass.
/// `target_error` bounds the normalized Taylor coefficients ∂_U^a∂_V^bθ/(a!b!).
#[allow(clippy::too_many_arguments)]
pub fn theta_partials<T: Real>(
    eps: &Characteristic,
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    u: &[Complex<T>],
    v: &[Complex<T>],
    max_u: usize,
    max_v: usize,
    target_error: T,
) -> Result<ThetaPartials<T>> {
    let target = target_error.to_f64().unwrap();
    if !(target > 0.0) {
        return Err(Error::InvalidArgument("target_error must be positive".into()));
    }
    let mut monos = Vec::new();
    let mut targets = Vec::new();
    let mut fact_a = 1.0f64;
    for a in 0..=max_u {
        if a > 0 {
            fact_a *= a as f64;
        }
        let mut fact_b = 1.0f64;
        for bb in 0..=max_v {
            if bb > 0 {
                fact_b *= bb as f64;
            }
            monos.push(vec![a, bb]);
            targets.push(target * fact_a * fact_b);
        }
    }
    let (res, count) = theta_sums(eps, z, b, &[u, v], &monos, &targets)?;
    Ok(ThetaPartials {
        max_u,
        max_v,
        values: res.iter().map(|r| r.value).collect(),
        errors: res.iter().map(|r| r.error_bound).collect(),
        lattice_points_used: count,
    })
}

/// Mixed partials of the level-two function Θ[ε,0] at z.
#[allow(clippy::too_many_arguments)]
pub fn level2_partials<T: Real>(
    eps: &Characteristic,
    z: &[Complex<T>],
    b: &PeriodMatrix<T>,
    u: &[Complex<T>],
    v: &[Complex<T>],
    max_u: usize,
    max_v: usize,
    target_error: T,
) -> Result<ThetaPartials<T>> {
    let two = cst::<T>(2.0);
    let b2 = b.scaled(two)?;
    let dbl = |w: &[Complex<T>]| w.iter().map(|&c| c * two).collect::<Vec<_>>();
    theta_partials(eps, &dbl(z), &b2, &dbl(u), &dbl(v), max_u, max_v, target_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn box_sum(eps: &[f64], z: &[C], b: &[Vec<C>], dirs: &[Vec<C>], m: i64) -> C {
        let g = z.len();
        let mut total = c(0.0, 0.0);
        let mut idx = vec![-m; g];
        loop {
            let n: Vec<f64> = idx.iter().zip(eps).map(|(&k, &e)| k as f64 + e).collect();
            let mut ex = c(0.0, 0.0);
            for j in 0..g {
                ex += 2.0 * std::f64::consts::PI * C::i() * z[j] * n[j];
                for k in 0..g {
                    ex += std::f64::consts::PI * C::i() * b[j][k] * n[j] * n[k];
                }
            }
            let mut t = ex.exp();
            for d in dirs {
                let nd: C = (0..g).map(|k| d[k] * n[k]).sum();
                t *= 2.0 * std::f64::consts::PI * C::i() * nd;
            }
            total += t;
            let mut k = 0;
            loop {
                if k == g {
                    return total;
                }
                idx[k] += 1;
                if idx[k] > m {
                    idx[k] = -m;
                    k += 1;
                } else {
                    break;
                }
            }
        }
    }

    #[test]
    fn validate_examples() {
        assert!(validate_period_matrix(&[vec![c(0.0, 1.0)]]).is_ok());
        assert_eq!(
            validate_period_matrix(&[vec![c(1.0, 0.0)]]),
            Err(Error::NotPositiveDefinite)
        );
        let raw = vec![vec![c(0.0, 1.0), c(0.4999, 0.0)], vec![c(0.5001, 0.0), c(0.0, 1.0)]];
        let pm = validate_period_matrix_tol(&raw, 1e-3).unwrap();
        assert_relative_eq!(pm.get(0, 1).re, 0.5, epsilon = 1e-15);
        assert_eq!(pm.get(0, 1), pm.get(1, 0));
        assert!(matches!(validate_period_matrix(&raw), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn known_values_genus_one() {
        let b = validate_period_matrix(&[vec![c(0.0, 1.0)]]).unwrap();
        let z = [c(0.0, 0.0)];
        let r = theta(&z, &b, &DerivativeSpec::none(), 1e-14).unwrap();
        assert_relative_eq!(r.value.re, 1.086_434_811_213_308, epsilon = 1e-13);
        let half = Characteristic::new(&[0.5]).unwrap();
        let r = theta_char(&half, &z, &b, &DerivativeSpec::none(), 1e-14).unwrap();
        assert_relative_eq!(r.value.re, 0.913_579_138_156_117, epsilon = 1e-13);
        // θ(0|2i) by direct summation
        let r = level2_theta(&Characteristic::zero(1), &z, &b, &DerivativeSpec::none(), 1e-14)
            .unwrap();
        assert_relative_eq!(r.value.re, 1.003_734_885_487_739, epsilon = 1e-13);
        let d = DerivativeSpec::new(vec![vec![c(1.0, 0.0)]]).unwrap();
        assert!(theta(&z, &b, &d, 1e-14).unwrap().value.norm() < 1e-14);
        assert!(level2_theta(&Characteristic::zero(1), &z, &b, &d, 1e-14).unwrap().value.norm() < 1e-14);
    }

    #[test]
    fn radius_examples() {
        let b = validate_period_matrix(&[vec![c(0.0, 1.0)]]).unwrap();
        let r = truncation_radius(&b, 1e-12).unwrap();
        // tail of Σ e^{−π m²} beyond the radius against a direct sum to |m| ≤ 50
        let tail: f64 = (-50i64..=50)
            .filter(|&m| (m as f64).abs() > r)
            .map(|m| (-std::f64::consts::PI * (m * m) as f64).exp())
            .sum();
        assert!(tail < 1e-12);
        assert!(truncation_radius(&b, 1.0).unwrap() >= 1.0);
        assert!(truncation_radius(&b, 1e-12).unwrap() > truncation_radius(&b, 1e-6).unwrap());
    }

    #[test]
    fn matches_box_sum_with_derivatives() {
        let raw = vec![vec![c(0.1, 1.2), c(0.3, -0.2)], vec![c(0.3, -0.2), c(-0.2, 0.9)]];
        let b = validate_period_matrix(&raw).unwrap();
        let z = [c(0.7, 0.3), c(-1.4, -0.5)];
        let u = vec![c(0.5, 0.1), c(-0.3, 0.2)];
        let v = vec![c(0.2, 0.0), c(0.1, -0.4)];
        for (ei, eps) in Characteristic::all(2).iter().enumerate() {
            let dirs = vec![u.clone(), v.clone(), u.clone()];
            let d = DerivativeSpec::new(dirs.clone()).unwrap();
            let r = theta_char(eps, &z, &b, &d, 1e-13).unwrap();
            let want = box_sum(&eps.values(), &z, &raw, &dirs, 20);
            assert!((r.value - want).norm() <= r.error_bound.max(1e-10 * (1.0 + want.norm())), "{ei}");
        }
    }

    #[test]
    fn partials_agree_with_single_evaluations() {
        let raw = vec![vec![c(0.1, 1.2), c(0.3, -0.2)], vec![c(0.3, -0.2), c(-0.2, 0.9)]];
        let b = validate_period_matrix(&raw).unwrap();
        let z = [c(0.2, 0.1), c(0.4, -0.3)];
        let u = vec![c(0.5, 0.1), c(-0.3, 0.2)];
        let v = vec![c(0.2, 0.0), c(0.1, -0.4)];
        let eps = Characteristic::from_index(1, 2);
        let p = level2_partials(&eps, &z, &b, &u, &v, 2, 2, 1e-14).unwrap();
        let d = DerivativeSpec::new(vec![u.clone(), u.clone(), v.clone()]).unwrap();
        let single = level2_theta(&eps, &z, &b, &d, 1e-14).unwrap();
        assert!((p.get(2, 1) - single.value).norm() < 1e-10 * (1.0 + single.value.norm()));
    }

    #[test]
    fn large_imaginary_part_is_centred() {
        let b = validate_period_matrix(&[vec![c(0.0, 1.0)]]).unwrap();
        let z = [c(0.3, 0.2)];
        let base = theta(&z, &b, &DerivativeSpec::none(), 1e-14).unwrap().value;
        // θ(z + B) = e^{−πiB − 2πiz} θ(z)
        let zb = [z[0] + b.get(0, 0) * 3.0];
        let shifted = theta(&zb, &b, &DerivativeSpec::none(), 1e-12).unwrap().value;
        let m = 3.0;
        let factor = (-std::f64::consts::PI * C::i() * b.get(0, 0) * m * m
            - 2.0 * std::f64::consts::PI * C::i() * z[0] * m)
            .exp();
        assert!((shifted - factor * base).norm() < 1e-9 * shifted.norm());
        let far = [c(0.0, 200.0)];
        assert!(matches!(theta(&far, &b, &DerivativeSpec::none(), 1e-10), Err(Error::Overflow(_))));
    }

    #[test]
    fn single_precision_agrees() {
        let b32 = validate_period_matrix(&[vec![Complex::new(0.0f32, 1.0)]]).unwrap();
        let r = theta(&[Complex::new(0.0f32, 0.0)], &b32, &DerivativeSpec::none(), 1e-6).unwrap();
        assert!((r.value.re - 1.086_434_8).abs() < 1e-5);
    }

    #[test]
    fn too_many_directions() {
        let u = vec![c(1.0, 0.0)];
        assert_eq!(
            DerivativeSpec::new(vec![u.clone(); 5]),
            Err(Error::TooManyDerivatives(5))
        );
    }
}

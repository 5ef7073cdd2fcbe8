//! Pseudo-differential operators in ∂ = ∂_t with jet coefficients, truncated to a window of
//! orders, with bookkeeping of which orders are still exact after truncation.
//!
//! Composition: ∂^i ∘ f = Σ_k binom(i, k) f^{(k)} ∂^{i−k} (generalized binomials for i < 0).
//! Adjoint: (a∂^i)* = (−∂)^i ∘ a.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::data::FlowData;
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::scalar::Scalar;
use crate::theta::{theta_partials, Characteristic};

type C = Complex64;

/// Operator coefficient: an exact constant or a jet.
#[derive(Clone, Debug, PartialEq)]
pub enum Coef<S: Scalar> {
    Const(S),
    Jet(Jet2<S>),
}

impl<S: Scalar> Coef<S> {
    fn mul(&self, other: &Self) -> Result<Self> {
        Ok(match (self, other) {
            (Coef::Const(a), Coef::Const(b)) => Coef::Const(a.clone() * b.clone()),
            (Coef::Const(a), Coef::Jet(j)) | (Coef::Jet(j), Coef::Const(a)) => Coef::Jet(j.scale(a)),
            (Coef::Jet(a), Coef::Jet(b)) => Coef::Jet(a.mul(b)?),
        })
    }

    fn add(&self, other: &Self) -> Result<Self> {
        Ok(match (self, other) {
            (Coef::Const(a), Coef::Const(b)) => Coef::Const(a.clone() + b.clone()),
            (Coef::Const(a), Coef::Jet(j)) | (Coef::Jet(j), Coef::Const(a)) => Coef::Jet(j.add_constant(a)),
            (Coef::Jet(a), Coef::Jet(b)) => Coef::Jet(a.add(b)?),
        })
    }

    fn scale(&self, s: &S) -> Self {
        match self {
            Coef::Const(a) => Coef::Const(a.clone() * s.clone()),
            Coef::Jet(j) => Coef::Jet(j.scale(s)),
        }
    }

    /// k-th t-derivative: `None` for an exact zero, `Err` when the jet is exhausted.
    fn diff_t_n(&self, k: usize) -> std::result::Result<Option<Self>, ()> {
        match self {
            Coef::Const(_) if k > 0 => Ok(None),
            Coef::Const(_) => Ok(Some(self.clone())),
            Coef::Jet(j) => {
                let d = j.diff_t_n(k);
                if d.is_unknown() {
                    Err(())
                } else {
                    Ok(Some(Coef::Jet(d)))
                }
            }
        }
    }

    fn diff_x(&self) -> Option<Self> {
        match self {
            Coef::Const(_) => None,
            Coef::Jet(j) => Some(Coef::Jet(j.diff_x())),
        }
    }

    /// As a jet at `base` with the given sizes (constants are expanded).
    pub fn to_jet(&self, base: &(S, S), nx: usize, nt: usize) -> Jet2<S> {
        match self {
            Coef::Const(a) => Jet2::constant(base.clone(), a.clone(), nx, nt),
            Coef::Jet(j) => j.clone(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        match self {
            Coef::Const(a) => a.magnitude(),
            Coef::Jet(j) => j.max_magnitude(),
        }
    }

    fn deviation(&self, other: &Self) -> f64 {
        match (self, other) {
            (Coef::Const(a), Coef::Const(b)) => (a.clone() - b.clone()).magnitude(),
            (Coef::Jet(a), Coef::Jet(b)) => a.max_deviation(b),
            (Coef::Const(a), Coef::Jet(j)) | (Coef::Jet(j), Coef::Const(a)) => {
                let (nx, nt) = j.sizes();
                Jet2::constant(j.base().clone(), a.clone(), nx, nt).max_deviation(j)
            }
        }
    }
}

fn diff_coef<S: Scalar>(a: Option<&Coef<S>>, b: Option<&Coef<S>>) -> (f64, f64) {
    match (a, b) {
        (None, None) => (0.0, 0.0),
        (Some(x), None) | (None, Some(x)) => (x.magnitude(), x.magnitude()),
        (Some(x), Some(y)) => (x.deviation(y), x.magnitude().max(y.magnitude())),
    }
}

/// Generalized binomial coefficient binom(i, k) for integer i and k ≥ 0.
pub fn binom(i: i64, k: usize) -> i128 {
    let mut r: i128 = 1;
    for m in 0..k as i128 {
        r = r * (i as i128 - m) / (m + 1);
    }
    r
}

/// Σ_{i=lo}^{hi} a_i ∂^i. Orders below `valid_lo` (when set) are not trustworthy: true
/// coefficients there may differ from the stored ones, including orders below `lo`.
/// `valid_lo == None` means the operator is exact (it has no terms below `lo`).
#[derive(Clone, Debug, PartialEq)]
pub struct PsdoOp<S: Scalar> {
    lo: i32,
    hi: i32,
    coeffs: BTreeMap<i32, Coef<S>>,
    valid_lo: Option<i32>,
    base: (S, S),
}

impl<S: Scalar> PsdoOp<S> {
    pub fn zero(base: (S, S), lo: i32, hi: i32) -> Self {
        PsdoOp { lo, hi, coeffs: BTreeMap::new(), valid_lo: None, base }
    }

    /// c·∂^i with a constant c.
    pub fn monomial(base: (S, S), i: i32, c: S) -> Self {
        let mut op = Self::zero(base, i, i);
        op.coeffs.insert(i, Coef::Const(c));
        op
    }

    pub fn identity(base: (S, S)) -> Self {
        Self::monomial(base, 0, S::one())
    }

    pub fn d(base: (S, S)) -> Self {
        Self::monomial(base, 1, S::one())
    }

    pub fn d_inv(base: (S, S)) -> Self {
        Self::monomial(base, -1, S::one())
    }

    /// Multiplication by a function.
    pub fn function(f: Jet2<S>) -> Self {
        let mut op = Self::zero(f.base().clone(), 0, 0);
        op.coeffs.insert(0, Coef::Jet(f));
        op
    }

    pub fn from_jets(base: (S, S), lo: i32, jets: Vec<Jet2<S>>, valid_lo: Option<i32>) -> Result<Self> {
        if jets.is_empty() {
            return Err(Error::InvalidArgument("empty operator".into()));
        }
        if let Some(v) = valid_lo {
            if v < lo {
                return Err(Error::InvalidArgument("valid_lo below window".into()));
            }
        }
        let hi = lo + jets.len() as i32 - 1;
        let mut op = Self::zero(base.clone(), lo, hi);
        for (k, j) in jets.into_iter().enumerate() {
            if j.base() != &base {
                return Err(Error::IncompatibleBase);
            }
            op.coeffs.insert(lo + k as i32, Coef::Jet(j));
        }
        op.valid_lo = valid_lo;
        Ok(op)
    }

    pub fn set(&mut self, i: i32, c: Coef<S>) {
        self.lo = self.lo.min(i);
        self.hi = self.hi.max(i);
        self.coeffs.insert(i, c);
    }

    pub fn window(&self) -> (i32, i32) {
        (self.lo, self.hi)
    }

    pub fn valid_lo(&self) -> Option<i32> {
        self.valid_lo
    }

    pub fn base(&self) -> &(S, S) {
        &self.base
    }

    /// Lowest order whose coefficient is trustworthy (`i32::MIN` when exact).
    pub fn trusted_from(&self) -> i32 {
        self.valid_lo.unwrap_or(i32::MIN)
    }

    pub fn coeff(&self, i: i32) -> Option<&Coef<S>> {
        self.coeffs.get(&i)
    }

    /// Coefficient as a jet (zero jet of the given sizes when absent).
    pub fn coeff_jet(&self, i: i32, nx: usize, nt: usize) -> Jet2<S> {
        match self.coeffs.get(&i) {
            Some(c) => c.to_jet(&self.base, nx, nt),
            None => Jet2::zeros(self.base.clone(), nx, nt),
        }
    }

    fn check_base(&self, other: &Self) -> Result<()> {
        if self.base == other.base {
            Ok(())
        } else {
            Err(Error::IncompatibleBase)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_base(other)?;
        let mut out = Self::zero(self.base.clone(), self.lo.min(other.lo), self.hi.max(other.hi));
        out.coeffs = self.coeffs.clone();
        for (i, c) in &other.coeffs {
            let v = match out.coeffs.get(i) {
                Some(a) => a.add(c)?,
                None => c.clone(),
            };
            out.coeffs.insert(*i, v);
        }
        out.valid_lo = max_opt(self.valid_lo, other.valid_lo);
        Ok(out)
    }

    pub fn scale(&self, s: &S) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.scale(s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-S::one()))
    }

    /// Coefficient-wise x-derivative.
    pub fn diff_x(&self) -> Self {
        let mut out = Self::zero(self.base.clone(), self.lo, self.hi);
        for (i, c) in &self.coeffs {
            if let Some(d) = c.diff_x() {
                out.coeffs.insert(*i, d);
            }
        }
        out.valid_lo = self.valid_lo;
        out
    }

    /// Composition self ∘ other, truncated below min(lo_A, lo_B).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.mul_to(other, self.lo.min(other.lo))
    }

    /// Composition truncated below `lo`.
    pub fn mul_to(&self, other: &Self, lo: i32) -> Result<Self> {
        self.check_base(other)?;
        let hi = self.hi + other.hi;
        let lo = lo.min(hi);
        let mut out = Self::zero(self.base.clone(), lo, hi);
        let mut dropped = false;
        let mut exhausted: Option<i32> = None;
        for (&i, a) in &self.coeffs {
            for (&j, b) in &other.coeffs {
                let mut k = 0usize;
                loop {
                    if (i >= 0 && k as i64 > i as i64) || (k > 0 && matches!(b, Coef::Const(_))) {
                        break;
                    }
                    let n = i + j - k as i32;
                    if n < lo {
                        dropped = true;
                        break;
                    }
                    let bc = binom(i as i64, k);
                    if bc != 0 {
                        match b.diff_t_n(k) {
                            Ok(None) => break, // derivatives of a constant vanish from here on
                            Ok(Some(db)) => {
                                let term = a.mul(&db)?.scale(&S::from_i64(bc as i64));
                                let v = match out.coeffs.get(&n) {
                                    Some(c) => c.add(&term)?,
                                    None => term,
                                };
                                out.coeffs.insert(n, v);
                            }
                            Err(()) => {
                                exhausted = Some(exhausted.map_or(n, |e: i32| e.max(n)));
                            }
                        }
                    }
                    k += 1;
                }
            }
        }
        let mut v: Option<i32> = None;
        if dropped {
            v = Some(lo);
        }
        if let Some(va) = self.valid_lo {
            v = max_opt(v, Some(va + other.hi));
        }
        if let Some(vb) = other.valid_lo {
            v = max_opt(v, Some(vb + self.hi));
        }
        if let Some(e) = exhausted {
            v = max_opt(v, Some(e + 1));
        }
        out.valid_lo = v.map(|x| x.max(lo));
        Ok(out)
    }

    /// Formal adjoint, truncated at the same lower order.
    pub fn adjoint(&self) -> Result<Self> {
        self.adjoint_to(self.lo)
    }

    /// Formal adjoint truncated below `lo`.
    pub fn adjoint_to(&self, lo: i32) -> Result<Self> {
        let lo = lo.min(self.hi);
        let mut out = Self::zero(self.base.clone(), lo, self.hi);
        let mut dropped = false;
        let mut exhausted: Option<i32> = None;
        for (&i, a) in &self.coeffs {
            let sign = if i.rem_euclid(2) == 0 { 1 } else { -1 };
            let mut k = 0usize;
            loop {
                if (i >= 0 && k as i64 > i as i64) || (k > 0 && matches!(a, Coef::Const(_))) {
                    break;
                }
                let n = i - k as i32;
                if n < lo {
                    dropped = true;
                    break;
                }
                let bc = binom(i as i64, k) * sign;
                if bc != 0 {
                    match a.diff_t_n(k) {
                        Ok(None) => break,
                        Ok(Some(da)) => {
                            let term = da.scale(&S::from_i64(bc as i64));
                            let v = match out.coeffs.get(&n) {
                                Some(c) => c.add(&term)?,
                                None => term,
                            };
                            out.coeffs.insert(n, v);
                        }
                        Err(()) => exhausted = Some(exhausted.map_or(n, |e: i32| e.max(n))),
                    }
                }
                k += 1;
            }
        }
        let mut v = self.valid_lo;
        if dropped {
            v = max_opt(v, Some(lo));
        }
        if let Some(e) = exhausted {
            v = max_opt(v, Some(e + 1));
        }
        out.valid_lo = v;
        Ok(out)
    }

    /// Coefficient of ∂^{−1}.
    pub fn residue(&self) -> Result<Coef<S>> {
        if !(self.lo..=self.hi).contains(&-1) {
            if self.valid_lo.is_none() {
                return Ok(Coef::Const(S::zero()));
            }
            return Err(Error::WindowMiss(-1));
        }
        if self.trusted_from() > -1 {
            return Err(Error::TruncationExhausted(format!(
                "residue needs order −1, operator trusted from {}",
                self.trusted_from()
            )));
        }
        Ok(self.coeffs.get(&-1).cloned().unwrap_or(Coef::Const(S::zero())))
    }

    /// (strictly positive part, rest): orders ≥ 1 and orders ≤ 0.
    pub fn split_plus_minus(&self) -> (Self, Self) {
        let mut plus = Self::zero(self.base.clone(), 1.max(self.lo).min(self.hi.max(1)), self.hi.max(1));
        let mut minus = Self::zero(self.base.clone(), self.lo.min(0), self.hi.min(0));
        for (i, c) in &self.coeffs {
            if *i >= 1 {
                plus.coeffs.insert(*i, c.clone());
            } else {
                minus.coeffs.insert(*i, c.clone());
            }
        }
        // truncation only affects low orders
        plus.valid_lo = self.valid_lo.and_then(|v| if v > 1 { Some(v) } else { None });
        minus.valid_lo = self.valid_lo;
        (plus, minus)
    }

    pub fn pow(&self, m: u32) -> Result<Self> {
        let mut out = Self::identity(self.base.clone());
        for _ in 0..m {
            out = out.mul_to(self, self.lo.min(out.lo))?;
        }
        Ok(out)
    }

    /// ∂ ∘ self ∘ ∂^{−1}.
    pub fn conj_d(&self) -> Result<Self> {
        let d = Self::d(self.base.clone());
        let dinv = Self::d_inv(self.base.clone());
        d.mul(self)?.mul_to(&dinv, self.lo)
    }

    /// Largest magnitude over trusted coefficients.
    pub fn magnitude(&self) -> f64 {
        let t = self.trusted_from();
        self.coeffs.iter().filter(|(i, _)| **i >= t).map(|(_, c)| c.magnitude()).fold(0.0, f64::max)
    }
}

fn max_opt(a: Option<i32>, b: Option<i32>) -> Option<i32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Relative deviation of two operators over the orders both trust, order by order:
/// max_n |A_n − B_n| / max(|A_n|, |B_n|, 1e−9·max_n(|A_n|, |B_n|)).
pub fn op_deviation<S: Scalar>(a: &PsdoOp<S>, b: &PsdoOp<S>) -> f64 {
    let from = a.trusted_from().max(b.trusted_from()).max(a.lo.min(b.lo));
    let to = a.hi.max(b.hi);
    let mut rows = Vec::new();
    for n in from..=to {
        rows.push(diff_coef(a.coeff(n), b.coeff(n)));
    }
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    rows.iter()
        .map(|(d, s)| if *d == 0.0 { 0.0 } else { d / s.max(1e-9 * scale).max(f64::MIN_POSITIVE) })
        .fold(0.0, f64::max)
}

pub fn psdo_mul<S: Scalar>(a: &PsdoOp<S>, b: &PsdoOp<S>) -> Result<PsdoOp<S>> {
    a.mul(b)
}

pub fn psdo_adjoint<S: Scalar>(a: &PsdoOp<S>) -> Result<PsdoOp<S>> {
    a.adjoint()
}

pub fn psdo_residue<S: Scalar>(a: &PsdoOp<S>) -> Result<Coef<S>> {
    a.residue()
}

pub fn split_plus_minus<S: Scalar>(a: &PsdoOp<S>) -> (PsdoOp<S>, PsdoOp<S>) {
    a.split_plus_minus()
}

/// 1 + N with N of negative order: (1 + N)^{−1} = Σ_k (−N)^k, down to order `lo`.
pub fn inverse_unipotent<S: Scalar>(phi: &PsdoOp<S>, lo: i32) -> Result<PsdoOp<S>> {
    let base = phi.base().clone();
    let one = PsdoOp::identity(base.clone());
    let n = phi.sub(&one)?;
    if n.coeffs.iter().any(|(i, c)| *i >= 0 && c.magnitude() != 0.0) {
        return Err(Error::InvalidArgument("operator is not 1 + lower order".into()));
    }
    let mut neg = n.scale(&-S::one());
    neg.coeffs.retain(|i, _| *i < 0);
    neg.hi = -1;
    let mut out = one.clone();
    let mut term = one;
    for _ in 0..(-lo).max(0) {
        term = term.mul_to(&neg, lo)?;
        out = out.add(&term)?;
    }
    // terms (−N)^k for k > −lo start below lo
    if n.valid_lo.is_some() || !neg.coeffs.is_empty() {
        out.valid_lo = max_opt(out.valid_lo, Some(lo));
    }
    out.lo = lo;
    Ok(out)
}

/// Φ = 1 + Σ_{s=1}^S ξ_s ∂^{−s} (trusted down to −S) and L = Φ∂Φ^{−1}.
pub fn build_phi_and_l<S: Scalar>(xi: &[Jet2<S>], s: usize) -> Result<(PsdoOp<S>, PsdoOp<S>)> {
    if s == 0 || xi.len() < s {
        return Err(Error::TruncationExhausted(format!("need {s} coefficients, got {}", xi.len())));
    }
    let base = xi[0].base().clone();
    let mut phi = PsdoOp::identity(base.clone());
    for (k, x) in xi.iter().take(s).enumerate() {
        if x.base() != &base {
            return Err(Error::IncompatibleBase);
        }
        phi.set(-(k as i32) - 1, Coef::Jet(x.clone()));
    }
    phi.valid_lo = Some(-(s as i32));
    let inv = inverse_unipotent(&phi, -(s as i32))?;
    let l = phi.mul(&PsdoOp::d(base))?.mul(&inv)?;
    Ok((phi, l))
}

/// L Φ − Φ ∂ (the symbol identity Lψ = kψ for ψ = Φe^{kt}), as a relative deviation.
pub fn check_symbol_identity<S: Scalar>(phi: &PsdoOp<S>, l: &PsdoOp<S>) -> Result<f64> {
    let lhs = l.mul(phi)?;
    let rhs = phi.mul(&PsdoOp::d(phi.base().clone()))?;
    Ok(op_deviation(&lhs, &rhs))
}

/// L* against −∂L∂^{−1}.
pub fn check_adjoint_relation<S: Scalar>(l: &PsdoOp<S>) -> Result<f64> {
    let a = l.adjoint()?;
    let b = l.conj_d()?.scale(&-S::one());
    Ok(op_deviation(&a, &b))
}

/// (F^{(0)}_m, F^{(1)}_m) = (res L^m∂^{−1}, res L^m).
pub fn residues_f<S: Scalar>(l: &PsdoOp<S>, m: u32) -> Result<(Coef<S>, Coef<S>)> {
    let lm = l.pow(m)?;
    let f0 = lm.mul(&PsdoOp::d_inv(l.base().clone()))?.residue()?;
    let f1 = lm.residue()?;
    Ok((f0, f1))
}

fn dt_coef<S: Scalar>(c: &Coef<S>) -> Result<Coef<S>> {
    match c.diff_t_n(1) {
        Ok(Some(d)) => Ok(d),
        Ok(None) => Ok(Coef::Const(S::zero())),
        Err(()) => Err(Error::TruncationExhausted("jet exhausted".into())),
    }
}

/// |F^{(0)}_{2m+1}| relative to the residue scale max(|F^{(0)}|, |F^{(1)}|) of L^{2m+1}.
pub fn check_odd_residue<S: Scalar>(l: &PsdoOp<S>, m: u32) -> Result<f64> {
    let (f0, f1) = residues_f(l, 2 * m + 1)?;
    let scale = f0.magnitude().max(f1.magnitude());
    Ok(if scale == 0.0 { 0.0 } else { f0.magnitude() / scale })
}

/// |2F^{(1)}_{2m} + ∂_tF^{(0)}_{2m}| relative to the larger of the two terms.
pub fn check_even_residue<S: Scalar>(l: &PsdoOp<S>, m: u32) -> Result<f64> {
    let (f0, f1) = residues_f(l, 2 * m)?;
    let a = f1.scale(&S::from_i64(2));
    let b = dt_coef(&f0)?;
    let scale = a.magnitude().max(b.magnitude()).max(f0.magnitude());
    let r = a.add(&b)?.magnitude();
    Ok(if r == 0.0 { 0.0 } else { r / scale })
}

/// Largest relative mismatch, over n = 1 … n_max, of J^{(0)}_n = F^{(0)}_n and
/// 2J^{(1)}_n = 2F^{(1)}_n + ∂_tF^{(0)}_n (each relative to the residue scale of L^n).
pub fn check_j_series<S: Scalar>(phi: &PsdoOp<S>, l: &PsdoOp<S>, n_max: u32) -> Result<f64> {
    let (j0, j1) = j_series(phi)?;
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        let k = n as usize;
        if k >= j1.len() {
            return Err(Error::TruncationExhausted(format!("J series has {} terms", j1.len())));
        }
        let (f0, f1) = residues_f(l, n)?;
        let df0 = dt_coef(&f0)?;
        let rhs = f1.scale(&S::from_i64(2)).add(&df0)?;
        let lhs = j1[k].scale(&S::from_i64(2));
        let scale = f0.magnitude().max(f1.magnitude()).max(df0.magnitude());
        if scale > 0.0 {
            worst = worst.max(j0[k].deviation(&f0) / scale).max(lhs.deviation(&rhs) / scale);
        }
    }
    Ok(worst)
}

/// (L^m_+)* against (−1)^m ∂ L^m_+ ∂^{−1}.
pub fn check_plus_adjoint<S: Scalar>(l: &PsdoOp<S>, m: u32) -> Result<f64> {
    let lm = l.pow(m)?;
    if lm.trusted_from() > 1 {
        return Err(Error::TruncationExhausted(format!("L^{m} trusted only from order {}", lm.trusted_from())));
    }
    let (mut plus, _) = lm.split_plus_minus();
    plus.valid_lo = None;
    let a = plus.adjoint()?;
    let sign = if m % 2 == 0 { S::one() } else { -S::one() };
    let b = plus.conj_d()?.scale(&sign);
    Ok(op_deviation(&a, &b))
}

/// (lhs, rhs, deviation) for res_k (e^{−kt}D₁)(D₂e^{kt}) = res_∂(D₂D₁); the left action
/// is e^{−kt}D₁ = D₁* e^{−kt}.
pub fn pairing_residue_identity<S: Scalar>(d1: &PsdoOp<S>, d2: &PsdoOp<S>) -> Result<(Coef<S>, Coef<S>, f64)> {
    let b = d1.adjoint_to(d1.lo.min(-1 - d2.hi))?;
    let mut lhs: Option<Coef<S>> = None;
    for (&i, bi) in &b.coeffs {
        if let Some(cj) = d2.coeffs.get(&(-1 - i)) {
            let sign = if i.rem_euclid(2) == 0 { S::one() } else { -S::one() };
            let t = bi.mul(cj)?.scale(&sign);
            lhs = Some(match lhs {
                Some(x) => x.add(&t)?,
                None => t,
            });
        }
    }
    // every pair (i, −1−i) must lie in the trusted ranges
    let (b_from, c_from) = (b.trusted_from(), d2.trusted_from());
    if (b_from != i32::MIN && -1 - b_from + 1 <= d2.hi) || (c_from != i32::MIN && -1 - c_from + 1 <= b.hi) {
        return Err(Error::TruncationExhausted("pairing reaches untrusted orders".into()));
    }
    let lhs = lhs.unwrap_or(Coef::Const(S::zero()));
    let rhs = d2.mul(d1)?.residue()?;
    let dev = lhs.deviation(&rhs);
    Ok((lhs, rhs, dev))
}

/// Coefficients J^{(0)}_s (s = 0 … S) of ψ*ψ and J^{(1)}_s (s = 0 … S−1) of
/// (ψ*ψ_t − ψ*_tψ − 2k)/2, with ψ = Φe^{kt}, ψ* = (∂^{−1}(Φ^{−1})*∂)e^{−kt}.
pub fn j_series<S: Scalar>(phi: &PsdoOp<S>) -> Result<(Vec<Coef<S>>, Vec<Coef<S>>)> {
    let base = phi.base().clone();
    let s_max = match phi.valid_lo {
        Some(v) => (-v).max(0) as usize,
        None => (-phi.lo).max(0) as usize,
    };
    let inv = inverse_unipotent(phi, -(s_max as i32))?;
    let lo = -(s_max as i32) - 1;
    let q = PsdoOp::d_inv(base.clone()).mul_to(&inv.adjoint()?, lo)?.mul_to(&PsdoOp::d(base.clone()), lo)?;
    let trusted = q.trusted_from().max(-(s_max as i32));
    let zero = Coef::Const(S::zero());
    // series coefficients of k^{−s}
    let p: Vec<Coef<S>> = (0..=s_max).map(|s| phi.coeff(-(s as i32)).cloned().unwrap_or(zero.clone())).collect();
    let qs: Vec<Coef<S>> = (0..=s_max)
        .map(|s| {
            let c = q.coeff(-(s as i32)).cloned().unwrap_or(zero.clone());
            if s % 2 == 1 {
                c.scale(&-S::one())
            } else {
                c
            }
        })
        .collect();
    if trusted > -(s_max as i32) {
        return Err(Error::TruncationExhausted("dual series truncated".into()));
    }
    let dt = |c: &Coef<S>| -> Result<Coef<S>> {
        match c.diff_t_n(1) {
            Ok(Some(d)) => Ok(d),
            Ok(None) => Ok(Coef::Const(S::zero())),
            Err(()) => Err(Error::TruncationExhausted("jet exhausted in J series".into())),
        }
    };
    let conv = |s: usize, f: &dyn Fn(usize, usize) -> Result<Coef<S>>| -> Result<Coef<S>> {
        let mut acc = Coef::Const(S::zero());
        for a in 0..=s {
            acc = acc.add(&f(a, s - a)?)?;
        }
        Ok(acc)
    };
    let mut j0 = Vec::new();
    for s in 0..=s_max {
        j0.push(conv(s, &|a, b| qs[a].mul(&p[b]))?);
    }
    let mut j1 = Vec::new();
    let half = S::one() / S::from_i64(2);
    for s in 0..s_max {
        let w = conv(s, &|a, b| {
            let x = qs[a].mul(&dt(&p[b])?)?;
            let y = dt(&qs[a])?.mul(&p[b])?.scale(&-S::one());
            x.add(&y)
        })?;
        // 2J1_s = 2J0_{s+1} + [φ*φ_t − φ*_tφ]_s
        j1.push(j0[s + 1].add(&w.scale(&half))?);
    }
    Ok((j0, j1))
}

/// ∂Φ_x + b∂Φ∂^{−1} + uΦ (zero for the wave operator of ψ = e^{kt+bx/k}Φe^{kt}... ), relative to |uΦ|.
pub fn check_wave_equation(phi: &PsdoOp<C>, u: &Jet2<C>, b: C) -> Result<f64> {
    let base = *phi.base();
    let d = PsdoOp::d(base);
    let a = d.mul(&phi.diff_x())?;
    let bterm = d.mul(phi)?.mul(&PsdoOp::d_inv(base))?.scale(&b);
    let uphi = PsdoOp::function(u.clone()).mul(phi)?;
    let sum = a.add(&bterm)?;
    Ok(op_deviation(&sum, &uphi.scale(&C::new(-1.0, 0.0))))
}

// ---------------------------------------------------------------------------
// Genus-one theta data

/// Wave-coefficient jets of the genus-one potential u = 2UV(ln θ)''(Ux+Vt+Z) + C.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaWaveJets {
    pub xi: Vec<Jet2<C>>,
    pub u: Jet2<C>,
    pub b: C,
}

/// Univariate recursion in w = Ux+Vt+Z with b = −C:
/// f_{s+1} = −V f'_s − (1/U)∫(u+b)f_s − (bV/U) f_{s−1}, integration constants zero at the
/// base (they only multiply ψ by a constant series in k^{−1}, which leaves L unchanged).
pub fn theta_wave_jets(d: &FlowData, z: &[C], base: (C, C), s: usize, nx: usize, nt: usize) -> Result<ThetaWaveJets> {
    if d.genus() != 1 {
        return Err(Error::GenusOutOfRange(d.genus()));
    }
    let (uu, vv) = (d.u[0], d.v[0]);
    let cst = d.c_or_zero();
    let b = -cst;
    let w0 = uu * base.0 + vv * base.1 + z[0];
    let len = nx + nt + s + 2;
    let p = theta_partials(&Characteristic::zero(1), &[w0], &d.b, &[C::new(1.0, 0.0)], &[C::new(1.0, 0.0)], len + 1, 0, 1e-16)?;
    let mut fact = 1.0;
    let th: Vec<C> = (0..=len + 1)
        .map(|n| {
            if n > 0 {
                fact *= n as f64;
            }
            p.get(n, 0) / fact
        })
        .collect();
    let wbase = (w0, C::new(0.0, 0.0));
    let lnth = Jet2::from_fn(wbase, th.len(), 1, |a, _| th[a]).ln()?;
    let useries: Vec<C> = (0..len)
        .map(|n| {
            let l2 = lnth.coeff(n + 2, 0) * ((n + 2) * (n + 1)) as f64;
            l2 * 2.0 * uu * vv + if n == 0 { cst } else { C::new(0.0, 0.0) }
        })
        .collect();
    let upb: Vec<C> = useries.iter().enumerate().map(|(n, x)| if n == 0 { x + b } else { *x }).collect();
    let deriv = |f: &[C]| -> Vec<C> { (1..f.len()).map(|k| f[k] * k as f64).collect() };
    let integ = |f: &[C]| -> Vec<C> {
        std::iter::once(C::new(0.0, 0.0)).chain(f.iter().enumerate().map(|(k, x)| x / (k + 1) as f64)).collect()
    };
    let mul = |a: &[C], c: &[C]| -> Vec<C> {
        let n = a.len().min(c.len());
        (0..n).map(|k| (0..=k).map(|i| a[i] * c[k - i]).sum()).collect()
    };
    let mut fs: Vec<Vec<C>> = vec![{
        let mut one = vec![C::new(0.0, 0.0); len];
        one[0] = C::new(1.0, 0.0);
        one
    }];
    let mut prev: Vec<C> = vec![C::new(0.0, 0.0); len];
    for k in 0..s {
        let f = &fs[k];
        let a = deriv(f);
        let i = integ(&mul(&upb, f));
        let n = a.len().min(i.len()).min(prev.len());
        let next: Vec<C> = (0..n).map(|m| -vv * a[m] - i[m] / uu - b * vv / uu * prev[m]).collect();
        prev = f.clone();
        fs.push(next);
    }
    let to_jet = |f: &[C]| -> Result<Jet2<C>> {
        if f.len() + 1 < nx + nt {
            return Err(Error::TruncationExhausted("theta series too short".into()));
        }
        Ok(Jet2::from_fn(base, nx, nt, |a, bb| {
            f[a + bb] * binom((a + bb) as i64, a) as f64 * uu.powu(a as u32) * vv.powu(bb as u32)
        }))
    };
    let xi = fs[1..].iter().map(|f| to_jet(f)).collect::<Result<Vec<_>>>()?;
    Ok(ThetaWaveJets { xi, u: to_jet(&useries)?, b })
}

/// Gap-sequence report: for α = 0, 1 the orders 2n+α at which F^{(α)}_{2n+α} is not a
/// constant-coefficient combination of the lower ones.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub gaps: [Vec<usize>; 2],
    pub non_gaps: [Vec<usize>; 2],
    pub ranks: [usize; 2],
    /// Sampled values, `values[α][sample][n]`.
    pub values: [Vec<Vec<C>>; 2],
}

/// Rank-increase scan over sampled values `values[sample][n]` (σ < 1e−8σ_max ⇒ dependent).
pub fn gap_scan(values: &[Vec<C>], alpha: usize) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    if rows < cols {
        return Err(Error::InsufficientSamples { samples: rows, candidates: cols });
    }
    let mut gaps = Vec::new();
    let mut non = Vec::new();
    let mut rank = 0;
    for n in 0..cols {
        let m = DMatrix::from_fn(rows, n + 1, |i, j| values[i][j]);
        let sv = m.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let r = if smax == 0.0 { 0 } else { sv.iter().filter(|&&x| x >= 1e-8 * smax).count() };
        if r > rank {
            gaps.push(2 * n + alpha);
        } else {
            non.push(2 * n + alpha);
        }
        rank = r;
    }
    Ok((gaps, non, rank))
}

/// Sample F^{(0)}_{2n}, F^{(1)}_{2n+1} (n = 0 … max_n) at each Z and scan for relations.
pub fn gap_sequence_probe(d: &FlowData, max_n: usize, z_samples: &[Vec<C>]) -> Result<GapReport> {
    let cols = max_n + 1;
    if z_samples.len() < cols {
        return Err(Error::InsufficientSamples { samples: z_samples.len(), candidates: cols });
    }
    let s = 2 * max_n + 6;
    let base = (C::new(0.0, 0.0), C::new(0.0, 0.0));
    let mut values: [Vec<Vec<C>>; 2] = [vec![], vec![]];
    for z in z_samples {
        let tw = theta_wave_jets(d, z, base, s, 2, 2 * s + 4)?;
        let (_, l) = build_phi_and_l(&tw.xi, s)?;
        let mut row0 = Vec::new();
        let mut row1 = Vec::new();
        for n in 0..=max_n {
            let (f0, _) = residues_f(&l, 2 * n as u32)?;
            let (_, f1) = residues_f(&l, 2 * n as u32 + 1)?;
            row0.push(f0.to_jet(&base, 1, 1).value());
            row1.push(f1.to_jet(&base, 1, 1).value());
        }
        values[0].push(row0);
        values[1].push(row1);
    }
    let (g0, n0, r0) = gap_scan(&values[0], 0)?;
    let (g1, n1, r1) = gap_scan(&values[1], 1)?;
    Ok(GapReport { gaps: [g0, g1], non_gaps: [n0, n1], ranks: [r0, r1], values })
}

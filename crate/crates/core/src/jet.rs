//! Truncated bivariate Taylor jets in (x, t).
//!
//! Coefficients are normalized: `coeff(a, b)` multiplies (x−x₀)^a (t−t₀)^b. A jet stores
//! `nx × nt` coefficients; differentiation shrinks the stored range, so the size of a jet
//! *is* its validity. A jet with no coefficients is "unknown".

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<S> {
    base: (S, S),
    nx: usize,
    nt: usize,
    c: Vec<S>,
}

impl<S: Scalar> Jet2<S> {
    pub fn zeros(base: (S, S), nx: usize, nt: usize) -> Self {
        Jet2 { base, nx, nt, c: vec![S::zero(); nx * nt] }
    }

    pub fn constant(base: (S, S), value: S, nx: usize, nt: usize) -> Self {
        let mut j = Self::zeros(base, nx, nt);
        if nx > 0 && nt > 0 {
            j.c[0] = value;
        }
        j
    }

    /// The coordinate function x (or t when `along_t`).
    pub fn variable(base: (S, S), along_t: bool, nx: usize, nt: usize) -> Self {
        let value = if along_t { base.1.clone() } else { base.0.clone() };
        let mut j = Self::constant(base, value, nx, nt);
        if along_t && nt > 1 && nx > 0 {
            j.c[1] = S::one();
        } else if !along_t && nx > 1 && nt > 0 {
            j.c[nt] = S::one();
        }
        j
    }

    /// Build from a coefficient function (a, b) ↦ c_ab.
    pub fn from_fn(base: (S, S), nx: usize, nt: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let mut c = Vec::with_capacity(nx * nt);
        for a in 0..nx {
            for b in 0..nt {
                c.push(f(a, b));
            }
        }
        Jet2 { base, nx, nt, c }
    }

    pub fn base(&self) -> &(S, S) {
        &self.base
    }

    /// Number of stored coefficients in x and t.
    pub fn sizes(&self) -> (usize, usize) {
        (self.nx, self.nt)
    }

    /// Validity orders (Jx, Jt); `None` when the jet is unknown.
    pub fn orders(&self) -> Option<(usize, usize)> {
        if self.is_unknown() {
            None
        } else {
            Some((self.nx - 1, self.nt - 1))
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.nx == 0 || self.nt == 0
    }

    pub fn coeff(&self, a: usize, b: usize) -> S {
        if a < self.nx && b < self.nt {
            self.c[a * self.nt + b].clone()
        } else {
            S::zero()
        }
    }

    pub fn value(&self) -> S {
        self.coeff(0, 0)
    }

    pub fn truncate(&self, nx: usize, nt: usize) -> Self {
        let nx = nx.min(self.nx);
        let nt = nt.min(self.nt);
        Self::from_fn(self.base.clone(), nx, nt, |a, b| self.coeff(a, b))
    }

    fn same_base(&self, other: &Self) -> Result<()> {
        if self.base == other.base {
            Ok(())
        } else {
            Err(Error::IncompatibleBase)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_base(other)?;
        let (nx, nt) = (self.nx.min(other.nx), self.nt.min(other.nt));
        Ok(Self::from_fn(self.base.clone(), nx, nt, |a, b| self.coeff(a, b) + other.coeff(a, b)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_base(other)?;
        let (nx, nt) = (self.nx.min(other.nx), self.nt.min(other.nt));
        Ok(Self::from_fn(self.base.clone(), nx, nt, |a, b| self.coeff(a, b) - other.coeff(a, b)))
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.base.clone(), self.nx, self.nt, |a, b| -self.coeff(a, b))
    }

    pub fn scale(&self, s: &S) -> Self {
        Self::from_fn(self.base.clone(), self.nx, self.nt, |a, b| self.coeff(a, b) * s.clone())
    }

    pub fn add_constant(&self, s: &S) -> Self {
        let mut out = self.clone();
        if !out.is_unknown() {
            out.c[0] = out.c[0].clone() + s.clone();
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_base(other)?;
        let (nx, nt) = (self.nx.min(other.nx), self.nt.min(other.nt));
        let mut out = Self::zeros(self.base.clone(), nx, nt);
        for i in 0..nx {
            for j in 0..nt {
                let lhs = &self.c[i * self.nt + j];
                if *lhs == S::zero() {
                    continue;
                }
                for a in i..nx {
                    for b in j..nt {
                        let k = a * nt + b;
                        out.c[k] = out.c[k].clone()
                            + lhs.clone() * other.c[(a - i) * other.nt + (b - j)].clone();
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn reciprocal(&self) -> Result<Self> {
        if self.is_unknown() {
            return Ok(self.clone());
        }
        let a00 = self.c[0].clone();
        if a00 == S::zero() {
            return Err(Error::ZeroLeadingTerm);
        }
        let (nx, nt) = (self.nx, self.nt);
        let inv0 = S::one() / a00;
        let mut r = Self::zeros(self.base.clone(), nx, nt);
        r.c[0] = inv0.clone();
        // total-degree order guarantees every r_{a−i,b−j} needed is already known
        for deg in 1..nx + nt - 1 {
            for a in 0..nx {
                if a > deg {
                    break;
                }
                let b = deg - a;
                if b >= nt {
                    continue;
                }
                let mut s = S::zero();
                for i in 0..=a {
                    for j in 0..=b {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        s = s + self.c[i * nt + j].clone() * r.c[(a - i) * nt + (b - j)].clone();
                    }
                }
                r.c[a * nt + b] = -(s * inv0.clone());
            }
        }
        Ok(r)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.mul(&other.reciprocal()?)
    }

    pub fn diff_x(&self) -> Self {
        let nx = self.nx.saturating_sub(1);
        Self::from_fn(self.base.clone(), nx, self.nt, |a, b| {
            self.coeff(a + 1, b) * S::from_i64(a as i64 + 1)
        })
    }

    pub fn diff_t(&self) -> Self {
        let nt = self.nt.saturating_sub(1);
        Self::from_fn(self.base.clone(), self.nx, nt, |a, b| {
            self.coeff(a, b + 1) * S::from_i64(b as i64 + 1)
        })
    }

    /// k-fold t-derivative.
    pub fn diff_t_n(&self, k: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..k {
            out = out.diff_t();
        }
        out
    }

    /// Largest coefficient magnitude over the common range of two jets.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        let (nx, nt) = (self.nx.min(other.nx), self.nt.min(other.nt));
        let mut m = 0.0f64;
        for a in 0..nx {
            for b in 0..nt {
                m = m.max((self.coeff(a, b) - other.coeff(a, b)).magnitude());
            }
        }
        m
    }

    pub fn max_magnitude(&self) -> f64 {
        self.c.iter().map(|x| x.magnitude()).fold(0.0, f64::max)
    }
}

impl Jet2<Complex64> {
    /// ln of a jet with nonzero constant term (principal branch at the base value).
    pub fn ln(&self) -> Result<Self> {
        if self.is_unknown() {
            return Ok(self.clone());
        }
        let a00 = self.c[0];
        if a00.norm() == 0.0 {
            return Err(Error::ZeroLeadingTerm);
        }
        let w = self.scale(&(1.0 / a00)).add_constant(&Complex64::new(-1.0, 0.0));
        let mut out = Self::constant(self.base, a00.ln(), self.nx, self.nt);
        let mut pw = w.clone();
        for k in 1..self.nx + self.nt - 1 {
            let coef = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            out = out.add(&pw.scale(&Complex64::new(coef, 0.0)))?;
            pw = pw.mul(&w)?;
        }
        Ok(out)
    }

    pub fn exp(&self) -> Result<Self> {
        if self.is_unknown() {
            return Ok(self.clone());
        }
        let a00 = self.c[0];
        let w = self.add_constant(&(-a00));
        let mut sum = Self::constant(self.base, Complex64::new(1.0, 0.0), self.nx, self.nt);
        let mut pw = sum.clone();
        for k in 1..self.nx + self.nt - 1 {
            pw = pw.mul(&w)?.scale(&Complex64::new(1.0 / k as f64, 0.0));
            sum = sum.add(&pw)?;
        }
        Ok(sum.scale(&a00.exp()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    type C = Complex64;

    fn base() -> (C, C) {
        (C::new(0.0, 0.0), C::new(0.0, 0.0))
    }

    /// Normalized Taylor jet of e^{αx+βt}.
    fn exp_jet(alpha: C, beta: C, nx: usize, nt: usize) -> Jet2<C> {
        let fact = |n: usize| (1..=n).fold(1.0, |f, k| f * k as f64);
        Jet2::from_fn(base(), nx, nt, |a, b| {
            alpha.powu(a as u32) * beta.powu(b as u32) / (fact(a) * fact(b))
        })
    }

    #[test]
    fn one_is_identity() {
        let a = exp_jet(C::new(0.3, 0.1), C::new(-0.7, 0.2), 4, 5);
        let one = Jet2::constant(base(), C::new(1.0, 0.0), 4, 5);
        assert_eq!(a.mul(&one).unwrap(), a);
    }

    #[test]
    fn reciprocal_inverts() {
        let a = exp_jet(C::new(0.3, 0.1), C::new(-0.7, 0.2), 4, 5).add_constant(&C::new(0.5, 0.0));
        let prod = a.mul(&a.reciprocal().unwrap()).unwrap();
        let one = Jet2::constant(base(), C::new(1.0, 0.0), 4, 5);
        assert!(prod.max_deviation(&one) < 1e-14);
        let zero = Jet2::<C>::zeros(base(), 2, 2);
        assert_eq!(zero.reciprocal(), Err(Error::ZeroLeadingTerm));
    }

    #[test]
    fn derivatives_match_closed_form() {
        let (alpha, beta) = (C::new(0.8, -0.3), C::new(0.25, 1.1));
        let a = exp_jet(alpha, beta, 6, 7);
        let dx = a.diff_x();
        assert_eq!(dx.sizes(), (5, 7));
        assert!(dx.max_deviation(&exp_jet(alpha, beta, 5, 7).scale(&alpha)) < 1e-12);
        let dt = a.diff_t();
        assert!(dt.max_deviation(&exp_jet(alpha, beta, 6, 6).scale(&beta)) < 1e-12);
    }

    #[test]
    fn log_and_exp_invert() {
        let a = exp_jet(C::new(0.8, -0.3), C::new(0.25, 1.1), 4, 4).scale(&C::new(2.0, 1.0));
        let back = a.ln().unwrap().exp().unwrap();
        assert!(back.max_deviation(&a) < 1e-13);
        let l = exp_jet(C::new(0.8, -0.3), C::new(0.25, 1.1), 4, 4).ln().unwrap();
        assert!((l.coeff(1, 0) - C::new(0.8, -0.3)).norm() < 1e-14);
        assert!(l.coeff(1, 1).norm() < 1e-14);
    }

    #[test]
    fn exact_rationals() {
        let q = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        let b = (q(0, 1), q(0, 1));
        let a = Jet2::from_fn(b.clone(), 3, 3, |i, j| q(1 + i as i64, 1 + j as i64));
        let one = Jet2::constant(b, q(1, 1), 3, 3);
        assert_eq!(a.mul(&a.reciprocal().unwrap()).unwrap(), one);
    }

    #[test]
    fn incompatible_bases() {
        let a = Jet2::constant((0.0, 0.0), 1.0, 2, 2);
        let b = Jet2::constant((1.0, 0.0), 1.0, 2, 2);
        assert_eq!(a.mul(&b), Err(Error::IncompatibleBase));
    }
}

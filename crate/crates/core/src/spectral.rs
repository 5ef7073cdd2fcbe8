//! Two-point Baker–Akhiezer function ψ₀ from ingested spectral data, the coefficients of
//! H = ∂₊∂₋ + w∂₋ + u, the Prym-theta form for potential operators, and the residual of Hψ₀ = 0.
//!
//! Conventions: ∂± = ∂/∂t₁^±; the ingested Ω are normalized by Ω₋(P₊) = Ω₊(P₋) = 0.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::conditions::{near_divisor, solved_flow_data, THETA_TARGET};
use crate::data::{Mode, PointRecord, PrymSpectralData, Sign, SpectralData};
use crate::error::{Error, Result};
use crate::theta::{theta_partials, Characteristic, ThetaPartials};
use crate::PeriodMatrix;

type C = Complex64;

/// Times t_i^± keyed by (sign, i); absent keys are zero.
pub type Times = BTreeMap<(Sign, usize), C>;

pub fn times1(tp: C, tm: C) -> Times {
    Times::from([((Sign::Plus, 1), tp), ((Sign::Minus, 1), tm)])
}

fn zero() -> C {
    C::new(0.0, 0.0)
}

fn add(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Σ U_i^± t_i^±.
fn flow_shift(sd: &SpectralData, times: &Times) -> Result<Vec<C>> {
    let mut s = vec![zero(); sd.genus()];
    for (k, &t) in times {
        let u = sd
            .u_vectors
            .get(k)
            .ok_or_else(|| Error::Validation(format!("no U vector for time {:?} {}", k.0, k.1)))?;
        for (si, ui) in s.iter_mut().zip(u) {
            *si += ui * t;
        }
    }
    Ok(s)
}

fn exponent(p: &PointRecord, times: &Times) -> Result<C> {
    times
        .iter()
        .map(|(k, &t)| {
            p.omega
                .get(k)
                .map(|w| w * t)
                .ok_or_else(|| Error::Validation(format!("point {:?} has no Ω for {:?} {}", p.label, k.0, k.1)))
        })
        .sum()
}

/// ∂_a^i∂_b^j θ(z) for i, j ≤ 1; OnDivisor when z is within tolerance of Θ.
fn partials(b: &PeriodMatrix, z: &[C], da: &[C], db: &[C]) -> Result<ThetaPartials<f64>> {
    let p = theta_partials(&Characteristic::zero(b.genus()), z, b, da, db, 1, 1, THETA_TARGET)?;
    if near_divisor(b, z, p.get(0, 0))? {
        return Err(Error::OnDivisor);
    }
    Ok(p)
}

fn theta_value(b: &PeriodMatrix, z: &[C]) -> Result<C> {
    let g = b.genus();
    let e = vec![zero(); g];
    let p = theta_partials(&Characteristic::zero(g), z, b, &e, &e, 0, 0, THETA_TARGET)?;
    let v = p.get(0, 0);
    if near_divisor(b, z, v)? {
        return Err(Error::OnDivisor);
    }
    Ok(v)
}

/// (∂_a ln θ, ∂_b ln θ, ∂_a∂_b ln θ).
fn log_derivs(p: &ThetaPartials<f64>) -> (C, C, C) {
    let th = p.get(0, 0);
    let (la, lb) = (p.get(1, 0) / th, p.get(0, 1) / th);
    (la, lb, p.get(1, 1) / th - la * lb)
}

/// ψ₀(P; t) = θ(A(P)+Σ+Z)θ(A(P₊)+Z) / (θ(A(P₊)+Σ+Z)θ(A(P)+Z)) · e^{Σ t_i^±Ω_i^±(P)}.
pub fn ba_eval(sd: &SpectralData, label: &str, times: &Times) -> Result<C> {
    let p = sd.point(label)?;
    let s = flow_shift(sd, times)?;
    let zp = add(&sd.abel_plus, &sd.z);
    let za = add(&p.abel, &sd.z);
    let num = theta_value(&sd.b, &add(&za, &s))? * theta_value(&sd.b, &zp)?;
    let den = theta_value(&sd.b, &add(&zp, &s))? * theta_value(&sd.b, &za)?;
    Ok(num / den * exponent(p, times)?.exp())
}

/// The non-normalized ψ, without the t-independent factor θ(A(P₊)+Z)/θ(A(P)+Z).
pub fn ba_eval_unnormalized(sd: &SpectralData, label: &str, times: &Times) -> Result<C> {
    let p = sd.point(label)?;
    let s = flow_shift(sd, times)?;
    let num = theta_value(&sd.b, &add(&add(&p.abel, &sd.z), &s))?;
    let den = theta_value(&sd.b, &add(&add(&sd.abel_plus, &sd.z), &s))?;
    Ok(num / den * exponent(p, times)?.exp())
}

fn direction(sd: &SpectralData, sign: Sign) -> Result<&Vec<C>> {
    sd.u_vectors
        .get(&(sign, 1))
        .ok_or_else(|| Error::Validation(format!("no U vector for time {sign:?} 1")))
}

/// (w, u): w = −∂₊ ln(θ(A(P₋)+Σ+Z)/θ(A(P₊)+Σ+Z)), u = ∂₊∂₋ ln θ(A(P₊)+Σ+Z) + C.
pub fn schrodinger_coeffs(sd: &SpectralData, times: &Times) -> Result<(C, C)> {
    let s = flow_shift(sd, times)?;
    let (up, um) = (direction(sd, Sign::Plus)?, direction(sd, Sign::Minus)?);
    let plus = partials(&sd.b, &add(&add(&sd.abel_plus, &sd.z), &s), up, um)?;
    let (lp, _, lpm) = log_derivs(&plus);
    let w = if sd.abel_minus == sd.abel_plus {
        zero()
    } else {
        let minus = partials(&sd.b, &add(&add(&sd.abel_minus, &sd.z), &s), up, um)?;
        -(log_derivs(&minus).0 - lp)
    };
    Ok((w, lpm + sd.c))
}

/// (ψ, u) of the Prym form at (x, t) = (t₁⁺, t₁⁻): ψ = θ_Pr(A(P)+Ux+Vt+Z)/θ_Pr(A(P₊)+Ux+Vt+Z)
/// · e^{xΩ₁⁺+tΩ₁⁻}, u = 2∂_x∂_t ln θ_Pr(A(P₊)+Ux+Vt+Z) + C.
pub fn nv_eval(pd: &PrymSpectralData, x: C, t: C, label: &str) -> Result<(C, C)> {
    let p = pd.point(label)?;
    let s: Vec<C> = pd.u.iter().zip(&pd.v).map(|(u, v)| u * x + v * t).collect();
    let num = theta_value(&pd.pi, &add(&add(&p.abel, &pd.z), &s))?;
    let plus = partials(&pd.pi, &add(&add(&pd.abel_prym_plus, &pd.z), &s), &pd.u, &pd.v)?;
    let e = exponent(p, &times1(x, t))?;
    let psi = num / plus.get(0, 0) * e.exp();
    Ok((psi, log_derivs(&plus).2 * 2.0 + pd.c))
}

/// Either form of spectral data.
#[derive(Clone, Copy, Debug)]
pub enum SpectralInput<'a> {
    TwoPoint(&'a SpectralData),
    Prym(&'a PrymSpectralData),
}

/// A point label with the times at which Hψ₀ is evaluated (for Prym data only t₁^± are used).
#[derive(Clone, Debug, PartialEq)]
pub struct HSample {
    pub label: String,
    pub times: Times,
}

/// Max over samples of |Hψ₀/ψ₀| relative to the largest of its terms. With φ = ln ψ₀,
/// Hψ₀/ψ₀ = φ₊₋ + φ₊φ₋ + wφ₋ + u; the derivatives are exact theta directional derivatives
/// plus the Ω exponents.
pub fn h_equation_residual(input: SpectralInput, samples: &[HSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut worst = 0.0f64;
    for smp in samples {
        let terms = match input {
            SpectralInput::TwoPoint(sd) => {
                let p = sd.point(&smp.label)?;
                let s = flow_shift(sd, &smp.times)?;
                let (up, um) = (direction(sd, Sign::Plus)?, direction(sd, Sign::Minus)?);
                let (ap, am) = omega1(p)?;
                let num = log_derivs(&partials(&sd.b, &add(&add(&p.abel, &sd.z), &s), up, um)?);
                let den = log_derivs(&partials(&sd.b, &add(&add(&sd.abel_plus, &sd.z), &s), up, um)?);
                let (w, u) = schrodinger_coeffs(sd, &smp.times)?;
                let (fp, fm, fpm) = (num.0 - den.0 + ap, num.1 - den.1 + am, num.2 - den.2);
                vec![fpm, fp * fm, w * fm, u]
            }
            SpectralInput::Prym(pd) => {
                let p = pd.point(&smp.label)?;
                let x = smp.times.get(&(Sign::Plus, 1)).copied().unwrap_or_default();
                let t = smp.times.get(&(Sign::Minus, 1)).copied().unwrap_or_default();
                let s: Vec<C> = pd.u.iter().zip(&pd.v).map(|(u, v)| u * x + v * t).collect();
                let (ap, am) = omega1(p)?;
                let num = log_derivs(&partials(&pd.pi, &add(&add(&p.abel, &pd.z), &s), &pd.u, &pd.v)?);
                let den = log_derivs(&partials(&pd.pi, &add(&add(&pd.abel_prym_plus, &pd.z), &s), &pd.u, &pd.v)?);
                let (fp, fm, fpm) = (num.0 - den.0 + ap, num.1 - den.1 + am, num.2 - den.2);
                vec![fpm, fp * fm, den.2 * 2.0 + pd.c]
            }
        };
        let sum: C = terms.iter().sum();
        let scale = terms.iter().map(|z| z.norm()).fold(1e-12, f64::max);
        worst = worst.max(sum.norm() / scale);
    }
    Ok(worst)
}

fn omega1(p: &PointRecord) -> Result<(C, C)> {
    let get = |s: Sign| {
        p.omega
            .get(&(s, 1))
            .copied()
            .ok_or_else(|| Error::Validation(format!("point {:?} has no Ω for {s:?} 1", p.label)))
    };
    Ok((get(Sign::Plus)?, get(Sign::Minus)?))
}

/// Prym-form data from the genus-one Prym conditions: every point P_k has A(P_k) − A(P₊) = a_k
/// and (Ω₁⁺, Ω₁⁻)(P_k) = (p_k, E_k) from the linear solve. At genus one (p, E) is fixed only
/// up to (p + λU, E − λV); λ is chosen so that every point shares the constant C of the first.
pub fn genus_one_prym_dataset(
    b: &PeriodMatrix,
    u: C,
    v: C,
    z: C,
    a_points: &[C],
) -> Result<PrymSpectralData> {
    if b.genus() != 1 {
        return Err(Error::GenusOutOfRange(b.genus()));
    }
    let mut points = Vec::new();
    let mut c0 = None;
    for (k, &a) in a_points.iter().enumerate() {
        let (d, _) = solved_flow_data(Mode::Prym, b, &[u], &[v], &[a])?;
        let (p, e, c) = (d.p, d.e, d.c_or_zero());
        let lambda = match c0 {
            None => {
                c0 = Some(c);
                zero()
            }
            Some(c0) => {
                // UVλ² + (pV − UE)λ + (C − C₀) = 0, smaller root
                let (qa, qb, qc) = (u * v, p * v - u * e, c - c0);
                let disc = (qb * qb - qa * qc * 4.0).sqrt();
                let q = if (qb + disc).norm() >= (qb - disc).norm() { -(qb + disc) / 2.0 } else { -(qb - disc) / 2.0 };
                if q.norm() == 0.0 {
                    zero()
                } else {
                    qc / q
                }
            }
        };
        points.push(PointRecord {
            label: format!("P{k}"),
            abel: vec![a],
            omega: BTreeMap::from([((Sign::Plus, 1), p + lambda * u), ((Sign::Minus, 1), e - lambda * v)]),
        });
    }
    let pd = PrymSpectralData {
        pi: b.clone(),
        abel_prym_plus: vec![zero()],
        u: vec![u],
        v: vec![v],
        points,
        c: c0.ok_or(Error::EmptySamples)?,
        z: vec![z],
    };
    pd.validate()?;
    Ok(pd)
}

/// Two-point data on the elliptic curve C/(Z + τZ) with A(P) = P, punctures at `ap`, `am`,
/// U₁⁺ = α, U₁⁻ = β: Ω₁⁺(P) = α(ζ₁(am − ap) − ζ₁(P − ap)), Ω₁⁻(P) = β(ζ₁(ap − am) − ζ₁(P − am)),
/// C = −αβ(ln θ₁)''(ap − am), with ζ₁ = (ln θ₁)' and θ₁ = θ[½,½].
pub fn genus_one_two_point_dataset(
    b: &PeriodMatrix,
    ap: C,
    am: C,
    (alpha, beta): (C, C),
    z: C,
    point_abel: &[C],
) -> Result<SpectralData> {
    if b.genus() != 1 {
        return Err(Error::GenusOutOfRange(b.genus()));
    }
    // θ[½,½](x) = θ[½,0](x + ½)
    let odd = |x: C| -> Result<(C, C)> {
        let one = [C::new(1.0, 0.0)];
        let p = theta_partials(&Characteristic::new(&[0.5])?, &[x + 0.5], b, &one, &one, 2, 0, THETA_TARGET)?;
        let l1 = p.get(1, 0) / p.get(0, 0);
        Ok((l1, p.get(2, 0) / p.get(0, 0) - l1 * l1))
    };
    let (zmp, _) = odd(am - ap)?;
    let (zpm, l2) = odd(ap - am)?;
    let points = point_abel
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let (zp, _) = odd(a - ap)?;
            let (zm, _) = odd(a - am)?;
            Ok(PointRecord {
                label: format!("P{k}"),
                abel: vec![a],
                omega: BTreeMap::from([((Sign::Plus, 1), alpha * (zmp - zp)), ((Sign::Minus, 1), beta * (zpm - zm))]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sd = SpectralData {
        b: b.clone(),
        abel_plus: vec![ap],
        abel_minus: vec![am],
        u_vectors: BTreeMap::from([((Sign::Plus, 1), vec![alpha]), ((Sign::Minus, 1), vec![beta])]),
        points,
        c: -alpha * beta * l2,
        z: vec![z],
    };
    sd.validate()?;
    Ok(sd)
}

const BUNDLED: &[u8] = include_bytes!("../data/genus1_prym.json");

/// The bundled genus-one Prym-form dataset (generated by [`bundled_dataset_source`]).
pub fn bundled_dataset() -> PrymSpectralData {
    crate::data::load_prym_spectral_data(BUNDLED).expect("bundled dataset is valid")
}

/// The recipe behind the bundled dataset.
pub fn bundled_dataset_source() -> Result<PrymSpectralData> {
    let b = crate::data::random_ppav(1, 7)?;
    let a: Vec<C> = [(0.31, 0.12), (-0.22, 0.35), (0.4, -0.27), (0.17, 0.51), (-0.38, -0.14)]
        .iter()
        .map(|&(re, im)| C::new(re, im))
        .collect();
    genus_one_prym_dataset(&b, C::new(1.0, 0.0), C::new(0.6, 0.2), C::new(0.13, -0.07), &a)
}

/// Samples for the residual check: every point at each (x, t) pair.
pub fn grid_samples<'a>(labels: impl IntoIterator<Item = &'a str>, xt: &[(f64, f64)]) -> Vec<HSample> {
    labels
        .into_iter()
        .flat_map(|l| {
            xt.iter().map(move |&(x, t)| HSample { label: l.to_string(), times: times1(C::new(x, 0.0), C::new(t, 0.0)) })
        })
        .collect()
}

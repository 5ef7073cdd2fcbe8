//! Flow and spectral data: validated types, canonical JSON I/O, and seeded random
//! period matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::theta::validate_period_matrix;
use crate::PeriodMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Jacobian,
    Prym,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Jacobian => "jacobian",
            Mode::Prym => "prym",
        }
    }
}

/// Candidate solution data: period matrix, flow vectors U, V, shift A and constants.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowData {
    pub mode: Mode,
    pub b: PeriodMatrix,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub a: Vec<Complex64>,
    pub p: Complex64,
    pub e: Complex64,
    /// Potential constant of u = 2∂²ln θ + C; absent in Jacobian mode.
    pub c: Option<Complex64>,
}

fn finite(z: &Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

pub(crate) fn is_zero_vec(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.norm() == 0.0)
}

impl FlowData {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: Mode,
        b: PeriodMatrix,
        u: Vec<Complex64>,
        v: Vec<Complex64>,
        a: Vec<Complex64>,
        p: Complex64,
        e: Complex64,
        c: Option<Complex64>,
    ) -> Result<Self> {
        let g = b.genus();
        for (name, vec) in [("U", &u), ("V", &v), ("A", &a)] {
            if vec.len() != g {
                return Err(Error::Validation(format!("{name} has length {} (genus {g})", vec.len())));
            }
            if !vec.iter().all(finite) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        if !(finite(&p) && finite(&e) && c.as_ref().map_or(true, finite)) {
            return Err(Error::Validation("non-finite constant".into()));
        }
        if is_zero_vec(&u) {
            return Err(Error::Validation("U must be nonzero".into()));
        }
        if mode == Mode::Prym {
            if is_zero_vec(&v) {
                return Err(Error::Validation("V must be nonzero".into()));
            }
            if c.is_none() {
                return Err(Error::Validation("C is required in prym mode".into()));
            }
        }
        Ok(FlowData { mode, b, u, v, a, p, e, c })
    }

    pub fn genus(&self) -> usize {
        self.b.genus()
    }

    pub fn c_or_zero(&self) -> Complex64 {
        self.c.unwrap_or_default()
    }

    /// Prym data under x → x/λ, t → t/μ: U → λU, V → μV, p → λp, E → μE, C → λμC.
    /// The rescaled data satisfies the same equations; Jacobian data is returned unchanged
    /// unless μ = λ² (the heat scaling), in which case p and E follow the same rule.
    pub fn rescaled(&self, lambda: Complex64, mu: Complex64) -> FlowData {
        let mut d = self.clone();
        d.u.iter_mut().for_each(|z| *z *= lambda);
        d.v.iter_mut().for_each(|z| *z *= mu);
        d.p *= lambda;
        d.e *= mu;
        d.c = d.c.map(|c| c * lambda * mu);
        d
    }
}

// ---------------------------------------------------------------------------
// JSON helpers

pub fn complex_to_json(z: Complex64) -> Value {
    let mut m = Map::new();
    m.insert("re".into(), Value::from(z.re));
    m.insert("im".into(), Value::from(z.im));
    Value::Object(m)
}

pub fn vec_to_json(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|&z| complex_to_json(z)).collect())
}

pub fn matrix_to_json(b: &PeriodMatrix) -> Value {
    Value::Array(b.rows().iter().map(|r| vec_to_json(r)).collect())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Schema(format!("missing field {key:?}")))
}

fn number(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Schema(format!("{what}: expected a number")))
}

pub fn complex_from_json(v: &Value, what: &str) -> Result<Complex64> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Schema(format!("{what}: expected {{\"re\",\"im\"}} record")))?;
    let re = number(field(obj, "re")?, what)?;
    let im = number(field(obj, "im")?, what)?;
    Ok(Complex64::new(re, im))
}

pub fn vec_from_json(v: &Value, what: &str) -> Result<Vec<Complex64>> {
    v.as_array()
        .ok_or_else(|| Error::Schema(format!("{what}: expected an array")))?
        .iter()
        .map(|e| complex_from_json(e, what))
        .collect()
}

pub fn matrix_from_json(v: &Value, what: &str) -> Result<Vec<Vec<Complex64>>> {
    v.as_array()
        .ok_or_else(|| Error::Schema(format!("{what}: expected an array of rows")))?
        .iter()
        .map(|r| vec_from_json(r, what))
        .collect()
}

fn period_matrix_from_json(v: &Value, what: &str, genus: usize) -> Result<PeriodMatrix> {
    let raw = matrix_from_json(v, what)?;
    if raw.len() != genus {
        return Err(Error::Validation(format!("{what} has {} rows, genus is {genus}", raw.len())));
    }
    validate_period_matrix(&raw).map_err(|e| Error::Validation(format!("{what}: {e}")))
}

fn genus_from_json(obj: &Map<String, Value>) -> Result<usize> {
    let g = field(obj, "genus")?
        .as_u64()
        .ok_or_else(|| Error::Schema("genus: expected a positive integer".into()))?;
    if g == 0 {
        return Err(Error::Validation("genus must be positive".into()));
    }
    Ok(g as usize)
}

fn parse_document(bytes: &[u8]) -> Result<Map<String, Value>> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Schema("top level must be an object".into())),
    }
}

/// Canonical text: sorted keys, no whitespace, floats with 17 significant digits.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64().filter(|_| !n.is_f64()) {
                let _ = write!(out, "{i}");
            } else if let Some(i) = n.as_i64().filter(|_| !n.is_f64()) {
                let _ = write!(out, "{i}");
            } else {
                let _ = write!(out, "{:.16e}", n.as_f64().unwrap_or(f64::NAN));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            out.push('[');
            for (i, e) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(e, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            let sorted: BTreeMap<&String, &Value> = m.iter().collect();
            for (i, (k, e)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(e, out);
            }
            out.push('}');
        }
    }
}

// ---------------------------------------------------------------------------
// FlowData I/O

pub fn load_flow_data(bytes: &[u8]) -> Result<FlowData> {
    let obj = parse_document(bytes)?;
    let g = genus_from_json(&obj)?;
    let mode = match field(&obj, "mode")?.as_str() {
        Some("jacobian") => Mode::Jacobian,
        Some("prym") => Mode::Prym,
        _ => return Err(Error::Schema("mode must be \"jacobian\" or \"prym\"".into())),
    };
    let b = period_matrix_from_json(field(&obj, "B")?, "B", g)?;
    let u = vec_from_json(field(&obj, "U")?, "U")?;
    let v = vec_from_json(field(&obj, "V")?, "V")?;
    let a = vec_from_json(field(&obj, "A")?, "A")?;
    let p = complex_from_json(field(&obj, "p")?, "p")?;
    let e = complex_from_json(field(&obj, "E")?, "E")?;
    let c = match obj.get("C") {
        Some(Value::Null) | None => None,
        Some(v) => Some(complex_from_json(v, "C")?),
    };
    FlowData::new(mode, b, u, v, a, p, e, c)
}

pub fn flow_data_to_json(d: &FlowData) -> Value {
    let mut m = Map::new();
    m.insert("genus".into(), Value::from(d.genus() as u64));
    m.insert("mode".into(), Value::from(d.mode.as_str()));
    m.insert("B".into(), matrix_to_json(&d.b));
    m.insert("U".into(), vec_to_json(&d.u));
    m.insert("V".into(), vec_to_json(&d.v));
    m.insert("A".into(), vec_to_json(&d.a));
    m.insert("p".into(), complex_to_json(d.p));
    m.insert("E".into(), complex_to_json(d.e));
    if let Some(c) = d.c {
        m.insert("C".into(), complex_to_json(c));
    }
    Value::Object(m)
}

pub fn save_flow_data(d: &FlowData) -> Vec<u8> {
    canonical_json(&flow_data_to_json(d)).into_bytes()
}

// ---------------------------------------------------------------------------
// Spectral data

/// Puncture P₊ or P₋.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn key(self, index: usize) -> String {
        match self {
            Sign::Plus => format!("+{index}"),
            Sign::Minus => format!("-{index}"),
        }
    }

    fn parse_key(k: &str) -> Result<(Sign, usize)> {
        let (sign, rest) = match k.as_bytes().first() {
            Some(b'+') => (Sign::Plus, &k[1..]),
            Some(b'-') => (Sign::Minus, &k[1..]),
            _ => return Err(Error::Schema(format!("bad (sign,index) key {k:?}"))),
        };
        let i = rest
            .parse::<usize>()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| Error::Schema(format!("bad (sign,index) key {k:?}")))?;
        Ok((sign, i))
    }
}

/// A point of the curve: its Abel image and the values Ω_i^±(P).
#[derive(Clone, Debug, PartialEq)]
pub struct PointRecord {
    pub label: String,
    pub abel: Vec<Complex64>,
    pub omega: BTreeMap<(Sign, usize), Complex64>,
}

/// Two-point Baker–Akhiezer data. `z` is the free shift vector of the theta argument.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub b: PeriodMatrix,
    pub abel_plus: Vec<Complex64>,
    pub abel_minus: Vec<Complex64>,
    pub u_vectors: BTreeMap<(Sign, usize), Vec<Complex64>>,
    pub points: Vec<PointRecord>,
    pub c: Complex64,
    pub z: Vec<Complex64>,
}

/// Prym-theta form of the potential-case data (x = t₁⁺, t = t₁⁻).
#[derive(Clone, Debug, PartialEq)]
pub struct PrymSpectralData {
    pub pi: PeriodMatrix,
    pub abel_prym_plus: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub points: Vec<PointRecord>,
    pub c: Complex64,
    pub z: Vec<Complex64>,
}

fn check_len(v: &[Complex64], g: usize, what: &str) -> Result<()> {
    if v.len() != g {
        return Err(Error::Validation(format!("{what} has length {} (genus {g})", v.len())));
    }
    if !v.iter().all(finite) {
        return Err(Error::Validation(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl SpectralData {
    pub fn genus(&self) -> usize {
        self.b.genus()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.genus();
        check_len(&self.abel_plus, g, "abel_plus")?;
        check_len(&self.abel_minus, g, "abel_minus")?;
        check_len(&self.z, g, "Z")?;
        for (k, u) in &self.u_vectors {
            check_len(u, g, &format!("u_vectors[{}]", k.0.key(k.1)))?;
        }
        validate_points(&self.points, g, |k| self.u_vectors.contains_key(k))?;
        if !finite(&self.c) {
            return Err(Error::Validation("C is not finite".into()));
        }
        Ok(())
    }

    pub fn point(&self, label: &str) -> Result<&PointRecord> {
        self.points
            .iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::UnknownPoint(label.to_string()))
    }
}

impl PrymSpectralData {
    pub fn genus(&self) -> usize {
        self.pi.genus()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.genus();
        check_len(&self.abel_prym_plus, g, "abel_prym_plus")?;
        check_len(&self.u, g, "U")?;
        check_len(&self.v, g, "V")?;
        check_len(&self.z, g, "Z")?;
        validate_points(&self.points, g, |k| k.1 == 1)?;
        if !finite(&self.c) {
            return Err(Error::Validation("C is not finite".into()));
        }
        Ok(())
    }

    pub fn point(&self, label: &str) -> Result<&PointRecord> {
        self.points
            .iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::UnknownPoint(label.to_string()))
    }
}

fn validate_points(
    points: &[PointRecord],
    g: usize,
    known: impl Fn(&(Sign, usize)) -> bool,
) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for p in points {
        if !seen.insert(p.label.as_str()) {
            return Err(Error::Validation(format!("duplicate point label {:?}", p.label)));
        }
        check_len(&p.abel, g, &format!("points[{}].abel", p.label))?;
        for (k, w) in &p.omega {
            if !known(k) {
                return Err(Error::Validation(format!(
                    "point {:?} references unknown index {}",
                    p.label,
                    k.0.key(k.1)
                )));
            }
            if !finite(w) {
                return Err(Error::Validation(format!("point {:?} has non-finite omega", p.label)));
            }
        }
    }
    Ok(())
}

fn keyed_map_from_json<T>(
    v: &Value,
    what: &str,
    f: impl Fn(&Value) -> Result<T>,
) -> Result<BTreeMap<(Sign, usize), T>> {
    let obj = v.as_object().ok_or_else(|| Error::Schema(format!("{what}: expected an object")))?;
    obj.iter().map(|(k, e)| Ok((Sign::parse_key(k)?, f(e)?))).collect()
}

fn keyed_map_to_json<T>(m: &BTreeMap<(Sign, usize), T>, f: impl Fn(&T) -> Value) -> Value {
    Value::Object(m.iter().map(|(k, e)| (k.0.key(k.1), f(e))).collect())
}

fn points_from_json(v: &Value) -> Result<Vec<PointRecord>> {
    v.as_array()
        .ok_or_else(|| Error::Schema("points: expected an array".into()))?
        .iter()
        .map(|p| {
            let obj = p.as_object().ok_or_else(|| Error::Schema("point: expected an object".into()))?;
            let label = field(obj, "label")?
                .as_str()
                .ok_or_else(|| Error::Schema("point label: expected a string".into()))?
                .to_string();
            let abel = vec_from_json(field(obj, "abel")?, "point abel")?;
            let omega = keyed_map_from_json(field(obj, "omega")?, "omega", |e| complex_from_json(e, "omega"))?;
            Ok(PointRecord { label, abel, omega })
        })
        .collect()
}

fn points_to_json(points: &[PointRecord]) -> Value {
    Value::Array(
        points
            .iter()
            .map(|p| {
                let mut m = Map::new();
                m.insert("label".into(), Value::from(p.label.clone()));
                m.insert("abel".into(), vec_to_json(&p.abel));
                m.insert("omega".into(), keyed_map_to_json(&p.omega, |&w| complex_to_json(w)));
                Value::Object(m)
            })
            .collect(),
    )
}

fn optional_z(obj: &Map<String, Value>, g: usize) -> Result<Vec<Complex64>> {
    match obj.get("Z") {
        None | Some(Value::Null) => Ok(vec![Complex64::new(0.0, 0.0); g]),
        Some(v) => vec_from_json(v, "Z"),
    }
}

pub fn load_spectral_data(bytes: &[u8]) -> Result<SpectralData> {
    let obj = parse_document(bytes)?;
    let g = genus_from_json(&obj)?;
    let sd = SpectralData {
        b: period_matrix_from_json(field(&obj, "B")?, "B", g)?,
        abel_plus: vec_from_json(field(&obj, "abel_plus")?, "abel_plus")?,
        abel_minus: vec_from_json(field(&obj, "abel_minus")?, "abel_minus")?,
        u_vectors: keyed_map_from_json(field(&obj, "u_vectors")?, "u_vectors", |e| {
            vec_from_json(e, "u_vectors")
        })?,
        points: points_from_json(field(&obj, "points")?)?,
        c: complex_from_json(field(&obj, "C")?, "C")?,
        z: optional_z(&obj, g)?,
    };
    sd.validate()?;
    Ok(sd)
}

pub fn spectral_data_to_json(sd: &SpectralData) -> Value {
    let mut m = Map::new();
    m.insert("genus".into(), Value::from(sd.genus() as u64));
    m.insert("B".into(), matrix_to_json(&sd.b));
    m.insert("abel_plus".into(), vec_to_json(&sd.abel_plus));
    m.insert("abel_minus".into(), vec_to_json(&sd.abel_minus));
    m.insert("u_vectors".into(), keyed_map_to_json(&sd.u_vectors, |u| vec_to_json(u)));
    m.insert("points".into(), points_to_json(&sd.points));
    m.insert("C".into(), complex_to_json(sd.c));
    m.insert("Z".into(), vec_to_json(&sd.z));
    Value::Object(m)
}

pub fn save_spectral_data(sd: &SpectralData) -> Vec<u8> {
    canonical_json(&spectral_data_to_json(sd)).into_bytes()
}

pub fn load_prym_spectral_data(bytes: &[u8]) -> Result<PrymSpectralData> {
    let obj = parse_document(bytes)?;
    let g = genus_from_json(&obj)?;
    let pd = PrymSpectralData {
        pi: period_matrix_from_json(field(&obj, "Pi")?, "Pi", g)?,
        abel_prym_plus: vec_from_json(field(&obj, "abel_prym_plus")?, "abel_prym_plus")?,
        u: vec_from_json(field(&obj, "U")?, "U")?,
        v: vec_from_json(field(&obj, "V")?, "V")?,
        points: points_from_json(field(&obj, "points")?)?,
        c: complex_from_json(field(&obj, "C")?, "C")?,
        z: optional_z(&obj, g)?,
    };
    pd.validate()?;
    Ok(pd)
}

pub fn prym_spectral_data_to_json(pd: &PrymSpectralData) -> Value {
    let mut m = Map::new();
    m.insert("genus".into(), Value::from(pd.genus() as u64));
    m.insert("Pi".into(), matrix_to_json(&pd.pi));
    m.insert("abel_prym_plus".into(), vec_to_json(&pd.abel_prym_plus));
    m.insert("U".into(), vec_to_json(&pd.u));
    m.insert("V".into(), vec_to_json(&pd.v));
    m.insert("points".into(), points_to_json(&pd.points));
    m.insert("C".into(), complex_to_json(pd.c));
    m.insert("Z".into(), vec_to_json(&pd.z));
    Value::Object(m)
}

pub fn save_prym_spectral_data(pd: &PrymSpectralData) -> Vec<u8> {
    canonical_json(&prym_spectral_data_to_json(pd)).into_bytes()
}

/// Whether a document looks like Prym-form spectral data (has a "Pi" key).
pub fn is_prym_spectral_document(bytes: &[u8]) -> bool {
    parse_document(bytes).map(|m| m.contains_key("Pi")).unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Random test data

/// B = S + i(QᵀQ + g·I), S symmetric with uniform(−1/2, 1/2) entries, Q standard normal.
pub fn random_ppav(genus: usize, seed: u64) -> Result<PeriodMatrix> {
    if !(1..=6).contains(&genus) {
        return Err(Error::GenusOutOfRange(genus));
    }
    let g = genus;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = vec![0.0f64; g * g];
    for j in 0..g {
        for k in j..g {
            let x = rng.random_range(-0.5..0.5);
            s[j * g + k] = x;
            s[k * g + j] = x;
        }
    }
    let q: Vec<f64> = (0..g * g).map(|_| rng.sample(StandardNormal)).collect();
    let raw: Vec<Vec<Complex64>> = (0..g)
        .map(|j| {
            (0..g)
                .map(|k| {
                    let mut y: f64 = (0..g).map(|l| q[l * g + j] * q[l * g + k]).sum();
                    if j == k {
                        y += g as f64;
                    }
                    Complex64::new(s[j * g + k], y)
                })
                .collect()
        })
        .collect();
    validate_period_matrix(&raw)
}

/// Seeded complex vector with independent standard normal parts.
pub fn random_complex_vec(rng: &mut impl Rng, g: usize, scale: f64) -> Vec<Complex64> {
    (0..g)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect()
}

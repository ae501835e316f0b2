//! Compositions of complex Hénon maps `(z, w) ↦ (a·w + p(z), z)`, their
//! inverses and derivatives, and the escape filtration near infinity.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::{lift, lower, modulus, Real};

pub type C64 = num_complex::Complex64;

/// Default modulus ceiling above which a coordinate is reported as escaped.
pub const DEFAULT_CEILING: f64 = 1e150;

/// A point of C².
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct C2Point {
    #[serde(with = "crate::io::complex")]
    pub z: C64,
    #[serde(with = "crate::io::complex")]
    pub w: C64,
}

impl fmt::Debug for C2Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.z, self.w)
    }
}

impl C2Point {
    pub const fn new(z: C64, w: C64) -> Self {
        Self { z, w }
    }

    pub fn real(z: f64, w: f64) -> Self {
        Self::new(C64::new(z, 0.0), C64::new(w, 0.0))
    }

    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    pub fn max_modulus(&self) -> f64 {
        self.z.norm().max(self.w.norm())
    }

    pub fn dist(&self, other: &C2Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.w.is_finite()
    }

    pub fn scale(&self, s: C64) -> C2Point {
        C2Point::new(self.z * s, self.w * s)
    }

    pub fn dot_conj(&self, other: &C2Point) -> C64 {
        self.z.conj() * other.z + self.w.conj() * other.w
    }

    /// Lexicographic key on (Re z, Im z, Re w, Im w).
    pub fn lex_cmp(&self, other: &C2Point) -> std::cmp::Ordering {
        self.z
            .re
            .total_cmp(&other.z.re)
            .then(self.z.im.total_cmp(&other.z.im))
            .then(self.w.re.total_cmp(&other.w.re))
            .then(self.w.im.total_cmp(&other.w.im))
    }
}

impl Add for C2Point {
    type Output = C2Point;
    fn add(self, o: C2Point) -> C2Point {
        C2Point::new(self.z + o.z, self.w + o.w)
    }
}

impl Sub for C2Point {
    type Output = C2Point;
    fn sub(self, o: C2Point) -> C2Point {
        C2Point::new(self.z - o.z, self.w - o.w)
    }
}

/// 2×2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    #[serde(with = "crate::io::complex_pair")]
    pub row0: [C64; 2],
    #[serde(with = "crate::io::complex_pair")]
    pub row1: [C64; 2],
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.row0[0], self.row0[1], self.row1[0], self.row1[1]
        )
    }
}

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self {
            row0: [a, b],
            row1: [c, d],
        }
    }

    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self::new(one, zero, zero, one)
    }

    pub fn det(&self) -> C64 {
        self.row0[0] * self.row1[1] - self.row0[1] * self.row1[0]
    }

    pub fn trace(&self) -> C64 {
        self.row0[0] + self.row1[1]
    }

    pub fn apply(&self, v: &C2Point) -> C2Point {
        C2Point::new(
            self.row0[0] * v.z + self.row0[1] * v.w,
            self.row1[0] * v.z + self.row1[1] * v.w,
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(
            self.row0[0] * s,
            self.row0[1] * s,
            self.row1[0] * s,
            self.row1[1] * s,
        )
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.row0
            .iter()
            .chain(self.row1.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.row0
            .iter()
            .chain(self.row1.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(
            self.row1[1] / det,
            -self.row0[1] / det,
            -self.row1[0] / det,
            self.row0[0] / det,
        ))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.row0[0] * o.row0[0] + self.row0[1] * o.row1[0],
            self.row0[0] * o.row0[1] + self.row0[1] * o.row1[1],
            self.row1[0] * o.row0[0] + self.row1[1] * o.row1[0],
            self.row1[0] * o.row0[1] + self.row1[1] * o.row1[1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.row0[0] - o.row0[0],
            self.row0[1] - o.row0[1],
            self.row1[0] - o.row1[0],
            self.row1[1] - o.row1[1],
        )
    }
}

/// One Hénon factor `(z, w) ↦ (a·w + p(z), z)` with `p(z) = z^d + Σ_{j≤d-2} c_j z^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HenonFactor {
    a: C64,
    coeffs: Vec<C64>,
    full: Vec<C64>,
}

impl HenonFactor {
    /// `coeffs` holds `c_0 .. c_{d-2}`; the degree is `coeffs.len() + 1`.
    pub fn new(a: C64, coeffs: Vec<C64>) -> Result<Self> {
        if !(a.is_finite() && coeffs.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMap("coefficients must be finite".into()));
        }
        if a.norm() == 0.0 {
            return Err(Error::InvalidMap(
                "factor linear coefficient must be nonzero".into(),
            ));
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidMap(
                "factor degree must be at least 2 (need at least one coefficient c_0)".into(),
            ));
        }
        let mut full = coeffs.clone();
        full.push(C64::new(0.0, 0.0));
        full.push(C64::new(1.0, 0.0));
        Ok(Self { a, coeffs, full })
    }

    /// Quadratic factor `(z, w) ↦ (a·w + z² + c, z)`.
    pub fn quadratic(a: C64, c: C64) -> Result<Self> {
        Self::new(a, vec![c])
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() + 1
    }

    /// Full ascending coefficient list of `p`, including the zero `z^{d-1}` term and the leading 1.
    pub fn poly_coefficients(&self) -> &[C64] {
        &self.full
    }

    pub fn poly<T: Real>(&self, z: Complex<T>) -> Complex<T> {
        let full = &self.full;
        let mut h = lift::<T>(full[full.len() - 1]);
        for c in full.iter().rev().skip(1) {
            h = h * z + lift::<T>(*c);
        }
        h
    }

    pub fn poly_deriv<T: Real>(&self, z: Complex<T>) -> Complex<T> {
        let full = &self.full;
        let d = full.len() - 1;
        let mut h = lift::<T>(full[d] * d as f64);
        for k in (1..d).rev() {
            h = h * z + lift::<T>(full[k] * k as f64);
        }
        h
    }

    pub fn apply_in<T: Real>(&self, z: Complex<T>, w: Complex<T>) -> (Complex<T>, Complex<T>) {
        (lift::<T>(self.a) * w + self.poly(z), z)
    }

    pub fn apply_inverse_in<T: Real>(
        &self,
        z: Complex<T>,
        w: Complex<T>,
    ) -> (Complex<T>, Complex<T>) {
        (w, (z - self.poly(w)) / lift::<T>(self.a))
    }

    /// Derivative `[[p'(z), a], [1, 0]]` at `(z, w)`.
    pub fn derivative(&self, x: &C2Point) -> Mat2 {
        Mat2::new(
            self.poly_deriv(x.z),
            self.a,
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        )
    }

    pub fn derivative_in<T: Real>(&self, z: Complex<T>) -> [[Complex<T>; 2]; 2] {
        [
            [self.poly_deriv(z), lift::<T>(self.a)],
            [Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero())],
        ]
    }
}

/// Outcome of `iterate`: either the final point or an escape record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Iterate {
    Point(C2Point),
    Escaped(EscapeReport),
}

impl Iterate {
    pub fn point(self) -> Option<C2Point> {
        match self {
            Iterate::Point(p) => Some(p),
            Iterate::Escaped(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeReport {
    /// Number of complete map iterations performed before the ceiling was crossed.
    pub escape_time: usize,
    pub last: C2Point,
}

/// An ordered composition `f = f_m ∘ … ∘ f_1` of Hénon factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedAutomorphism {
    factors: Vec<HenonFactor>,
    degree: u64,
    jacobian: C64,
    ceiling: f64,
    forward: EscapeSystem,
    backward: EscapeSystem,
}

/// Sign of `|Jac f|` relative to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeBehaviour {
    Dissipative,
    Conservative,
    Expanding,
}

impl ComposedAutomorphism {
    pub fn new(factors: Vec<HenonFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidMap("at least one factor is required".into()));
        }
        let degree = factors.iter().map(|f| f.degree() as u64).product();
        let jacobian = factors.iter().map(|f| -f.a).product();
        let forward = EscapeSystem::forward(&factors);
        let backward = EscapeSystem::backward(&factors);
        Ok(Self {
            factors,
            degree,
            jacobian,
            ceiling: DEFAULT_CEILING,
            forward,
            backward,
        })
    }

    /// Single quadratic Hénon map `(z, w) ↦ (a·w + z² + c, z)`.
    pub fn quadratic(a: C64, c: C64) -> Result<Self> {
        Self::new(vec![HenonFactor::quadratic(a, c)?])
    }

    /// Real-parameter convenience for `quadratic`.
    pub fn real_quadratic(a: f64, c: f64) -> Result<Self> {
        Self::quadratic(C64::new(a, 0.0), C64::new(c, 0.0))
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        assert!(ceiling > 1.0, "ceiling must exceed 1");
        self.ceiling = ceiling;
        self
    }

    pub fn factors(&self) -> &[HenonFactor] {
        &self.factors
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn jacobian(&self) -> C64 {
        self.jacobian
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn volume_behaviour(&self) -> VolumeBehaviour {
        let m = self.jacobian.norm();
        if (m - 1.0).abs() <= 1e-12 {
            VolumeBehaviour::Conservative
        } else if m < 1.0 {
            VolumeBehaviour::Dissipative
        } else {
            VolumeBehaviour::Expanding
        }
    }

    /// True when every coefficient is real.
    pub fn is_real(&self) -> bool {
        self.factors
            .iter()
            .all(|f| f.a.im == 0.0 && f.coeffs.iter().all(|c| c.im == 0.0))
    }

    fn check(&self, steps: usize, z: C64, w: C64, last: C2Point) -> Result<()> {
        let ok = z.is_finite()
            && w.is_finite()
            && z.norm() <= self.ceiling
            && w.norm() <= self.ceiling;
        if ok {
            Ok(())
        } else {
            Err(Error::Overflow {
                steps,
                ceiling: self.ceiling,
                last,
            })
        }
    }

    pub fn evaluate(&self, x: &C2Point) -> Result<C2Point> {
        let (mut z, mut w) = (x.z, x.w);
        for (i, f) in self.factors.iter().enumerate() {
            let last = C2Point::new(z, w);
            (z, w) = f.apply_in(z, w);
            self.check(i + 1, z, w, last)?;
        }
        Ok(C2Point::new(z, w))
    }

    pub fn evaluate_inverse(&self, x: &C2Point) -> Result<C2Point> {
        let (mut z, mut w) = (x.z, x.w);
        for (i, f) in self.factors.iter().rev().enumerate() {
            let last = C2Point::new(z, w);
            (z, w) = f.apply_inverse_in(z, w);
            self.check(i + 1, z, w, last)?;
        }
        Ok(C2Point::new(z, w))
    }

    /// Forward evaluation in an arbitrary scalar type, without the ceiling check.
    pub fn evaluate_in<T: Real>(&self, z: Complex<T>, w: Complex<T>) -> (Complex<T>, Complex<T>) {
        self.factors
            .iter()
            .fold((z, w), |(z, w), f| f.apply_in(z, w))
    }

    pub fn evaluate_inverse_in<T: Real>(
        &self,
        z: Complex<T>,
        w: Complex<T>,
    ) -> (Complex<T>, Complex<T>) {
        self.factors
            .iter()
            .rev()
            .fold((z, w), |(z, w), f| f.apply_inverse_in(z, w))
    }

    /// `Df_x` by the chain rule over the factors.
    pub fn derivative(&self, x: &C2Point) -> Result<Mat2> {
        let mut m = Mat2::identity();
        let mut p = *x;
        for (i, f) in self.factors.iter().enumerate() {
            m = f.derivative(&p) * m;
            let last = p;
            let (z, w) = f.apply_in(p.z, p.w);
            self.check(i + 1, z, w, last)?;
            p = C2Point::new(z, w);
        }
        Ok(m)
    }

    /// `n`-fold forward (`n > 0`) or backward (`n < 0`) iteration.
    pub fn iterate(&self, x: &C2Point, n: i64) -> Iterate {
        let mut p = *x;
        for k in 0..n.unsigned_abs() as usize {
            let next = if n > 0 {
                self.evaluate(&p)
            } else {
                self.evaluate_inverse(&p)
            };
            match next {
                Ok(q) => p = q,
                Err(_) => {
                    return Iterate::Escaped(EscapeReport {
                        escape_time: k,
                        last: p,
                    })
                }
            }
        }
        Iterate::Point(p)
    }

    /// Iteration in extended or double precision; returns the f64-rounded point.
    pub fn iterate_in<T: Real>(&self, x: &C2Point, n: usize) -> Iterate {
        let (mut z, mut w) = (lift::<T>(x.z), lift::<T>(x.w));
        for k in 0..n {
            let last = C2Point::new(lower(z), lower(w));
            (z, w) = self.evaluate_in(z, w);
            let (mz, mw) = (modulus(z), modulus(w));
            if !(mz.is_finite() && mw.is_finite()) || mz > self.ceiling || mw > self.ceiling {
                return Iterate::Escaped(EscapeReport {
                    escape_time: k,
                    last,
                });
            }
        }
        Iterate::Point(C2Point::new(lower(z), lower(w)))
    }

    /// Radius `R` of the forward filtration `V⁺ = {|z| ≥ max(|w|, R)}`.
    pub fn filtration_radius(&self) -> f64 {
        self.forward.radius
    }

    /// Radius of the backward filtration `V⁻ = {|w| ≥ max(|z|, R⁻)}`.
    pub fn backward_filtration_radius(&self) -> f64 {
        self.backward.radius
    }

    pub(crate) fn forward_escape(&self) -> &EscapeSystem {
        &self.forward
    }

    pub(crate) fn backward_escape(&self) -> &EscapeSystem {
        &self.backward
    }

    pub fn in_forward_filtration(&self, x: &C2Point) -> bool {
        let r = self.filtration_radius();
        let mz = x.z.norm();
        mz >= r && mz >= x.w.norm()
    }

    pub fn description(&self) -> MapDescription {
        MapDescription {
            factors: self
                .factors
                .iter()
                .map(|f| FactorDescription {
                    a: f.a,
                    coeffs: f.coeffs.clone(),
                })
                .collect(),
        }
    }
}

/// On-disk map description: `{"factors":[{"a":[re,im],"coeffs":[[re,im],...]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDescription {
    pub factors: Vec<FactorDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDescription {
    #[serde(with = "crate::io::complex")]
    pub a: C64,
    #[serde(with = "crate::io::complex_vec")]
    pub coeffs: Vec<C64>,
}

impl MapDescription {
    pub fn build(&self) -> Result<ComposedAutomorphism> {
        let factors = self
            .factors
            .iter()
            .map(|f| HenonFactor::new(f.a, f.coeffs.clone()))
            .collect::<Result<Vec<_>>>()?;
        ComposedAutomorphism::new(factors)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidMap(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidMap(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("map description serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("map description serializes")
    }

    /// Reads JSON or TOML, chosen by the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            _ => Self::from_json_str(&text),
        }
    }
}

/// One step `(z, w) ↦ (b·w + q(z), z)` with a general (not necessarily monic) polynomial.
/// Forward factors and the swap-conjugated inverse factors are both of this shape.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EscapeStep {
    pub b: C64,
    /// Ascending coefficients of q, including the leading one.
    pub poly: Vec<C64>,
}

impl EscapeStep {
    pub fn degree(&self) -> usize {
        self.poly.len() - 1
    }

    pub fn lead(&self) -> C64 {
        self.poly[self.poly.len() - 1]
    }

    pub fn apply(&self, z: C64, w: C64) -> (C64, C64) {
        let mut h = self.poly[self.poly.len() - 1];
        for c in self.poly.iter().rev().skip(1) {
            h = h * z + c;
        }
        (self.b * w + h, z)
    }

    /// Bound on `|q(z) + b·w - lead·z^d| / |lead·z^d|` valid for `|w| ≤ |z|`.
    pub fn ratio_defect_bound(&self, mz: f64) -> f64 {
        let d = self.degree();
        let mut num = self.b.norm() * mz;
        let mut pow = 1.0;
        for c in &self.poly[..d] {
            num += c.norm() * pow;
            pow *= mz;
        }
        num / (self.lead().norm() * pow)
    }

    /// Constant K with `max(|z'|, |w'|) ≤ K·M^d` whenever `max(|z|, |w|) ≤ M`, `M ≥ 1`.
    pub fn growth_constant(&self) -> f64 {
        self.b.norm() + self.poly.iter().map(|c| c.norm()).sum::<f64>()
    }

    fn radius(&self) -> f64 {
        let d = self.degree();
        let lead = self.lead().norm();
        let lower: Vec<f64> = self.poly[..d].iter().map(|c| c.norm()).collect();
        let b = self.b.norm();
        // |q(z)| - |b||w| ≥ 2|z|   and   |z'| ≥ |lead||z|^d / 2  (one sign change each).
        let g1 = |r: f64| {
            let mut v = lead * r.powi(d as i32) - (b + 2.0) * r;
            for (j, c) in lower.iter().enumerate() {
                v -= c * r.powi(j as i32);
            }
            v
        };
        let g2 = |r: f64| {
            let mut v = 0.5 * lead * r.powi(d as i32) - b * r;
            for (j, c) in lower.iter().enumerate() {
                v -= c * r.powi(j as i32);
            }
            v
        };
        let r1 = positive_root(g1);
        let r2 = positive_root(g2);
        r1.max(r2).max(1.0)
    }
}

/// Unique positive root of a function with one sign change on (0, ∞), negative below it.
fn positive_root(g: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e150 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// The step sequence used by the escape-rate machinery for f (forward) or
/// for σ∘f⁻¹∘σ with σ(z, w) = (w, z) (backward).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EscapeSystem {
    pub steps: Vec<EscapeStep>,
    pub radius: f64,
    /// Upper bound on the escape rate over the bidisk of radius M is `ln M + growth_slack`.
    pub growth_slack: f64,
}

impl EscapeSystem {
    pub fn forward(factors: &[HenonFactor]) -> Self {
        let steps = factors
            .iter()
            .map(|f| EscapeStep {
                b: f.a,
                poly: f.poly_coefficients().to_vec(),
            })
            .collect();
        Self::from_steps(steps)
    }

    pub fn backward(factors: &[HenonFactor]) -> Self {
        let steps = factors
            .iter()
            .rev()
            .map(|f| {
                let inv_a = C64::new(1.0, 0.0) / f.a;
                EscapeStep {
                    b: inv_a,
                    poly: f.poly_coefficients().iter().map(|c| -c * inv_a).collect(),
                }
            })
            .collect();
        Self::from_steps(steps)
    }

    fn from_steps(steps: Vec<EscapeStep>) -> Self {
        let radius = steps.iter().map(|s| s.radius()).fold(1.0, f64::max);
        // log M_{j+1} ≤ d_j log M_j + log K_j; dividing by the running degree and
        // summing the geometric series Σ 1/(d_min)^k gives the slack.
        let d_min = steps.iter().map(|s| s.degree()).min().unwrap_or(2) as f64;
        let k_max = steps
            .iter()
            .map(|s| s.growth_constant().max(1.0).ln())
            .fold(0.0, f64::max);
        let growth_slack = k_max / (d_min - 1.0);
        Self {
            steps,
            radius,
            growth_slack,
        }
    }

    pub fn in_filtration(&self, z: C64, w: C64) -> bool {
        let mz = z.norm();
        mz >= self.radius && mz >= w.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn simple() -> ComposedAutomorphism {
        ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let f = simple();
        assert_eq!(f.evaluate(&C2Point::real(0.0, 0.0)).unwrap(), C2Point::real(0.0, 0.0));
        assert_eq!(f.evaluate(&C2Point::real(1.0, 1.0)).unwrap(), C2Point::real(1.5, 1.0));
        // z² + (a-1) z + c = 0 with a = 0.5, c = 0 has the root z = 0.5.
        assert_eq!(f.evaluate(&C2Point::real(0.5, 0.5)).unwrap(), C2Point::real(0.5, 0.5));
    }

    #[test]
    fn inverse_example() {
        let f = simple();
        assert_eq!(
            f.evaluate_inverse(&C2Point::real(1.5, 1.0)).unwrap(),
            C2Point::real(1.0, 1.0)
        );
    }

    #[test]
    fn derivative_examples() {
        let f = simple();
        let d0 = f.derivative(&C2Point::real(0.0, 0.0)).unwrap();
        assert_eq!(d0, Mat2::new(c(0.0), c(0.5), c(1.0), c(0.0)));
        let d1 = f.derivative(&C2Point::real(0.5, 0.5)).unwrap();
        assert_eq!(d1, Mat2::new(c(1.0), c(0.5), c(1.0), c(0.0)));
        assert_eq!(d1.det(), c(-0.5));
        assert_eq!(f.jacobian(), c(-0.5));
    }

    #[test]
    fn degree_one_rejected() {
        let err = HenonFactor::new(c(0.5), vec![]).unwrap_err();
        assert!(err.to_string().contains("degree"));
        let err = HenonFactor::new(c(0.0), vec![c(1.0)]).unwrap_err();
        assert!(err.to_string().contains("nonzero"));
    }

    #[test]
    fn cubic_polynomial_is_centered_and_monic() {
        let f = HenonFactor::new(c(1.0), vec![c(2.0), c(3.0)]).unwrap();
        assert_eq!(f.degree(), 3);
        // p(z) = z³ + 3z + 2
        let z = C64::new(0.5, -1.0);
        let expected = z * z * z + 3.0 * z + 2.0;
        assert!((f.poly(z) - expected).norm() < 1e-14);
        let dexp = 3.0 * z * z + 3.0;
        assert!((f.poly_deriv(z) - dexp).norm() < 1e-14);
    }

    #[test]
    fn iterate_zero_and_fixed_point() {
        let f = simple();
        let x = C2Point::real(0.3, -0.2);
        assert_eq!(f.iterate(&x, 0), Iterate::Point(x));
        let p = f.iterate(&C2Point::real(0.5, 0.5), 10_000).point().unwrap();
        assert!(p.dist(&C2Point::real(0.5, 0.5)) < 1e-9);
    }

    #[test]
    fn escape_from_three() {
        let f = simple();
        match f.iterate(&C2Point::real(3.0, 0.0), 1000) {
            Iterate::Escaped(r) => assert!(r.escape_time <= 10, "{r:?}"),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn filtration_radius_examples() {
        let r = simple().filtration_radius();
        assert!((r - 2.5).abs() < 1e-12, "{r}");
        let r = ComposedAutomorphism::real_quadratic(0.1, -6.0)
            .unwrap()
            .filtration_radius();
        let root = (2.1 + (2.1f64 * 2.1 + 24.0).sqrt()) / 2.0;
        assert!(r >= root - 1e-12, "{r} < {root}");
    }

    #[test]
    fn filtration_invariance_on_boundary_grid() {
        // Oracle: check |z'| ≥ max(|w'|, R) on the boundary |z| = max(|w|, R).
        for f in [
            simple(),
            ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap(),
            ComposedAutomorphism::quadratic(C64::new(0.0, 0.3), C64::new(-1.0, 0.2)).unwrap(),
        ] {
            let r = f.filtration_radius();
            for i in 0..48 {
                for j in 0..12 {
                    let th = i as f64 * std::f64::consts::TAU / 48.0;
                    let phi = j as f64 * std::f64::consts::TAU / 12.0;
                    let rw = r * (j as f64 / 12.0);
                    let x = C2Point::new(C64::from_polar(r, th), C64::from_polar(rw, phi));
                    let y = f.evaluate(&x).unwrap();
                    assert!(y.z.norm() >= (2.0 * x.z.norm()) * (1.0 - 1e-12));
                    assert!(y.z.norm() >= y.w.norm());
                }
            }
        }
    }

    #[test]
    fn description_round_trips_bit_exactly() {
        let f = ComposedAutomorphism::new(vec![
            HenonFactor::quadratic(C64::new(0.1, 1.0 / 3.0), C64::new(-6.0, 0.1)).unwrap(),
            HenonFactor::new(C64::new(-0.7, 0.0), vec![c(1e-17), c(2.0 / 7.0)]).unwrap(),
        ])
        .unwrap();
        let d = f.description();
        let json = d.to_json_string();
        assert_eq!(MapDescription::from_json_str(&json).unwrap(), d);
        let toml = d.to_toml_string();
        assert_eq!(MapDescription::from_toml_str(&toml).unwrap(), d);
        assert_eq!(d.build().unwrap(), f);
    }

    #[test]
    fn unknown_fields_rejected() {
        let s = r#"{"factors":[{"a":[0.5,0],"coeffs":[[0,0]],"b":1}]}"#;
        assert!(MapDescription::from_json_str(s).is_err());
    }

    #[test]
    fn volume_behaviour() {
        assert_eq!(simple().volume_behaviour(), VolumeBehaviour::Dissipative);
        let f = ComposedAutomorphism::real_quadratic(-1.0, 0.0).unwrap();
        assert_eq!(f.volume_behaviour(), VolumeBehaviour::Conservative);
    }
}

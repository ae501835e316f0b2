//! Periodic orbits: seeding, Newton refinement, multipliers and the census of
//! period-n points.
//!
//! The default solver works on the cyclic system of the factor sequence. For a
//! composition of `m` factors and period `n` there are `L = n·m` unknowns
//! `u_0..u_{L-1}` (the first coordinate after each factor step); the second
//! coordinate is always the previous first coordinate, so the equations are
//! `u_{s+1} − a_s·u_{s−1} − p_s(u_s) = 0` with cyclic indices. The Jacobian is
//! cyclic tridiagonal and stays well conditioned where `Dfⁿ − I` does not.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{C2Point, ComposedAutomorphism, Mat2, C64};
use crate::precision::{lift, lower, DoubleDouble, Precision, Real};

/// Complex number stored as `(ln|λ|, arg λ)` so that multipliers of long
/// orbits never overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogComplex {
    pub ln_abs: f64,
    pub arg: f64,
}

impl LogComplex {
    pub fn from_c64(c: C64) -> Self {
        Self {
            ln_abs: c.norm().ln(),
            arg: c.arg(),
        }
    }

    pub fn new(ln_abs: f64, arg: f64) -> Self {
        Self {
            ln_abs,
            arg: wrap_angle(arg),
        }
    }

    pub fn abs(&self) -> f64 {
        self.ln_abs.exp()
    }

    /// May overflow to infinity for huge moduli.
    pub fn to_c64(&self) -> C64 {
        C64::from_polar(self.ln_abs.exp(), self.arg)
    }

    pub fn mul(&self, o: &LogComplex) -> LogComplex {
        LogComplex::new(self.ln_abs + o.ln_abs, self.arg + o.arg)
    }

    pub fn div(&self, o: &LogComplex) -> LogComplex {
        LogComplex::new(self.ln_abs - o.ln_abs, self.arg - o.arg)
    }

    pub fn powi(&self, k: i64) -> LogComplex {
        // Reduce the angle multiple exactly enough for moderate k.
        LogComplex::new(self.ln_abs * k as f64, self.arg * k as f64)
    }

    /// Imaginary part relative to modulus, `|sin arg|`.
    pub fn non_realness(&self) -> f64 {
        self.arg.sin().abs()
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Saddle,
    Sink,
    Source,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NewtonMethod {
    #[default]
    Cyclic,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonConfig {
    /// Acceptance threshold for the orbit residual `max_i ‖f(x_i) − x_{i+1}‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: NewtonMethod,
    /// Orbits closer than `dedup_scale · max(1, ‖Df‖)` are identified.
    pub dedup_scale: f64,
    pub neutral_band: f64,
    pub precision: Precision,
    /// Grid seeds per side over the real square `[−R, R]²`.
    pub grid_resolution: usize,
    /// Seeds per axis of a lattice in the complex bidisk `[−R, R]⁴`; 0 disables it.
    pub complex_grid_resolution: usize,
    /// Add one seed per symbolic itinerary when the count `dⁿ` is at most this.
    pub itinerary_limit: u64,
    /// Slack in the completeness check `found ≥ dⁿ − slack`.
    pub count_slack: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            method: NewtonMethod::Cyclic,
            dedup_scale: 1e-7,
            neutral_band: 1e-6,
            precision: Precision::Double,
            grid_resolution: 200,
            complex_grid_resolution: 10,
            itinerary_limit: 1 << 16,
            count_slack: 0,
        }
    }
}

/// A periodic cycle with its multipliers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// Minimal period.
    pub period: usize,
    /// Cycle starting at the lexicographically smallest point.
    pub points: Vec<C2Point>,
    /// Monodromy `e^{monodromy_log_scale}·monodromy_scaled`.
    pub monodromy_scaled: Mat2,
    pub monodromy_log_scale: f64,
    /// Eigenvalues ordered `|λ₁| ≤ |λ₂|`.
    pub lambda1: LogComplex,
    pub lambda2: LogComplex,
    pub classification: Classification,
    pub residual: f64,
    /// Found while solving for a multiple of the minimal period.
    pub lower_period: bool,
}

impl PeriodicOrbit {
    /// Builds and classifies an orbit from a cycle of (approximate) points.
    pub fn from_cycle(
        map: &ComposedAutomorphism,
        points: Vec<C2Point>,
        cfg: &NewtonConfig,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty cycle".into()));
        }
        let residual = cycle_residual(map, &points)?;
        let k0 = (0..n)
            .min_by(|&i, &j| points[i].lex_cmp(&points[j]))
            .unwrap_or(0);
        let mut pts = points;
        pts.rotate_left(k0);
        let precision = if cfg.precision == Precision::Extended {
            Precision::Extended
        } else {
            Precision::Double
        };
        let (scaled, log_scale) = match precision {
            Precision::Double => monodromy_scaled::<f64>(map, &pts, 0),
            Precision::Extended => monodromy_scaled::<DoubleDouble>(map, &pts, 0),
        };
        let (l1, l2) = eigen_log(&scaled, log_scale, map.jacobian(), n);
        // Switch to extended arithmetic when the multiplier leaves the comfortable double range.
        let (scaled, log_scale, l1, l2) =
            if precision == Precision::Double && l2.ln_abs > 120.0 * 2f64.ln() {
                let (s, l) = monodromy_scaled::<DoubleDouble>(map, &pts, 0);
                let (a, b) = eigen_log(&s, l, map.jacobian(), n);
                (s, l, a, b)
            } else {
                (scaled, log_scale, l1, l2)
            };
        let classification = classify_moduli(l1.ln_abs, l2.ln_abs, cfg.neutral_band);
        Ok(Self {
            period: n,
            points: pts,
            monodromy_scaled: scaled,
            monodromy_log_scale: log_scale,
            lambda1: l1,
            lambda2: l2,
            classification,
            residual,
            lower_period: false,
        })
    }

    pub fn is_saddle(&self) -> bool {
        self.classification == Classification::Saddle
    }

    pub fn lambda_s(&self) -> LogComplex {
        self.lambda1
    }

    pub fn lambda_u(&self) -> LogComplex {
        self.lambda2
    }

    /// `χᵘ = ln|λᵘ| / n` (meaningful for saddles).
    pub fn chi_u(&self) -> f64 {
        self.lambda2.ln_abs / self.period as f64
    }

    pub fn base(&self) -> C2Point {
        self.points[0]
    }

    /// Unscaled monodromy at `points[k]`; may overflow for long orbits.
    pub fn monodromy_at(&self, map: &ComposedAutomorphism, k: usize) -> Mat2 {
        let (s, l) = monodromy_scaled::<f64>(map, &self.points, k);
        s.scale(l.exp())
    }

    /// Unit eigenvector of the monodromy at `points[k]` for `λ₂` (unstable for saddles).
    pub fn unstable_direction(&self, map: &ComposedAutomorphism, k: usize) -> C2Point {
        let (s, l) = monodromy_scaled::<f64>(map, &self.points, k);
        let mu = self.lambda2.to_c64() * (-l).exp();
        let mu = if mu.is_finite() {
            mu
        } else {
            C64::from_polar((self.lambda2.ln_abs - l).exp(), self.lambda2.arg)
        };
        eigenvector(&s, mu)
    }

    /// Unit eigenvector for `λ₁`, computed from the inverse monodromy so that
    /// it stays accurate when `λ₁` is tiny.
    pub fn stable_direction(&self, map: &ComposedAutomorphism, k: usize) -> C2Point {
        let (s, l) = monodromy_scaled::<f64>(map, &self.points, k);
        // M⁻¹ = adj(M)/det; the adjugate of the scaled matrix has the same eigenvectors,
        // with the eigenvalue of λ₁ being the dominant one.
        let adj = Mat2::new(s.row1[1], -s.row0[1], -s.row1[0], s.row0[0]);
        let mu_adj = C64::from_polar((self.lambda2.ln_abs - l).exp(), self.lambda2.arg);
        eigenvector(&adj, mu_adj)
    }

    /// Maximal distance between the two cycles' point sets after optimal rotation.
    pub fn cycle_distance(&self, other: &PeriodicOrbit) -> f64 {
        if self.period != other.period {
            return f64::INFINITY;
        }
        let n = self.period;
        (0..n)
            .map(|r| {
                (0..n)
                    .map(|i| self.points[i].dist(&other.points[(i + r) % n]))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Re-evaluates the residual in double-double arithmetic.
    pub fn residual_extended(&self, map: &ComposedAutomorphism) -> f64 {
        let n = self.points.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let x = self.points[i];
            let (z, w) = map.evaluate_in::<DoubleDouble>(lift(x.z), lift(x.w));
            let y = self.points[(i + 1) % n];
            let dz = lower(z - lift::<DoubleDouble>(y.z));
            let dw = lower(w - lift::<DoubleDouble>(y.w));
            worst = worst.max((dz.norm_sqr() + dw.norm_sqr()).sqrt());
        }
        worst
    }

    fn dedup_radius(&self, map: &ComposedAutomorphism, scale: f64) -> f64 {
        let df = map
            .derivative(&self.points[0])
            .map(|m| m.frobenius())
            .unwrap_or(1.0);
        scale * df.max(1.0)
    }
}

/// `max_i ‖f(x_i) − x_{i+1 mod n}‖`.
pub fn cycle_residual(map: &ComposedAutomorphism, points: &[C2Point]) -> Result<f64> {
    let n = points.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let y = map.evaluate(&points[i])?;
        worst = worst.max(y.dist(&points[(i + 1) % n]));
    }
    Ok(worst)
}

fn classify_moduli(l1: f64, l2: f64, band: f64) -> Classification {
    let near = |l: f64| l.exp_m1().abs() < band;
    if near(l1) || near(l2) {
        Classification::Neutral
    } else if l1 < 0.0 && l2 > 0.0 {
        Classification::Saddle
    } else if l2 < 0.0 {
        Classification::Sink
    } else {
        Classification::Source
    }
}

/// Classification of an orbit from its multipliers.
pub fn classify(orbit: &PeriodicOrbit, neutral_band: f64) -> (Classification, LogComplex, LogComplex, f64) {
    let c = classify_moduli(orbit.lambda1.ln_abs, orbit.lambda2.ln_abs, neutral_band);
    (c, orbit.lambda1, orbit.lambda2, orbit.chi_u())
}

/// Monodromy along the cycle starting at `points[k]`, renormalized each factor
/// step; returns the scaled matrix and the accumulated log scale.
fn monodromy_scaled<T: Real>(
    map: &ComposedAutomorphism,
    points: &[C2Point],
    k: usize,
) -> (Mat2, f64) {
    let n = points.len();
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let mut m = [[one, zero], [zero, one]];
    let mut log_scale = 0.0;
    for i in 0..n {
        let x = points[(k + i) % n];
        let (mut z, mut w) = (lift::<T>(x.z), lift::<T>(x.w));
        for f in map.factors() {
            let d = f.derivative_in::<T>(z);
            m = [
                [
                    d[0][0] * m[0][0] + d[0][1] * m[1][0],
                    d[0][0] * m[0][1] + d[0][1] * m[1][1],
                ],
                [
                    d[1][0] * m[0][0] + d[1][1] * m[1][0],
                    d[1][0] * m[0][1] + d[1][1] * m[1][1],
                ],
            ];
            let big = m
                .iter()
                .flatten()
                .map(|c| lower(*c).norm())
                .fold(0.0, f64::max);
            if big > 0.0 && big.is_finite() {
                let inv = T::from_f64(1.0 / big);
                for c in m.iter_mut().flatten() {
                    *c = Complex::new(c.re * inv, c.im * inv);
                }
                log_scale += big.ln();
            }
            (z, w) = f.apply_in(z, w);
        }
        let _ = w;
    }
    let low = Mat2::new(
        lower(m[0][0]),
        lower(m[0][1]),
        lower(m[1][0]),
        lower(m[1][1]),
    );
    (low, log_scale)
}

/// Eigenvalues of `e^L·S` from `λ² − tr·λ + jacⁿ = 0` (the determinant is known exactly).
fn eigen_log(s: &Mat2, log_scale: f64, jac: C64, n: usize) -> (LogComplex, LogComplex) {
    let det = LogComplex::from_c64(jac).powi(n as i64);
    let det_scaled = LogComplex::new(det.ln_abs - 2.0 * log_scale, det.arg).to_c64();
    let half_tr = s.trace() * 0.5;
    let sq = (half_tr * half_tr - det_scaled).sqrt();
    let (p, m) = (half_tr + sq, half_tr - sq);
    let mu2 = if p.norm() >= m.norm() { p } else { m };
    if mu2.norm() == 0.0 {
        let root = LogComplex::new(0.5 * det.ln_abs, 0.5 * det.arg);
        return (root, root);
    }
    let l2 = LogComplex::new(mu2.norm().ln() + log_scale, mu2.arg());
    let l1 = det.div(&l2);
    if l1.ln_abs > l2.ln_abs {
        (l2, l1)
    } else {
        (l1, l2)
    }
}

fn eigenvector(s: &Mat2, mu: C64) -> C2Point {
    let v1 = C2Point::new(s.row0[1], mu - s.row0[0]);
    let v2 = C2Point::new(mu - s.row1[1], s.row1[0]);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let nv = v.norm();
    if nv == 0.0 {
        return C2Point::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    }
    normalize_phase(v.scale(C64::new(1.0 / nv, 0.0)))
}

/// Rotates a unit vector so that its largest component is real and positive.
pub(crate) fn normalize_phase(v: C2Point) -> C2Point {
    let c = if v.z.norm() >= v.w.norm() { v.z } else { v.w };
    if c.norm() == 0.0 {
        return v;
    }
    v.scale(c.conj() / c.norm())
}

/// Seeds accepted by [`find_periodic`].
#[derive(Debug, Clone)]
pub enum Seeds {
    /// Grid over the real filtration square plus itinerary seeds.
    Default,
    /// Starting points; the cyclic seed is the forward orbit of each point.
    Points(Vec<C2Point>),
    /// Explicit cyclic seeds of `n` points each.
    Cycles(Vec<Vec<C2Point>>),
}

/// Output of a search: deduplicated orbits with minimal periods dividing `n`.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicSearch {
    pub n: usize,
    pub orbits: Vec<PeriodicOrbit>,
    pub seeds_tried: usize,
    pub seeds_converged: usize,
    /// Number of points found divided by `dⁿ`.
    pub completeness: f64,
}

impl PeriodicSearch {
    pub fn point_count(&self) -> usize {
        self.orbits.iter().map(|o| o.period).sum()
    }
}

/// Finds periodic orbits whose minimal period divides `n`.
pub fn find_periodic(
    map: &ComposedAutomorphism,
    n: usize,
    seeds: &Seeds,
    cfg: &NewtonConfig,
) -> Result<PeriodicSearch> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let cycles: Vec<Vec<C2Point>> = match seeds {
        Seeds::Default => default_seeds(map, n, cfg),
        Seeds::Points(p) => p
            .iter()
            .filter_map(|x| forward_cycle(map, x, n, 10.0 * map.filtration_radius()))
            .collect(),
        Seeds::Cycles(c) => {
            if let Some(bad) = c.iter().find(|c| c.len() != n) {
                return Err(Error::InvalidArgument(format!(
                    "cyclic seed has {} points, expected {n}",
                    bad.len()
                )));
            }
            c.clone()
        }
    };
    if cycles.is_empty() {
        return Err(Error::InvalidArgument("no usable seeds".into()));
    }
    let refined: Vec<Option<Vec<C2Point>>> = cycles
        .par_iter()
        .map(|seed| solve_cycle(map, seed, cfg))
        .collect();
    let seeds_converged = refined.iter().filter(|r| r.is_some()).count();
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for cyc in refined.into_iter().flatten() {
        let Some(orbit) = reduce_and_build(map, cyc, n, cfg) else {
            continue;
        };
        insert_unique(map, &mut orbits, orbit, cfg);
    }
    sort_orbits(&mut orbits);
    let found: usize = orbits.iter().map(|o| o.period).sum();
    let total = (map.degree() as f64).powi(n as i32);
    Ok(PeriodicSearch {
        n,
        completeness: found as f64 / total,
        orbits,
        seeds_tried: cycles.len(),
        seeds_converged,
    })
}

/// Refines a single cyclic seed (e.g. a closed-up pseudo-orbit) into an orbit of
/// exactly `seed.len()` points; minimal-period collapse is reported as an error.
pub fn refine_cycle(
    map: &ComposedAutomorphism,
    seed: &[C2Point],
    cfg: &NewtonConfig,
) -> Result<PeriodicOrbit> {
    let n = seed.len();
    let cyc = solve_cycle(map, seed, cfg).ok_or_else(|| Error::ClosingFailure {
        period: n,
        residual: cycle_residual(map, seed).unwrap_or(f64::INFINITY),
        reason: "Newton iteration did not converge".into(),
    })?;
    let orbit = reduce_and_build(map, cyc, n, cfg).ok_or_else(|| Error::ClosingFailure {
        period: n,
        residual: f64::NAN,
        reason: "classification failed".into(),
    })?;
    if orbit.period != n {
        return Err(Error::ClosingFailure {
            period: n,
            residual: orbit.residual,
            reason: format!("converged to an orbit of lower period {}", orbit.period),
        });
    }
    Ok(orbit)
}

pub(crate) fn insert_unique(
    map: &ComposedAutomorphism,
    orbits: &mut Vec<PeriodicOrbit>,
    orbit: PeriodicOrbit,
    cfg: &NewtonConfig,
) -> bool {
    let r = orbit.dedup_radius(map, cfg.dedup_scale);
    let dup = orbits.iter().any(|o| {
        o.period == orbit.period
            && o.points
                .iter()
                .any(|p| p.dist(&orbit.points[0]) < r.max(o.dedup_radius(map, cfg.dedup_scale)))
    });
    if !dup {
        orbits.push(orbit);
    }
    !dup
}

pub(crate) fn sort_orbits(orbits: &mut [PeriodicOrbit]) {
    orbits.sort_by(|a, b| {
        a.period
            .cmp(&b.period)
            .then_with(|| a.points[0].lex_cmp(&b.points[0]))
    });
}

fn reduce_and_build(
    map: &ComposedAutomorphism,
    cyc: Vec<C2Point>,
    n: usize,
    cfg: &NewtonConfig,
) -> Option<PeriodicOrbit> {
    let scale = cyc.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let close = cfg.dedup_scale * scale;
    let minimal = (1..=n)
        .filter(|m| n.is_multiple_of(*m))
        .find(|&m| (0..n).all(|i| cyc[i].dist(&cyc[(i + m) % n]) < close))
        .unwrap_or(n);
    let pts: Vec<C2Point> = cyc[..minimal].to_vec();
    let mut orbit = PeriodicOrbit::from_cycle(map, pts, cfg).ok()?;
    if orbit.residual >= cfg.tol {
        return None;
    }
    orbit.lower_period = minimal < n;
    Some(orbit)
}

/// Forward orbit `x, f(x), …, f^{n−1}(x)` if it stays within `bound`.
fn forward_cycle(map: &ComposedAutomorphism, x: &C2Point, n: usize, bound: f64) -> Option<Vec<C2Point>> {
    let mut out = Vec::with_capacity(n);
    let mut p = *x;
    for i in 0..n {
        if p.max_modulus() > bound {
            return None;
        }
        out.push(p);
        if i + 1 < n {
            p = map.evaluate(&p).ok()?;
        }
    }
    Some(out)
}

fn default_seeds(map: &ComposedAutomorphism, n: usize, cfg: &NewtonConfig) -> Vec<Vec<C2Point>> {
    let r = map.filtration_radius();
    let g = cfg.grid_resolution.max(2);
    let mut seeds: Vec<Vec<C2Point>> = (0..g * g)
        .into_par_iter()
        .filter_map(|idx| {
            let (i, j) = (idx / g, idx % g);
            let z = -r + 2.0 * r * j as f64 / (g - 1) as f64;
            let w = -r + 2.0 * r * i as f64 / (g - 1) as f64;
            forward_cycle(map, &C2Point::real(z, w), n, r)
        })
        .collect();
    let k = cfg.complex_grid_resolution;
    if k >= 2 {
        // Offset by half a cell so that no lattice point is real.
        let coord = |i: usize| -r + 2.0 * r * (i as f64 + 0.5) / k as f64;
        seeds.par_extend((0..k.pow(4)).into_par_iter().filter_map(|idx| {
            let c = [idx % k, (idx / k) % k, (idx / (k * k)) % k, idx / (k * k * k)];
            let x = C2Point::new(C64::new(coord(c[0]), coord(c[1])), C64::new(coord(c[2]), coord(c[3])));
            forward_cycle(map, &x, n, r)
        }));
    }
    let count = (map.degree() as f64).powi(n as i32);
    if count <= cfg.itinerary_limit as f64 {
        seeds.extend(itinerary_seeds(map, n));
    }
    seeds
}

/// One cyclic seed per symbol sequence, placed by relaxing inverse branches
/// `u_s = branch_k(p_s⁻¹(u_{s+1} − a_s·u_{s−1}))` over the whole cycle.
pub fn itinerary_seeds(map: &ComposedAutomorphism, n: usize) -> Vec<Vec<C2Point>> {
    let m = map.factors().len();
    let len = n * m;
    let degrees: Vec<usize> = (0..len).map(|s| map.factors()[s % m].degree()).collect();
    let total: usize = degrees.iter().product();
    (0..total)
        .into_par_iter()
        .map(|code| {
            let mut symbols = Vec::with_capacity(len);
            let mut c = code;
            for d in &degrees {
                symbols.push(c % d);
                c /= d;
            }
            let u = relax_itinerary(map, &symbols);
            states_from_u(m, n, &u)
        })
        .collect()
}

fn relax_itinerary(map: &ComposedAutomorphism, symbols: &[usize]) -> Vec<C64> {
    let m = map.factors().len();
    let len = symbols.len();
    let r = map.filtration_radius();
    let mut u = vec![C64::new(0.0, 0.0); len];
    for _sweep in 0..200 {
        let mut change = 0.0f64;
        for s in (0..len).rev() {
            let f = &map.factors()[s % m];
            let next = u[(s + 1) % len];
            let prev = u[(s + len - 1) % len];
            let target = next - f.a() * prev;
            let new = inverse_branch(f.poly_coefficients(), target, symbols[s]);
            let new = if new.is_finite() && new.norm() < 4.0 * r {
                new
            } else {
                C64::new(0.0, 0.0)
            };
            change = change.max((new - u[s]).norm());
            u[s] = new;
        }
        if change < 1e-13 {
            break;
        }
    }
    u
}

/// Root of `p(u) = t` near the branch `ω^k·t^{1/d}`.
fn inverse_branch(poly: &[C64], t: C64, k: usize) -> C64 {
    let d = poly.len() - 1;
    let lead_root = if t.norm() == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        C64::from_polar(t.norm().powf(1.0 / d as f64), t.arg() / d as f64)
    };
    let omega = C64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64);
    // Quadratic with only a constant term is solved exactly.
    if d == 2 && poly[1].norm() == 0.0 {
        let root = (t - poly[0]).sqrt();
        return if k == 0 { root } else { -root };
    }
    let mut u = lead_root * omega;
    for _ in 0..30 {
        let mut val = poly[d];
        let mut der = C64::new(0.0, 0.0);
        for c in poly[..d].iter().rev() {
            der = der * u + val;
            val = val * u + c;
        }
        let step = (val - t) / der;
        if !step.is_finite() {
            break;
        }
        u -= step;
        if step.norm() < 1e-15 * u.norm().max(1.0) {
            break;
        }
    }
    u
}

fn states_from_u(m: usize, n: usize, u: &[C64]) -> Vec<C2Point> {
    let len = u.len();
    (0..n)
        .map(|i| C2Point::new(u[i * m], u[(i * m + len - 1) % len]))
        .collect()
}

/// Factor-step sequence `u` of a cycle of states (`u_{i·m} = z_i`, intermediate
/// values obtained by applying the factors).
fn u_from_states(map: &ComposedAutomorphism, states: &[C2Point]) -> Vec<C64> {
    let m = map.factors().len();
    let mut u = Vec::with_capacity(states.len() * m);
    for x in states {
        u.push(x.z);
        let (mut z, mut w) = (x.z, x.w);
        for f in &map.factors()[..m - 1] {
            (z, w) = f.apply_in(z, w);
            u.push(z);
        }
        let _ = w;
    }
    u
}

fn cyclic_equations(map: &ComposedAutomorphism, u: &[C64]) -> Vec<C64> {
    let m = map.factors().len();
    let len = u.len();
    (0..len)
        .map(|s| {
            let f = &map.factors()[s % m];
            u[(s + 1) % len] - f.a() * u[(s + len - 1) % len] - f.poly(u[s])
        })
        .collect()
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn solve_cycle(map: &ComposedAutomorphism, seed: &[C2Point], cfg: &NewtonConfig) -> Option<Vec<C2Point>> {
    if seed.iter().any(|p| !p.is_finite()) {
        return None;
    }
    let states = match cfg.method {
        NewtonMethod::Cyclic => solve_cyclic(map, seed, cfg)?,
        NewtonMethod::Direct => solve_direct(map, &seed[0], seed.len(), cfg)?,
    };
    let res = cycle_residual(map, &states).ok()?;
    (res < cfg.tol).then_some(states)
}

fn solve_cyclic(map: &ComposedAutomorphism, seed: &[C2Point], cfg: &NewtonConfig) -> Option<Vec<C2Point>> {
    let m = map.factors().len();
    let n = seed.len();
    let mut u = u_from_states(map, seed);
    let len = u.len();
    let bound = 1e3 * map.filtration_radius();
    let mut e = cyclic_equations(map, &u);
    let mut norm = max_abs(&e);
    let mut stalled = 0;
    for _ in 0..cfg.max_iter {
        if !norm.is_finite() {
            return None;
        }
        let mut jac = DMatrix::<C64>::zeros(len, len);
        for s in 0..len {
            let f = &map.factors()[s % m];
            jac[(s, (s + 1) % len)] += C64::new(1.0, 0.0);
            jac[(s, s)] -= f.poly_deriv(u[s]);
            jac[(s, (s + len - 1) % len)] -= f.a();
        }
        let rhs = DVector::from_iterator(len, e.iter().map(|c| -c));
        let delta = jac.lu().solve(&rhs)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<C64> = u.iter().zip(delta.iter()).map(|(a, d)| a + d * t).collect();
            let et = cyclic_equations(map, &trial);
            let nt = max_abs(&et);
            if nt.is_finite() && nt < norm * (1.0 - 1e-4 * t) {
                accepted = Some((trial, et, nt));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, et, nt)) = accepted else {
            break;
        };
        let step = max_abs(&delta.iter().copied().collect::<Vec<_>>()) * t;
        u = trial;
        e = et;
        let prev = norm;
        norm = nt;
        if max_abs(&u) > bound {
            return None;
        }
        let scale = max_abs(&u).max(1.0);
        if step < 1e-15 * scale || norm < 1e-15 * scale * scale {
            break;
        }
        if norm > 0.5 * prev {
            stalled += 1;
            if stalled > 8 {
                break;
            }
        }
    }
    Some(states_from_u(m, n, &u))
}

fn solve_direct(map: &ComposedAutomorphism, x0: &C2Point, n: usize, cfg: &NewtonConfig) -> Option<Vec<C2Point>> {
    let mut x = *x0;
    for _ in 0..cfg.max_iter {
        let mut y = x;
        let mut dm = Mat2::identity();
        for _ in 0..n {
            dm = map.derivative(&y).ok()? * dm;
            y = map.evaluate(&y).ok()?;
        }
        let g = y - x;
        let a = dm - Mat2::identity();
        let inv = a.inverse()?;
        let step = inv.apply(&g);
        x = x - step;
        if !x.is_finite() {
            return None;
        }
        if step.norm() < 1e-15 * x.norm().max(1.0) {
            break;
        }
    }
    let mut pts = Vec::with_capacity(n);
    let mut p = x;
    for _ in 0..n {
        pts.push(p);
        p = map.evaluate(&p).ok()?;
    }
    Some(pts)
}

/// One census row over the points of `Fixₙ` (all minimal periods dividing `n`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRow {
    pub n: usize,
    pub fix_count: usize,
    pub sper_count: usize,
    /// `sper_count / dⁿ`.
    pub ratio: f64,
    /// Mean of `χᵘ` over the saddle points.
    pub mean_chi_u: f64,
    /// `d^{−n} Σ_{SPerₙ} χᵘ`.
    pub weighted_chi_u: f64,
    pub low_confidence: bool,
    pub neutral_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Census {
    pub rows: Vec<CensusRow>,
    /// Orbits making up `Fixₙ` for each row.
    pub fix_sets: Vec<Vec<PeriodicOrbit>>,
}

impl Census {
    pub fn row(&self, n: usize) -> Option<&CensusRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn orbits(&self, n: usize) -> Option<&[PeriodicOrbit]> {
        self.rows
            .iter()
            .position(|r| r.n == n)
            .map(|i| self.fix_sets[i].as_slice())
    }
}

/// Census rows for `n = 1..=n_max`. Orbits found at a divisor of `n` are
/// merged into `Fixₙ` so that each row benefits from earlier searches.
pub fn census(map: &ComposedAutomorphism, n_max: usize, cfg: &NewtonConfig) -> Result<Census> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(n_max);
    let mut sets: Vec<Vec<PeriodicOrbit>> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let search = find_periodic(map, n, &Seeds::Default, cfg)?;
        let mut orbits = search.orbits;
        for (k, prev) in sets.iter().enumerate() {
            if n % (k + 1) == 0 {
                for o in prev {
                    let mut o = o.clone();
                    o.lower_period = o.period < n;
                    insert_unique(map, &mut orbits, o, cfg);
                }
            }
        }
        for o in orbits.iter_mut() {
            o.lower_period = o.period < n;
        }
        sort_orbits(&mut orbits);
        rows.push(census_row(map, n, &orbits, cfg));
        sets.push(orbits);
    }
    Ok(Census {
        rows,
        fix_sets: sets,
    })
}

pub fn census_row(
    map: &ComposedAutomorphism,
    n: usize,
    orbits: &[PeriodicOrbit],
    cfg: &NewtonConfig,
) -> CensusRow {
    let total = (map.degree() as f64).powi(n as i32);
    let fix_count: usize = orbits.iter().map(|o| o.period).sum();
    let saddles: Vec<&PeriodicOrbit> = orbits.iter().filter(|o| o.is_saddle()).collect();
    let sper_count: usize = saddles.iter().map(|o| o.period).sum();
    let chi_sum: f64 = saddles.iter().map(|o| o.period as f64 * o.chi_u()).sum();
    let neutral_count = orbits
        .iter()
        .filter(|o| o.classification == Classification::Neutral)
        .count();
    CensusRow {
        n,
        fix_count,
        sper_count,
        ratio: sper_count as f64 / total,
        mean_chi_u: if sper_count > 0 {
            chi_sum / sper_count as f64
        } else {
            f64::NAN
        },
        weighted_chi_u: chi_sum / total,
        low_confidence: (fix_count + cfg.count_slack) < total as usize || neutral_count > 0,
        neutral_count,
    }
}

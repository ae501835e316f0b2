//! Local stable and unstable manifolds of saddle orbits as power series, their
//! global extension by the dynamics, slices of `G⁺` along unstable manifolds,
//! homoclinic points, and geometric diagnostics of point sets in the parameter
//! plane (line fits and box dimension).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{C2Point, ComposedAutomorphism, Mat2, C64};
use crate::periodic::{normalize_phase, PeriodicOrbit};
use crate::potential::{green_minus, green_plus, sample_slice, GreenValue, SliceSample};

pub const DEFAULT_ORDER: usize = 25;
pub const DEFAULT_SERIES_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `ψ'(0)` is a unit eigenvector.
    UnitDerivative,
    /// Parameter rescaled so that `max_{|ζ|≤1} G⁺∘ψ(ζ) = 1`; carries the factor.
    Green { scale: f64 },
}

/// Truncated power series `ψ(ζ) = Σ_k ψ_k ζ^k` with `fⁿ∘ψ = ψ∘(λ·)`.
#[derive(Debug, Clone, Serialize)]
pub struct LocalManifold {
    #[serde(skip)]
    map: ComposedAutomorphism,
    pub base: PeriodicOrbit,
    pub kind: ManifoldKind,
    #[serde(with = "crate::io::complex")]
    pub lambda: C64,
    /// Coefficients in the unit-derivative parameter; `series[0]` is the base point.
    pub series: Vec<C2Point>,
    /// Validity radius in the unit-derivative parameter.
    pub raw_validity_radius: f64,
    pub series_tol: f64,
    pub normalization: Normalization,
}

/// Truncated series arithmetic on coefficient vectors of fixed length.
fn ser_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let n = a.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, ai) in a.iter().enumerate() {
        if ai.norm_sqr() == 0.0 {
            continue;
        }
        for (j, bj) in b[..n - i].iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn ser_apply_map(map: &ComposedAutomorphism, z: &[C64], w: &[C64], iterations: usize) -> (Vec<C64>, Vec<C64>) {
    let mut z = z.to_vec();
    let mut w = w.to_vec();
    for _ in 0..iterations {
        for f in map.factors() {
            let poly = f.poly_coefficients();
            let d = poly.len() - 1;
            let mut h = vec![C64::new(0.0, 0.0); z.len()];
            h[0] = poly[d];
            for c in poly[..d].iter().rev() {
                h = ser_mul(&h, &z);
                h[0] += c;
            }
            let nz: Vec<C64> = h.iter().zip(w.iter()).map(|(p, wi)| p + f.a() * wi).collect();
            w = z;
            z = nz;
        }
    }
    (z, w)
}

impl LocalManifold {
    /// Computes the series of order `order` for a saddle orbit.
    pub fn new(
        map: &ComposedAutomorphism,
        saddle: &PeriodicOrbit,
        kind: ManifoldKind,
        order: usize,
        series_tol: f64,
    ) -> Result<Self> {
        if !saddle.is_saddle() {
            return Err(Error::NotSaddle(format!("{:?}", saddle.classification)));
        }
        if order < 2 {
            return Err(Error::InvalidArgument("series order must be at least 2".into()));
        }
        let n = saddle.period;
        let m = saddle.monodromy_at(map, 0);
        let (lambda, other, e1) = match kind {
            ManifoldKind::Unstable => (
                saddle.lambda2.to_c64(),
                saddle.lambda1.to_c64(),
                saddle.unstable_direction(map, 0),
            ),
            ManifoldKind::Stable => (
                saddle.lambda1.to_c64(),
                saddle.lambda2.to_c64(),
                saddle.stable_direction(map, 0),
            ),
        };
        if !(lambda.is_finite() && other.is_finite()) {
            return Err(Error::InvalidArgument(
                "multipliers exceed double range; series needs a shorter period".into(),
            ));
        }
        let p = saddle.points[0];
        let mut zc = vec![C64::new(0.0, 0.0); order + 1];
        let mut wc = vec![C64::new(0.0, 0.0); order + 1];
        zc[0] = p.z;
        wc[0] = p.w;
        zc[1] = e1.z;
        wc[1] = e1.w;
        let mut lk = lambda;
        for k in 2..=order {
            lk *= lambda;
            let gap = (lk - other).norm().min((lk - lambda).norm());
            if gap < 1e-8 {
                return Err(Error::Resonance { order: k, gap });
            }
            let trunc = k + 1;
            let (fz, fw) = ser_apply_map(map, &zc[..trunc], &wc[..trunc], n);
            let r = C2Point::new(fz[k], fw[k]);
            // (λ^k I − M) ψ_k = R_k
            let a = Mat2::new(lk - m.row0[0], -m.row0[1], -m.row1[0], lk - m.row1[1]);
            let inv = a.inverse().ok_or(Error::Resonance { order: k, gap })?;
            let psi = inv.apply(&r);
            zc[k] = psi.z;
            wc[k] = psi.w;
        }
        let series: Vec<C2Point> = zc.into_iter().zip(wc).map(|(z, w)| C2Point::new(z, w)).collect();
        let mut man = Self {
            map: map.clone(),
            base: saddle.clone(),
            kind,
            lambda,
            series,
            raw_validity_radius: 0.0,
            series_tol,
            normalization: Normalization::UnitDerivative,
        };
        man.raw_validity_radius = man.find_validity_radius()?;
        Ok(man)
    }

    pub fn map(&self) -> &ComposedAutomorphism {
        &self.map
    }

    pub fn period(&self) -> usize {
        self.base.period
    }

    pub fn order(&self) -> usize {
        self.series.len() - 1
    }

    /// Parameter scale `s` with `ψ_normalized(ζ) = ψ_raw(s·ζ)`.
    pub fn scale(&self) -> f64 {
        match self.normalization {
            Normalization::UnitDerivative => 1.0,
            Normalization::Green { scale } => scale,
        }
    }

    /// Validity radius in the current normalization.
    pub fn validity_radius(&self) -> f64 {
        self.raw_validity_radius / self.scale()
    }

    /// Same series with a different order, sharing the base data.
    pub fn truncated(&self, order: usize) -> LocalManifold {
        let mut m = self.clone();
        m.series.truncate(order + 1);
        m
    }

    fn eval_raw(&self, t: C64) -> C2Point {
        let mut z = C64::new(0.0, 0.0);
        let mut w = C64::new(0.0, 0.0);
        for c in self.series.iter().rev() {
            z = z * t + c.z;
            w = w * t + c.w;
        }
        C2Point::new(z, w)
    }

    fn deriv_raw(&self, t: C64) -> C2Point {
        let mut z = C64::new(0.0, 0.0);
        let mut w = C64::new(0.0, 0.0);
        for (k, c) in self.series.iter().enumerate().skip(1).rev() {
            z = z * t + c.z * k as f64;
            w = w * t + c.w * k as f64;
        }
        C2Point::new(z, w)
    }

    /// Series value (no dynamics) at parameter `ζ`.
    pub fn evaluate_series(&self, zeta: C64) -> C2Point {
        self.eval_raw(zeta * self.scale())
    }

    /// Series derivative with respect to the current parameter.
    pub fn series_derivative(&self, zeta: C64) -> C2Point {
        self.deriv_raw(zeta * self.scale()).scale(C64::new(self.scale(), 0.0))
    }

    /// `max ‖fⁿ(ψ(ζ)) − ψ(λζ)‖` over `samples` points on `|ζ| = r` (raw parameter).
    fn defect_raw(&self, r: f64, samples: usize) -> f64 {
        let n = self.period() as i64;
        (0..samples)
            .map(|j| {
                let t = C64::from_polar(r, 2.0 * PI * (j as f64 + 0.5) / samples as f64);
                match self.map.iterate(&self.eval_raw(t), n).point() {
                    Some(y) => y.dist(&self.eval_raw(t * self.lambda)),
                    None => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest semiconjugacy defect on `|ζ| = r` in the current parameter.
    pub fn defect(&self, r: f64) -> f64 {
        self.defect_raw(r * self.scale(), 64)
    }

    fn find_validity_radius(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for j in (-40..=10).rev() {
            let r = 2f64.powi(j);
            let d = self.defect_raw(r, 64).max(self.defect_raw(0.5 * r, 64));
            best = best.min(d);
            if d < self.series_tol {
                return Ok(r);
            }
        }
        Err(Error::NoValidRadius { best_defect: best })
    }

    /// Number of conjugation steps `m` used by [`extend`](Self::extend) at `ζ`.
    pub fn extension_steps(&self, zeta: C64) -> usize {
        let r = self.raw_validity_radius;
        let mut t = zeta * self.scale();
        let mut m = 0;
        let shrink = match self.kind {
            ManifoldKind::Unstable => 1.0 / self.lambda,
            ManifoldKind::Stable => self.lambda,
        };
        while t.norm() > r && m < 10_000 {
            t *= shrink;
            m += 1;
        }
        m
    }

    /// Global extension: `ψᵘ(ζ) = f^{nm}(ψ(λ^{-m}ζ))`, `ψˢ(ζ) = f^{-nm}(ψ(λ^m ζ))`.
    pub fn extend(&self, zeta: C64) -> Result<C2Point> {
        self.extend_with(zeta, self.extension_steps(zeta))
    }

    /// Extension with an explicit number of conjugation steps `m`.
    pub fn extend_with(&self, zeta: C64, m: usize) -> Result<C2Point> {
        let n = self.period() as i64;
        let (inner, dir) = match self.kind {
            ManifoldKind::Unstable => (self.lambda.powi(-(m as i32)), 1),
            ManifoldKind::Stable => (self.lambda.powi(m as i32), -1),
        };
        let x = self.eval_raw(zeta * self.scale() * inner);
        let steps = dir * n * m as i64;
        let mut p = x;
        for k in 0..steps.unsigned_abs() {
            p = if dir > 0 {
                self.map.evaluate(&p)
            } else {
                self.map.evaluate_inverse(&p)
            }
            .map_err(|e| match e {
                Error::Overflow { ceiling, last, .. } => Error::Overflow {
                    steps: k as usize,
                    ceiling,
                    last,
                },
                other => other,
            })?;
        }
        Ok(p)
    }

    /// Unstable extension together with its derivative in `ζ`.
    pub fn extend_with_derivative(&self, zeta: C64) -> Result<(C2Point, C2Point)> {
        if self.kind != ManifoldKind::Unstable {
            return Err(Error::InvalidArgument("derivative extension is for unstable manifolds".into()));
        }
        let m = self.extension_steps(zeta);
        let inner = self.lambda.powi(-(m as i32));
        let t = zeta * self.scale() * inner;
        let mut p = self.eval_raw(t);
        let mut v = self.deriv_raw(t).scale(self.scale() * inner);
        for _ in 0..self.period() * m {
            let d = self.map.derivative(&p)?;
            v = d.apply(&v);
            p = self.map.evaluate(&p)?;
        }
        Ok((p, v))
    }

    /// `G⁺∘ψ(ζ)` for an unstable manifold, evaluated near the saddle via
    /// `G⁺(f^{nm}y) = d^{nm} G⁺(y)` so that escaping extensions never overflow.
    pub fn green_plus_at(&self, zeta: C64, tol: f64) -> GreenValue {
        let m = self.extension_steps(zeta);
        let inner = self.lambda.powi(-(m as i32));
        let y = self.eval_raw(zeta * self.scale() * inner);
        let factor = (self.map.degree() as f64).powi((self.period() * m) as i32);
        let g = green_plus(&self.map, &y, tol / factor);
        GreenValue {
            value: g.value * factor,
            ..g
        }
    }

    /// Rescales the parameter so that `max_{|ζ|≤1} G⁺∘ψ(ζ) = 1`.
    ///
    /// The maximum over the disk is attained on the boundary circle (`G⁺∘ψ`
    /// is subharmonic) and increases with the radius, so the scale is found by
    /// bisection in `log s`.
    pub fn green_normalized(&self, tol: f64) -> Result<LocalManifold> {
        if self.kind != ManifoldKind::Unstable {
            return Err(Error::InvalidArgument("Green normalization applies to unstable manifolds".into()));
        }
        let mut raw = self.clone();
        raw.normalization = Normalization::UnitDerivative;
        let h = |s: f64| circle_max(&raw, s, tol);
        let mut lo = raw.raw_validity_radius;
        let mut hlo = h(lo);
        let mut guard = 0;
        while hlo >= 1.0 && guard < 200 {
            lo *= 0.5;
            hlo = h(lo);
            guard += 1;
        }
        let mut hi = lo * 2.0;
        let mut hhi = h(hi);
        while hhi < 1.0 && guard < 400 {
            hi *= 2.0;
            hhi = h(hi);
            guard += 1;
        }
        if !(hlo < 1.0 && hhi >= 1.0) {
            return Err(Error::InsufficientData(
                "could not bracket the Green normalization".into(),
            ));
        }
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if h(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-10 {
                break;
            }
        }
        let mut out = raw;
        out.normalization = Normalization::Green {
            scale: (lo * hi).sqrt(),
        };
        Ok(out)
    }
}

/// Max of `G⁺∘ψ_raw` on `|t| = s`: dense sampling plus golden-section refinement.
fn circle_max(raw: &LocalManifold, s: f64, tol: f64) -> f64 {
    let samples = 2048;
    let g = |theta: f64| raw.green_plus_at(C64::from_polar(s, theta), tol).value;
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|j| g(2.0 * PI * j as f64 / samples as f64))
        .collect();
    let (jmax, vmax) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc });
    let h = 2.0 * PI / samples as f64;
    let (mut a, mut b) = (jmax as f64 * h - h, jmax as f64 * h + h);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = vmax;
    for _ in 0..40 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        let (gc, gd) = (g(c), g(d));
        best = best.max(gc).max(gd);
        if gc > gd {
            b = d;
        } else {
            a = c;
        }
    }
    best
}

/// `G⁺∘ψᵘ` over `|ζ| ≤ radius` in the Green-normalized parameter.
pub fn unstable_slice(
    map: &ComposedAutomorphism,
    saddle: &PeriodicOrbit,
    radius: f64,
    resolution: usize,
    tol: f64,
) -> Result<(SliceSample, LocalManifold)> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "slice resolution must be at least 16, got {resolution}"
        )));
    }
    let man = LocalManifold::new(map, saddle, ManifoldKind::Unstable, DEFAULT_ORDER, DEFAULT_SERIES_TOL)?
        .green_normalized(tol.min(1e-6))?;
    let mut s = sample_slice(resolution, radius, tol, |zeta| man.green_plus_at(zeta, tol));
    s.parameter_scale = man.scale();
    Ok((s, man))
}

/// Configuration of the homoclinic search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomoclinicConfig {
    pub radial_steps: usize,
    /// Maximal number of map iterations before landing.
    pub max_steps: usize,
    /// Iterations allowed after landing to reach the saddle orbit.
    pub max_land: usize,
    pub transversality_floor: f64,
    pub newton_tol: f64,
}

impl Default for HomoclinicConfig {
    fn default() -> Self {
        Self {
            radial_steps: 400,
            max_steps: 16,
            max_land: 40,
            transversality_floor: 1e-3,
            newton_tol: 1e-13,
        }
    }
}

/// A point `ψᵘ(ζ)` of `Wᵘ(p) ∩ Wˢ(p)`.
#[derive(Debug, Clone, Serialize)]
pub struct HomoclinicPoint {
    /// Canonical representative in `[r₁, r₁|λᵘ|)`.
    #[serde(with = "crate::io::complex")]
    pub zeta: C64,
    /// Map iterations from `ψᵘ(ζ)` into the local stable chart.
    pub landing_k: usize,
    /// Stable-series parameter of the landing point.
    #[serde(with = "crate::io::complex")]
    pub eta: C64,
    /// Angle (radians) between the complex tangent lines of `Wᵘ` and `Wˢ` at the landing point.
    pub transversality: f64,
    pub point: C2Point,
    pub landing_point: C2Point,
    /// Distance to the saddle orbit reached after landing.
    pub final_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomoclinicSearch {
    pub points: Vec<HomoclinicPoint>,
    pub tangencies: Vec<HomoclinicPoint>,
}

/// Chart coordinates `(η, u)` with `y = ψˢ(η) + u·eᵘ`, by Newton from the linearization.
fn chart_coordinates(stable: &LocalManifold, eu: &C2Point, y: &C2Point) -> Option<(C64, C64)> {
    let p = stable.series[0];
    let es = stable.series[1];
    let a = Mat2::new(es.z, eu.z, es.w, eu.w);
    let inv = a.inverse()?;
    let lin = inv.apply(&(*y - p));
    let (mut eta, mut u) = (lin.z, lin.w);
    let r = stable.raw_validity_radius;
    for _ in 0..30 {
        if eta.norm() > 2.0 * r {
            return None;
        }
        let f = stable.eval_raw(eta) + eu.scale(u) - *y;
        let d = stable.deriv_raw(eta);
        let j = Mat2::new(d.z, eu.z, d.w, eu.w);
        let step = j.inverse()?.apply(&f);
        eta -= step.z;
        u -= step.w;
        if step.norm() < 1e-16 * (1.0 + eta.norm() + u.norm()) {
            break;
        }
    }
    (eta.norm() <= r).then_some((eta, u))
}

/// Complex-line angle `arccos(|⟨u, v⟩| / (|u||v|))`.
pub fn line_angle(u: &C2Point, v: &C2Point) -> f64 {
    let c = (u.dot_conj(v).norm() / (u.norm() * v.norm())).clamp(0.0, 1.0);
    c.acos()
}

/// Finds homoclinic points `ψᵘ(ζ)` with `ζ` in the annulus `[r1, r2]`.
pub fn find_homoclinic(
    map: &ComposedAutomorphism,
    saddle: &PeriodicOrbit,
    r1: f64,
    r2: f64,
    angular_steps: usize,
    cfg: &HomoclinicConfig,
) -> Result<HomoclinicSearch> {
    if !(r1 > 0.0 && r2 >= r1) {
        return Err(Error::InvalidArgument("annulus needs 0 < r1 ≤ r2".into()));
    }
    let unstable = LocalManifold::new(map, saddle, ManifoldKind::Unstable, DEFAULT_ORDER, DEFAULT_SERIES_TOL)?;
    let stable = LocalManifold::new(map, saddle, ManifoldKind::Stable, DEFAULT_ORDER, DEFAULT_SERIES_TOL)?;
    find_homoclinic_with(&unstable, &stable, r1, r2, angular_steps.max(1), cfg)
}

pub fn find_homoclinic_with(
    unstable: &LocalManifold,
    stable: &LocalManifold,
    r1: f64,
    r2: f64,
    angular_steps: usize,
    cfg: &HomoclinicConfig,
) -> Result<HomoclinicSearch> {
    let map = unstable.map();
    let eu = unstable.series[1];
    let radial = cfg.radial_steps.max(3);
    let steps = cfg.max_steps + 1;

    // Per ray: stable-chart coordinate u of f^k(ψᵘ(ζ)) along the radial samples;
    // seeds are radial local minima of |u| (sign changes for real rays).
    let seeds: Vec<(C64, usize)> = (0..angular_steps)
        .into_par_iter()
        .flat_map_iter(|a| {
            let theta = 2.0 * PI * a as f64 / angular_steps as f64;
            let zetas: Vec<C64> = (0..radial)
                .map(|i| C64::from_polar(r1 * (r2 / r1).powf(i as f64 / (radial - 1) as f64), theta))
                .collect();
            let table: Vec<Vec<Option<f64>>> = zetas
                .iter()
                .map(|&zeta| {
                    let mut row = vec![None; steps];
                    let Ok(mut x) = unstable.extend(zeta) else {
                        return row;
                    };
                    for (k, slot) in row.iter_mut().enumerate() {
                        if k > 0 {
                            match map.evaluate(&x) {
                                Ok(y) => x = y,
                                Err(_) => break,
                            }
                        }
                        *slot = chart_coordinates(stable, &eu, &x).map(|(_, u)| u.norm());
                    }
                    row
                })
                .collect();
            let mut out = Vec::new();
            for k in 0..steps {
                for i in 1..radial - 1 {
                    if let (Some(l), Some(c), Some(r)) = (table[i - 1][k], table[i][k], table[i + 1][k]) {
                        if c <= l && c <= r {
                            out.push((zetas[i], k));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let refined: Vec<Option<HomoclinicPoint>> = seeds
        .par_iter()
        .map(|&(zeta0, k)| {
            let zeta = newton_landing(unstable, stable, &eu, zeta0, k, cfg)?;
            build_record(unstable, stable, &eu, zeta, k, r1, cfg)
        })
        .collect();

    let mut points: Vec<HomoclinicPoint> = Vec::new();
    let mut tangencies: Vec<HomoclinicPoint> = Vec::new();
    for h in refined.into_iter().flatten() {
        let list = if h.transversality > cfg.transversality_floor {
            &mut points
        } else {
            &mut tangencies
        };
        let tol = 1e-7 * h.zeta.norm().max(1e-300);
        if let Some(existing) = list.iter_mut().find(|e| (e.zeta - h.zeta).norm() < tol) {
            if h.landing_k < existing.landing_k {
                *existing = h;
            }
        } else {
            list.push(h);
        }
    }
    let key = |h: &HomoclinicPoint| (h.landing_k, h.zeta.norm(), h.zeta.arg());
    let cmp = |a: &HomoclinicPoint, b: &HomoclinicPoint| {
        let (ka, ra, aa) = key(a);
        let (kb, rb, ab) = key(b);
        ka.cmp(&kb).then(ra.total_cmp(&rb)).then(aa.total_cmp(&ab))
    };
    points.sort_by(cmp);
    tangencies.sort_by(cmp);
    Ok(HomoclinicSearch { points, tangencies })
}

fn landing_residual(
    unstable: &LocalManifold,
    stable: &LocalManifold,
    eu: &C2Point,
    zeta: C64,
    k: usize,
) -> Option<(C64, C64, C2Point)> {
    let map = unstable.map();
    let (mut x, mut v) = unstable.extend_with_derivative(zeta).ok()?;
    for _ in 0..k {
        let d = map.derivative(&x).ok()?;
        v = d.apply(&v);
        x = map.evaluate(&x).ok()?;
    }
    let (eta, u) = chart_coordinates(stable, eu, &x)?;
    // du/dζ from the chart Jacobian [ψˢ'(η), eᵘ]⁻¹ applied to the tangent vector.
    let d = stable.deriv_raw(eta);
    let j = Mat2::new(d.z, eu.z, d.w, eu.w).inverse()?;
    let du = j.apply(&v).w;
    Some((u, du, x))
}

fn newton_landing(
    unstable: &LocalManifold,
    stable: &LocalManifold,
    eu: &C2Point,
    zeta0: C64,
    k: usize,
    cfg: &HomoclinicConfig,
) -> Option<C64> {
    let mut zeta = zeta0;
    for _ in 0..60 {
        let (u, du, _) = landing_residual(unstable, stable, eu, zeta, k)?;
        if u.norm() < cfg.newton_tol {
            return Some(zeta);
        }
        let step = u / du;
        if !step.is_finite() {
            return None;
        }
        // Damp steps that would jump out of the seed's neighbourhood.
        let limit = 0.25 * zeta.norm();
        let step = if step.norm() > limit {
            step * (limit / step.norm())
        } else {
            step
        };
        zeta -= step;
        if step.norm() < 1e-16 * zeta.norm() {
            let (u, _, _) = landing_residual(unstable, stable, eu, zeta, k)?;
            return (u.norm() < 1e3 * cfg.newton_tol).then_some(zeta);
        }
    }
    None
}

fn build_record(
    unstable: &LocalManifold,
    stable: &LocalManifold,
    eu: &C2Point,
    zeta: C64,
    k: usize,
    r1: f64,
    cfg: &HomoclinicConfig,
) -> Option<HomoclinicPoint> {
    let map = unstable.map();
    let n = unstable.period();
    let orbit = &unstable.base.points;
    let (u, _, landing) = landing_residual(unstable, stable, eu, zeta, k)?;
    if u.norm() > 1e3 * cfg.newton_tol {
        return None;
    }
    let (eta, _) = chart_coordinates(stable, eu, &landing)?;
    // Convergence to the saddle orbit.
    let mut x = landing;
    let mut best = f64::INFINITY;
    for _ in 0..cfg.max_land {
        let d = orbit.iter().map(|q| q.dist(&x)).fold(f64::INFINITY, f64::min);
        best = best.min(d);
        if best < 1e-8 {
            break;
        }
        x = map.evaluate(&x).ok()?;
    }
    if best >= 1e-8 {
        return None;
    }
    let (_, mut v) = unstable.extend_with_derivative(zeta).ok()?;
    let mut y = unstable.extend(zeta).ok()?;
    for _ in 0..k {
        v = map.derivative(&y).ok()?.apply(&v);
        y = map.evaluate(&y).ok()?;
    }
    let s = stable.deriv_raw(eta);
    let transversality = line_angle(&v, &s);
    let (zc, kc) = canonical_parameter(unstable.lambda, n, r1, zeta, k as i64);
    if kc < 0 {
        return None;
    }
    let point = unstable.extend(zc).ok()?;
    Some(HomoclinicPoint {
        zeta: zc,
        landing_k: kc as usize,
        eta,
        transversality,
        point,
        landing_point: landing,
        final_distance: best,
    })
}

/// Representative of `(ζ, k)` modulo `(ζ, k) ~ (λζ, k − n)` (from
/// `ψᵘ(λζ) = fⁿ(ψᵘ(ζ))`) with `|ζ|` in `[r1, r1|λ|)`.
pub fn canonical_parameter(lambda: C64, period: usize, r1: f64, zeta: C64, k: i64) -> (C64, i64) {
    let (mut zc, mut kc) = (zeta, k);
    let upper = r1 * lambda.norm();
    let mut guard = 0;
    while zc.norm() < r1 && guard < 2000 {
        zc *= lambda;
        kc -= period as i64;
        guard += 1;
    }
    while zc.norm() >= upper && guard < 4000 {
        zc /= lambda;
        kc += period as i64;
        guard += 1;
    }
    (zc, kc)
}

/// Geometry of a planar point set (parameters of a slice boundary).
#[derive(Debug, Clone, Serialize)]
pub struct SliceGeometryReport {
    pub point_count: usize,
    pub diameter: f64,
    /// Angle of the best line through the origin.
    pub line_angle: f64,
    /// RMS distance to that line divided by the diameter.
    pub residual: f64,
    /// Same for the best line through the centroid.
    pub free_line_angle: f64,
    pub free_residual: f64,
    pub dimension: f64,
    pub dimension_r2: f64,
    /// `(log(1/ε), log N(ε))` pairs used in the regression.
    pub scales: Vec<(f64, f64)>,
    /// Fewer than five usable scales.
    pub degraded: bool,
    pub max_abs_imag: f64,
}

/// Minimum mean number of points per occupied box for a scale to count.
const MIN_OCCUPANCY: f64 = 2.0;

pub fn slice_geometry(points: &[C64]) -> Result<SliceGeometryReport> {
    if points.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "slice geometry needs at least 50 points, got {}",
            points.len()
        )));
    }
    let npts = points.len() as f64;
    let diameter = diameter(points);
    let (line_angle, lmin) = principal_line(points, C64::new(0.0, 0.0));
    let centroid = points.iter().sum::<C64>() / npts;
    let (free_line_angle, fmin) = principal_line(points, centroid);
    let norm = if diameter > 0.0 { diameter } else { 1.0 };
    let residual = (lmin.max(0.0) / npts).sqrt() / norm;
    let free_residual = (fmin.max(0.0) / npts).sqrt() / norm;

    let (xmin, ymin) = points
        .iter()
        .fold((f64::INFINITY, f64::INFINITY), |(a, b), p| (a.min(p.re), b.min(p.im)));
    let mut all = Vec::new();
    for j in 3..=9 {
        let eps = diameter / 2f64.powi(j);
        if eps <= 0.0 {
            break;
        }
        let mut boxes: Vec<(i64, i64)> = points
            .iter()
            .map(|p| (((p.re - xmin) / eps).floor() as i64, ((p.im - ymin) / eps).floor() as i64))
            .collect();
        boxes.sort_unstable();
        boxes.dedup();
        all.push((eps, boxes.len()));
    }
    let usable: Vec<(f64, f64)> = all
        .iter()
        .filter(|(_, n)| *n >= 2 && npts / *n as f64 >= MIN_OCCUPANCY)
        .map(|(e, n)| ((1.0 / e).ln(), (*n as f64).ln()))
        .collect();
    let degraded = usable.len() < 5;
    let fit_pts: Vec<(f64, f64)> = if usable.len() >= 2 {
        usable.clone()
    } else {
        all.iter()
            .take(2)
            .map(|(e, n)| ((1.0 / e).ln(), (*n as f64).ln()))
            .collect()
    };
    let (slope, r2) = linear_fit(&fit_pts);
    let max_abs_imag = points.iter().map(|p| p.im.abs()).fold(0.0, f64::max);
    Ok(SliceGeometryReport {
        point_count: points.len(),
        diameter,
        line_angle,
        residual,
        free_line_angle,
        free_residual,
        dimension: if slope.is_finite() { slope.clamp(0.0, 2.0) } else { 0.0 },
        dimension_r2: r2,
        scales: fit_pts,
        degraded,
        max_abs_imag,
    })
}

/// Angle of the principal axis about `center` and the smallest scatter eigenvalue.
fn principal_line(points: &[C64], center: C64) -> (f64, f64) {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let q = p - center;
        sxx += q.re * q.re;
        sxy += q.re * q.im;
        syy += q.im * q.im;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    // Residual from explicit projections onto the normal; the eigenvalue formula cancels.
    let (s, c) = angle.sin_cos();
    let lmin = points
        .iter()
        .map(|p| {
            let q = p - center;
            (-s * q.re + c * q.im).powi(2)
        })
        .sum();
    (angle, lmin)
}

fn diameter(points: &[C64]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max((hull[i] - hull[j]).norm());
        }
    }
    best
}

fn convex_hull(points: &[C64]) -> Vec<C64> {
    let mut pts: Vec<C64> = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: C64, a: C64, b: C64| (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re);
    let mut lower: Vec<C64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Least-squares slope and coefficient of determination.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Numerical floor of `G±` at a point within `eps` of the filled set when
/// errors grow by `expansion` per step: `10·eps^{ln d/ln expansion}`.
pub fn green_floor(eps: f64, expansion: f64, degree: f64) -> f64 {
    10.0 * eps.powf(degree.ln() / expansion.ln())
}

/// `G±` at a homoclinic point against their numerical floors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FilledSetCheck {
    pub green_plus: f64,
    pub green_minus: f64,
    pub floor_plus: f64,
    pub floor_minus: f64,
}

impl FilledSetCheck {
    pub fn passed(&self) -> bool {
        self.green_plus < self.floor_plus && self.green_minus < self.floor_minus
    }
}

/// Checks `x ∈ K⁺ ∩ K⁻` for a homoclinic point of `saddle`. Forward errors are
/// the landing distance amplified by `|λᵘ|`; backward errors are rounding
/// amplified by `1/|λˢ|` (per period step).
pub fn filled_set_check(map: &ComposedAutomorphism, saddle: &PeriodicOrbit, h: &HomoclinicPoint) -> FilledSetCheck {
    let per = saddle.period as f64;
    let d = map.degree() as f64;
    let up = saddle.lambda_u().abs().powf(1.0 / per);
    let down = saddle.lambda_s().abs().powf(-1.0 / per);
    FilledSetCheck {
        green_plus: green_plus(map, &h.point, 1e-12).value,
        green_minus: green_minus(map, &h.point, 1e-12).value,
        floor_plus: green_floor(h.final_distance.max(f64::EPSILON), up, d),
        floor_minus: green_floor(f64::EPSILON * h.point.norm().max(1.0), down, d),
    }
}

/// Unit tangent of the unstable manifold at the base point.
pub fn unstable_tangent(man: &LocalManifold) -> C2Point {
    let v = man.series[1];
    normalize_phase(v.scale(C64::new(1.0 / v.norm(), 0.0)))
}

//! Pseudo-orbits along a homoclinic excursion of a saddle fixed point, their
//! closing into genuine periodic orbits `qₙ`, and the asymptotics of the
//! multipliers `λᵘ(qₙ) ∼ c′·λᵘ(p)ⁿ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifolds::{linear_fit, HomoclinicPoint, LocalManifold, ManifoldKind, DEFAULT_ORDER, DEFAULT_SERIES_TOL};
use crate::map::{C2Point, ComposedAutomorphism, Mat2, C64};
use crate::periodic::{refine_cycle, LogComplex, NewtonConfig, PeriodicOrbit};
use crate::precision::Precision;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShadowConfig {
    pub newton: NewtonConfig,
    /// Both pseudo-orbit endpoints must lie this close to the saddle.
    pub chart_radius: f64,
    /// Largest closing gap accepted as a Newton seed.
    pub seed_gap_max: f64,
    /// Mid-point distances below this are rounding-dominated and left out of rate fits.
    pub distance_floor: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            chart_radius: 0.1,
            seed_gap_max: 0.1,
            distance_floor: 1e-11,
        }
    }
}

/// The orbit segment `f^{−a}(τ₀), …, τ₀, …, f^{k+b−1}(τ₀)` of a homoclinic point.
#[derive(Debug, Clone, Serialize)]
pub struct PseudoOrbit {
    /// Backward steps `a`.
    pub head: usize,
    /// Forward steps past the landing index `b`.
    pub tail: usize,
    pub landing_k: usize,
    pub points: Vec<C2Point>,
    /// `f(last)`, the point that should coincide with `points[0]` after closing.
    pub next: C2Point,
    /// Distance between the saddle-chart coordinates of `points[0]` and `next`.
    pub closing_gap: f64,
    /// Index of `τ₀` in `points`.
    pub origin_index: usize,
}

impl PseudoOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }

    /// `max ‖f(xᵢ) − x_{i+1}‖` over consecutive pairs.
    pub fn segment_residual(&self, map: &ComposedAutomorphism) -> f64 {
        self.points
            .windows(2)
            .map(|w| map.evaluate(&w[0]).map_or(f64::INFINITY, |y| y.dist(&w[1])))
            .fold(0.0, f64::max)
    }
}

/// Linear saddle chart `y = p + u·eᵘ + s·eˢ`.
#[derive(Debug, Clone)]
struct SaddleChart {
    p: C2Point,
    basis: Mat2,
    inverse: Mat2,
}

impl SaddleChart {
    fn new(unstable: &LocalManifold, stable: &LocalManifold) -> Result<Self> {
        let eu = unstable.series[1];
        let es = stable.series[1];
        let basis = Mat2::new(eu.z, es.z, eu.w, es.w);
        let inverse = basis
            .inverse()
            .ok_or_else(|| Error::InvalidArgument("stable and unstable directions coincide".into()))?;
        Ok(Self {
            p: unstable.series[0],
            basis,
            inverse,
        })
    }

    fn coords(&self, y: &C2Point) -> C2Point {
        self.inverse.apply(&(*y - self.p))
    }

    fn point(&self, u: C64, s: C64) -> C2Point {
        self.p + self.basis.apply(&C2Point::new(u, s))
    }
}

/// Local manifolds of a saddle fixed point used by the shadowing construction.
#[derive(Debug, Clone)]
pub struct ShadowingContext {
    pub map: ComposedAutomorphism,
    pub saddle: PeriodicOrbit,
    pub unstable: LocalManifold,
    pub stable: LocalManifold,
    chart: SaddleChart,
}

impl ShadowingContext {
    pub fn new(map: &ComposedAutomorphism, saddle: &PeriodicOrbit) -> Result<Self> {
        if saddle.period != 1 {
            return Err(Error::InvalidArgument(format!(
                "shadowing is implemented for saddle fixed points, got period {}",
                saddle.period
            )));
        }
        let unstable = LocalManifold::new(map, saddle, ManifoldKind::Unstable, DEFAULT_ORDER, DEFAULT_SERIES_TOL)?;
        let stable = LocalManifold::new(map, saddle, ManifoldKind::Stable, DEFAULT_ORDER, DEFAULT_SERIES_TOL)?;
        let chart = SaddleChart::new(&unstable, &stable)?;
        Ok(Self {
            map: map.clone(),
            saddle: saddle.clone(),
            unstable,
            stable,
            chart,
        })
    }

    fn head_point(&self, h: &HomoclinicPoint, j: usize) -> C2Point {
        self.unstable.evaluate_series(h.zeta * self.unstable.lambda.powi(-(j as i32)))
    }

    fn tail_point(&self, h: &HomoclinicPoint, j: usize) -> C2Point {
        self.stable.evaluate_series(h.eta * self.stable.lambda.powi(j as i32))
    }

    fn admissible(&self, h: &HomoclinicPoint, head: usize, tail: usize, cfg: &ShadowConfig) -> bool {
        self.head_point(h, head).dist(&self.chart.p) <= cfg.chart_radius
            && self.tail_point(h, tail).dist(&self.chart.p) <= cfg.chart_radius
    }

    /// Smallest symmetric `N` whose endpoints both lie in the chart.
    pub fn minimal_n(&self, h: &HomoclinicPoint, cfg: &ShadowConfig) -> usize {
        (0..200).find(|&n| self.admissible(h, n, n, cfg)).unwrap_or(200)
    }

    /// Builds the orbit segment with `head` backward and `tail` post-landing steps.
    ///
    /// The two tails come from the local series (`ψᵘ(λ^{−j}ζ)` and `ψˢ(λˢʲη)`),
    /// which avoids the instability of iterating `f⁻¹` along the unstable
    /// manifold and `f` along the stable one.
    pub fn build_pseudo_orbit(
        &self,
        h: &HomoclinicPoint,
        head: usize,
        tail: usize,
        cfg: &ShadowConfig,
    ) -> Result<PseudoOrbit> {
        if tail == 0 || !self.admissible(h, head, tail, cfg) {
            let minimum = self.minimal_n(h, cfg);
            return Err(Error::PseudoOrbitTooShort {
                requested: head.min(tail),
                minimum,
            });
        }
        let k = h.landing_k;
        let mut points = Vec::with_capacity(head + k + tail);
        for j in (1..=head).rev() {
            points.push(self.head_point(h, j));
        }
        let mut x = h.point;
        for _ in 0..k {
            points.push(x);
            x = self.map.evaluate(&x)?;
        }
        for j in 0..tail {
            points.push(self.tail_point(h, j));
        }
        let next = self.tail_point(h, tail);
        let gap = self.chart.coords(&points[0]) - self.chart.coords(&next);
        Ok(PseudoOrbit {
            head,
            tail,
            landing_k: k,
            points,
            next,
            closing_gap: gap.norm(),
            origin_index: head,
        })
    }

    /// Closes a pseudo-orbit into a periodic orbit of period `head + k + tail`.
    ///
    /// The first point is replaced by the bracket of the two endpoints in the
    /// saddle chart: unstable coordinate of the head endpoint (the orbit leaves
    /// along it) and stable coordinate of `f(last)` (the orbit arrives along it).
    pub fn close_orbit(&self, pseudo: &PseudoOrbit, cfg: &ShadowConfig) -> Result<ClosedOrbit> {
        if pseudo.closing_gap > cfg.seed_gap_max {
            return Err(Error::ClosingFailure {
                period: pseudo.period(),
                residual: pseudo.closing_gap,
                reason: format!("closing gap exceeds seed_gap_max = {}", cfg.seed_gap_max),
            });
        }
        let n = pseudo.period();
        let a = self.chart.coords(&pseudo.points[0]);
        let b = self.chart.coords(&pseudo.next);
        let mut seed = pseudo.points.clone();
        seed[0] = self.chart.point(a.z, b.w);
        let mut newton = cfg.newton.clone();
        if n as f64 * self.saddle.chi_u() > 120.0 * std::f64::consts::LN_2 {
            newton.precision = Precision::Extended;
        }
        let orbit = refine_cycle(&self.map, &seed, &newton)?;
        let max_deviation = pseudo
            .points
            .iter()
            .map(|x| orbit.points.iter().map(|q| q.dist(x)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let tau0 = pseudo.points[pseudo.origin_index];
        let mid_distance = orbit.points.iter().map(|q| q.dist(&tau0)).fold(f64::INFINITY, f64::min);
        Ok(ClosedOrbit {
            constant: if pseudo.closing_gap > 0.0 {
                max_deviation / pseudo.closing_gap
            } else {
                0.0
            },
            orbit,
            max_deviation,
            mid_distance,
            closing_gap: pseudo.closing_gap,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedOrbit {
    pub orbit: PeriodicOrbit,
    /// `max` over pseudo-orbit points of the distance to the closed orbit.
    pub max_deviation: f64,
    /// `max_deviation / closing_gap`.
    pub constant: f64,
    /// Distance from `τ₀` to the closed orbit.
    pub mid_distance: f64,
    pub closing_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsRow {
    pub n: usize,
    /// Symmetric length `N`; the shifted rows use `N − 1` backward steps.
    pub big_n: usize,
    pub shifted: bool,
    pub lambda_u: LogComplex,
    pub lambda_s: LogComplex,
    /// `λᵘ(qₙ)/λᵘ(p)ⁿ`.
    #[serde(with = "crate::io::complex")]
    pub normalized_ratio: C64,
    /// `λˢ(qₙ)/λˢ(p)ⁿ`.
    #[serde(with = "crate::io::complex")]
    pub normalized_stable_ratio: C64,
    /// `λᵘ(qₙ)/λᵘ(q_{n−1})` when the previous row has period `n − 1`.
    #[serde(with = "crate::io::complex_option")]
    pub succ_ratio: Option<C64>,
    pub mid_shadow_dist: f64,
    pub closing_gap: f64,
    pub residual: f64,
    /// Relative error of `λˢλᵘ = jacobianⁿ`.
    pub det_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosingFailureRecord {
    pub big_n: usize,
    pub shifted: bool,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsTable {
    pub saddle_lambda_u: LogComplex,
    pub saddle_lambda_s: LogComplex,
    pub landing_k: usize,
    pub rows: Vec<AsymptoticsRow>,
    pub failures: Vec<ClosingFailureRecord>,
    /// Last-row normalized ratio.
    #[serde(with = "crate::io::complex")]
    pub c_prime: C64,
    /// Max relative deviation of the last three normalized ratios from their mean.
    pub spread: f64,
    /// Same for the stable side.
    pub stable_spread: f64,
    /// Fewer than four successful closings.
    pub partial: bool,
}

impl AsymptoticsTable {
    /// Rows of one parity class (`shifted` or not), ordered by `N`.
    pub fn parity(&self, shifted: bool) -> Vec<&AsymptoticsRow> {
        self.rows.iter().filter(|r| r.shifted == shifted).collect()
    }

    /// Geometric decay rate of the mid-point shadowing distance per unit of
    /// period, fitted on all rows above `floor`. Shifted and symmetric rows lie
    /// on one line in this variable.
    pub fn mid_distance_rate(&self, floor: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.mid_shadow_dist > floor)
            .map(|r| (r.n as f64, r.mid_shadow_dist.ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        Some(linear_fit(&pts).0.exp())
    }

    /// CSV with `log|λᵘ|` and the argument stored separately.
    pub fn to_csv(&self) -> crate::io::CsvTable {
        use crate::io::fmt_f64;
        let mut t = crate::io::CsvTable::new(&[
            "n",
            "lambda_u_log_re",
            "lambda_u_arg",
            "normalized_ratio_re",
            "normalized_ratio_im",
            "succ_ratio_abs",
            "mid_shadow_dist",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.n.to_string(),
                fmt_f64(r.lambda_u.ln_abs),
                fmt_f64(r.lambda_u.arg),
                fmt_f64(r.normalized_ratio.re),
                fmt_f64(r.normalized_ratio.im),
                r.succ_ratio.map_or_else(String::new, |c| fmt_f64(c.norm())),
                fmt_f64(r.mid_shadow_dist),
            ]);
        }
        t
    }
}

/// Relative spread `max |xᵢ − mean| / |mean|`.
pub(crate) fn relative_spread(values: &[C64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mean = values.iter().sum::<C64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max) / mean.norm()
}

/// Closes the pseudo-orbits for every `N` in `n_range`, both the symmetric
/// (`n = 2N + k`) and the shifted (`n = 2N + k − 1`) variant, and tabulates the
/// multipliers. Closings stop at the first failure of each variant.
pub fn multiplier_asymptotics(
    ctx: &ShadowingContext,
    h: &HomoclinicPoint,
    n_range: std::ops::RangeInclusive<usize>,
    cfg: &ShadowConfig,
) -> Result<AsymptoticsTable> {
    let jobs: Vec<(usize, bool)> = n_range
        .clone()
        .flat_map(|n| [(n, true), (n, false)])
        .filter(|&(n, shifted)| !(shifted && n == 0))
        .collect();
    let results: Vec<(usize, bool, Result<ClosedOrbit>)> = jobs
        .par_iter()
        .map(|&(n, shifted)| {
            let head = if shifted { n - 1 } else { n };
            let r = ctx.build_pseudo_orbit(h, head, n, cfg).and_then(|p| {
                if p.closing_gap > cfg.seed_gap_max {
                    // Same status as a too-short segment: a larger N is needed.
                    return Err(Error::PseudoOrbitTooShort {
                        requested: n,
                        minimum: n + 1,
                    });
                }
                ctx.close_orbit(&p, cfg)
            });
            (n, shifted, r)
        })
        .collect();

    let lu = ctx.saddle.lambda_u();
    let ls = ctx.saddle.lambda_s();
    let jac = LogComplex::from_c64(ctx.map.jacobian());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut stopped = [false, false];
    for (n, shifted, r) in results {
        if stopped[shifted as usize] {
            continue;
        }
        match r {
            Ok(c) => {
                let period = c.orbit.period;
                let lam_u = c.orbit.lambda_u();
                let lam_s = c.orbit.lambda_s();
                let det = lam_u.mul(&lam_s).div(&jac.powi(period as i64));
                rows.push(AsymptoticsRow {
                    n: period,
                    big_n: n,
                    shifted,
                    lambda_u: lam_u,
                    lambda_s: lam_s,
                    normalized_ratio: lam_u.div(&lu.powi(period as i64)).to_c64(),
                    normalized_stable_ratio: lam_s.div(&ls.powi(period as i64)).to_c64(),
                    succ_ratio: None,
                    mid_shadow_dist: c.mid_distance,
                    closing_gap: c.closing_gap,
                    residual: c.orbit.residual,
                    det_error: (det.to_c64() - 1.0).norm(),
                });
            }
            Err(e) => {
                failures.push(ClosingFailureRecord {
                    big_n: n,
                    shifted,
                    message: e.to_string(),
                });
                // Too-short pseudo-orbits are skipped; real failures end the variant.
                if !matches!(e, Error::PseudoOrbitTooShort { .. }) {
                    stopped[shifted as usize] = true;
                }
            }
        }
    }
    rows.sort_by_key(|r| r.n);
    for i in 1..rows.len() {
        if rows[i].n == rows[i - 1].n + 1 {
            rows[i].succ_ratio = Some(rows[i].lambda_u.div(&rows[i - 1].lambda_u).to_c64());
        }
    }
    let last3: Vec<C64> = rows.iter().rev().take(3).map(|r| r.normalized_ratio).collect();
    let last3s: Vec<C64> = rows.iter().rev().take(3).map(|r| r.normalized_stable_ratio).collect();
    Ok(AsymptoticsTable {
        saddle_lambda_u: lu,
        saddle_lambda_s: ls,
        landing_k: h.landing_k,
        partial: rows.len() < 4,
        c_prime: rows.last().map_or(C64::new(f64::NAN, f64::NAN), |r| r.normalized_ratio),
        spread: relative_spread(&last3),
        stable_spread: relative_spread(&last3s),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Nu0Estimate {
    #[serde(with = "crate::io::complex")]
    pub value: C64,
    pub uncertainty: f64,
    /// `λᵘ(qₙ)/λᵘ(p)^{2N}` per row, ordered by `N`.
    #[serde(with = "crate::io::complex_vec")]
    pub sequence: Vec<C64>,
    /// Successive changes of the sequence.
    pub changes: Vec<f64>,
}

/// Limit of `λᵘ(qₙ)/λᵘ(p)^{2N}` over rows of one parity class, accelerated by
/// Aitken's Δ² when the last three terms allow it.
pub fn estimate_nu0(rows: &[&AsymptoticsRow], saddle_lambda_u: LogComplex) -> Result<Nu0Estimate> {
    if rows.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "ν₀ needs at least 4 rows of one parity class, got {}",
            rows.len()
        )));
    }
    if rows.iter().any(|r| r.shifted != rows[0].shifted) {
        return Err(Error::InvalidArgument(
            "rows mix the symmetric and shifted parity classes".into(),
        ));
    }
    let mut sorted: Vec<&AsymptoticsRow> = rows.to_vec();
    sorted.sort_by_key(|r| r.big_n);
    let seq: Vec<C64> = sorted
        .iter()
        .map(|r| r.lambda_u.div(&saddle_lambda_u.powi(2 * r.big_n as i64)).to_c64())
        .collect();
    let changes: Vec<f64> = seq.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let m = seq.len();
    let (x0, x1, x2) = (seq[m - 3], seq[m - 2], seq[m - 1]);
    let denom = x2 - 2.0 * x1 + x0;
    let value = if denom.norm() > 1e-14 * x2.norm() {
        let aitken = x2 - (x2 - x1) * (x2 - x1) / denom;
        if (aitken - x2).norm() <= (x2 - x1).norm() {
            aitken
        } else {
            x2
        }
    } else {
        x2
    };
    Ok(Nu0Estimate {
        value,
        uncertainty: *changes.last().unwrap_or(&0.0),
        sequence: seq,
        changes,
    })
}

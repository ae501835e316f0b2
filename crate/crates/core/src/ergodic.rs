//! Lyapunov exponent estimators over saddle orbits, Birkhoff statistics of
//! test functions across the period-`n` saddles, and the exponent gap report.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{C2Point, ComposedAutomorphism, C64};
use crate::periodic::{Census, PeriodicOrbit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// `(1/#SPerₙ) Σ χᵘ(p)`.
    SaddleAverage,
    /// Tangent-vector transport along an orbit.
    Birkhoff,
    /// `d^{−n} Σ χᵘ(p)`.
    CensusWeighted,
}

/// An exponent in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    /// Period `n` or orbit length used.
    pub n: usize,
    pub uncertainty: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleAverage {
    pub weighted: ExponentEstimate,
    pub count_normalized: ExponentEstimate,
    pub sper_count: usize,
}

/// Both normalizations of the saddle exponent average at period `n`; the
/// uncertainty is the change from row `n − 1` (zero for `n = 1`).
pub fn lyapunov_saddle_average(census: &Census, n: usize) -> Result<SaddleAverage> {
    let row = census
        .row(n)
        .ok_or_else(|| Error::InsufficientData(format!("census has no row for n = {n}")))?;
    let prev = if n > 1 { census.row(n - 1) } else { None };
    let du = |a: f64, b: Option<f64>| b.map_or(0.0, |b| (a - b).abs());
    Ok(SaddleAverage {
        weighted: ExponentEstimate {
            value: row.weighted_chi_u,
            method: EstimateMethod::CensusWeighted,
            n,
            uncertainty: du(row.weighted_chi_u, prev.map(|p| p.weighted_chi_u)),
            low_confidence: row.low_confidence,
        },
        count_normalized: ExponentEstimate {
            value: row.mean_chi_u,
            method: EstimateMethod::SaddleAverage,
            n,
            uncertainty: du(row.mean_chi_u, prev.map(|p| p.mean_chi_u)),
            low_confidence: row.low_confidence,
        },
        sper_count: row.sper_count,
    })
}

/// Per-step log growth of a tangent vector along an orbit.
#[derive(Debug, Clone, Serialize)]
pub struct TangentTransport {
    pub log_growth: Vec<f64>,
    /// Unit vector after the last step.
    pub direction: C2Point,
}

/// Transports `v0` along `points` (each step uses `Df` at `points[i]`), renormalizing every step.
pub fn transport_along(map: &ComposedAutomorphism, points: &[C2Point], v0: C2Point) -> Result<TangentTransport> {
    let mut v = v0.scale(C64::new(1.0 / v0.norm(), 0.0));
    let mut log_growth = Vec::with_capacity(points.len());
    for x in points {
        let w = map.derivative(x)?.apply(&v);
        let g = w.norm();
        log_growth.push(g.ln());
        v = w.scale(C64::new(1.0 / g, 0.0));
    }
    Ok(TangentTransport {
        log_growth,
        direction: v,
    })
}

/// Starting data for a Birkhoff exponent estimate.
#[derive(Debug, Clone)]
pub enum BirkhoffSeed<'a> {
    /// Cycles through the orbit points, starting from the unstable eigenvector.
    Orbit(&'a PeriodicOrbit),
    /// Iterates the map from a point, starting from the given vector.
    Point(C2Point, C2Point),
}

#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffEstimate {
    pub estimate: ExponentEstimate,
    pub direction: C2Point,
}

/// Averaged log growth of a tangent vector over `length` steps; the
/// uncertainty is the standard error over 10 blocks (zero below 10 steps).
pub fn lyapunov_birkhoff(
    map: &ComposedAutomorphism,
    seed: &BirkhoffSeed<'_>,
    length: usize,
) -> Result<BirkhoffEstimate> {
    if length == 0 {
        return Err(Error::InvalidArgument("orbit length must be positive".into()));
    }
    let (points, v0) = match seed {
        BirkhoffSeed::Orbit(o) => (
            (0..length).map(|k| o.points[k % o.period]).collect::<Vec<_>>(),
            o.unstable_direction(map, 0),
        ),
        BirkhoffSeed::Point(x, v) => {
            let mut pts = Vec::with_capacity(length);
            let mut y = *x;
            for k in 0..length {
                pts.push(y);
                if k + 1 < length {
                    y = map.evaluate(&y).map_err(|_| Error::Escaped {
                        completed: k + 1,
                        requested: length,
                    })?;
                }
            }
            (pts, *v)
        }
    };
    let t = transport_along(map, &points, v0)?;
    let value = t.log_growth.iter().sum::<f64>() / length as f64;
    let uncertainty = if length >= 10 {
        let b = length / 10;
        let means: Vec<f64> = t
            .log_growth
            .chunks(b)
            .take(10)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        (var / means.len() as f64).sqrt()
    } else {
        0.0
    };
    Ok(BirkhoffEstimate {
        estimate: ExponentEstimate {
            value,
            method: EstimateMethod::Birkhoff,
            n: length,
            uncertainty,
            low_confidence: false,
        },
        direction: t.direction,
    })
}

/// Period-weighted Birkhoff exponent over an ensemble of saddle orbits; the
/// uncertainty is the weighted standard error across orbits.
pub fn lyapunov_birkhoff_ensemble(map: &ComposedAutomorphism, orbits: &[PeriodicOrbit]) -> Result<ExponentEstimate> {
    let saddles: Vec<&PeriodicOrbit> = orbits.iter().filter(|o| o.is_saddle()).collect();
    if saddles.is_empty() {
        return Err(Error::InsufficientData("no saddle orbits in the ensemble".into()));
    }
    let vals: Vec<(f64, f64)> = saddles
        .par_iter()
        .map(|o| {
            lyapunov_birkhoff(map, &BirkhoffSeed::Orbit(o), o.period)
                .map(|b| (b.estimate.value, o.period as f64))
        })
        .collect::<Result<_>>()?;
    let wsum: f64 = vals.iter().map(|v| v.1).sum();
    let mean = vals.iter().map(|v| v.0 * v.1).sum::<f64>() / wsum;
    let var = vals.iter().map(|v| v.1 * (v.0 - mean).powi(2)).sum::<f64>() / wsum;
    Ok(ExponentEstimate {
        value: mean,
        method: EstimateMethod::Birkhoff,
        n: saddles.iter().map(|o| o.period).max().unwrap_or(0),
        uncertainty: (var / vals.len() as f64).sqrt(),
        low_confidence: false,
    })
}

/// Test functions for equidistribution statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `log ‖Df(eᵘ(x))‖`, evaluated with the transported unstable direction.
    Phi0,
    ReZ,
    ImZ,
    AbsZ2,
    ReZW,
    AbsW2,
}

impl TestFunction {
    pub const MOMENTS: [TestFunction; 5] = [
        TestFunction::ReZ,
        TestFunction::ImZ,
        TestFunction::AbsZ2,
        TestFunction::ReZW,
        TestFunction::AbsW2,
    ];

    /// `φ₀` followed by the five coordinate moments.
    pub const DEFAULT: [TestFunction; 6] = [
        TestFunction::Phi0,
        TestFunction::ReZ,
        TestFunction::ImZ,
        TestFunction::AbsZ2,
        TestFunction::ReZW,
        TestFunction::AbsW2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Phi0 => "phi0",
            TestFunction::ReZ => "re_z",
            TestFunction::ImZ => "im_z",
            TestFunction::AbsZ2 => "abs_z2",
            TestFunction::ReZW => "re_zw",
            TestFunction::AbsW2 => "abs_w2",
        }
    }

    /// Coordinate moment at `x`; `None` for `φ₀`, which needs a direction.
    pub fn moment(&self, x: &C2Point) -> Option<f64> {
        Some(match self {
            TestFunction::Phi0 => return None,
            TestFunction::ReZ => x.z.re,
            TestFunction::ImZ => x.z.im,
            TestFunction::AbsZ2 => x.z.norm_sqr(),
            TestFunction::ReZW => (x.z * x.w).re,
            TestFunction::AbsW2 => x.w.norm_sqr(),
        })
    }
}

/// Values of every test function at the points of one cycle.
fn pointwise_values(map: &ComposedAutomorphism, orbit: &PeriodicOrbit, fns: &[TestFunction]) -> Result<Vec<Vec<f64>>> {
    let needs_phi0 = fns.contains(&TestFunction::Phi0);
    let phi0 = if needs_phi0 {
        Some(transport_along(map, &orbit.points, orbit.unstable_direction(map, 0))?.log_growth)
    } else {
        None
    };
    Ok(fns
        .iter()
        .map(|f| match f {
            TestFunction::Phi0 => phi0.clone().unwrap_or_default(),
            _ => orbit.points.iter().map(|x| f.moment(x).unwrap_or(0.0)).collect(),
        })
        .collect())
}

/// Birkhoff averages `Sₙφ` of each test function over one cycle.
pub fn birkhoff_averages(map: &ComposedAutomorphism, orbit: &PeriodicOrbit, fns: &[TestFunction]) -> Result<Vec<f64>> {
    Ok(pointwise_values(map, orbit, fns)?
        .iter()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect())
}

/// Filtering schedule: radius `ρₙ = n^{−rho_exponent}` and the budget
/// `max_{i≤jₙ} ‖φ̃ᵢ‖² ≤ budget_constant · n^{budget_exponent}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub rho_exponent: f64,
    pub budget_exponent: f64,
    pub budget_constant: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            rho_exponent: 0.25,
            budget_exponent: 0.125,
            budget_constant: 1.0,
        }
    }
}

impl Schedule {
    pub fn rho(&self, n: usize) -> f64 {
        (n as f64).powf(-self.rho_exponent)
    }

    pub fn budget(&self, n: usize) -> f64 {
        self.budget_constant * (n as f64).powf(self.budget_exponent)
    }
}

/// Scaling applied to the test functions before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestNormalization {
    /// Functions as defined.
    #[default]
    Raw,
    /// Each function divided by `sup |φ|` over the reference points.
    SupNorm,
}

/// Reference values and normalizations from the saddles of one period.
#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffReference {
    pub n: usize,
    pub functions: Vec<TestFunction>,
    /// Point-weighted saddle averages of each function.
    pub values: Vec<f64>,
    pub normalization: TestNormalization,
    /// Divisor applied to each function (`sup |φ|` or 1).
    pub scales: Vec<f64>,
    /// `‖φ̃‖²` of the scaled, centred functions under the reference measure.
    pub centred_norms: Vec<f64>,
}

/// Reference statistics from the saddle orbits of period `n` (typically the largest enumerated).
pub fn birkhoff_reference(
    map: &ComposedAutomorphism,
    orbits: &[PeriodicOrbit],
    n: usize,
    fns: &[TestFunction],
    normalization: TestNormalization,
) -> Result<BirkhoffReference> {
    let saddles: Vec<&PeriodicOrbit> = orbits.iter().filter(|o| o.is_saddle()).collect();
    if saddles.is_empty() {
        return Err(Error::InsufficientData(format!("no saddles of period {n}")));
    }
    let per_orbit: Vec<Vec<Vec<f64>>> = saddles
        .par_iter()
        .map(|o| pointwise_values(map, o, fns))
        .collect::<Result<_>>()?;
    let count: usize = saddles.iter().map(|o| o.period).sum();
    let mut values = vec![0.0; fns.len()];
    let mut scales = vec![0.0f64; fns.len()];
    for vals in &per_orbit {
        for (i, v) in vals.iter().enumerate() {
            values[i] += v.iter().sum::<f64>();
            scales[i] = v.iter().fold(scales[i], |m, x| m.max(x.abs()));
        }
    }
    for v in values.iter_mut() {
        *v /= count as f64;
    }
    if normalization == TestNormalization::Raw {
        scales.iter_mut().for_each(|s| *s = 1.0);
    }
    let mut centred_norms = vec![0.0; fns.len()];
    for vals in &per_orbit {
        for (i, v) in vals.iter().enumerate() {
            let s = if scales[i] > 0.0 { scales[i] } else { 1.0 };
            centred_norms[i] += v.iter().map(|x| ((x - values[i]) / s).powi(2)).sum::<f64>();
        }
    }
    for c in centred_norms.iter_mut() {
        *c /= count as f64;
    }
    Ok(BirkhoffReference {
        n,
        functions: fns.to_vec(),
        values,
        normalization,
        scales,
        centred_norms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffSpectrum {
    pub n: usize,
    pub functions: Vec<TestFunction>,
    /// Per saddle orbit: `Sₙφᵢ` for every function.
    pub values: Vec<Vec<f64>>,
    /// Period of each row's orbit (its weight as a set of points).
    pub periods: Vec<usize>,
    pub reference: Vec<f64>,
    /// Point-weighted RMS deviation of `Sₙφᵢ` from its mean.
    pub dispersion: Vec<f64>,
    pub rho: f64,
    /// Number of leading functions used by the mask.
    pub j_n: usize,
    pub mask: Vec<bool>,
    /// Points of masked orbits.
    pub mask_count: usize,
    /// `mask_count / dⁿ`.
    pub mask_ratio: f64,
}

/// Birkhoff statistics over the saddle orbits of period `n` and the `SPer⁺`
/// mask `{|Sₙφᵢ − refᵢ|/scaleᵢ ≤ ρₙ for i < jₙ}`, where `jₙ` is the longest
/// prefix of the function list whose centred norms fit the schedule budget.
pub fn birkhoff_spectrum(
    map: &ComposedAutomorphism,
    orbits: &[PeriodicOrbit],
    n: usize,
    reference: &BirkhoffReference,
    schedule: &Schedule,
) -> Result<BirkhoffSpectrum> {
    birkhoff_spectrum_with_rho(map, orbits, n, reference, schedule, schedule.rho(n))
}

/// As [`birkhoff_spectrum`] with an explicit radius.
pub fn birkhoff_spectrum_with_rho(
    map: &ComposedAutomorphism,
    orbits: &[PeriodicOrbit],
    n: usize,
    reference: &BirkhoffReference,
    schedule: &Schedule,
    rho: f64,
) -> Result<BirkhoffSpectrum> {
    let fns = &reference.functions;
    let saddles: Vec<&PeriodicOrbit> = orbits.iter().filter(|o| o.is_saddle()).collect();
    let values: Vec<Vec<f64>> = saddles
        .par_iter()
        .map(|o| birkhoff_averages(map, o, fns))
        .collect::<Result<_>>()?;
    let periods: Vec<usize> = saddles.iter().map(|o| o.period).collect();
    let wsum: f64 = periods.iter().sum::<usize>() as f64;
    let dispersion: Vec<f64> = (0..fns.len())
        .map(|i| {
            if wsum == 0.0 {
                return 0.0;
            }
            let mean = values.iter().zip(&periods).map(|(v, &p)| v[i] * p as f64).sum::<f64>() / wsum;
            let var = values
                .iter()
                .zip(&periods)
                .map(|(v, &p)| p as f64 * (v[i] - mean).powi(2))
                .sum::<f64>()
                / wsum;
            var.sqrt()
        })
        .collect();
    let budget = schedule.budget(n);
    let j_n = reference
        .centred_norms
        .iter()
        .scan(0.0f64, |m, c| {
            *m = m.max(*c);
            Some(*m)
        })
        .take_while(|m| *m <= budget)
        .count();
    let scale = |i: usize| if reference.scales[i] > 0.0 { reference.scales[i] } else { 1.0 };
    let mask: Vec<bool> = values
        .iter()
        .map(|v| (0..j_n).all(|i| ((v[i] - reference.values[i]) / scale(i)).abs() <= rho))
        .collect();
    let mask_count: usize = mask.iter().zip(&periods).filter(|(m, _)| **m).map(|(_, p)| p).sum();
    let dn = (map.degree() as f64).powi(n as i32);
    Ok(BirkhoffSpectrum {
        n,
        functions: fns.clone(),
        values,
        periods,
        reference: reference.values.clone(),
        dispersion,
        rho,
        j_n,
        mask,
        mask_count,
        mask_ratio: mask_count as f64 / dn,
    })
}

impl BirkhoffSpectrum {
    /// One row per orbit, one column per function.
    pub fn to_csv(&self) -> crate::io::CsvTable {
        let names: Vec<&'static str> = std::iter::once("period")
            .chain(self.functions.iter().map(|f| f.name()))
            .chain(std::iter::once("in_mask"))
            .collect();
        let mut t = crate::io::CsvTable::new(&names);
        for ((v, p), m) in self.values.iter().zip(&self.periods).zip(&self.mask) {
            let mut row = vec![p.to_string()];
            row.extend(v.iter().map(|x| crate::io::fmt_f64(*x)));
            row.push(m.to_string());
            t.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleWitness {
    pub period: usize,
    pub base: C2Point,
    pub chi_u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovGapReport {
    pub n_max: usize,
    pub saddle_count: usize,
    pub min: SaddleWitness,
    pub max: SaddleWitness,
    pub measure_estimate: ExponentEstimate,
    /// Per-orbit exponent uncertainty used in both comparisons.
    pub orbit_uncertainty: f64,
    /// Two saddles with distinct exponents.
    pub gap_81: bool,
    /// A saddle exponent above the measure exponent.
    pub gap_82: bool,
    pub low_confidence: bool,
}

/// Per-orbit exponent uncertainty attributed to converged multipliers.
pub const ORBIT_EXPONENT_UNCERTAINTY: f64 = 1e-8;

pub fn lyapunov_gap_report(census: &Census, n_max: usize) -> Result<LyapunovGapReport> {
    let mut saddles: Vec<&PeriodicOrbit> = Vec::new();
    for n in 1..=n_max {
        if let Some(orbits) = census.orbits(n) {
            saddles.extend(orbits.iter().filter(|o| o.is_saddle() && !o.lower_period));
        }
    }
    if saddles.is_empty() {
        return Err(Error::InsufficientData("no saddles found".into()));
    }
    let witness = |o: &PeriodicOrbit| SaddleWitness {
        period: o.period,
        base: o.points[0],
        chi_u: o.chi_u(),
    };
    let min = saddles
        .iter()
        .min_by(|a, b| a.chi_u().total_cmp(&b.chi_u()))
        .map(|o| witness(o))
        .unwrap();
    let max = saddles
        .iter()
        .max_by(|a, b| a.chi_u().total_cmp(&b.chi_u()))
        .map(|o| witness(o))
        .unwrap();
    let avg = lyapunov_saddle_average(census, n_max)?;
    let u = ORBIT_EXPONENT_UNCERTAINTY;
    let est = avg.weighted;
    Ok(LyapunovGapReport {
        n_max,
        saddle_count: saddles.len(),
        gap_81: max.chi_u - min.chi_u > 2.0 * u,
        gap_82: max.chi_u - est.value > u + est.uncertainty,
        low_confidence: est.low_confidence,
        min,
        max,
        measure_estimate: est,
        orbit_uncertainty: u,
    })
}

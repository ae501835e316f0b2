//! Escape-rate (Green) functions, the Böttcher coordinate near infinity, and
//! sampled slices of `G⁺` over holomorphic disks.
//!
//! `G⁺` is evaluated by iterating until the orbit enters the filtration region
//! `V⁺ = {|z| ≥ max(|w|, R)}` and then summing the logarithmic corrections
//! `d^{-k-1} log|z_{k+1}/z_k^d|` until a geometric tail bound drops below the
//! requested tolerance. Orbits that stay out of `V⁺` long enough that the
//! growth bound `d^{-j}(log max(|z_j|, |w_j|, R) + slack)` is already below
//! `tol` are reported as bounded.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{C2Point, ComposedAutomorphism, EscapeSystem, C64};

pub const DEFAULT_ITERATION_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenStatus {
    /// Orbit reached the escape region; the value is accurate to `tol`.
    Escaping,
    /// Value certified below `tol`; reported as exactly zero.
    Bounded,
    /// Iteration cap exhausted without a decision; reported as zero, low confidence.
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    pub status: GreenStatus,
    /// Factor steps iterated before the decision.
    pub steps: usize,
}

impl GreenValue {
    pub fn is_bounded(&self) -> bool {
        self.status == GreenStatus::Bounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenConfig {
    pub tol: f64,
    /// Maximum number of full map iterations.
    pub cap: usize,
}

impl GreenConfig {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            cap: DEFAULT_ITERATION_CAP,
        }
    }
}

/// `G⁺(x)` to absolute accuracy `tol`.
///
/// # Panics
/// If `tol` is not a positive finite number.
pub fn green_plus(map: &ComposedAutomorphism, x: &C2Point, tol: f64) -> GreenValue {
    green_plus_with(map, x, &GreenConfig::new(tol))
}

pub fn green_plus_with(map: &ComposedAutomorphism, x: &C2Point, cfg: &GreenConfig) -> GreenValue {
    escape_rate(map.forward_escape(), x.z, x.w, cfg, map.factors().len())
}

/// `G⁻(x)`, the escape rate under `f⁻¹`.
///
/// Computed as the forward escape rate of `σ∘f⁻¹∘σ` at `σ(x)` with
/// `σ(z, w) = (w, z)`; that conjugate is again a composition of (non-monic)
/// Hénon steps, so the same certified machinery applies.
pub fn green_minus(map: &ComposedAutomorphism, x: &C2Point, tol: f64) -> GreenValue {
    green_minus_with(map, x, &GreenConfig::new(tol))
}

pub fn green_minus_with(
    map: &ComposedAutomorphism,
    x: &C2Point,
    cfg: &GreenConfig,
) -> GreenValue {
    escape_rate(map.backward_escape(), x.w, x.z, cfg, map.factors().len())
}

/// `log(1 + u)` bound: `|log(1 + u)| ≤ 2|u|` for `|u| ≤ 1/2`.
const TAIL_FACTOR: f64 = 4.0;

/// Ratio `z'/(lead·z^d)` evaluated in powers of `1/z`, avoiding `z^d`.
fn step_ratio(poly: &[C64], b: C64, z: C64, w: C64) -> C64 {
    let d = poly.len() - 1;
    let inv = z.inv();
    let lead = poly[d];
    // Σ_{i<d} q_i z^{i-d} = Horner in 1/z over q_{d-1}, ..., q_0.
    let mut h = C64::new(0.0, 0.0);
    for c in poly[..d].iter() {
        h = (h + c) * inv;
    }
    let mut wd = w;
    for _ in 0..d {
        wd *= inv;
    }
    C64::new(1.0, 0.0) + (h + b * wd) / lead
}

fn escape_rate(sys: &EscapeSystem, z0: C64, w0: C64, cfg: &GreenConfig, m: usize) -> GreenValue {
    assert!(
        cfg.tol > 0.0 && cfg.tol.is_finite(),
        "tolerance must be positive and finite"
    );
    let (mut z, mut w) = (z0, w0);
    let cap_steps = cfg.cap.saturating_mul(m);
    let nsteps = sys.steps.len();
    // scale = 1 / (product of degrees of the steps already applied)
    let mut scale = 1.0_f64;
    let mut j = 0usize;
    loop {
        if sys.in_filtration(z, w) {
            break;
        }
        let big = z.norm().max(w.norm()).max(sys.radius);
        if !big.is_finite() {
            // Left the representable range outside V⁺ (only possible with huge input).
            return GreenValue {
                value: 0.0,
                status: GreenStatus::Undecided,
                steps: j,
            };
        }
        if scale * (big.ln() + sys.growth_slack) < cfg.tol {
            return GreenValue {
                value: 0.0,
                status: GreenStatus::Bounded,
                steps: j,
            };
        }
        if j >= cap_steps {
            return GreenValue {
                value: 0.0,
                status: GreenStatus::Undecided,
                steps: j,
            };
        }
        let st = &sys.steps[j % nsteps];
        (z, w) = st.apply(z, w);
        scale /= st.degree() as f64;
        j += 1;
    }

    // In V⁺: accumulate ln|z_j|·scale_j plus Σ scale_{k+1}(ln|lead_k| + ln|r_k|).
    let mut value = scale * z.norm().ln() + lead_remainder(sys, j, scale);
    loop {
        let st = &sys.steps[j % nsteps];
        let d = st.degree() as f64;
        let eps = st.ratio_defect_bound(z.norm());
        let next_scale = scale / d;
        if TAIL_FACTOR * next_scale * eps < 0.25 * cfg.tol || next_scale == 0.0 {
            break;
        }
        let r = step_ratio(&st.poly, st.b, z, w);
        value += next_scale * r.norm().ln();
        (z, w) = st.apply(z, w);
        scale = next_scale;
        j += 1;
        if !z.is_finite() {
            break;
        }
    }
    GreenValue {
        value: value.max(0.0),
        status: GreenStatus::Escaping,
        steps: j,
    }
}

/// `Σ_{k≥j} ln|lead_k| · scale_{k+1}` given `scale_j`; zero for monic steps.
fn lead_remainder(sys: &EscapeSystem, j: usize, scale_j: f64) -> f64 {
    let n = sys.steps.len();
    let mut one_period = 0.0;
    let mut s = scale_j;
    for k in 0..n {
        let st = &sys.steps[(j + k) % n];
        s /= st.degree() as f64;
        one_period += st.lead().norm().ln() * s;
    }
    if one_period == 0.0 {
        return 0.0;
    }
    // s is now scale_j / D; the periodic pattern repeats with factor 1/D.
    let ratio = s / scale_j;
    one_period / (1.0 - ratio)
}

/// Böttcher coordinate `φ⁺(x)` for `x ∈ V⁺`.
///
/// `log φ⁺ = Log z₀ + Σ_k d^{-k-1} Log(z_{k+1}/z_k^d)` with principal
/// logarithms; every ratio lies in the disk `|r − 1| < 1` inside `V⁺`.
pub fn bottcher_plus(map: &ComposedAutomorphism, x: &C2Point) -> Result<C64> {
    let sys = map.forward_escape();
    if !sys.in_filtration(x.z, x.w) {
        return Err(Error::OutsideEscapeRegion);
    }
    let (mut z, mut w) = (x.z, x.w);
    let mut log_phi = z.ln();
    let mut scale = 1.0;
    let n = sys.steps.len();
    let mut j = 0;
    loop {
        let st = &sys.steps[j % n];
        let eps = st.ratio_defect_bound(z.norm());
        let next = scale / st.degree() as f64;
        if TAIL_FACTOR * next * eps < 1e-18 * log_phi.norm().max(1.0) || next == 0.0 {
            break;
        }
        let r = step_ratio(&st.poly, st.b, z, w);
        if (r - 1.0).norm() >= 1.0 {
            return Err(Error::OutsideEscapeRegion);
        }
        log_phi += r.ln() * next;
        (z, w) = st.apply(z, w);
        scale = next;
        j += 1;
        if !z.is_finite() {
            break;
        }
    }
    Ok(log_phi.exp())
}

/// `log φ⁺(x)` (principal determination along the orbit), useful when `|φ⁺|`
/// itself would overflow.
pub fn log_bottcher_plus(map: &ComposedAutomorphism, x: &C2Point) -> Result<C64> {
    bottcher_plus(map, x).map(|p| p.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskKind {
    Affine,
    UnstableManifold,
}

/// Affine holomorphic disk `t ↦ center + t·tangent`, `|t| ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransversalDisk {
    pub center: C2Point,
    pub tangent: C2Point,
    pub radius: f64,
    pub kind: DiskKind,
}

impl TransversalDisk {
    /// Normalizes `tangent`; rejects zero tangents and non-positive radii.
    pub fn affine(center: C2Point, tangent: C2Point, radius: f64) -> Result<Self> {
        let n = tangent.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("disk tangent must be nonzero".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument("disk radius must be positive".into()));
        }
        Ok(Self {
            center,
            tangent: tangent.scale(C64::new(1.0 / n, 0.0)),
            radius,
            kind: DiskKind::Affine,
        })
    }

    pub fn point(&self, t: C64) -> C2Point {
        self.center + self.tangent.scale(t)
    }
}

/// `G⁺` sampled on a square grid over the parameter disk `|t| ≤ radius`.
#[derive(Debug, Clone, Serialize)]
pub struct SliceSample {
    pub resolution: usize,
    pub radius: f64,
    pub tol: f64,
    /// Values below this are treated as zero (`10·tol`).
    pub threshold: f64,
    /// Row-major, row index ↔ imaginary part (ascending), `None` outside the disk.
    pub values: Vec<Option<f64>>,
    /// Parameters of boundary cells (points of the approximate `J⁺_Γ`): zero
    /// cells with a positive neighbour, and positive cells whose distance
    /// estimate is below one grid step.
    #[serde(with = "crate::io::complex_vec")]
    pub boundary: Vec<C64>,
    pub boundary_cells: Vec<(usize, usize)>,
    pub nonharmonic: bool,
    pub undecided: usize,
    /// Multiplicative rescaling applied to the parameter (1 for affine disks).
    pub parameter_scale: f64,
}

impl SliceSample {
    /// Parameter of grid node `(row, col)`.
    pub fn parameter(&self, row: usize, col: usize) -> C64 {
        grid_parameter(self.resolution, self.radius, row, col)
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.resolution + col]
    }

    pub fn zero_count(&self) -> usize {
        self.values
            .iter()
            .flatten()
            .filter(|v| **v < self.threshold)
            .count()
    }

    pub fn positive_count(&self) -> usize {
        self.values
            .iter()
            .flatten()
            .filter(|v| **v >= self.threshold)
            .count()
    }
}

fn grid_parameter(resolution: usize, radius: f64, row: usize, col: usize) -> C64 {
    let step = 2.0 * radius / (resolution - 1) as f64;
    C64::new(-radius + col as f64 * step, -radius + row as f64 * step)
}

/// Fills a slice grid from an arbitrary evaluator of `G⁺` on the parameter disk.
pub fn sample_slice<F>(resolution: usize, radius: f64, tol: f64, eval: F) -> SliceSample
where
    F: Fn(C64) -> GreenValue + Sync,
{
    assert!(resolution >= 2, "resolution must be at least 2");
    let n = resolution;
    let cells: Vec<(Option<f64>, bool)> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let t = grid_parameter(n, radius, idx / n, idx % n);
            if t.norm() > radius * (1.0 + 1e-12) {
                return (None, false);
            }
            let g = eval(t);
            (Some(g.value), g.status == GreenStatus::Undecided)
        })
        .collect();
    let undecided = cells.iter().filter(|c| c.1).count();
    let values: Vec<Option<f64>> = cells.into_iter().map(|c| c.0).collect();
    let threshold = 10.0 * tol;
    let mut boundary = Vec::new();
    let mut boundary_cells = Vec::new();
    let mut has_zero = false;
    let mut has_pos = false;
    for row in 0..n {
        for col in 0..n {
            let Some(v) = values[row * n + col] else {
                continue;
            };
            if v >= threshold {
                has_pos = true;
                if near_zero_set(&values, n, row, col, v) {
                    boundary.push(grid_parameter(n, radius, row, col));
                    boundary_cells.push((row, col));
                }
                continue;
            }
            has_zero = true;
            let neighbours = [
                (row.wrapping_sub(1), col),
                (row + 1, col),
                (row, col.wrapping_sub(1)),
                (row, col + 1),
            ];
            let on_edge = neighbours.iter().any(|&(r, c)| {
                r < n && c < n && matches!(values[r * n + c], Some(u) if u >= threshold)
            });
            if on_edge {
                boundary.push(grid_parameter(n, radius, row, col));
                boundary_cells.push((row, col));
            }
        }
    }
    SliceSample {
        resolution: n,
        radius,
        tol,
        threshold,
        values,
        boundary,
        boundary_cells,
        nonharmonic: has_zero && has_pos,
        undecided,
        parameter_scale: 1.0,
    }
}

/// Distance estimate `G/|∇G|` below one grid step, with the gradient from
/// (central where possible) finite differences. Catches positive cells next to
/// zero sets too thin to contain grid nodes, such as Cantor sets.
fn near_zero_set(values: &[Option<f64>], n: usize, row: usize, col: usize, v: f64) -> bool {
    let at = |r: usize, c: usize| if r < n && c < n { values[r * n + c] } else { None };
    let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some(0.5 * (a - b)),
        (Some(a), None) => Some(a - v),
        (None, Some(b)) => Some(v - b),
        (None, None) => None,
    };
    let gx = diff(at(row, col + 1), at(row, col.wrapping_sub(1)));
    let gy = diff(at(row + 1, col), at(row.wrapping_sub(1), col));
    match (gx, gy) {
        (Some(x), Some(y)) => v < x.hypot(y),
        _ => false,
    }
}

/// Quadtree refinement of the boundary cells of a slice. Each level takes the
/// kept cells together with their eight neighbours, splits them in four, and
/// keeps the children that are boundary cells by the same rules as the grid
/// (zero with a positive neighbour, or a distance estimate below two cells,
/// since child centres need not lie on the zero set of a thin slice).
/// Stops early once a level would exceed `max_cells`. Returns the centers of
/// the finest kept cells.
pub fn refine_boundary<F>(sample: &SliceSample, levels: usize, max_cells: usize, eval: F) -> Vec<C64>
where
    F: Fn(C64) -> GreenValue + Sync,
{
    let h0 = 2.0 * sample.radius / (sample.resolution - 1) as f64;
    let threshold = sample.threshold;
    // Level-l cell (i, j) is centred at −R − h0/2 + (k + 1/2)·h_l in each axis.
    let center = |h: f64, (i, j): (i64, i64)| {
        let x = |k: i64| -sample.radius - 0.5 * h0 + (k as f64 + 0.5) * h;
        C64::new(x(j), x(i))
    };
    let mut cells: Vec<(i64, i64)> = sample
        .boundary_cells
        .iter()
        .map(|&(r, c)| (r as i64, c as i64))
        .collect();
    let mut h = h0;
    for _ in 0..levels {
        let mut parents: Vec<(i64, i64)> = cells
            .iter()
            .flat_map(|&(i, j)| (-1..=1).flat_map(move |di| (-1..=1).map(move |dj| (i + di, j + dj))))
            .collect();
        parents.sort_unstable();
        parents.dedup();
        if parents.len() * 4 > max_cells {
            break;
        }
        let hc = 0.5 * h;
        let s = 0.5 * hc;
        let children: Vec<(i64, i64)> = parents
            .iter()
            .flat_map(|&(i, j)| [(2 * i, 2 * j), (2 * i + 1, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j + 1)])
            .filter(|&k| center(hc, k).norm() <= sample.radius)
            .collect();
        let keep: Vec<bool> = children
            .par_iter()
            .map(|&k| {
                let c = center(hc, k);
                let v = eval(c).value;
                let e = eval(c + s).value;
                let w = eval(c - s).value;
                let n = eval(c + C64::new(0.0, s)).value;
                let so = eval(c - C64::new(0.0, s)).value;
                if v < threshold {
                    [e, w, n, so].iter().any(|u| *u >= threshold)
                } else {
                    let grad = (0.5 * (e - w) / s).hypot(0.5 * (n - so) / s);
                    v < 2.0 * hc * grad
                }
            })
            .collect();
        cells = children
            .into_iter()
            .zip(keep)
            .filter_map(|(c, k)| k.then_some(c))
            .collect();
        h = hc;
    }
    cells.into_iter().map(|k| center(h, k)).collect()
}

/// `G⁺` restricted to an affine transversal disk.
pub fn slice_green(
    map: &ComposedAutomorphism,
    disk: &TransversalDisk,
    resolution: usize,
    tol: f64,
) -> Result<SliceSample> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "slice resolution must be at least 16, got {resolution}"
        )));
    }
    Ok(sample_slice(resolution, disk.radius, tol, |t| {
        green_plus(map, &disk.point(t), tol)
    }))
}

/// Escape times (in full map iterations) over the parameter disk; `None`
/// marks points that did not escape within `max_iter` or lie outside the disk.
pub fn escape_time_grid(
    map: &ComposedAutomorphism,
    disk: &TransversalDisk,
    resolution: usize,
    max_iter: usize,
) -> Vec<Option<usize>> {
    let n = resolution;
    let r = map.filtration_radius();
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let t = grid_parameter(n, disk.radius, idx / n, idx % n);
            if t.norm() > disk.radius * (1.0 + 1e-12) {
                return None;
            }
            let mut x = disk.point(t);
            for k in 0..max_iter {
                if x.z.norm() >= r && x.z.norm() >= x.w.norm() {
                    return Some(k);
                }
                match map.evaluate(&x) {
                    Ok(y) => x = y,
                    Err(_) => return Some(k + 1),
                }
            }
            None
        })
        .collect()
}

/// RGB raster with byte-level PPM (P6) output and optional PNG output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0; width * height * 3],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&px);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Grayscale heat map of `G⁺` (log-scaled above the threshold, black on
    /// the bounded set) with boundary cells drawn in red. Row 0 of the image
    /// is the top edge, i.e. the largest imaginary part.
    pub fn from_slice(sample: &SliceSample) -> Self {
        let n = sample.resolution;
        let mut img = Self::new(n, n);
        let positive: Vec<f64> = sample
            .values
            .iter()
            .flatten()
            .copied()
            .filter(|v| *v >= sample.threshold)
            .collect();
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(0.0, f64::max);
        let span = if hi > lo { (hi / lo).ln() } else { 1.0 };
        for row in 0..n {
            for col in 0..n {
                let px = match sample.value(row, col) {
                    None => [24, 24, 48],
                    Some(v) if v < sample.threshold => [0, 0, 0],
                    Some(v) => {
                        let t = ((v / lo).ln() / span).clamp(0.0, 1.0);
                        let g = (64.0 + 191.0 * t).round() as u8;
                        [g, g, g]
                    }
                };
                img.set(col, n - 1 - row, px);
            }
        }
        for &(row, col) in &sample.boundary_cells {
            img.set(col, n - 1 - row, [255, 0, 0]);
        }
        img
    }

    /// Escape-time coloring: bounded points black, escaping points shaded by time.
    pub fn from_escape_times(times: &[Option<usize>], resolution: usize, max_iter: usize) -> Self {
        let n = resolution;
        let mut img = Self::new(n, n);
        let scale = (max_iter.max(2) as f64).ln();
        for row in 0..n {
            for col in 0..n {
                let px = match times[row * n + col] {
                    None => [0, 0, 0],
                    Some(k) => {
                        let t = 1.0 - ((k + 1) as f64).ln() / scale;
                        let g = (40.0 + 215.0 * t.clamp(0.0, 1.0)).round() as u8;
                        [g, g, g]
                    }
                };
                img.set(col, n - 1 - row, px);
            }
        }
        img
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.rgb)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.rgb.len() + 32);
        self.write_ppm(&mut buf).expect("write to Vec cannot fail");
        buf
    }

    #[cfg(feature = "png")]
    pub fn write_png(&self, path: &std::path::Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.rgb,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Io(e.to_string()))
    }
}

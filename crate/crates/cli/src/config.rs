//! Experiment configuration: strict TOML/JSON parsing and exhaustive validation.

use std::path::{Path, PathBuf};

use henon_core::ergodic::TestNormalization;
use henon_core::map::{FactorDescription, MapDescription};
use henon_core::{Precision, C64};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Picks one saddle orbit: the `index`-th saddle of exact period `period`,
/// in the census order (lexicographic on the base point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleSelector {
    pub period: usize,
    pub index: usize,
}

impl Default for SaddleSelector {
    fn default() -> Self {
        Self { period: 1, index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusParams {
    pub n_max: usize,
    pub newton_tol: f64,
    pub grid_resolution: usize,
    pub complex_grid_resolution: usize,
}

impl Default for CensusParams {
    fn default() -> Self {
        Self {
            n_max: 6,
            newton_tol: 1e-10,
            grid_resolution: 200,
            complex_grid_resolution: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceParams {
    pub saddle: SaddleSelector,
    /// Radius of the parameter disk after Green normalization.
    pub radius: f64,
    pub resolution: usize,
    pub tol: f64,
    /// Quadtree levels applied to the boundary cells.
    pub refine_levels: usize,
    pub max_cells: usize,
}

impl Default for SliceParams {
    fn default() -> Self {
        Self {
            saddle: SaddleSelector::default(),
            radius: 1.0,
            resolution: 257,
            tol: 1e-4,
            refine_levels: 4,
            max_cells: 400_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomoclinicParams {
    pub saddle: SaddleSelector,
    pub r1: f64,
    /// Outer radius; `None` means `r1·|λᵘ|`, one fundamental annulus.
    pub r2: Option<f64>,
    pub angular_steps: usize,
    pub radial_steps: usize,
    pub max_steps: usize,
    pub max_land: usize,
    pub transversality_floor: f64,
}

impl Default for HomoclinicParams {
    fn default() -> Self {
        let h = henon_core::manifolds::HomoclinicConfig::default();
        Self {
            saddle: SaddleSelector::default(),
            r1: 0.1,
            r2: None,
            angular_steps: 64,
            radial_steps: h.radial_steps,
            max_steps: h.max_steps,
            max_land: h.max_land,
            transversality_floor: h.transversality_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowParams {
    /// Which homoclinic point (in search order) to shadow.
    pub homoclinic_index: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub chart_radius: f64,
    pub seed_gap_max: f64,
    pub distance_floor: f64,
}

impl Default for ShadowParams {
    fn default() -> Self {
        let s = henon_core::shadowing::ShadowConfig::default();
        Self {
            homoclinic_index: 0,
            n_min: 4,
            n_max: 16,
            chart_radius: s.chart_radius,
            seed_gap_max: s.seed_gap_max,
            distance_floor: s.distance_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovParams {
    /// Largest period enumerated; reference values come from this period.
    pub n: usize,
    pub rho_exponent: f64,
    pub budget_exponent: f64,
    pub budget_constant: f64,
    pub normalization: TestNormalization,
    /// Number of saddle orbits of period `n` drawn for the Birkhoff ensemble; `None` uses all.
    pub ensemble_size: Option<usize>,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        let s = henon_core::ergodic::Schedule::default();
        Self {
            n: 8,
            rho_exponent: s.rho_exponent,
            budget_exponent: s.budget_exponent,
            budget_constant: s.budget_constant,
            normalization: TestNormalization::Raw,
            ensemble_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    #[serde(with = "henon_core::io::complex_pair")]
    pub center: [C64; 2],
    #[serde(with = "henon_core::io::complex_pair")]
    pub tangent: [C64; 2],
    pub radius: f64,
    pub resolution: usize,
    pub max_iter: usize,
    pub format: ImageFormat,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            center: [C64::new(0.0, 0.0); 2],
            tangent: [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            radius: 3.0,
            resolution: 512,
            max_iter: 200,
            format: ImageFormat::Ppm,
        }
    }
}

/// Everything one experiment run needs besides the subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapDescription,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub census: CensusParams,
    #[serde(default)]
    pub slice: SliceParams,
    #[serde(default)]
    pub homoclinic: HomoclinicParams,
    #[serde(default)]
    pub shadow: ShadowParams,
    #[serde(default)]
    pub lyapunov: LyapunovParams,
    #[serde(default)]
    pub render: RenderParams,
}

impl ExperimentConfig {
    /// Default parameters around a single quadratic factor `(a·w + z² + c, z)`.
    pub fn quadratic(a: C64, c: C64) -> Self {
        Self {
            map: MapDescription {
                factors: vec![FactorDescription { a, coeffs: vec![c] }],
            },
            output_dir: None,
            seed: 0,
            threads: None,
            precision: Precision::Double,
            census: CensusParams::default(),
            slice: SliceParams::default(),
            homoclinic: HomoclinicParams::default(),
            shadow: ShadowParams::default(),
            lyapunov: LyapunovParams::default(),
            render: RenderParams::default(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring fields that do not
    /// affect numeric output (output directory, thread count).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted field path, e.g. `map.factors[0].a`.
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Validation {
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip)]
    pub config: Option<ExperimentConfig>,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.config.is_some() && !self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("toml") => Format::Toml,
            _ => Format::Json,
        }
    }
}

/// Parses a configuration file into a generic tree.
pub fn parse_tree(text: &str, format: Format) -> Result<Value, CliError> {
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string())),
        Format::Toml => {
            let t: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| CliError::Parse(e.to_string()))
        }
    }
}

pub fn load(path: &Path) -> Result<Validation, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    validate_str(&text, Format::from_path(path))
}

pub fn validate_str(text: &str, format: Format) -> Result<Validation, CliError> {
    Ok(validate_tree(&parse_tree(text, format)?))
}

/// Schema check, then semantic checks and feasibility warnings. Every
/// finding is listed; nothing stops at the first failure.
pub fn validate_tree(tree: &Value) -> Validation {
    let mut diags = Vec::new();
    let template = serde_json::to_value(ExperimentConfig::quadratic(C64::new(1.0, 0.0), C64::new(0.0, 0.0)))
        .expect("template serializes");
    unknown_fields(tree, &template, "", &mut diags);
    let Value::Object(root) = tree else {
        diags.push(Diagnostic::error("", "configuration must be a table/object"));
        return Validation {
            diagnostics: diags,
            config: None,
        };
    };
    // Type errors per top-level section, with unknown keys already reported.
    let cleaned = strip_unknown(tree, &template);
    let Value::Object(clean_root) = &cleaned else { unreachable!() };
    if !root.contains_key("map") {
        diags.push(Diagnostic::error("map", "missing required field"));
    }
    let mut typed_ok = true;
    for (key, value) in clean_root {
        let mut probe = serde_json::Map::new();
        probe.insert(key.clone(), value.clone());
        if key != "map" {
            probe.insert("map".into(), template["map"].clone());
        }
        if let Err(e) = serde_path_to_error::deserialize::<_, ExperimentConfig>(Value::Object(probe)) {
            typed_ok = false;
            let path = e.path().to_string();
            diags.push(Diagnostic::error(
                if path == "." { key.clone() } else { path },
                e.into_inner().to_string(),
            ));
        }
    }
    let config = if typed_ok && root.contains_key("map") {
        serde_json::from_value::<ExperimentConfig>(cleaned).ok()
    } else {
        None
    };
    if let Some(c) = &config {
        semantic_checks(c, &mut diags);
    }
    let has_errors = diags.iter().any(|d| d.severity == Severity::Error);
    Validation {
        diagnostics: diags,
        config: if has_errors { None } else { config },
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn unknown_fields(v: &Value, template: &Value, path: &str, diags: &mut Vec<Diagnostic>) {
    match (v, template) {
        (Value::Object(m), Value::Object(t)) => {
            for (k, sub) in m {
                match t.get(k) {
                    None => diags.push(Diagnostic::error(join(path, k), "unknown field")),
                    Some(ts) => unknown_fields(sub, ts, &join(path, k), diags),
                }
            }
        }
        (Value::Array(items), Value::Array(t)) if !t.is_empty() && t[0].is_object() => {
            for (i, item) in items.iter().enumerate() {
                unknown_fields(item, &t[0], &format!("{path}[{i}]"), diags);
            }
        }
        _ => {}
    }
}

fn strip_unknown(v: &Value, template: &Value) -> Value {
    match (v, template) {
        (Value::Object(m), Value::Object(t)) => Value::Object(
            m.iter()
                .filter_map(|(k, sub)| t.get(k).map(|ts| (k.clone(), strip_unknown(sub, ts))))
                .collect(),
        ),
        (Value::Array(items), Value::Array(t)) if !t.is_empty() && t[0].is_object() => {
            Value::Array(items.iter().map(|i| strip_unknown(i, &t[0])).collect())
        }
        _ => v.clone(),
    }
}

fn positive(diags: &mut Vec<Diagnostic>, path: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        diags.push(Diagnostic::error(path, format!("must be positive and finite, got {x}")));
    }
}

fn at_least(diags: &mut Vec<Diagnostic>, path: &str, x: usize, min: usize) {
    if x < min {
        diags.push(Diagnostic::error(path, format!("must be at least {min}, got {x}")));
    }
}

fn semantic_checks(c: &ExperimentConfig, diags: &mut Vec<Diagnostic>) {
    if c.map.factors.is_empty() {
        diags.push(Diagnostic::error("map.factors", "at least one factor is required"));
    }
    for (i, f) in c.map.factors.iter().enumerate() {
        let p = format!("map.factors[{i}]");
        if !f.a.is_finite() {
            diags.push(Diagnostic::error(format!("{p}.a"), "must be finite"));
        } else if f.a.norm() == 0.0 {
            diags.push(Diagnostic::error(format!("{p}.a"), "factor linear coefficient must be nonzero"));
        }
        if f.coeffs.is_empty() {
            diags.push(Diagnostic::error(
                format!("{p}.coeffs"),
                "factor degree must be at least 2 (need at least one coefficient c_0)",
            ));
        }
        if f.coeffs.iter().any(|z| !z.is_finite()) {
            diags.push(Diagnostic::error(format!("{p}.coeffs"), "coefficients must be finite"));
        }
    }
    if c.threads == Some(0) {
        diags.push(Diagnostic::error("threads", "must be at least 1 (omit for all cores)"));
    }
    let s = &c.census;
    at_least(diags, "census.n_max", s.n_max, 1);
    positive(diags, "census.newton_tol", s.newton_tol);
    at_least(diags, "census.grid_resolution", s.grid_resolution, 2);
    for (name, sel) in [("slice.saddle", &c.slice.saddle), ("homoclinic.saddle", &c.homoclinic.saddle)] {
        at_least(diags, &format!("{name}.period"), sel.period, 1);
    }
    let s = &c.slice;
    positive(diags, "slice.radius", s.radius);
    at_least(diags, "slice.resolution", s.resolution, 16);
    positive(diags, "slice.tol", s.tol);
    at_least(diags, "slice.max_cells", s.max_cells, 1);
    let h = &c.homoclinic;
    positive(diags, "homoclinic.r1", h.r1);
    if let Some(r2) = h.r2 {
        positive(diags, "homoclinic.r2", r2);
        if r2 < h.r1 {
            diags.push(Diagnostic::error("homoclinic.r2", format!("must be at least r1 = {}", h.r1)));
        }
    }
    at_least(diags, "homoclinic.angular_steps", h.angular_steps, 1);
    at_least(diags, "homoclinic.radial_steps", h.radial_steps, 3);
    at_least(diags, "homoclinic.max_land", h.max_land, 1);
    if h.transversality_floor.is_nan() || h.transversality_floor < 0.0 {
        diags.push(Diagnostic::error("homoclinic.transversality_floor", "must be nonnegative"));
    }
    let sh = &c.shadow;
    at_least(diags, "shadow.n_min", sh.n_min, 1);
    if sh.n_max < sh.n_min {
        diags.push(Diagnostic::error("shadow.n_max", format!("must be at least n_min = {}", sh.n_min)));
    }
    positive(diags, "shadow.chart_radius", sh.chart_radius);
    positive(diags, "shadow.seed_gap_max", sh.seed_gap_max);
    positive(diags, "shadow.distance_floor", sh.distance_floor);
    let l = &c.lyapunov;
    at_least(diags, "lyapunov.n", l.n, 1);
    positive(diags, "lyapunov.rho_exponent", l.rho_exponent);
    positive(diags, "lyapunov.budget_constant", l.budget_constant);
    if !l.budget_exponent.is_finite() {
        diags.push(Diagnostic::error("lyapunov.budget_exponent", "must be finite"));
    }
    if l.ensemble_size == Some(0) {
        diags.push(Diagnostic::error("lyapunov.ensemble_size", "must be at least 1 (omit for all orbits)"));
    }
    let r = &c.render;
    positive(diags, "render.radius", r.radius);
    at_least(diags, "render.resolution", r.resolution, 2);
    at_least(diags, "render.max_iter", r.max_iter, 1);
    if r.tangent.iter().all(|z| z.norm() == 0.0) {
        diags.push(Diagnostic::error("render.tangent", "disk tangent must be nonzero"));
    }
    if r.format == ImageFormat::Png && !cfg!(feature = "png") {
        diags.push(Diagnostic::error("render.format", "PNG output needs a build with the `png` feature"));
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return;
    }
    feasibility_warnings(c, diags);
}

/// Warnings that need the map itself: counting budgets and the precision
/// budget of the shadowing multipliers.
fn feasibility_warnings(c: &ExperimentConfig, diags: &mut Vec<Diagnostic>) {
    let Ok(map) = c.map.build() else { return };
    let d = map.degree() as f64;
    for (path, n) in [("census.n_max", c.census.n_max), ("lyapunov.n", c.lyapunov.n)] {
        if d.powi(n as i32) > henon_core::periodic::NewtonConfig::default().itinerary_limit as f64 {
            diags.push(Diagnostic::warning(
                path,
                format!("d^n = {:.3e} points exceed the itinerary seeding budget; counts may be incomplete", d.powi(n as i32)),
            ));
        }
    }
    if c.precision == Precision::Extended {
        return;
    }
    let cfg = henon_core::periodic::NewtonConfig {
        grid_resolution: 40,
        complex_grid_resolution: 0,
        ..Default::default()
    };
    let Ok(fixed) = henon_core::periodic::find_periodic(&map, 1, &henon_core::periodic::Seeds::Default, &cfg) else {
        return;
    };
    let saddles: Vec<_> = fixed.orbits.iter().filter(|o| o.is_saddle()).collect();
    let Some(p) = saddles.get(c.homoclinic.saddle.index.min(saddles.len().saturating_sub(1))) else {
        return;
    };
    // Shortest period reached at n_max (landing index k ≥ 0).
    let n = 2 * c.shadow.n_max;
    let budget = 120.0 * std::f64::consts::LN_2;
    if n as f64 * p.chi_u() > budget {
        diags.push(Diagnostic::warning(
            "shadow.n_max",
            format!(
                "periods n ≥ {n} give n·log|λᵘ| ≥ {:.1} > 120·ln 2 = {budget:.1}, beyond the double-precision range of the multipliers; use --precision extended",
                n as f64 * p.chi_u()
            ),
        ));
    }
}

/// Overrides from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub precision: Option<Precision>,
}

impl Overrides {
    pub fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(o) = &self.out {
            c.output_dir = Some(o.clone());
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.threads {
            c.threads = Some(t);
        }
        if let Some(p) = self.precision {
            c.precision = p;
        }
    }
}

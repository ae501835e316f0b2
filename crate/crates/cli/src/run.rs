//! Subcommand runners. Each runner fills an [`Outputs`] sink; the record and
//! every artifact are written once, at the end, by [`execute`].

use std::path::{Path, PathBuf};

use henon_core::ergodic::{
    birkhoff_reference, birkhoff_spectrum, lyapunov_birkhoff_ensemble, lyapunov_gap_report, lyapunov_saddle_average,
    Schedule, TestFunction,
};
use henon_core::io::{fmt_f64, CsvTable};
use henon_core::manifolds::{
    filled_set_check, find_homoclinic, slice_geometry, unstable_slice, HomoclinicConfig, HomoclinicPoint,
    HomoclinicSearch,
};
use henon_core::periodic::{census, find_periodic, Classification, NewtonConfig, PeriodicOrbit, Seeds};
use henon_core::potential::{escape_time_grid, refine_boundary, Raster, TransversalDisk};
use henon_core::shadowing::{estimate_nu0, multiplier_asymptotics, ShadowConfig, ShadowingContext};
use henon_core::{C2Point, ComposedAutomorphism};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ImageFormat, SaddleSelector};
use crate::record::{Artifact, ErrorRecord, ExperimentRecord, Status, SCHEMA_VERSION};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Census,
    Slice,
    Homoclinic,
    Shadow,
    Lyapunov,
    Render,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Census => "census",
            Command::Slice => "slice",
            Command::Homoclinic => "homoclinic",
            Command::Shadow => "shadow",
            Command::Lyapunov => "lyapunov",
            Command::Render => "render",
        }
    }
}

enum Payload {
    Bytes(Vec<u8>),
    Png(Raster),
}

/// Artifacts and summary collected during a run.
pub struct Outputs {
    files: Vec<(String, String, Payload)>,
    pub summary: serde_json::Map<String, Value>,
    pub notes: Vec<String>,
    partial: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            summary: serde_json::Map::new(),
            notes: Vec::new(),
            partial: false,
        }
    }

    fn csv(&mut self, name: &str, schema: &str, table: &CsvTable) {
        self.files
            .push((name.into(), schema.into(), Payload::Bytes(table.to_csv_string().into_bytes())));
    }

    fn json<T: Serialize>(&mut self, name: &str, schema: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("results serialize");
        text.push('\n');
        self.files.push((name.into(), schema.into(), Payload::Bytes(text.into_bytes())));
    }

    fn image(&mut self, stem: &str, raster: Raster, format: ImageFormat) {
        match format {
            ImageFormat::Ppm => self
                .files
                .push((format!("{stem}.ppm"), "ppm-p6".into(), Payload::Bytes(raster.to_ppm_bytes()))),
            ImageFormat::Png => self.files.push((format!("{stem}.png"), "png".into(), Payload::Png(raster))),
        }
    }

    fn mark_partial(&mut self, why: impl Into<String>) {
        self.partial = true;
        self.notes.push(why.into());
    }

    fn put(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }
}

/// Runs `cmd` and writes `record.json` plus artifacts into `out`.
pub fn execute(cmd: Command, config: &ExperimentConfig, out: &Path, warnings: &[String]) -> ExperimentRecord {
    let started = chrono::Utc::now();
    let mut outputs = Outputs::new();
    let threads = config.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Run(e.to_string()))
        .and_then(|pool| pool.install(|| dispatch(cmd, config, &mut outputs)));
    let error = result.err().map(|e| ErrorRecord {
        kind: e.kind().into(),
        message: e.to_string(),
    });
    let status = match (&error, outputs.files.is_empty(), outputs.partial) {
        (Some(_), true, _) => Status::Failed,
        (Some(_), false, _) | (None, _, true) => Status::Partial,
        (None, _, false) => Status::Complete,
    };
    let mut record = ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        config_hash: config.hash(),
        seed: config.seed,
        precision: config.precision,
        threads,
        started_at: started.to_rfc3339(),
        finished_at: String::new(),
        status,
        artifacts: Vec::new(),
        summary: Value::Object(std::mem::take(&mut outputs.summary)),
        warnings: warnings.to_vec(),
        notes: std::mem::take(&mut outputs.notes),
        error,
    };
    if let Err(e) = write_all(out, config, &mut record, outputs.files) {
        record.status = Status::Failed;
        record.error = Some(ErrorRecord {
            kind: "io".into(),
            message: e.to_string(),
        });
    }
    record.finished_at = chrono::Utc::now().to_rfc3339();
    let _ = record.write(out);
    record
}

fn write_all(
    out: &Path,
    config: &ExperimentConfig,
    record: &mut ExperimentRecord,
    files: Vec<(String, String, Payload)>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut cfg = config.clone();
    cfg.output_dir = None;
    cfg.threads = None;
    let cfg_text = cfg.to_json_pretty() + "\n";
    let mut all = vec![("config.json".to_string(), "config/v1".to_string(), Payload::Bytes(cfg_text.into_bytes()))];
    all.extend(files);
    for (name, schema, payload) in all {
        let path = out.join(&name);
        match payload {
            Payload::Bytes(b) => std::fs::write(&path, b).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
            Payload::Png(r) => write_png(&r, &path)?,
        }
        record.artifacts.push(Artifact {
            path: PathBuf::from(name),
            schema,
        });
    }
    Ok(())
}

#[cfg(feature = "png")]
fn write_png(r: &Raster, path: &Path) -> Result<(), CliError> {
    r.write_png(path).map_err(CliError::Core)
}

#[cfg(not(feature = "png"))]
fn write_png(_: &Raster, _: &Path) -> Result<(), CliError> {
    Err(CliError::Run("PNG output needs a build with the `png` feature".into()))
}

fn dispatch(cmd: Command, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let map = c.map.build()?;
    match cmd {
        Command::Census => run_census(&map, c, out),
        Command::Slice => run_slice(&map, c, out),
        Command::Homoclinic => run_homoclinic(&map, c, out).map(|_| ()),
        Command::Shadow => run_shadow(&map, c, out),
        Command::Lyapunov => run_lyapunov(&map, c, out),
        Command::Render => run_render(&map, c, out),
    }
}

pub fn newton_config(c: &ExperimentConfig) -> NewtonConfig {
    NewtonConfig {
        tol: c.census.newton_tol,
        grid_resolution: c.census.grid_resolution,
        complex_grid_resolution: c.census.complex_grid_resolution,
        precision: c.precision,
        ..Default::default()
    }
}

/// The saddle named by a selector, in census order.
pub fn select_saddle(map: &ComposedAutomorphism, sel: &SaddleSelector, cfg: &NewtonConfig) -> Result<PeriodicOrbit, CliError> {
    let found = find_periodic(map, sel.period, &Seeds::Default, cfg)?;
    let saddles: Vec<PeriodicOrbit> = found
        .orbits
        .into_iter()
        .filter(|o| o.is_saddle() && o.period == sel.period)
        .collect();
    let count = saddles.len();
    saddles.into_iter().nth(sel.index).ok_or_else(|| {
        CliError::Run(format!(
            "saddle index {} out of range: {count} saddles of exact period {}",
            sel.index, sel.period
        ))
    })
}

fn class_name(c: Classification) -> &'static str {
    match c {
        Classification::Saddle => "saddle",
        Classification::Sink => "sink",
        Classification::Source => "source",
        Classification::Neutral => "neutral",
    }
}

fn point_fields(x: &C2Point) -> [String; 4] {
    [fmt_f64(x.z.re), fmt_f64(x.z.im), fmt_f64(x.w.re), fmt_f64(x.w.im)]
}

fn orbit_summary(o: &PeriodicOrbit) -> Value {
    json!({
        "period": o.period,
        "base": o.points[0],
        "lambda_u_log_abs": o.lambda_u().ln_abs,
        "lambda_u_arg": o.lambda_u().arg,
        "lambda_s_log_abs": o.lambda_s().ln_abs,
        "lambda_s_arg": o.lambda_s().arg,
        "chi_u_nats": o.chi_u(),
    })
}

fn run_census(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let cen = census(map, c.census.n_max, &newton_config(c))?;
    let mut rows = CsvTable::new(&[
        "n",
        "fix_count",
        "sper_count",
        "ratio",
        "mean_chi_u_nats",
        "weighted_chi_u_nats",
        "low_confidence",
        "neutral_count",
    ]);
    for r in &cen.rows {
        rows.push(vec![
            r.n.to_string(),
            r.fix_count.to_string(),
            r.sper_count.to_string(),
            fmt_f64(r.ratio),
            fmt_f64(r.mean_chi_u),
            fmt_f64(r.weighted_chi_u),
            r.low_confidence.to_string(),
            r.neutral_count.to_string(),
        ]);
        if r.low_confidence {
            out.mark_partial(format!("census row n = {} is low-confidence (incomplete count or neutral orbits)", r.n));
        }
    }
    out.csv("census.csv", "census/v1", &rows);

    let mut orbits = CsvTable::new(&[
        "period",
        "z_re",
        "z_im",
        "w_re",
        "w_im",
        "classification",
        "lambda_u_log_abs",
        "lambda_u_arg",
        "lambda_s_log_abs",
        "lambda_s_arg",
        "chi_u_nats",
        "residual",
    ]);
    for n in 1..=c.census.n_max {
        for o in cen.orbits(n).unwrap_or_default().iter().filter(|o| !o.lower_period) {
            let mut row = vec![o.period.to_string()];
            row.extend(point_fields(&o.points[0]));
            row.push(class_name(o.classification).into());
            row.extend([
                fmt_f64(o.lambda2.ln_abs),
                fmt_f64(o.lambda2.arg),
                fmt_f64(o.lambda1.ln_abs),
                fmt_f64(o.lambda1.arg),
                fmt_f64(if o.is_saddle() { o.chi_u() } else { f64::NAN }),
                fmt_f64(o.residual),
            ]);
            orbits.push(row);
        }
    }
    out.csv("orbits.csv", "orbits/v1", &orbits);

    let mut exps = CsvTable::new(&[
        "n",
        "weighted_chi_u_nats",
        "weighted_change_nats",
        "count_normalized_chi_u_nats",
        "count_normalized_change_nats",
        "sper_count",
    ]);
    let mut averages = Vec::new();
    for n in 1..=c.census.n_max {
        let a = lyapunov_saddle_average(&cen, n)?;
        exps.push(vec![
            n.to_string(),
            fmt_f64(a.weighted.value),
            fmt_f64(a.weighted.uncertainty),
            fmt_f64(a.count_normalized.value),
            fmt_f64(a.count_normalized.uncertainty),
            a.sper_count.to_string(),
        ]);
        averages.push(a);
    }
    out.csv("exponents.csv", "saddle-average/v1", &exps);
    out.json("results.json", "census-results/v1", &json!({ "rows": cen.rows, "saddle_averages": averages }));
    let last = cen.rows.last().expect("n_max ≥ 1");
    out.put("n_max", json!(last.n));
    out.put("fix_count", json!(last.fix_count));
    out.put("sper_count", json!(last.sper_count));
    out.put("weighted_chi_u_nats", json!(last.weighted_chi_u));
    Ok(())
}

fn run_slice(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let s = &c.slice;
    let saddle = select_saddle(map, &s.saddle, &newton_config(c))?;
    let (sample, man) = unstable_slice(map, &saddle, s.radius, s.resolution, s.tol)?;
    let points = refine_boundary(&sample, s.refine_levels, s.max_cells, |z| man.green_plus_at(z, s.tol));
    let mut table = CsvTable::new(&["zeta_re", "zeta_im"]);
    for p in &points {
        table.push(vec![fmt_f64(p.re), fmt_f64(p.im)]);
    }
    out.csv("boundary.csv", "slice-boundary/v1", &table);
    out.image("slice", Raster::from_slice(&sample), c.render.format);
    let geometry = match slice_geometry(&points) {
        Ok(g) => {
            if g.degraded {
                out.mark_partial("fewer than 5 usable box-counting scales");
            }
            Some(g)
        }
        Err(e) => {
            out.mark_partial(format!("slice geometry unavailable: {e}"));
            None
        }
    };
    let non_real = saddle.lambda_u().non_realness();
    let realness_check = geometry
        .as_ref()
        .filter(|g| g.residual < 0.02)
        .map(|_| json!({ "lambda_u_non_realness": non_real, "passed": non_real < 0.02 }));
    let results = json!({
        "saddle": orbit_summary(&saddle),
        "parameter_scale": man.scale(),
        "validity_radius": man.validity_radius(),
        "nonharmonic": sample.nonharmonic,
        "undecided": sample.undecided,
        "grid_boundary_cells": sample.boundary.len(),
        "refined_points": points.len(),
        "geometry": geometry,
        "realness_check": realness_check,
    });
    out.json("results.json", "slice-results/v1", &results);
    if let Some(g) = &geometry {
        out.put("line_residual", json!(g.residual));
        out.put("dimension", json!(g.dimension));
        out.put("dimension_r2", json!(g.dimension_r2));
    }
    out.put("refined_points", json!(points.len()));
    Ok(())
}

fn homoclinic_config(c: &ExperimentConfig) -> HomoclinicConfig {
    let h = &c.homoclinic;
    HomoclinicConfig {
        radial_steps: h.radial_steps,
        max_steps: h.max_steps,
        max_land: h.max_land,
        transversality_floor: h.transversality_floor,
        ..Default::default()
    }
}

fn homoclinic_table(map: &ComposedAutomorphism, saddle: &PeriodicOrbit, pts: &[HomoclinicPoint]) -> (CsvTable, usize) {
    let mut t = CsvTable::new(&[
        "zeta_re",
        "zeta_im",
        "landing_k",
        "eta_re",
        "eta_im",
        "transversality",
        "z_re",
        "z_im",
        "w_re",
        "w_im",
        "final_distance",
        "green_plus",
        "green_plus_floor",
        "green_minus",
        "green_minus_floor",
    ]);
    let mut failed = 0;
    for h in pts {
        let chk = filled_set_check(map, saddle, h);
        failed += usize::from(!chk.passed());
        let mut row = vec![fmt_f64(h.zeta.re), fmt_f64(h.zeta.im), h.landing_k.to_string()];
        row.extend([fmt_f64(h.eta.re), fmt_f64(h.eta.im), fmt_f64(h.transversality)]);
        row.extend(point_fields(&h.point));
        row.extend([
            fmt_f64(h.final_distance),
            fmt_f64(chk.green_plus),
            fmt_f64(chk.floor_plus),
            fmt_f64(chk.green_minus),
            fmt_f64(chk.floor_minus),
        ]);
        t.push(row);
    }
    (t, failed)
}

fn search_homoclinic(
    map: &ComposedAutomorphism,
    c: &ExperimentConfig,
) -> Result<(PeriodicOrbit, HomoclinicSearch), CliError> {
    let h = &c.homoclinic;
    let saddle = select_saddle(map, &h.saddle, &newton_config(c))?;
    let r2 = h.r2.unwrap_or(h.r1 * saddle.lambda_u().abs());
    let found = find_homoclinic(map, &saddle, h.r1, r2, h.angular_steps, &homoclinic_config(c))?;
    Ok((saddle, found))
}

fn run_homoclinic(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<HomoclinicSearch, CliError> {
    let (saddle, found) = search_homoclinic(map, c)?;
    let (table, failed) = homoclinic_table(map, &saddle, &found.points);
    out.csv("homoclinic.csv", "homoclinic/v1", &table);
    let (tang, _) = homoclinic_table(map, &saddle, &found.tangencies);
    out.csv("tangencies.csv", "homoclinic/v1", &tang);
    if found.points.is_empty() {
        out.mark_partial("no transverse homoclinic point found in the annulus");
    }
    if failed > 0 {
        out.mark_partial(format!("{failed} points failed the K⁺∩K⁻ check"));
    }
    out.json(
        "results.json",
        "homoclinic-results/v1",
        &json!({ "saddle": orbit_summary(&saddle), "points": found.points.len(), "tangencies": found.tangencies.len() }),
    );
    out.put("points", json!(found.points.len()));
    out.put("tangencies", json!(found.tangencies.len()));
    Ok(found)
}

fn run_shadow(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let (saddle, found) = search_homoclinic(map, c)?;
    let s = &c.shadow;
    let h = found.points.get(s.homoclinic_index).ok_or_else(|| {
        CliError::Run(format!(
            "homoclinic index {} out of range: {} transverse points found",
            s.homoclinic_index,
            found.points.len()
        ))
    })?;
    let ctx = ShadowingContext::new(map, &saddle)?;
    let cfg = ShadowConfig {
        newton: newton_config(c),
        chart_radius: s.chart_radius,
        seed_gap_max: s.seed_gap_max,
        distance_floor: s.distance_floor,
    };
    let table = multiplier_asymptotics(&ctx, h, s.n_min..=s.n_max, &cfg)?;
    out.csv("asymptotics.csv", "asymptotics/v1", &table.to_csv());
    if table.partial {
        out.mark_partial("fewer than 4 closed orbits");
    }
    for f in &table.failures {
        out.mark_partial(format!("closing failed at N = {} (shifted = {}): {}", f.big_n, f.shifted, f.message));
    }
    let nu0: Vec<Value> = [false, true]
        .iter()
        .map(|&shifted| match estimate_nu0(&table.parity(shifted), table.saddle_lambda_u) {
            Ok(e) => json!({ "shifted": shifted, "estimate": e }),
            Err(e) => json!({ "shifted": shifted, "error": e.to_string() }),
        })
        .collect();
    let theta = table.saddle_lambda_s.abs().max(1.0 / table.saddle_lambda_u.abs());
    let rate = table.mid_distance_rate(s.distance_floor);
    let last_succ = table.rows.iter().rev().find_map(|r| r.succ_ratio.map(|z| z.norm()));
    let results = json!({
        "saddle": orbit_summary(&saddle),
        "homoclinic": h,
        "table": table,
        "nu0": nu0,
        "theta": theta,
        "mid_distance_rate": rate,
    });
    out.json("results.json", "shadow-results/v1", &results);
    out.put("rows", json!(table.rows.len()));
    out.put("succ_ratio_abs_last", json!(last_succ));
    out.put("lambda_u_abs", json!(table.saddle_lambda_u.abs()));
    out.put("spread", json!(table.spread));
    out.put("mid_distance_rate", json!(rate));
    Ok(())
}

fn run_lyapunov(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let l = &c.lyapunov;
    let n = l.n;
    let cen = census(map, n, &newton_config(c))?;
    if cen.rows.iter().any(|r| r.low_confidence) {
        out.mark_partial("census rows are low-confidence");
    }
    let avg = lyapunov_saddle_average(&cen, n)?;
    let top: Vec<PeriodicOrbit> = cen
        .orbits(n)
        .unwrap_or_default()
        .iter()
        .filter(|o| o.is_saddle() && o.period == n)
        .cloned()
        .collect();
    let ensemble: Vec<PeriodicOrbit> = match l.ensemble_size {
        Some(k) if k < top.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let mut idx = rand::seq::index::sample(&mut rng, top.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| top[i].clone()).collect()
        }
        _ => top,
    };
    let birkhoff = if ensemble.is_empty() {
        None
    } else {
        Some(lyapunov_birkhoff_ensemble(map, &ensemble)?)
    };
    let gap = lyapunov_gap_report(&cen, n)?;
    let schedule = Schedule {
        rho_exponent: l.rho_exponent,
        budget_exponent: l.budget_exponent,
        budget_constant: l.budget_constant,
    };
    let reference = birkhoff_reference(map, cen.orbits(n).unwrap_or_default(), n, &TestFunction::DEFAULT, l.normalization)?;
    let mut header: Vec<&'static str> = vec!["n", "rho", "j_n", "saddle_count", "mask_count", "mask_ratio"];
    const DISPERSION: [&str; 6] = [
        "dispersion_phi0",
        "dispersion_re_z",
        "dispersion_im_z",
        "dispersion_abs_z2",
        "dispersion_re_zw",
        "dispersion_abs_w2",
    ];
    header.extend(DISPERSION);
    let mut summary = CsvTable::new(&header);
    for m in 1..=n {
        let sp = birkhoff_spectrum(map, cen.orbits(m).unwrap_or_default(), m, &reference, &schedule)?;
        let mut row = vec![
            m.to_string(),
            fmt_f64(sp.rho),
            sp.j_n.to_string(),
            sp.periods.iter().sum::<usize>().to_string(),
            sp.mask_count.to_string(),
            fmt_f64(sp.mask_ratio),
        ];
        row.extend(sp.dispersion.iter().map(|d| fmt_f64(*d)));
        summary.push(row);
        if m == n {
            out.csv("spectrum_orbits.csv", "birkhoff-spectrum/v1", &sp.to_csv());
        }
    }
    out.csv("spectrum.csv", "birkhoff-summary/v1", &summary);
    let results = json!({
        "n": n,
        "saddle_average": avg,
        "birkhoff_ensemble": birkhoff,
        "ensemble_orbits": ensemble.len(),
        "gap_report": gap,
        "reference": reference,
    });
    out.json("results.json", "lyapunov-results/v1", &results);
    out.put("weighted_chi_u_nats", json!(avg.weighted.value));
    out.put("count_normalized_chi_u_nats", json!(avg.count_normalized.value));
    out.put("gap_81", json!(gap.gap_81));
    out.put("gap_82", json!(gap.gap_82));
    Ok(())
}

fn run_render(map: &ComposedAutomorphism, c: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let r = &c.render;
    let disk = TransversalDisk::affine(C2Point::new(r.center[0], r.center[1]), C2Point::new(r.tangent[0], r.tangent[1]), r.radius)?;
    let times = escape_time_grid(map, &disk, r.resolution, r.max_iter);
    let bounded = times.iter().filter(|t| t.is_none()).count();
    out.image("render", Raster::from_escape_times(&times, r.resolution, r.max_iter), r.format);
    out.json(
        "results.json",
        "render-results/v1",
        &json!({ "resolution": r.resolution, "max_iter": r.max_iter, "non_escaping_pixels": bounded }),
    );
    out.put("non_escaping_pixels", json!(bounded));
    Ok(())
}

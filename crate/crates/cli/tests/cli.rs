use std::path::Path;
use std::process::Command;

use henon_lab::record::{ExperimentRecord, Status};

const SIMPLE: &str = r#"
[[map.factors]]
a = [0.5, 0.0]
coeffs = [[0.0, 0.0]]

[census]
n_max = 3
"#;

const HORSESHOE: &str = r#"
seed = 5

[[map.factors]]
a = [0.1, 0.0]
coeffs = [[-6.0, 0.0]]

[homoclinic]
saddle = { period = 1, index = 1 }

[lyapunov]
n = 6
ensemble_size = 10
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_henon-lab")).args(args).output().unwrap()
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, ExperimentRecord) {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    (o.status.code().unwrap(), ExperimentRecord::read(out).unwrap())
}

#[test]
fn census_matches_the_fixed_point_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIMPLE);
    let out = tmp.path().join("run");
    let (code, rec) = run_in("census", &cfg, &out, &[]);
    assert_eq!(code, 0);
    assert_eq!(rec.status, Status::Complete);
    let csv = std::fs::read_to_string(out.join("census.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][..3], &["1", "2", "1"]);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.5);
    let orbits = std::fs::read_to_string(out.join("orbits.csv")).unwrap();
    let fixed: Vec<(f64, &str)> = orbits
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[0] == "1")
        .map(|f| (f[1].parse().unwrap(), if f[5] == "saddle" { "saddle" } else { "other" }))
        .collect();
    assert_eq!(fixed.len(), 2);
    assert!(fixed.iter().any(|&(z, c)| z.abs() < 1e-12 && c == "other"));
    assert!(fixed.iter().any(|&(z, c)| (z - 0.5).abs() < 1e-12 && c == "saddle"));
    for a in &rec.artifacts {
        assert!(out.join(&a.path).is_file(), "{:?}", a.path);
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HORSESHOE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let (ca, ra) = run_in("lyapunov", &cfg, &a, &["--threads", "1"]);
    let (cb, rb) = run_in("lyapunov", &cfg, &b, &["--threads", "3"]);
    assert_eq!((ca, cb), (0, 0));
    assert_eq!(ra.config_hash, rb.config_hash);
    assert_eq!(ra.artifacts, rb.artifacts);
    for art in &ra.artifacts {
        assert_eq!(std::fs::read(a.join(&art.path)).unwrap(), std::fs::read(b.join(&art.path)).unwrap());
    }
}

#[test]
fn seed_override_changes_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HORSESHOE);
    let (_, r5) = run_in("lyapunov", &cfg, &tmp.path().join("a"), &[]);
    let (_, r6) = run_in("lyapunov", &cfg, &tmp.path().join("b"), &["--seed", "6"]);
    assert_eq!(r5.seed, 5);
    assert_eq!(r6.seed, 6);
    assert_ne!(r5.config_hash, r6.config_hash);
}

#[test]
fn shadow_reports_the_saddle_multiplier() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HORSESHOE);
    let out = tmp.path().join("shadow");
    let (code, rec) = run_in("shadow", &cfg, &out, &[]);
    assert_eq!(code, 0, "{:?}", rec.notes);
    let last = rec.summary["succ_ratio_abs_last"].as_f64().unwrap();
    let lu = rec.summary["lambda_u_abs"].as_f64().unwrap();
    assert!((last / lu - 1.0).abs() < 0.01);
    let csv = std::fs::read_to_string(out.join("asymptotics.csv")).unwrap();
    assert!(csv.starts_with("n,lambda_u_log_re,lambda_u_arg,"));
}

#[test]
fn short_shadow_range_is_partial_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{HORSESHOE}\n[shadow]\nn_min = 4\nn_max = 4\n"));
    let out = tmp.path().join("shadow");
    let (code, rec) = run_in("shadow", &cfg, &out, &[]);
    assert_eq!(code, 2);
    assert_eq!(rec.status, Status::Partial);
    assert!(out.join("asymptotics.csv").is_file());
}

#[test]
fn out_of_range_saddle_fails_with_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SIMPLE}\n[slice]\nsaddle = {{ period = 1, index = 5 }}\n"));
    let out = tmp.path().join("slice");
    let (code, rec) = run_in("slice", &cfg, &out, &[]);
    assert_eq!(code, 1);
    assert_eq!(rec.status, Status::Failed);
    let err = rec.error.unwrap();
    assert_eq!(err.kind, "run");
    assert!(err.message.contains("out of range"));
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[[map.factors]]\na = [0.0, 0.0]\ncoeffs = [[1.0, 0.0]]\n");
    let out = tmp.path().join("run");
    let (code, rec) = run_in("census", &cfg, &out, &[]);
    assert_eq!(code, 1);
    assert_eq!(rec.error.unwrap().kind, "invalid_config");
    assert!(rec.artifacts.is_empty());
}

#[test]
fn validate_lists_every_finding() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bogus = 1\n[[map.factors]]\na = [0.0, 0.0]\ncoeffs = [[1.0, 0.0]]\n[census]\nn_max = 0\n",
    );
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let diags: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let paths: Vec<&str> = diags.as_array().unwrap().iter().map(|d| d["path"].as_str().unwrap()).collect();
    for p in ["bogus", "map.factors[0].a", "census.n_max"] {
        assert!(paths.contains(&p), "{p} missing from {paths:?}");
    }

    let ok = write_config(tmp.path(), HORSESHOE);
    let o = run(&["validate", "--config", ok.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn render_writes_an_image() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SIMPLE}\n[render]\nresolution = 32\n"));
    let out = tmp.path().join("render");
    let (code, _) = run_in("render", &cfg, &out, &[]);
    assert_eq!(code, 0);
    let ppm = std::fs::read(out.join("render.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n32 32\n255\n"));
}

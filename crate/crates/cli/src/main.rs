use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use henon_core::Precision;
use henon_lab::config::{self, Overrides};
use henon_lab::record::{ErrorRecord, ExperimentRecord, Status, SCHEMA_VERSION};
use henon_lab::run::{execute, Command};

#[derive(Parser)]
#[command(name = "henon-lab", version, about = "Numerical experiments on complex Hénon maps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Periodic-orbit census with saddle exponent averages.
    Census(RunArgs),
    /// Green-normalized unstable slice of a saddle and its boundary geometry.
    Slice(RunArgs),
    /// Transverse homoclinic points of a saddle.
    Homoclinic(RunArgs),
    /// Multiplier asymptotics of orbits shadowing a homoclinic excursion.
    Shadow(RunArgs),
    /// Exponent estimators, equidistribution statistics and the gap report.
    Lyapunov(RunArgs),
    /// Escape-time image of an affine slice.
    Render(RunArgs),
    /// Checks a configuration and prints every finding as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Validate { config } => return validate(&config),
        Cmd::Census(a) => (Command::Census, a),
        Cmd::Slice(a) => (Command::Slice, a),
        Cmd::Homoclinic(a) => (Command::Homoclinic, a),
        Cmd::Shadow(a) => (Command::Shadow, a),
        Cmd::Lyapunov(a) => (Command::Lyapunov, a),
        Cmd::Render(a) => (Command::Render, a),
    };
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        threads: args.threads,
        precision: args.precision.map(|p| match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        }),
    };
    let v = match config::load(&args.config) {
        Ok(v) => v,
        Err(e) => return fail(cmd, args.out.as_deref(), e.kind(), &e.to_string(), Vec::new()),
    };
    let warnings: Vec<String> = v.warnings().map(|d| d.to_string()).collect();
    let Some(mut cfg) = v.config.clone().filter(|_| v.is_valid()) else {
        let errs: Vec<String> = v.errors().map(|d| d.to_string()).collect();
        return fail(cmd, args.out.as_deref(), "invalid_config", &errs.join("; "), warnings);
    };
    overrides.apply(&mut cfg);
    if cfg.threads == Some(0) {
        return fail(cmd, args.out.as_deref(), "invalid_config", "error: threads: must be at least 1", warnings);
    }
    for w in &warnings {
        eprintln!("{w}");
    }
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cmd.name(), &cfg.hash()[..12])));
    let record = execute(cmd, &cfg, &out, &warnings);
    eprintln!("{}: {:?} ({})", cmd.name(), record.status, out.display());
    if let Some(e) = &record.error {
        eprintln!("{}", serde_json::to_string(e).expect("error serializes"));
    }
    ExitCode::from(record.status.exit_code() as u8)
}

fn validate(path: &std::path::Path) -> ExitCode {
    match config::load(path) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v.diagnostics).expect("diagnostics serialize"));
            if v.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let err = ErrorRecord {
                kind: e.kind().into(),
                message: e.to_string(),
            };
            println!("{}", serde_json::to_string_pretty(&err).expect("error serializes"));
            ExitCode::from(1)
        }
    }
}

/// Writes a failed record when an output directory is known and reports the error on stderr.
fn fail(cmd: Command, out: Option<&std::path::Path>, kind: &str, message: &str, warnings: Vec<String>) -> ExitCode {
    let now = chrono::Utc::now().to_rfc3339();
    let record = ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        config_hash: String::new(),
        seed: 0,
        precision: Precision::Double,
        threads: 0,
        started_at: now.clone(),
        finished_at: now,
        status: Status::Failed,
        artifacts: Vec::new(),
        summary: serde_json::Value::Null,
        warnings,
        notes: Vec::new(),
        error: Some(ErrorRecord {
            kind: kind.into(),
            message: message.into(),
        }),
    };
    if let Some(dir) = out {
        let _ = record.write(dir);
    }
    eprintln!("{}", serde_json::to_string(&record.error).expect("error serializes"));
    ExitCode::from(Status::Failed.exit_code() as u8)
}

//! The `lfvc` command line: a TOML scenario in, a JSON report (`schema: 1`)
//! and CSV diagnostics out.
//!
//! Every flag can also be set from the environment with the `LFVC_` prefix
//! (`LFVC_SCENARIO`, `LFVC_OUT`, `LFVC_THREADS`, `LFVC_SEED`,
//! `LFVC_RESOLUTION_SCALE`); flags win over the environment.
//!
//! Exit status: 0 when every verdict is `PASS` or `CONDITIONAL_PASS`, 1 on
//! `FAIL` or `WARNING`, 2 on configuration errors, 3 on numerical aborts.

mod run;
mod scenario;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use run::{execute, Outcome, Settings, SCHEMA_VERSION};
pub use scenario::{Checks, Numerics, OutputOptions, Probe, Scenario, ValidateOptions};
pub use validate::{validate_model, Homogeneity, ModelValidation};

use crate::error::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

const DEFAULT_OUT: &str = "lfvc-out";

#[derive(Debug, Parser)]
#[command(name = "lfvc", version, about = "Lorentz-Finsler volume comparison checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true, env = "LFVC_SCENARIO")]
    pub scenario: Option<PathBuf>,
    /// Output directory; default: `[output] dir` of the scenario, else `lfvc-out`.
    #[arg(long, global = true, env = "LFVC_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = "LFVC_THREADS")]
    pub threads: Option<usize>,
    /// Seed of the random sweeps in `validate-model`.
    #[arg(long, global = true, env = "LFVC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Multiplies the direction quadrature node counts.
    #[arg(long, global = true, env = "LFVC_RESOLUTION_SCALE", default_value_t = 1.0)]
    pub resolution_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Signature, orientation and homogeneity sweeps.
    ValidateModel,
    /// Ricci, flag and weighted Ricci curvature along the probe geodesic.
    Curvature,
    /// The probe geodesic and its Lagrangian.
    Geodesic,
    /// det A, λ, h and f along the probe geodesic.
    Jacobi,
    /// Bishop-Gromov comparison for finite N.
    Bg,
    /// Günther comparison.
    Gunther,
    /// Bishop-Gromov comparison for N = ∞.
    BgInf,
    /// Ball growth bound.
    Ball,
    /// Model validation and every check listed in the scenario.
    All,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn output_dir(cli: &Cli, scenario_path: &Path, sc: &Scenario) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    match &sc.output.dir {
        Some(dir) if dir.is_relative() => scenario_path.parent().unwrap_or(Path::new(".")).join(dir),
        Some(dir) => dir.clone(),
        None => PathBuf::from(DEFAULT_OUT),
    }
}

fn write_outputs(dir: &Path, name: &str, outcome: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&outcome.document).expect("report serializes");
    json.push('\n');
    std::fs::write(dir.join(format!("{name}.json")), json)?;
    for (file, text) in &outcome.csv {
        std::fs::write(dir.join(file), text)?;
    }
    Ok(())
}

impl Command {
    /// Name of the subcommand, also the stem of its report file.
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateModel => "validate-model",
            Command::Curvature => "curvature",
            Command::Geodesic => "geodesic",
            Command::Jacobi => "jacobi",
            Command::Bg => "bg",
            Command::Gunther => "gunther",
            Command::BgInf => "bg-inf",
            Command::Ball => "ball",
            Command::All => "all",
        }
    }
}

/// Run a parsed command line and return the process exit status.
pub fn main_with(cli: Cli) -> ExitCode {
    let Some(path) = cli.scenario.clone() else {
        return config_error("no scenario given (use --scenario or LFVC_SCENARIO)");
    };
    let sc = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            return config_error("--threads must be at least 1");
        }
        pool = pool.num_threads(k);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return config_error(format!("cannot start worker pool: {e}")),
    };
    let settings = Settings {
        seed: cli.seed,
        resolution_scale: cli.resolution_scale,
    };
    let outcome = match pool.install(|| execute(cli.command, &sc, &settings)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let dir = output_dir(&cli, &path, &sc);
    if let Err(e) = write_outputs(&dir, cli.command.name(), &outcome) {
        return config_error(format!("cannot write to {}: {e}", dir.display()));
    }
    for line in &outcome.summary {
        println!("{}", line.trim_end());
    }
    ExitCode::from(if outcome.verdict.is_ok() { EXIT_OK } else { EXIT_FAIL })
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

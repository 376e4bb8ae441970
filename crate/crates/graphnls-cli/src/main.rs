//! `graphnls` — reproducible experiment runner for the star-graph NLS
//! laboratory.
//!
//! Every run resolves a flat `key=value` config (file plus `--set`
//! overrides), computes with the library crate, and leaves a self-contained
//! artifact directory: `record.json` with the full resolved config, a
//! provenance hash, and every scalar output; CSV series for profiles and
//! trajectories; and raw two-column `.dat` files ready for plotting.
//! Identical configs (and seeds) reproduce artifacts bit for bit, except the
//! record's timestamp field, which the hash excludes.

mod artifacts;
mod commands;
mod compare;
mod config;
mod record;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, Config};

/// Errors carry their exit class: 2 validation, 3 solver, 1 anything else.
/// A run aborted by the blow-up guard is not an error — it writes its
/// artifacts and exits 4 through the normal path.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn from_lib(e: graphnls::Error) -> Self {
        use graphnls::Error::*;
        match &e {
            InvalidParameter(_)
            | GridMismatch
            | UnsupportedPotential(_)
            | TabulatedData(_)
            | OmegaBelowSpectrum { .. } => CliError::Validation(e.to_string()),
            NonConvergence { .. }
            | FixedPointStalled { .. }
            | SingularMatrix { .. }
            | BlowUpGuard { .. } => CliError::Solver(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Solver(msg) | CliError::Io(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

const AFTER_HELP: &str = "Environment:\n  \
    GRAPHNLS_OUT    artifact root for runs without an explicit output_dir \
    (default ./graphnls-out)\n\n\
    Exit codes: 0 success, 1 comparison found differences, 2 validation \
    failure, 3 solver failure, 4 run aborted by the blow-up guard (artifacts \
    still written).";

#[derive(Parser)]
#[command(
    name = "graphnls",
    version,
    about = "Star-graph NLS laboratory: spectra, standing waves, and instability experiments",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat key=value config file; defaults cover anything unset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set omega=9 (repeatable, wins over the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// First record.json.
    record_a: PathBuf,
    /// Second record.json (must come from the same command).
    record_b: PathBuf,
    /// Per-field absolute tolerance, e.g. --tol energy=1e-9 (repeatable).
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
    /// Tolerance for fields without an explicit --tol.
    #[arg(long, default_value_t = 0.0)]
    default_tol: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lowest eigenpair of the linear operator (frequency threshold omega0).
    Spectrum(RunArgs),
    /// Converge the standing-wave profile and report its functionals.
    GroundState(RunArgs),
    /// Coupling threshold for a negative bound state of the free operator.
    GammaStar(RunArgs),
    /// Second derivative of the action along the width family, three routes.
    Criterion(RunArgs),
    /// Scan frequencies for the sign change of the slope criterion.
    OmegaStarScan(RunArgs),
    /// Integrate the flow from a scaled profile and monitor conservation.
    Evolve(RunArgs),
    /// Check the virial identity along a run, two difference routes.
    VirialCheck(RunArgs),
    /// Perturb a profile and watch for the first exit from the orbital tube.
    Instability(RunArgs),
    /// Edge-identical reduction: one stored edge with coefficient gamma/N.
    SymmetricMode(RunArgs),
    /// Field-wise diff of two result records under per-field tolerances.
    Compare(CompareArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.cmd {
        Cmd::Spectrum(a) => run_experiment(CommandKind::Spectrum, a),
        Cmd::GroundState(a) => run_experiment(CommandKind::GroundState, a),
        Cmd::GammaStar(a) => run_experiment(CommandKind::GammaStar, a),
        Cmd::Criterion(a) => run_experiment(CommandKind::Criterion, a),
        Cmd::OmegaStarScan(a) => run_experiment(CommandKind::OmegaStarScan, a),
        Cmd::Evolve(a) => run_experiment(CommandKind::Evolve, a),
        Cmd::VirialCheck(a) => run_experiment(CommandKind::VirialCheck, a),
        Cmd::Instability(a) => run_experiment(CommandKind::Instability, a),
        Cmd::SymmetricMode(a) => run_experiment(CommandKind::SymmetricMode, a),
        Cmd::Compare(a) => run_compare(a),
    }
}

/// Explicit `output_dir` wins; otherwise runs land under the environment
/// root (or ./graphnls-out) in a directory named by command and config hash,
/// so re-running a config overwrites its own artifacts and nothing else's.
fn run_dir(cfg: &Config) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    let root = std::env::var_os("GRAPHNLS_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("graphnls-out"));
    root.join(format!("{}-{}", cfg.command.name(), &cfg.hash_hex()[..8]))
}

fn run_experiment(kind: CommandKind, args: RunArgs) -> Result<u8, CliError> {
    let cfg = Config::resolve(kind, args.config.as_deref(), &args.set)?;
    let dir = run_dir(&cfg);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;

    match commands::run(&cfg, &dir) {
        Ok(out) => {
            record::write_record(
                &dir,
                &cfg,
                out.results,
                out.diagnostics,
                &out.artifacts,
                out.error_note.as_deref(),
            )?;
            println!("record: {}", dir.join("record.json").display());
            if let Some(note) = &out.error_note {
                eprintln!("{note} (artifacts written)");
            }
            Ok(out.exit as u8)
        }
        Err(e) => {
            // A failed run still leaves its provenance behind.
            let _ = record::write_record(
                &dir,
                &cfg,
                serde_json::Map::new(),
                serde_json::Map::new(),
                &[],
                Some(&e.to_string()),
            );
            Err(e)
        }
    }
}

fn run_compare(args: CompareArgs) -> Result<u8, CliError> {
    let mut tols = BTreeMap::new();
    for pair in &args.tol {
        let Some((key, raw)) = pair.split_once('=') else {
            return Err(CliError::Validation(format!(
                "--tol expects key=value, got `{pair}`"
            )));
        };
        let value: f64 = raw.trim().parse().map_err(|_| {
            CliError::Validation(format!("--tol {key}: expected a number, got `{raw}`"))
        })?;
        tols.insert(key.trim().to_string(), value);
    }

    let report = compare::compare(&args.record_a, &args.record_b, &tols, args.default_tol)?;
    if report.lines.is_empty() {
        println!("records agree");
    } else {
        for line in &report.lines {
            println!("{line}");
        }
    }
    Ok(if report.failures > 0 { 1 } else { 0 })
}

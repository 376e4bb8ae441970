//! Flat `key=value` experiment configuration.
//!
//! The on-disk format is plain text: one `key = value` per line, `#` starts a
//! comment, keys use dotted namespaces (`potential.kind`, `evolution.dt`).
//! Every key has a default, so a config file only states what differs from
//! it.  `--set key=value` arguments overlay the file.  The fully resolved
//! configuration (defaults included) is embedded in every result record and
//! hashed for provenance; the hash excludes `output_dir`, which moves
//! artifacts around without changing what was computed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use graphnls::{Potential, Scheme, DEFAULT_DELTA_LAMBDA};
use sha2::{Digest, Sha256};

use crate::CliError;

/// The experiment a run config drives.  Mirrors the CLI subcommand names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Spectrum,
    GroundState,
    GammaStar,
    Criterion,
    OmegaStarScan,
    Evolve,
    VirialCheck,
    Instability,
    SymmetricMode,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::GroundState => "ground-state",
            CommandKind::GammaStar => "gamma-star",
            CommandKind::Criterion => "criterion",
            CommandKind::OmegaStarScan => "omega-star-scan",
            CommandKind::Evolve => "evolve",
            CommandKind::VirialCheck => "virial-check",
            CommandKind::Instability => "instability",
            CommandKind::SymmetricMode => "symmetric-mode",
        }
    }
}

/// How the initial state of an instability run is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Width-family scaling of the converged profile plus a smooth cutoff.
    Scaling,
    /// Seeded multiplicative complex noise on every node value.
    Noise,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Scaling => "scaling",
            PerturbationKind::Noise => "noise",
        }
    }
}

/// Fully resolved run configuration: defaults overlaid with the file and
/// `--set` pairs, validated against the solver preconditions that can be
/// checked before any compute.
#[derive(Debug, Clone)]
pub struct Config {
    pub command: CommandKind,
    pub n_edges: usize,
    pub edge_length: f64,
    pub cells_per_edge: usize,
    pub gamma: f64,
    pub omega: f64,
    pub p: f64,
    pub potential_kind: String,
    pub potential_beta: f64,
    pub potential_alpha: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub criterion_delta_lambda: f64,
    pub scan_omega_lo: f64,
    pub scan_omega_hi: f64,
    pub scan_n: usize,
    pub scan_tol: f64,
    pub evolution_dt: f64,
    pub evolution_t_final: f64,
    pub evolution_scheme: String,
    pub evolution_fixedpoint_tol: f64,
    pub evolution_fixedpoint_max_iter: usize,
    pub evolution_monitor_stride: usize,
    pub evolution_allow_large_dt: bool,
    pub evolution_blowup_factor: f64,
    pub evolve_amplitude: f64,
    pub perturbation_kind: PerturbationKind,
    pub perturbation_lambda: f64,
    pub perturbation_cutoff_radius: f64,
    pub perturbation_noise_eps: f64,
    pub tube_eps: f64,
    pub output_dir: Option<String>,
    pub seed: u64,
}

fn invalid(key: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("configuration key `{key}`: {detail}"))
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, CliError> {
    raw.parse::<f64>()
        .map_err(|_| invalid(key, format!("expected a number, got `{raw}`")))
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, CliError> {
    raw.parse::<usize>()
        .map_err(|_| invalid(key, format!("expected a non-negative integer, got `{raw}`")))
}

fn parse_u64(key: &str, raw: &str) -> Result<u64, CliError> {
    raw.parse::<u64>()
        .map_err(|_| invalid(key, format!("expected a non-negative integer, got `{raw}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, format!("expected true or false, got `{raw}`"))),
    }
}

/// Parses one `key=value` file; later occurrences of a key are rejected so a
/// silently shadowed setting cannot slip through a long config.
fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Validation(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(CliError::Validation(format!(
                "{}:{}: duplicate configuration key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Splits a `--set key=value` argument.
fn parse_set(arg: &str) -> Result<(String, String), CliError> {
    let Some((key, value)) = arg.split_once('=') else {
        return Err(CliError::Validation(format!(
            "--set expects key=value, got `{arg}`"
        )));
    };
    Ok((key.trim().to_string(), value.trim().to_string()))
}

impl Config {
    /// Defaults describe a small cubic three-edge model with no potential;
    /// they exist so a config file only has to state what an experiment
    /// actually varies.
    fn defaults(command: CommandKind) -> Self {
        Config {
            command,
            n_edges: 3,
            edge_length: 20.0,
            cells_per_edge: 2000,
            gamma: 2.0,
            omega: 4.0,
            p: 3.0,
            potential_kind: "zero".to_string(),
            potential_beta: 1.0,
            potential_alpha: 0.5,
            solver_tol: 1e-8,
            solver_max_iter: 2000,
            eigen_tol: 1e-10,
            eigen_max_iter: 500,
            criterion_delta_lambda: DEFAULT_DELTA_LAMBDA,
            scan_omega_lo: 0.0,
            scan_omega_hi: 0.0,
            scan_n: 9,
            scan_tol: 1e-3,
            evolution_dt: 1e-3,
            evolution_t_final: 1.0,
            evolution_scheme: "fixedpoint".to_string(),
            evolution_fixedpoint_tol: 1e-12,
            evolution_fixedpoint_max_iter: 50,
            evolution_monitor_stride: 1,
            evolution_allow_large_dt: false,
            evolution_blowup_factor: 1e6,
            evolve_amplitude: 1.0,
            perturbation_kind: PerturbationKind::Scaling,
            perturbation_lambda: 1.01,
            perturbation_cutoff_radius: 0.0, // resolved to edge_length / 4 when unset
            perturbation_noise_eps: 0.01,
            tube_eps: 0.05,
            output_dir: None,
            seed: 0,
        }
    }

    /// Resolves the configuration for `command` from an optional file plus
    /// `--set` overrides, then validates it.
    pub fn resolve(
        command: CommandKind,
        file: Option<&Path>,
        sets: &[String],
    ) -> Result<Config, CliError> {
        let mut map = match file {
            Some(path) => parse_file(path)?,
            None => BTreeMap::new(),
        };
        for arg in sets {
            let (key, value) = parse_set(arg)?;
            map.insert(key, value);
        }

        let mut cfg = Config::defaults(command);
        let mut cutoff_explicit = false;
        for (key, raw) in &map {
            let raw = raw.as_str();
            match key.as_str() {
                "command" => {
                    if raw != command.name() {
                        return Err(invalid(
                            "command",
                            format!(
                                "config file says `{raw}` but the subcommand is `{}`",
                                command.name()
                            ),
                        ));
                    }
                }
                "n_edges" => cfg.n_edges = parse_usize(key, raw)?,
                "edge_length" => cfg.edge_length = parse_f64(key, raw)?,
                "cells_per_edge" => cfg.cells_per_edge = parse_usize(key, raw)?,
                "gamma" => cfg.gamma = parse_f64(key, raw)?,
                "omega" => cfg.omega = parse_f64(key, raw)?,
                "p" => cfg.p = parse_f64(key, raw)?,
                "potential.kind" => cfg.potential_kind = raw.to_string(),
                "potential.beta" => cfg.potential_beta = parse_f64(key, raw)?,
                "potential.alpha" => cfg.potential_alpha = parse_f64(key, raw)?,
                "solver.tol" => cfg.solver_tol = parse_f64(key, raw)?,
                "solver.max_iter" => cfg.solver_max_iter = parse_usize(key, raw)?,
                "eigen.tol" => cfg.eigen_tol = parse_f64(key, raw)?,
                "eigen.max_iter" => cfg.eigen_max_iter = parse_usize(key, raw)?,
                "criterion.delta_lambda" => cfg.criterion_delta_lambda = parse_f64(key, raw)?,
                "scan.omega_lo" => cfg.scan_omega_lo = parse_f64(key, raw)?,
                "scan.omega_hi" => cfg.scan_omega_hi = parse_f64(key, raw)?,
                "scan.n" => cfg.scan_n = parse_usize(key, raw)?,
                "scan.tol" => cfg.scan_tol = parse_f64(key, raw)?,
                "evolution.dt" => cfg.evolution_dt = parse_f64(key, raw)?,
                "evolution.t_final" => cfg.evolution_t_final = parse_f64(key, raw)?,
                "evolution.scheme" => cfg.evolution_scheme = raw.to_string(),
                "evolution.fixedpoint_tol" => cfg.evolution_fixedpoint_tol = parse_f64(key, raw)?,
                "evolution.fixedpoint_max_iter" => {
                    cfg.evolution_fixedpoint_max_iter = parse_usize(key, raw)?
                }
                "evolution.monitor_stride" => {
                    cfg.evolution_monitor_stride = parse_usize(key, raw)?
                }
                "evolution.allow_large_dt" => {
                    cfg.evolution_allow_large_dt = parse_bool(key, raw)?
                }
                "evolution.blowup_factor" => cfg.evolution_blowup_factor = parse_f64(key, raw)?,
                "evolve.amplitude" => cfg.evolve_amplitude = parse_f64(key, raw)?,
                "perturbation.kind" => {
                    cfg.perturbation_kind = match raw {
                        "scaling" => PerturbationKind::Scaling,
                        "noise" => PerturbationKind::Noise,
                        _ => {
                            return Err(invalid(
                                key,
                                format!("expected scaling or noise, got `{raw}`"),
                            ))
                        }
                    }
                }
                "perturbation.lambda" => cfg.perturbation_lambda = parse_f64(key, raw)?,
                "perturbation.cutoff_radius" => {
                    cfg.perturbation_cutoff_radius = parse_f64(key, raw)?;
                    cutoff_explicit = true;
                }
                "perturbation.noise_eps" => cfg.perturbation_noise_eps = parse_f64(key, raw)?,
                "tube.eps" => cfg.tube_eps = parse_f64(key, raw)?,
                "output_dir" => cfg.output_dir = Some(raw.to_string()),
                "seed" => cfg.seed = parse_u64(key, raw)?,
                _ => {
                    return Err(CliError::Validation(format!(
                        "unknown configuration key `{key}`"
                    )))
                }
            }
        }
        if !cutoff_explicit {
            cfg.perturbation_cutoff_radius = cfg.edge_length / 4.0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Positivity/range checks that name the offending key.  Anything that
    /// needs assembled data (spectral positivity, scaling exponents) is left
    /// to the library, whose parameter errors report with the same exit
    /// class.
    fn validate(&self) -> Result<(), CliError> {
        if self.n_edges < 1 {
            return Err(invalid("n_edges", "need at least one edge"));
        }
        if !(self.edge_length > 0.0) || !self.edge_length.is_finite() {
            return Err(invalid("edge_length", "must be positive and finite"));
        }
        if self.cells_per_edge < 2 {
            return Err(invalid("cells_per_edge", "need at least two cells"));
        }
        if !self.gamma.is_finite() {
            return Err(invalid("gamma", "must be finite"));
        }
        if !self.omega.is_finite() {
            return Err(invalid("omega", "must be finite"));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(invalid("p", "must satisfy p > 1"));
        }
        match self.potential_kind.as_str() {
            "zero" | "inverse-power" => {}
            other => {
                return Err(invalid(
                    "potential.kind",
                    format!("expected zero or inverse-power, got `{other}`"),
                ))
            }
        }
        if !(self.solver_tol > 0.0) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if self.solver_max_iter < 1 {
            return Err(invalid("solver.max_iter", "need at least one iteration"));
        }
        if !(self.eigen_tol > 0.0) {
            return Err(invalid("eigen.tol", "must be positive"));
        }
        if self.eigen_max_iter < 1 {
            return Err(invalid("eigen.max_iter", "need at least one iteration"));
        }
        if !(self.criterion_delta_lambda > 0.0) {
            return Err(invalid("criterion.delta_lambda", "must be positive"));
        }
        if self.command == CommandKind::OmegaStarScan {
            if !(self.scan_omega_lo > 0.0) {
                return Err(invalid("scan.omega_lo", "must be positive"));
            }
            if !(self.scan_omega_hi > self.scan_omega_lo) {
                return Err(invalid("scan.omega_hi", "must exceed scan.omega_lo"));
            }
            if self.scan_n < 2 {
                return Err(invalid("scan.n", "need at least two scan points"));
            }
            if !(self.scan_tol > 0.0) {
                return Err(invalid("scan.tol", "must be positive"));
            }
        }
        if !(self.evolution_dt > 0.0) {
            return Err(invalid("evolution.dt", "must be positive"));
        }
        if !(self.evolution_t_final > 0.0) {
            return Err(invalid("evolution.t_final", "must be positive"));
        }
        match self.evolution_scheme.as_str() {
            "fixedpoint" | "relaxation" => {}
            other => {
                return Err(invalid(
                    "evolution.scheme",
                    format!("expected fixedpoint or relaxation, got `{other}`"),
                ))
            }
        }
        if !(self.evolution_fixedpoint_tol > 0.0) {
            return Err(invalid("evolution.fixedpoint_tol", "must be positive"));
        }
        if self.evolution_fixedpoint_max_iter < 1 {
            return Err(invalid(
                "evolution.fixedpoint_max_iter",
                "need at least one iteration",
            ));
        }
        if self.evolution_monitor_stride < 1 {
            return Err(invalid("evolution.monitor_stride", "must be at least 1"));
        }
        if !(self.evolution_blowup_factor > 1.0) {
            return Err(invalid("evolution.blowup_factor", "must exceed 1"));
        }
        if !(self.evolve_amplitude > 0.0) || !self.evolve_amplitude.is_finite() {
            return Err(invalid("evolve.amplitude", "must be positive and finite"));
        }
        if !(self.perturbation_lambda > 0.0) || !self.perturbation_lambda.is_finite() {
            return Err(invalid("perturbation.lambda", "must be positive and finite"));
        }
        if !(self.perturbation_cutoff_radius > 0.0) {
            return Err(invalid("perturbation.cutoff_radius", "must be positive"));
        }
        if !(self.perturbation_noise_eps >= 0.0) {
            return Err(invalid("perturbation.noise_eps", "must be non-negative"));
        }
        if !(self.tube_eps > 0.0) {
            return Err(invalid("tube.eps", "must be positive"));
        }
        if self.command == CommandKind::GammaStar && self.potential_kind != "zero" {
            return Err(invalid(
                "potential.kind",
                "the coupling threshold is a free-potential quantity; use potential.kind = zero",
            ));
        }
        Ok(())
    }

    /// Builds the potential this config names.
    pub fn potential(&self) -> Result<Potential, CliError> {
        match self.potential_kind.as_str() {
            "zero" => Ok(Potential::Zero),
            "inverse-power" => Potential::inverse_power(self.potential_beta, self.potential_alpha)
                .map_err(CliError::from_lib),
            other => Err(invalid("potential.kind", format!("unknown kind `{other}`"))),
        }
    }

    /// Time-integration scheme named by the config.
    pub fn scheme(&self) -> Scheme {
        match self.evolution_scheme.as_str() {
            "relaxation" => Scheme::CrankNicolsonRelaxation,
            _ => Scheme::CrankNicolsonFixedPoint,
        }
    }

    /// Every key with its resolved value, sorted, as `key=value` text lines.
    /// This is the byte stream behind the provenance hash, so the formatting
    /// must stay deterministic: floats print through Rust's shortest
    /// round-trip formatting.
    pub fn canonical_lines(&self) -> Vec<(String, String)> {
        let mut lines: Vec<(String, String)> = vec![
            ("cells_per_edge".into(), self.cells_per_edge.to_string()),
            ("command".into(), self.command.name().into()),
            (
                "criterion.delta_lambda".into(),
                self.criterion_delta_lambda.to_string(),
            ),
            ("edge_length".into(), self.edge_length.to_string()),
            ("eigen.max_iter".into(), self.eigen_max_iter.to_string()),
            ("eigen.tol".into(), self.eigen_tol.to_string()),
            (
                "evolution.allow_large_dt".into(),
                self.evolution_allow_large_dt.to_string(),
            ),
            (
                "evolution.blowup_factor".into(),
                self.evolution_blowup_factor.to_string(),
            ),
            ("evolution.dt".into(), self.evolution_dt.to_string()),
            (
                "evolution.fixedpoint_max_iter".into(),
                self.evolution_fixedpoint_max_iter.to_string(),
            ),
            (
                "evolution.fixedpoint_tol".into(),
                self.evolution_fixedpoint_tol.to_string(),
            ),
            (
                "evolution.monitor_stride".into(),
                self.evolution_monitor_stride.to_string(),
            ),
            ("evolution.scheme".into(), self.evolution_scheme.clone()),
            (
                "evolution.t_final".into(),
                self.evolution_t_final.to_string(),
            ),
            ("evolve.amplitude".into(), self.evolve_amplitude.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("n_edges".into(), self.n_edges.to_string()),
            ("omega".into(), self.omega.to_string()),
            ("p".into(), self.p.to_string()),
            (
                "perturbation.cutoff_radius".into(),
                self.perturbation_cutoff_radius.to_string(),
            ),
            (
                "perturbation.kind".into(),
                self.perturbation_kind.name().into(),
            ),
            (
                "perturbation.lambda".into(),
                self.perturbation_lambda.to_string(),
            ),
            (
                "perturbation.noise_eps".into(),
                self.perturbation_noise_eps.to_string(),
            ),
            ("potential.alpha".into(), self.potential_alpha.to_string()),
            ("potential.beta".into(), self.potential_beta.to_string()),
            ("potential.kind".into(), self.potential_kind.clone()),
            ("scan.n".into(), self.scan_n.to_string()),
            ("scan.omega_hi".into(), self.scan_omega_hi.to_string()),
            ("scan.omega_lo".into(), self.scan_omega_lo.to_string()),
            ("scan.tol".into(), self.scan_tol.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("solver.max_iter".into(), self.solver_max_iter.to_string()),
            ("solver.tol".into(), self.solver_tol.to_string()),
            ("tube.eps".into(), self.tube_eps.to_string()),
        ];
        if let Some(dir) = &self.output_dir {
            lines.push(("output_dir".into(), dir.clone()));
        }
        lines.sort();
        lines
    }

    /// SHA-256 over the canonical lines, `output_dir` excluded: two runs that
    /// compute the same thing into different places share a hash.
    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for (key, value) in self.canonical_lines() {
            if key == "output_dir" {
                continue;
            }
            hasher.update(key.as_bytes());
            hasher.update(b"=");
            hasher.update(value.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The resolved config as a JSON object with typed values, for embedding
    /// in result records.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::{Map, Value};
        let mut obj = Map::new();
        let f = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        obj.insert("command".into(), Value::String(self.command.name().into()));
        obj.insert("n_edges".into(), Value::from(self.n_edges as u64));
        obj.insert("edge_length".into(), f(self.edge_length));
        obj.insert(
            "cells_per_edge".into(),
            Value::from(self.cells_per_edge as u64),
        );
        obj.insert("gamma".into(), f(self.gamma));
        obj.insert("omega".into(), f(self.omega));
        obj.insert("p".into(), f(self.p));
        obj.insert(
            "potential.kind".into(),
            Value::String(self.potential_kind.clone()),
        );
        obj.insert("potential.beta".into(), f(self.potential_beta));
        obj.insert("potential.alpha".into(), f(self.potential_alpha));
        obj.insert("solver.tol".into(), f(self.solver_tol));
        obj.insert(
            "solver.max_iter".into(),
            Value::from(self.solver_max_iter as u64),
        );
        obj.insert("eigen.tol".into(), f(self.eigen_tol));
        obj.insert(
            "eigen.max_iter".into(),
            Value::from(self.eigen_max_iter as u64),
        );
        obj.insert(
            "criterion.delta_lambda".into(),
            f(self.criterion_delta_lambda),
        );
        obj.insert("scan.omega_lo".into(), f(self.scan_omega_lo));
        obj.insert("scan.omega_hi".into(), f(self.scan_omega_hi));
        obj.insert("scan.n".into(), Value::from(self.scan_n as u64));
        obj.insert("scan.tol".into(), f(self.scan_tol));
        obj.insert("evolution.dt".into(), f(self.evolution_dt));
        obj.insert("evolution.t_final".into(), f(self.evolution_t_final));
        obj.insert(
            "evolution.scheme".into(),
            Value::String(self.evolution_scheme.clone()),
        );
        obj.insert(
            "evolution.fixedpoint_tol".into(),
            f(self.evolution_fixedpoint_tol),
        );
        obj.insert(
            "evolution.fixedpoint_max_iter".into(),
            Value::from(self.evolution_fixedpoint_max_iter as u64),
        );
        obj.insert(
            "evolution.monitor_stride".into(),
            Value::from(self.evolution_monitor_stride as u64),
        );
        obj.insert(
            "evolution.allow_large_dt".into(),
            Value::Bool(self.evolution_allow_large_dt),
        );
        obj.insert(
            "evolution.blowup_factor".into(),
            f(self.evolution_blowup_factor),
        );
        obj.insert("evolve.amplitude".into(), f(self.evolve_amplitude));
        obj.insert(
            "perturbation.kind".into(),
            Value::String(self.perturbation_kind.name().into()),
        );
        obj.insert("perturbation.lambda".into(), f(self.perturbation_lambda));
        obj.insert(
            "perturbation.cutoff_radius".into(),
            f(self.perturbation_cutoff_radius),
        );
        obj.insert(
            "perturbation.noise_eps".into(),
            f(self.perturbation_noise_eps),
        );
        obj.insert("tube.eps".into(), f(self.tube_eps));
        if let Some(dir) = &self.output_dir {
            obj.insert("output_dir".into(), Value::String(dir.clone()));
        }
        obj.insert("seed".into(), Value::from(self.seed));
        Value::Object(obj)
    }
}

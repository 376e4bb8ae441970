//! One function per subcommand.  Each builds its model from the resolved
//! config, runs the library, writes series artifacts into the run directory,
//! and returns the scalar results plus the exit code.  Runs that end in the
//! blow-up guard or a fixed-point stall still return their artifacts: the
//! abnormal end is data, and only the exit code reports it.

use std::path::Path;

use graphnls::{
    assemble, criterion_report, find_omega_star, gamma_star, ground_eigenpair,
    instability_experiment, solve_ground_state, tube_experiment, EvolutionConfig, EvolveStop,
    GraphFunction, GraphGrid, GroundStateResult, ModelParams, Trajectory,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::artifacts::{write_profile, write_scan, write_trajectory};
use crate::config::{CommandKind, Config, PerturbationKind};
use crate::record::{jf, jof};
use crate::CliError;

/// Everything a finished run hands back to `main` for the record.
pub struct Output {
    pub results: Map<String, Value>,
    pub diagnostics: Map<String, Value>,
    pub artifacts: Vec<String>,
    pub exit: i32,
    pub error_note: Option<String>,
}

impl Output {
    fn new() -> Self {
        Output {
            results: Map::new(),
            diagnostics: Map::new(),
            artifacts: Vec::new(),
            exit: 0,
            error_note: None,
        }
    }
}

pub fn run(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    match cfg.command {
        CommandKind::Spectrum => spectrum(cfg, dir),
        CommandKind::GroundState => ground_state(cfg, dir),
        CommandKind::GammaStar => gamma_star_cmd(cfg),
        CommandKind::Criterion => criterion(cfg, dir),
        CommandKind::OmegaStarScan => omega_star_scan(cfg, dir),
        CommandKind::Evolve => evolve_cmd(cfg, dir),
        CommandKind::VirialCheck => virial_check_cmd(cfg, dir),
        CommandKind::Instability => instability(cfg, dir),
        CommandKind::SymmetricMode => symmetric_mode(cfg, dir),
    }
}

fn build_grid(cfg: &Config) -> Result<GraphGrid, CliError> {
    GraphGrid::new(cfg.n_edges, cfg.edge_length, cfg.cells_per_edge).map_err(CliError::from_lib)
}

fn build_params(cfg: &Config) -> Result<ModelParams, CliError> {
    ModelParams::new(
        build_grid(cfg)?,
        cfg.potential()?,
        cfg.gamma,
        cfg.omega,
        cfg.p,
    )
    .map_err(CliError::from_lib)
}

fn evolution_config(cfg: &Config) -> EvolutionConfig {
    let mut evo = EvolutionConfig::new(cfg.evolution_dt, cfg.evolution_t_final);
    evo.scheme = cfg.scheme();
    evo.fixedpoint_tol = cfg.evolution_fixedpoint_tol;
    evo.fixedpoint_max_iter = cfg.evolution_fixedpoint_max_iter;
    evo.monitor_stride = cfg.evolution_monitor_stride;
    evo.allow_large_dt = cfg.evolution_allow_large_dt;
    evo.blowup_factor = cfg.evolution_blowup_factor;
    evo
}

fn grid_diagnostics(out: &mut Output, grid: &GraphGrid) {
    out.diagnostics.insert("h".into(), jf(grid.spacing()));
    out.diagnostics
        .insert("n_dofs".into(), Value::from(grid.n_dofs() as u64));
}

fn sup_abs(u: &GraphFunction) -> f64 {
    u.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Shared scalar block for every command that converges a standing-wave
/// profile.
fn ground_state_scalars(
    out: &mut Output,
    gs: &GroundStateResult,
    params: &ModelParams,
) -> Result<(), CliError> {
    let phi = &gs.profile;
    out.results.insert("action".into(), jf(gs.action_value));
    out.results.insert("nehari".into(), jf(gs.nehari_value));
    out.results
        .insert("pohozaev".into(), jof(gs.pohozaev_value));
    out.results.insert("criterion".into(), jof(gs.criterion));
    out.results.insert(
        "energy".into(),
        jf(params.energy(phi).map_err(CliError::from_lib)?),
    );
    out.results.insert("charge".into(), jf(phi.norm_l2_sq()));
    out.results
        .insert("vertex_value".into(), jf(phi.vertex_value().re));
    out.results.insert("sup_abs".into(), jf(sup_abs(phi)));
    out.diagnostics
        .insert("iterations".into(), Value::from(gs.iterations as u64));
    out.diagnostics.insert("residual".into(), jf(gs.residual));
    Ok(())
}

fn spectrum(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let grid = build_grid(cfg)?;
    let ham =
        assemble(&grid, &cfg.potential()?, cfg.gamma).map_err(CliError::from_lib)?;
    let sr =
        ground_eigenpair(&ham, cfg.eigen_tol, cfg.eigen_max_iter).map_err(CliError::from_lib)?;

    let mut out = Output::new();
    out.results.insert("omega0".into(), jf(sr.omega0));
    out.results.insert("gap".into(), jf(sr.gap));
    grid_diagnostics(&mut out, &grid);
    out.diagnostics
        .insert("iterations".into(), Value::from(sr.iterations as u64));
    out.diagnostics
        .insert("form_lower_bound".into(), jf(ham.spectral_lower_bound()));
    out.diagnostics.insert(
        "psi0_min".into(),
        jf(sr.psi0.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)),
    );
    out.artifacts = write_profile(dir, "profile", &sr.psi0)?;
    Ok(out)
}

fn ground_state(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let params = build_params(cfg)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;

    let mut out = Output::new();
    ground_state_scalars(&mut out, &gs, &params)?;
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_profile(dir, "profile", &gs.profile)?;
    Ok(out)
}

fn gamma_star_cmd(cfg: &Config) -> Result<Output, CliError> {
    let value = gamma_star(cfg.n_edges, cfg.omega, cfg.p).map_err(CliError::from_lib)?;
    let mut out = Output::new();
    out.results.insert("gamma_star".into(), jf(value));
    Ok(out)
}

fn criterion(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let params = build_params(cfg)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;
    let report = criterion_report(&gs.profile, &params, cfg.criterion_delta_lambda)
        .map_err(CliError::from_lib)?;

    let mut out = Output::new();
    ground_state_scalars(&mut out, &gs, &params)?;
    out.results
        .insert("d2_action_direct".into(), jf(report.direct));
    out.results
        .insert("d2_action_reduced".into(), jf(report.reduced));
    out.results.insert(
        "d2_action_finite_difference".into(),
        jf(report.finite_difference),
    );
    out.results
        .insert("max_discrepancy".into(), jf(report.max_discrepancy));
    out.results
        .insert("delta_lambda".into(), jf(report.delta_lambda));
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_profile(dir, "profile", &gs.profile)?;
    Ok(out)
}

fn omega_star_scan(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let template = build_params(cfg)?;
    let scan = find_omega_star(
        &template,
        (cfg.scan_omega_lo, cfg.scan_omega_hi),
        cfg.scan_n,
        cfg.scan_tol,
    )
    .map_err(CliError::from_lib)?;

    let mut out = Output::new();
    out.results.insert("omega_star".into(), jof(scan.omega_star));
    out.results.insert("rhs".into(), jf(scan.rhs));
    out.results
        .insert("crossings".into(), Value::from(scan.crossings.len() as u64));
    out.diagnostics
        .insert("rows".into(), Value::from(scan.rows.len() as u64));
    out.artifacts = write_scan(dir, &scan)?;
    Ok(out)
}

/// Maps an early-stop reason onto the record fields and the process exit
/// code: the guard means "aborted by growth" (4), a stall means the solver
/// gave up (3), and both still ship their trajectory.
fn apply_stop(out: &mut Output, stop: Option<EvolveStop>) {
    let (label, time, exit) = match stop {
        None => ("completed", None, 0),
        Some(EvolveStop::BlowUp { t, .. }) => ("blowup", Some(t), 4),
        Some(EvolveStop::FixedPointStall { t, .. }) => ("stall", Some(t), 3),
    };
    out.results
        .insert("stop".into(), Value::String(label.into()));
    out.results.insert("stop_time".into(), jof(time));
    out.exit = exit;
    if exit != 0 {
        out.error_note = Some(format!("run ended early: {label}"));
    }
}

fn drift_rel(series: &[f64]) -> f64 {
    let x0 = series.first().copied().unwrap_or(0.0);
    let scale = x0.abs().max(1e-300);
    series
        .iter()
        .map(|x| (x - x0).abs() / scale)
        .fold(0.0, f64::max)
}

fn trajectory_summary(out: &mut Output, traj: &Trajectory) {
    out.results
        .insert("final_time".into(), jf(traj.final_time));
    out.results
        .insert("energy_drift_rel".into(), jf(drift_rel(&traj.energy)));
    out.results
        .insert("charge_drift_rel".into(), jf(drift_rel(&traj.charge)));
    out.results.insert(
        "dist_max".into(),
        jof(traj
            .dist
            .as_ref()
            .map(|d| d.iter().cloned().fold(0.0, f64::max))),
    );
    out.diagnostics
        .insert("samples".into(), Value::from(traj.times.len() as u64));
    out.diagnostics
        .insert("sample_dt".into(), jf(traj.sample_dt));
}

fn evolve_cmd(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let params = build_params(cfg)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;
    let mut u0 = gs.profile.clone();
    u0.scale_by(Complex64::new(cfg.evolve_amplitude, 0.0));

    let evo = evolution_config(cfg);
    let (traj, stop) = graphnls::evolve_monitored(&u0, &params, &evo, Some(&gs.profile))
        .map_err(CliError::from_lib)?;

    let mut out = Output::new();
    trajectory_summary(&mut out, &traj);
    apply_stop(&mut out, stop);
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_trajectory(dir, &traj)?;
    out.artifacts
        .extend(write_profile(dir, "profile_final", &traj.final_state)?);
    out.artifacts
        .extend(write_profile(dir, "profile", &gs.profile)?);
    Ok(out)
}

fn virial_check_cmd(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let params = build_params(cfg)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;
    let mut u0 = gs.profile.clone();
    u0.scale_by(Complex64::new(cfg.evolve_amplitude, 0.0));

    let evo = evolution_config(cfg);
    let (traj, stop) = graphnls::evolve_monitored(&u0, &params, &evo, Some(&gs.profile))
        .map_err(CliError::from_lib)?;
    let report = graphnls::virial_check(&traj).map_err(CliError::from_lib)?;

    let mut out = Output::new();
    out.results.insert(
        "max_mismatch_fprime_route".into(),
        jf(report.max_mismatch_fprime_route),
    );
    out.results.insert(
        "max_mismatch_fsecond_route".into(),
        jf(report.max_mismatch_fsecond_route),
    );
    out.results
        .insert("max_abs_fsecond".into(), jf(report.max_abs_fsecond));
    out.results
        .insert("max_abs_eight_p".into(), jf(report.max_abs_eight_p));
    out.diagnostics
        .insert("samples".into(), Value::from(report.n_samples as u64));
    out.diagnostics
        .insert("sample_dt".into(), jf(report.sample_dt));
    apply_stop(&mut out, stop);
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_trajectory(dir, &traj)?;
    out.artifacts
        .extend(write_profile(dir, "profile", &gs.profile)?);
    Ok(out)
}

/// Multiplicative complex noise on every stored node value, seeded so a run
/// is reproducible.  Multiplicative keeps the perturbation inside the decay
/// envelope of the profile (additive noise would dominate the far tail).
fn noisy_state(phi: &GraphFunction, eps: f64, seed: u64) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u0 = phi.clone();
    for v in u0.values_mut() {
        let re: f64 = rng.random_range(-1.0..=1.0);
        let im: f64 = rng.random_range(-1.0..=1.0);
        *v *= Complex64::new(1.0 + eps * re, eps * im);
    }
    u0
}

fn instability(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let params = build_params(cfg)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;
    let evo = evolution_config(cfg);

    let outcome = match cfg.perturbation_kind {
        PerturbationKind::Scaling => instability_experiment(
            &gs,
            &params,
            cfg.perturbation_lambda,
            cfg.perturbation_cutoff_radius,
            cfg.tube_eps,
            &evo,
        )
        .map_err(CliError::from_lib)?,
        PerturbationKind::Noise => {
            let u0 = noisy_state(&gs.profile, cfg.perturbation_noise_eps, cfg.seed);
            tube_experiment(&u0, &gs.profile, &params, cfg.tube_eps, &evo)
                .map_err(CliError::from_lib)?
        }
    };

    let mut out = Output::new();
    out.results
        .insert("entry_energy_gap".into(), jf(outcome.entry_energy_gap));
    out.results
        .insert("entry_charge_gap".into(), jf(outcome.entry_charge_gap));
    out.results
        .insert("entry_pohozaev".into(), jof(outcome.entry_pohozaev));
    out.results.insert(
        "entry_satisfied".into(),
        Value::Bool(outcome.entry_satisfied),
    );
    out.results
        .insert("tube_radius".into(), jf(outcome.tube_radius));
    out.results
        .insert("initial_distance".into(), jf(outcome.initial_distance));
    out.results.insert("exit_time".into(), jof(outcome.exit_time));
    out.results
        .insert("max_p_before_exit".into(), jof(outcome.max_p_before_exit));
    out.results.insert(
        "max_neg_p_before_exit".into(),
        jof(outcome.max_neg_p_before_exit),
    );
    out.results
        .insert("concave_fraction".into(), jof(outcome.concave_fraction));
    out.results
        .insert("blowup_time".into(), jof(outcome.blowup_time));
    out.results
        .insert("stall_time".into(), jof(outcome.stall_time));

    // Outcome label: a tube exit is the observation the experiment is after,
    // so it wins the label even when the guard tripped later in the run; the
    // exit code still reports the abnormal end.
    let label = if outcome.exit_time.is_some() {
        "exit"
    } else if outcome.blowup_time.is_some() {
        "blowup"
    } else if outcome.stall_time.is_some() {
        "stall"
    } else {
        "no-exit"
    };
    out.results
        .insert("outcome".into(), Value::String(label.into()));
    out.exit = if outcome.blowup_time.is_some() {
        4
    } else if outcome.stall_time.is_some() {
        3
    } else {
        0
    };
    if out.exit != 0 {
        out.error_note = Some(format!(
            "run ended early: {}",
            if outcome.blowup_time.is_some() {
                "blow-up guard"
            } else {
                "fixed-point stall"
            }
        ));
    }

    out.diagnostics.insert(
        "entry_failures".into(),
        Value::Array(
            outcome
                .entry_failures
                .iter()
                .map(|s| Value::String(s.to_string()))
                .collect(),
        ),
    );
    out.diagnostics
        .insert("gs_iterations".into(), Value::from(gs.iterations as u64));
    out.diagnostics.insert("gs_residual".into(), jf(gs.residual));
    trajectory_summary(&mut out, &outcome.trajectory);
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_trajectory(dir, &outcome.trajectory)?;
    out.artifacts
        .extend(write_profile(dir, "profile", &gs.profile)?);
    Ok(out)
}

/// Edge-identical reduction: the same standing-wave problem posed on a single
/// stored edge with the vertex coefficient gamma/N.  Totals over the full
/// graph are N times the per-edge quantities.
fn symmetric_mode(cfg: &Config, dir: &Path) -> Result<Output, CliError> {
    let n = cfg.n_edges as f64;
    let grid =
        GraphGrid::single_edge(cfg.edge_length, cfg.cells_per_edge).map_err(CliError::from_lib)?;
    let params = ModelParams::new(grid, cfg.potential()?, cfg.gamma / n, cfg.omega, cfg.p)
        .map_err(CliError::from_lib)?;
    let gs = solve_ground_state(&params, None, cfg.solver_tol, cfg.solver_max_iter)
        .map_err(CliError::from_lib)?;

    let mut out = Output::new();
    ground_state_scalars(&mut out, &gs, &params)?;
    let edge_charge = gs.profile.norm_l2_sq();
    let edge_energy = params.energy(&gs.profile).map_err(CliError::from_lib)?;
    out.results.insert("charge_total".into(), jf(n * edge_charge));
    out.results.insert("energy_total".into(), jf(n * edge_energy));
    out.results
        .insert("action_total".into(), jf(n * gs.action_value));
    out.results.insert("reduced_gamma".into(), jf(cfg.gamma / n));
    out.results
        .insert("fanout".into(), Value::from(cfg.n_edges as u64));
    grid_diagnostics(&mut out, &params.grid());
    out.artifacts = write_profile(dir, "profile", &gs.profile)?;
    Ok(out)
}

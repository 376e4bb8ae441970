//! Conservative Crank-Nicolson time integration of the focusing flow
//! `i du/dt = H u - |u|^{p-1} u` on the star, with conservation, virial, and
//! tube-exit monitors, plus the cutoff-perturbation instability experiment.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{lambda_scaled, orbital_distance, ModelParams};
use crate::graph::GraphFunction;
use crate::ground_state::GroundStateResult;
use crate::operator;

/// Midpoint treatment of the nonlinear term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Nonlinear midpoint solved by fixed-point iteration each step.
    CrankNicolsonFixedPoint,
    /// Two-stage relaxation: `|u|^{p-1}` carried as a staggered auxiliary
    /// variable, one linear solve per step.
    CrankNicolsonRelaxation,
}

/// Time-integration parameters.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Fixed-point stopping tolerance on the mass-norm increment, relative to
    /// the initial charge scale.
    pub fixedpoint_tol: f64,
    pub fixedpoint_max_iter: usize,
    /// Monitors are sampled every this many steps (plus the initial state).
    pub monitor_stride: usize,
    /// Overrides the dt <= h accuracy guard.
    pub allow_large_dt: bool,
    /// Coefficient of the focusing term; 0 turns the flow linear (test hook).
    pub nonlinearity_coeff: f64,
    /// Abort when the H1 norm exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            scheme: Scheme::CrankNicolsonFixedPoint,
            fixedpoint_tol: 1e-12,
            fixedpoint_max_iter: 50,
            monitor_stride: 1,
            allow_large_dt: false,
            nonlinearity_coeff: 1.0,
            blowup_factor: 1e6,
        }
    }
}

/// Uniformly sampled monitor series of one evolution run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub charge: Vec<f64>,
    /// `f(t) = ||x u||^2`
    pub f: Vec<f64>,
    /// `f'(t)` via the momentum form (4 x the imaginary pairing).
    pub fprime: Vec<f64>,
    /// Virial functional along the run; absent when the potential lacks the
    /// x V'(x) moment.
    pub pohozaev: Option<Vec<f64>>,
    /// Modulated H1 distance to the reference profile, when one is given.
    pub dist: Option<Vec<f64>>,
    /// Minimizing phase against the reference profile.
    pub theta: Option<Vec<f64>>,
    /// Spacing between consecutive monitor samples (dt x stride).
    pub sample_dt: f64,
    pub final_state: GraphFunction,
    pub final_time: f64,
}

/// Why an evolution ended before `t_final`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvolveStop {
    /// The midpoint fixed point stopped contracting (step size too large for
    /// the solution's growth rate).
    FixedPointStall { step: usize, t: f64 },
    /// The H1 norm passed the guard threshold.
    BlowUp { t: f64, factor: f64 },
}

/// Integrates the flow and returns the monitor series.  Errors on fixed-point
/// stall (reduce dt) and when the blow-up guard trips; the guard event is
/// still meaningful to callers that treat growth as evidence, see
/// [`instability_experiment`].
pub fn evolve(
    u0: &GraphFunction,
    params: &ModelParams,
    cfg: &EvolutionConfig,
    reference: Option<&GraphFunction>,
) -> Result<Trajectory> {
    let (traj, stop) = evolve_monitored(u0, params, cfg, reference)?;
    match stop {
        None => Ok(traj),
        Some(EvolveStop::FixedPointStall { step, t }) => Err(Error::FixedPointStalled { step, t }),
        Some(EvolveStop::BlowUp { t, factor }) => Err(Error::BlowUpGuard { t, factor }),
    }
}

fn validate(u0: &GraphFunction, params: &ModelParams, cfg: &EvolutionConfig) -> Result<()> {
    if u0.grid() != params.grid() {
        return Err(Error::GridMismatch);
    }
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {}",
            cfg.dt
        )));
    }
    if !(cfg.t_final >= cfg.dt) {
        return Err(Error::InvalidParameter(format!(
            "final time {} shorter than one step {}",
            cfg.t_final, cfg.dt
        )));
    }
    if cfg.dt > params.grid().spacing() && !cfg.allow_large_dt {
        return Err(Error::InvalidParameter(format!(
            "dt = {} exceeds the grid spacing h = {}; set allow_large_dt to override",
            cfg.dt,
            params.grid().spacing()
        )));
    }
    if !(cfg.fixedpoint_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fixed-point tolerance must be positive, got {}",
            cfg.fixedpoint_tol
        )));
    }
    if cfg.monitor_stride == 0 {
        return Err(Error::InvalidParameter(
            "monitor stride must be at least 1".into(),
        ));
    }
    if !cfg.nonlinearity_coeff.is_finite() {
        return Err(Error::InvalidParameter(
            "nonlinearity coefficient must be finite".into(),
        ));
    }
    if !(cfg.blowup_factor > 1.0) {
        return Err(Error::InvalidParameter(
            "blow-up guard factor must exceed 1".into(),
        ));
    }
    Ok(())
}

/// Like [`evolve`], but an early stop is data rather than an error: the
/// monitor series collected up to the stop is always returned, so callers can
/// still write out a trajectory that ended in the blow-up guard.
pub fn evolve_monitored(
    u0: &GraphFunction,
    params: &ModelParams,
    cfg: &EvolutionConfig,
    reference: Option<&GraphFunction>,
) -> Result<(Trajectory, Option<EvolveStop>)> {
    validate(u0, params, cfg)?;
    if let Some(r) = reference {
        if r.grid() != params.grid() {
            return Err(Error::GridMismatch);
        }
    }
    let grid = params.grid();
    let ham = operator::assemble(&grid, params.potential(), params.gamma())?;
    let k = ham.matrix();
    let mass = ham.mass();
    let n = grid.n_dofs();
    let theta = 0.5 * cfg.dt;
    let p = params.p();
    let coeff = cfg.nonlinearity_coeff;
    let n_steps = ((cfg.t_final / cfg.dt).round() as usize).max(1);
    let with_pohozaev = params.potential().supports_xvprime();

    let mut u: Vec<Complex64> = u0.values().to_vec();
    let q0 = u0.norm_l2_sq();
    let h1_initial = u0.norm_h1_sq().sqrt();
    let fp_tol = cfg.fixedpoint_tol * q0.sqrt().max(1.0);

    let mut traj = Trajectory {
        times: Vec::new(),
        energy: Vec::new(),
        charge: Vec::new(),
        f: Vec::new(),
        fprime: Vec::new(),
        pohozaev: with_pohozaev.then(Vec::new),
        dist: reference.map(|_| Vec::new()),
        theta: reference.map(|_| Vec::new()),
        sample_dt: cfg.dt * cfg.monitor_stride as f64,
        final_state: u0.clone(),
        final_time: 0.0,
    };
    let sample = |traj: &mut Trajectory, t: f64, u: &[Complex64]| -> Result<()> {
        let gu = GraphFunction::from_values(grid, u.to_vec())?;
        traj.times.push(t);
        traj.energy.push(scaled_energy(params, &gu, coeff)?);
        traj.charge.push(gu.norm_l2_sq());
        traj.f.push(gu.x_weighted_norm_sq());
        traj.fprime.push(4.0 * gu.momentum_form());
        if let Some(ps) = traj.pohozaev.as_mut() {
            ps.push(scaled_pohozaev(params, &gu, coeff)?);
        }
        if let Some(r) = reference {
            let (d, th) = orbital_distance(&gu, r)?;
            traj.dist.as_mut().unwrap().push(d);
            traj.theta.as_mut().unwrap().push(th);
        }
        Ok(())
    };
    sample(&mut traj, 0.0, &u)?;

    // fixed-point scheme: the linear system matrix is constant
    let fp_system = k.complexified(mass, theta).ldl()?;
    // relaxation scheme: staggered nonlinear weight
    let mut phi_relax: Vec<f64> = u.iter().map(|z| coeff * z.norm().powf(p - 1.0)).collect();

    let mut stop = None;
    for step in 1..=n_steps {
        let t = step as f64 * cfg.dt;
        match cfg.scheme {
            Scheme::CrankNicolsonFixedPoint => {
                // rhs_lin = (M - i theta K) u
                let ku = k.matvec_complex(&u);
                let rhs_lin: Vec<Complex64> = u
                    .iter()
                    .zip(&ku)
                    .zip(mass)
                    .map(|((&ui, &kui), &m)| m * ui - Complex64::i() * theta * kui)
                    .collect();
                let mut w = u.clone();
                let mut converged = false;
                for _ in 0..cfg.fixedpoint_max_iter {
                    let mut rhs = rhs_lin.clone();
                    for i in 0..n {
                        let mid = 0.5 * (u[i] + w[i]);
                        let g = coeff * mid.norm_sqr().powf(0.5 * (p - 1.0)) * mid;
                        rhs[i] += Complex64::i() * cfg.dt * mass[i] * g;
                    }
                    let w_new = fp_system.solve(&rhs);
                    let inc: f64 = w_new
                        .iter()
                        .zip(&w)
                        .zip(mass)
                        .map(|((a, b), m)| m * (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    w = w_new;
                    if inc <= fp_tol {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    stop = Some(EvolveStop::FixedPointStall { step, t });
                    break;
                }
                u = w;
            }
            Scheme::CrankNicolsonRelaxation => {
                for (ph, z) in phi_relax.iter_mut().zip(&u) {
                    *ph = 2.0 * coeff * z.norm_sqr().powf(0.5 * (p - 1.0)) - *ph;
                }
                let mut k_eff = k.clone();
                for ((d, &m), &ph) in k_eff.diag.iter_mut().zip(mass).zip(&phi_relax) {
                    *d -= m * ph;
                }
                let system = k_eff.complexified(mass, theta).ldl()?;
                let ku = k_eff.matvec_complex(&u);
                let rhs: Vec<Complex64> = u
                    .iter()
                    .zip(&ku)
                    .zip(mass)
                    .map(|((&ui, &kui), &m)| m * ui - Complex64::i() * theta * kui)
                    .collect();
                u = system.solve(&rhs);
            }
        }

        let h1 = state_h1_norm(&grid, &u);
        if !h1.is_finite() || h1 > cfg.blowup_factor * h1_initial {
            traj.final_state = GraphFunction::from_values(grid, u.clone())?;
            traj.final_time = t;
            stop = Some(EvolveStop::BlowUp {
                t,
                factor: h1 / h1_initial,
            });
            break;
        }
        if step % cfg.monitor_stride == 0 {
            sample(&mut traj, t, &u)?;
        }
        traj.final_time = t;
    }
    if stop.is_none() || matches!(stop, Some(EvolveStop::FixedPointStall { .. })) {
        traj.final_state = GraphFunction::from_values(grid, u)?;
    }
    Ok((traj, stop))
}

fn state_h1_norm(grid: &crate::graph::GraphGrid, u: &[Complex64]) -> f64 {
    // inline H1 norm to avoid building a GraphFunction every step
    let h = grid.spacing();
    let m = grid.cells_per_edge();
    let mut grad = 0.0;
    let mut l2 = grid.vertex_mass() * u[0].norm_sqr();
    for e in 0..grid.n_edges() {
        let mut prev = u[0];
        for j in 1..=m {
            let cur = if j == m {
                Complex64::ZERO
            } else {
                u[grid.dof(e, j)]
            };
            grad += (cur - prev).norm_sqr() / h;
            if j < m {
                l2 += h * cur.norm_sqr();
            }
            prev = cur;
        }
    }
    (grad + l2).sqrt()
}

/// Energy with the nonlinear coefficient of the run (the test hook scales the
/// focusing term of the conserved energy the same way it scales the flow).
fn scaled_energy(params: &ModelParams, u: &GraphFunction, coeff: f64) -> Result<f64> {
    let p = params.p();
    Ok(0.5 * params.form(u)? - coeff * u.lp_power_sum(p + 1.0) / (p + 1.0))
}

fn scaled_pohozaev(params: &ModelParams, u: &GraphFunction, coeff: f64) -> Result<f64> {
    let p = params.p();
    Ok(u.grad_norm_sq()
        - 0.5 * params.xvprime_term(u)?
        - 0.5 * params.gamma() * u.vertex_value().norm_sqr()
        - coeff * (p - 1.0) / (2.0 * (p + 1.0)) * u.lp_power_sum(p + 1.0))
}

/// Discrete check of the virial identity `f'' = 8 P` along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct VirialReport {
    /// max over interior samples of |centered difference of f' - 8 P|.
    pub max_mismatch_fprime_route: f64,
    /// max over interior samples of |second difference of f - 8 P|.
    pub max_mismatch_fsecond_route: f64,
    /// max |second difference of f| (one side of the identity).
    pub max_abs_fsecond: f64,
    /// max |8 P| over the interior samples (the other side).
    pub max_abs_eight_p: f64,
    pub n_samples: usize,
    pub sample_dt: f64,
}

/// Compares both discrete derivatives of the dispersion moment against 8 P.
pub fn virial_check(traj: &Trajectory) -> Result<VirialReport> {
    let n = traj.times.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "virial check needs at least 3 monitor samples, got {n}"
        )));
    }
    let ps = traj.pohozaev.as_ref().ok_or(Error::UnsupportedPotential(
        "virial check needs the virial monitor, unavailable for this potential",
    ))?;
    let dt = traj.sample_dt;
    let mut rep = VirialReport {
        max_mismatch_fprime_route: 0.0,
        max_mismatch_fsecond_route: 0.0,
        max_abs_fsecond: 0.0,
        max_abs_eight_p: 0.0,
        n_samples: n,
        sample_dt: dt,
    };
    for kk in 1..n - 1 {
        let eight_p = 8.0 * ps[kk];
        let d1 = (traj.fprime[kk + 1] - traj.fprime[kk - 1]) / (2.0 * dt);
        let d2 = (traj.f[kk + 1] - 2.0 * traj.f[kk] + traj.f[kk - 1]) / (dt * dt);
        rep.max_mismatch_fprime_route = rep.max_mismatch_fprime_route.max((d1 - eight_p).abs());
        rep.max_mismatch_fsecond_route = rep.max_mismatch_fsecond_route.max((d2 - eight_p).abs());
        rep.max_abs_fsecond = rep.max_abs_fsecond.max(d2.abs());
        rep.max_abs_eight_p = rep.max_abs_eight_p.max(eight_p.abs());
    }
    Ok(rep)
}

/// Multiplies by the radial cutoff `chi_a(x) = s(x/a)`: identically 1 up to
/// `a`, identically 0 from `2a` on, quintic smoothstep in between.
pub fn apply_cutoff(u: &GraphFunction, a: f64) -> Result<GraphFunction> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cutoff radius must be positive, got {a}"
        )));
    }
    let grid = u.grid();
    let m = grid.cells_per_edge();
    let mut out = u.clone();
    for e in 0..grid.n_edges() {
        for j in 1..m {
            let r = grid.node_x(j) / a;
            let s = if r <= 1.0 {
                1.0
            } else if r >= 2.0 {
                0.0
            } else {
                let t = r - 1.0;
                1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
            };
            out.values_mut()[grid.dof(e, j)] *= s;
        }
    }
    Ok(out)
}

/// Everything observed during one cutoff-perturbation experiment.
#[derive(Debug, Clone)]
pub struct InstabilityOutcome {
    /// E(u0) - E(phi); entry requires a negative gap.
    pub entry_energy_gap: f64,
    /// Q(u0) - Q(phi); entry requires a non-positive gap.
    pub entry_charge_gap: f64,
    /// P(u0); entry requires a negative value.  Absent without the moment.
    pub entry_pohozaev: Option<f64>,
    pub entry_satisfied: bool,
    pub entry_failures: Vec<&'static str>,
    /// Tube radius in absolute H1 units: eps_tube x ||phi||_{H1}.
    pub tube_radius: f64,
    pub initial_distance: f64,
    /// First sampled time with distance beyond the tube radius.
    pub exit_time: Option<f64>,
    /// sup of P(u(t)) over samples up to exit (whole run if no exit).
    pub max_p_before_exit: Option<f64>,
    /// running max of -P(u(t)) over the same window.
    pub max_neg_p_before_exit: Option<f64>,
    /// fraction of interior samples before exit with concave f.
    pub concave_fraction: Option<f64>,
    /// time the H1 blow-up guard tripped, itself instability evidence.
    pub blowup_time: Option<f64>,
    /// time the midpoint fixed point stopped contracting (growth too fast
    /// for the step size); the trajectory is kept up to that point.
    pub stall_time: Option<f64>,
    pub trajectory: Trajectory,
}

/// Runs the cutoff-perturbation protocol: scales the converged profile along
/// the width family by `lambda1`, cuts it off at radius `a`, reports the
/// entry conditions (E below, charge not above, P negative), and evolves
/// while watching for the first exit from the orbital tube of relative radius
/// `eps_tube`.  Entry-condition failures are reported, not fatal: the
/// subcritical control experiment runs the same protocol from outside the
/// entry set.  A tripped blow-up guard ends the run and is reported as
/// instability evidence rather than an error.
pub fn instability_experiment(
    gs: &GroundStateResult,
    params: &ModelParams,
    lambda1: f64,
    a: f64,
    eps_tube: f64,
    cfg: &EvolutionConfig,
) -> Result<InstabilityOutcome> {
    let u0 = apply_cutoff(&lambda_scaled(&gs.profile, lambda1)?, a)?;
    tube_experiment(&u0, &gs.profile, params, eps_tube, cfg)
}

/// Entry-condition and tube-exit analysis for caller-supplied initial data:
/// reports the gaps of `u0` against the reference profile `phi`, evolves with
/// `phi` as the modulation reference, and scans for the first sample outside
/// the orbital tube of relative radius `eps_tube`.  This is the protocol
/// behind [`instability_experiment`] with the perturbation left to the
/// caller (for example seeded multiplicative noise instead of the width
/// family).
pub fn tube_experiment(
    u0: &GraphFunction,
    phi: &GraphFunction,
    params: &ModelParams,
    eps_tube: f64,
    cfg: &EvolutionConfig,
) -> Result<InstabilityOutcome> {
    if !(eps_tube > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tube radius must be positive, got {eps_tube}"
        )));
    }

    let entry_energy_gap = params.energy(u0)? - params.energy(phi)?;
    let entry_charge_gap = u0.norm_l2_sq() - phi.norm_l2_sq();
    let entry_pohozaev = match params.pohozaev(u0) {
        Ok(v) => Some(v),
        Err(Error::UnsupportedPotential(_)) => None,
        Err(e) => return Err(e),
    };
    let mut entry_failures = Vec::new();
    if !(entry_energy_gap < 0.0) {
        entry_failures.push("energy not below the standing-wave energy");
    }
    if !(entry_charge_gap <= 0.0) {
        entry_failures.push("charge above the standing-wave charge");
    }
    match entry_pohozaev {
        Some(v) if v < 0.0 => {}
        _ => entry_failures.push("virial functional not negative"),
    }
    let entry_satisfied = entry_failures.is_empty();

    let tube_radius = eps_tube * phi.norm_h1_sq().sqrt();
    let (traj, stop) = evolve_monitored(u0, params, cfg, Some(phi))?;

    let dist = traj.dist.as_ref().expect("reference monitors present");
    let initial_distance = dist[0];
    let exit_idx = dist.iter().position(|&d| d > tube_radius);
    let exit_time = exit_idx.map(|i| traj.times[i]);
    let window = exit_idx.map_or(dist.len(), |i| i + 1);

    let (max_p, max_neg_p) = match traj.pohozaev.as_ref() {
        Some(ps) if window > 0 => {
            let slice = &ps[..window];
            let max_p = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let max_neg_p = slice.iter().map(|p| -p).fold(f64::NEG_INFINITY, f64::max);
            (Some(max_p), Some(max_neg_p))
        }
        _ => (None, None),
    };
    let concave_fraction = if window >= 3 {
        let dt = traj.sample_dt;
        let mut concave = 0usize;
        for kk in 1..window - 1 {
            let d2 = (traj.f[kk + 1] - 2.0 * traj.f[kk] + traj.f[kk - 1]) / (dt * dt);
            if d2 < 0.0 {
                concave += 1;
            }
        }
        Some(concave as f64 / (window - 2) as f64)
    } else {
        None
    };

    let (blowup_time, stall_time) = match stop {
        None => (None, None),
        Some(EvolveStop::BlowUp { t, .. }) => (Some(t), None),
        Some(EvolveStop::FixedPointStall { t, .. }) => (None, Some(t)),
    };

    Ok(InstabilityOutcome {
        entry_energy_gap,
        entry_charge_gap,
        entry_pohozaev,
        entry_satisfied,
        entry_failures,
        tube_radius,
        initial_distance,
        exit_time,
        max_p_before_exit: max_p,
        max_neg_p_before_exit: max_neg_p,
        concave_fraction,
        blowup_time,
        stall_time,
        trajectory: traj,
    })
}

//! Numerical laboratory for the focusing nonlinear Schrodinger equation
//! `i du/dt = -u'' + V(x) u - |u|^{p-1} u` on a star graph of `N` half-lines
//! glued by an attractive delta coupling of strength `gamma` at the vertex,
//! with a decaying attractive potential `V <= 0` on every edge.
//!
//! The crate discretizes the star with P1 finite elements and a lumped
//! (trapezoidal) mass matrix and provides, on top of that one discretization:
//!
//! * [`graph`] -- grid geometry, sampled functions, norms and moments;
//! * [`potential`] -- the admissible potential classes and their dual-cell
//!   quadrature weights;
//! * [`solve`] -- zero-fill LDL^T factorization for the star sparsity
//!   pattern, over real and complex-symmetric scalars;
//! * [`operator`] -- assembly of the quadratic form and the lowest eigenpair
//!   of the linear operator (inverse power iteration);
//! * [`functionals`] -- energy, action, Nehari and virial functionals, the
//!   closed-form soliton profile, the critical vertex coupling, and the
//!   phase-modulated orbital distance;
//! * [`ground_state`] -- Nehari-constrained action minimization, the
//!   scale-derivative instability criterion (three independent routes), the
//!   frequency scan for the sign change of the criterion, and the rescaled
//!   large-frequency diagnostics;
//! * [`dynamics`] -- conservative Crank-Nicolson evolution (fixed-point and
//!   relaxation variants), virial-identity checks, and the
//!   cutoff-perturbation orbital-instability experiment.

pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod graph;
pub mod ground_state;
pub mod operator;
pub mod potential;
pub mod solve;

pub use dynamics::{
    apply_cutoff, evolve, evolve_monitored, instability_experiment, tube_experiment, virial_check,
    EvolutionConfig, EvolveStop, InstabilityOutcome, Scheme, Trajectory, VirialReport,
};
pub use error::{Error, Result};
pub use functionals::{
    explicit_soliton_symmetric, gamma_star, lambda_scaled, orbital_distance, ModelParams,
};
pub use graph::{GraphFunction, GraphGrid};
pub use ground_state::{
    criterion_ratio, criterion_report, find_omega_star, instability_criterion,
    rescaled_diagnostics, rescaled_profile, solve_ground_state, CriterionReport,
    GroundStateResult, OmegaStarScan, RescaledDiagnostics, ScanRow, DEFAULT_DELTA_LAMBDA,
};
pub use operator::{assemble, ground_eigenpair, Hamiltonian, SpectralResult};
pub use potential::Potential;

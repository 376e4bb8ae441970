//! The discrete self-adjoint operator assembled from the quadratic form
//! `F(v) = ||v'||^2 - gamma |v(0)|^2 + (V v, v)` and its lowest eigenpair.
//!
//! The matrix is the P1 stiffness matrix of the star (lumped mass), with the
//! potential's dual-cell weights on the diagonal and the delta-coupling term
//! `-gamma` on the vertex entry.  Its quadratic form equals, summand by
//! summand, the pieces computed in [`crate::graph`] and [`crate::potential`],
//! so the discrete vertex condition `sum_e v'_e(0) = -gamma v(0)` is the weak
//! (form) condition by construction, never an ad-hoc boundary row.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{GraphFunction, GraphGrid};
use crate::potential::Potential;
use crate::solve::StarMatrix;

/// Assembled operator: stiffness-plus-potential matrix and lumped mass.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: GraphGrid,
    gamma: f64,
    matrix: StarMatrix<f64>,
    mass: Vec<f64>,
    /// min over dofs of (potential weight / lumped mass), a lower bound
    /// ingredient for the spectral shift.
    pot_over_mass_min: f64,
}

/// Builds the operator for the given grid, potential, and vertex coupling.
pub fn assemble(grid: &GraphGrid, potential: &Potential, gamma: f64) -> Result<Hamiltonian> {
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite, got {gamma}"
        )));
    }
    let h = grid.spacing();
    let m = grid.cells_per_edge();
    let n = grid.n_dofs();
    let cells = potential.cell_integrals(grid)?;

    let mut diag = vec![0.0; n];
    let mut mass = vec![h; n];
    mass[0] = grid.vertex_mass();

    diag[0] = grid.n_edges() as f64 / h - gamma;
    let mut pot_over_mass_min: f64 = 0.0;
    for (e, edge_cells) in cells.iter().enumerate() {
        diag[0] += edge_cells[0];
        pot_over_mass_min = pot_over_mass_min.min(edge_cells[0] * grid.n_edges() as f64 / mass[0]);
        for j in 1..m {
            diag[grid.dof(e, j)] = 2.0 / h + edge_cells[j];
            pot_over_mass_min = pot_over_mass_min.min(edge_cells[j] / h);
        }
    }

    Ok(Hamiltonian {
        grid: *grid,
        gamma,
        matrix: StarMatrix::new(grid, diag, -1.0 / h),
        mass,
        pot_over_mass_min,
    })
}

impl Hamiltonian {
    /// The grid the operator is assembled on.
    pub fn grid(&self) -> GraphGrid {
        self.grid
    }

    /// The delta-coupling strength at the vertex.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The assembled sparse matrix K (stiffness + potential - gamma vertex term).
    pub fn matrix(&self) -> &StarMatrix<f64> {
        &self.matrix
    }

    /// The lumped mass diagonal.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Quadratic form value `F(u) = u^* K u` (real by symmetry).
    pub fn form_value(&self, u: &GraphFunction) -> Result<f64> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let ku = self.matrix.matvec_complex(u.values());
        let mut acc = 0.0;
        for (a, b) in u.values().iter().zip(&ku) {
            acc += (a.conj() * b).re;
        }
        Ok(acc)
    }

    /// Rayleigh quotient of the generalized problem K v = lambda M v.
    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        let kv = self.matrix.matvec(v);
        let num: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().zip(&self.mass).map(|(a, m)| a * a * m).sum();
        num / den
    }

    /// K - sigma M (still a star matrix since M is diagonal).
    pub fn shifted(&self, sigma: f64) -> StarMatrix<f64> {
        let mut s = self.matrix.clone();
        for (d, m) in s.diag.iter_mut().zip(&self.mass) {
            *d -= sigma * m;
        }
        s
    }

    /// A rigorous lower bound on the generalized eigenvalues.  The potential
    /// term is bounded by its worst weight/mass ratio.  For the vertex term,
    /// two bounds both hold and the larger is returned: the crude
    /// `-max(gamma, 0)/m_vertex ||v||^2`, and the trace-inequality bound
    /// `-max(gamma, 0)^2 ||v||^2`, which follows from telescoping the vertex
    /// value along one edge, `v(0)^2 = sum (v_j^2 - v_{j+1}^2) <= 2 |v'|_e
    /// ||v||_M`, and Young's inequality absorbing `|v'|^2`.  The latter does
    /// not degrade as the mesh is refined.
    pub fn spectral_lower_bound(&self) -> f64 {
        let gamma_plus = self.gamma.max(0.0);
        let vertex = (-gamma_plus / self.mass[0]).max(-gamma_plus * gamma_plus);
        self.pot_over_mass_min.min(0.0) + vertex
    }

    /// Writes the matrix in coordinate text format (`row col value`, both
    /// triangles) for external verification.
    pub fn dump_coo(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        let n = self.grid.n_dofs();
        let m = self.grid.cells_per_edge();
        let off = -1.0 / self.grid.spacing();
        for i in 0..n {
            writeln!(out, "{} {} {:.17e}", i, i, self.matrix.diag[i])?;
        }
        for e in 0..self.grid.n_edges() {
            let first = self.grid.dof(e, 1);
            writeln!(out, "0 {} {:.17e}", first, off)?;
            writeln!(out, "{} 0 {:.17e}", first, off)?;
            for j in 1..m - 1 {
                let a = self.grid.dof(e, j);
                let b = self.grid.dof(e, j + 1);
                writeln!(out, "{} {} {:.17e}", a, b, off)?;
                writeln!(out, "{} {} {:.17e}", b, a, off)?;
            }
        }
        Ok(())
    }
}

/// Lowest eigenpair of the generalized problem K psi = lambda M psi.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Frequency threshold: -omega0 is the smallest eigenvalue (so omega0 > 0
    /// exactly when the operator has a negative bound state).
    pub omega0: f64,
    /// L2-normalized ground eigenfunction, sign-fixed positive.
    pub psi0: GraphFunction,
    /// Distance from the lowest to the next Ritz value of a final
    /// two-dimensional Rayleigh-Ritz step.
    pub gap: f64,
    /// Inverse-iteration steps used.
    pub iterations: usize,
}

fn normalize_m(v: &mut [f64], mass: &[f64]) {
    let n: f64 = v.iter().zip(mass).map(|(a, m)| a * a * m).sum();
    let s = 1.0 / n.sqrt();
    for a in v.iter_mut() {
        *a *= s;
    }
}

fn m_inner(a: &[f64], b: &[f64], mass: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum()
}

/// Inverse power iteration with a shift strictly below the spectrum,
/// converging when successive Ritz values differ by less than `tol`.  Once the
/// iterate is close, the shift is refined toward the Ritz value (kept safely
/// below it, verified positive definite via the factorization pivots) to
/// accelerate the contraction.
pub fn ground_eigenpair(ham: &Hamiltonian, tol: f64, max_iter: usize) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigensolver tolerance must be positive, got {tol}"
        )));
    }
    let n = ham.grid.n_dofs();
    let mass = &ham.mass;
    let bound = ham.spectral_lower_bound();
    let mut fac = ham.shifted(bound - 1.0).ldl()?;
    let mut refinements = 0usize;
    let mut last_refine_it = 0usize;

    let mut v = vec![1.0; n];
    normalize_m(&mut v, mass);
    let mut ritz = ham.rayleigh(&v);
    let mut prev_inc = f64::INFINITY;
    // Direction for the final 2D Rayleigh-Ritz gap estimate: the last iterate
    // that is still meaningfully separated from the converged one, so the 2x2
    // problem does not degenerate when the tolerance sits near roundoff.
    let mut gap_dir = v.clone();

    for it in 1..=max_iter {
        let mut w: Vec<f64> = v.iter().zip(mass).map(|(x, m)| x * m).collect();
        fac.solve_in_place(&mut w);
        normalize_m(&mut w, mass);
        let r_new = ham.rayleigh(&w);
        let inc = (r_new - ritz).abs();
        let prev = std::mem::replace(&mut v, w);
        ritz = r_new;
        if inc >= 1e-8 * (1.0 + ritz.abs()) {
            gap_dir = prev;
        }

        if inc < tol && it >= 3 {
            return Ok(finish(ham, v, gap_dir, ritz, it));
        }

        if refinements < 4 && it >= last_refine_it + 8 {
            let rate = (inc / prev_inc).clamp(0.0, 0.999_999);
            let err_est = inc / (1.0 - rate).max(1e-9);
            if err_est < 0.05 * (1.0 + ritz.abs()) {
                let mut delta = (4.0 * err_est).max(1e-3 * (1.0 + ritz.abs()));
                while ritz - delta > bound - 2.0 {
                    if let Ok(f) = ham.shifted(ritz - delta).ldl() {
                        if f.is_positive_definite() {
                            fac = f;
                            refinements += 1;
                            last_refine_it = it;
                            break;
                        }
                    }
                    delta *= 4.0;
                }
            }
        }
        prev_inc = inc;
    }
    Err(Error::NonConvergence {
        what: "inverse power iteration",
        iterations: max_iter,
        last: ritz,
    })
}

fn finish(
    ham: &Hamiltonian,
    mut v: Vec<f64>,
    prev: Vec<f64>,
    ritz: f64,
    iterations: usize,
) -> SpectralResult {
    let mass = &ham.mass;
    // sign fix: make the largest-magnitude node (hence the vertex region of a
    // ground state) positive
    let imax = (0..v.len())
        .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
        .unwrap();
    if v[imax] < 0.0 {
        for a in v.iter_mut() {
            *a = -*a;
        }
    }

    // gap from a 2D Rayleigh-Ritz step on span{v, previous iterate}
    let mut w2: Vec<f64> = prev;
    let c = m_inner(&w2, &v, mass);
    for (a, b) in w2.iter_mut().zip(&v) {
        *a -= c * b;
    }
    let nrm = m_inner(&w2, &w2, mass).sqrt();
    let gap = if nrm > 1e-13 {
        for a in w2.iter_mut() {
            *a /= nrm;
        }
        let kv = ham.matrix.matvec(&v);
        let kw = ham.matrix.matvec(&w2);
        let a11: f64 = v.iter().zip(&kv).map(|(x, y)| x * y).sum();
        let a12: f64 = v.iter().zip(&kw).map(|(x, y)| x * y).sum();
        let a22: f64 = w2.iter().zip(&kw).map(|(x, y)| x * y).sum();
        let mid = 0.5 * (a11 + a22);
        let rad = (0.25 * (a11 - a22) * (a11 - a22) + a12 * a12).sqrt();
        (mid + rad) - (mid - rad)
    } else {
        // iterates collapsed onto one direction; no second Ritz value available
        0.0
    };

    let values = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let psi0 = GraphFunction::from_values(ham.grid, values).expect("dof count matches grid");
    SpectralResult {
        omega0: -ritz,
        psi0,
        gap,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_function_form_value_is_two_over_h() {
        let g = GraphGrid::new(3, 10.0, 50).unwrap();
        let ham = assemble(&g, &Potential::Zero, 0.0).unwrap();
        let mut u = GraphFunction::zero(g);
        u.values_mut()[g.dof(1, 5)] = Complex64::new(1.0, 0.0);
        let f = ham.form_value(&u).unwrap();
        let expected = 2.0 / g.spacing();
        assert!((f - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn form_value_matches_component_sums_on_random_data() {
        let g = GraphGrid::new(3, 10.0, 80).unwrap();
        let pot = Potential::inverse_power(1.0, 0.5).unwrap();
        let gamma = 2.0;
        let ham = assemble(&g, &pot, gamma).unwrap();
        let cells = pot.cell_integrals(&g).unwrap();

        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..20 {
            let mut u = GraphFunction::zero(g);
            for v in u.values_mut() {
                *v = Complex64::new(rnd(), rnd());
            }
            let via_matrix = ham.form_value(&u).unwrap();
            let mut pot_term = 0.0;
            for e in 0..g.n_edges() {
                pot_term += cells[e][0] * u.vertex_value().norm_sqr();
                for j in 1..g.cells_per_edge() {
                    pot_term += cells[e][j] * u.node_value(e, j).norm_sqr();
                }
            }
            let direct =
                u.grad_norm_sq() - gamma * u.vertex_value().norm_sqr() + pot_term;
            assert!(
                (via_matrix - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "{via_matrix} vs {direct}"
            );
        }
    }

    #[test]
    fn free_operator_is_positive_semidefinite() {
        let g = GraphGrid::new(4, 5.0, 40).unwrap();
        let ham = assemble(&g, &Potential::Zero, 0.0).unwrap();
        let mut state = 42u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..10 {
            let v: Vec<f64> = (0..g.n_dofs()).map(|_| rnd()).collect();
            assert!(ham.rayleigh(&v) >= -1e-12);
        }
    }

    #[test]
    fn sampled_exponential_rayleigh_quotient_is_near_minus_gamma_sq_over_n_sq() {
        let g = GraphGrid::new(3, 40.0, 2000).unwrap();
        let gamma = 2.0;
        let ham = assemble(&g, &Potential::Zero, gamma).unwrap();
        let rate = gamma / 3.0;
        let psi = GraphFunction::from_real_fn(g, |_, x| (-rate * x).exp());
        let v: Vec<f64> = psi.values().iter().map(|z| z.re).collect();
        let rq = ham.rayleigh(&v);
        let target = -(gamma / 3.0) * (gamma / 3.0);
        assert!(
            (rq - target).abs() < 2e-3 * target.abs(),
            "rq = {rq}, target = {target}"
        );
    }

    #[test]
    fn eigensolver_finds_the_delta_bound_state() {
        let g = GraphGrid::new(2, 40.0, 800).unwrap();
        let ham = assemble(&g, &Potential::Zero, 2.0).unwrap();
        let res = ground_eigenpair(&ham, 1e-10, 50_000).unwrap();
        // continuum: omega0 = (gamma/N)^2 = 1; h = 0.05 here
        assert!(
            (res.omega0 - 1.0).abs() < 2e-3,
            "omega0 = {} at h = {}",
            res.omega0,
            g.spacing()
        );
        assert!((res.psi0.norm_l2_sq() - 1.0).abs() < 1e-12);
        assert!(res.psi0.values().iter().all(|v| v.re > 0.0 && v.im == 0.0));
        assert!(res.gap > 0.0);
    }

    #[test]
    fn repulsive_coupling_has_no_negative_eigenvalue() {
        let g = GraphGrid::new(3, 20.0, 400).unwrap();
        for gamma in [0.0, -1.0] {
            let ham = assemble(&g, &Potential::Zero, gamma).unwrap();
            let res = ground_eigenpair(&ham, 1e-10, 50_000).unwrap();
            assert!(
                res.omega0 <= 1e-6,
                "gamma = {gamma}: spurious bound state omega0 = {}",
                res.omega0
            );
        }
    }

    #[test]
    fn omega0_is_monotone_in_gamma_and_beta() {
        let g = GraphGrid::new(3, 20.0, 400).unwrap();
        let mut last = f64::NEG_INFINITY;
        for gamma in [1.0, 2.0, 3.0] {
            let ham = assemble(&g, &Potential::Zero, gamma).unwrap();
            let res = ground_eigenpair(&ham, 1e-10, 50_000).unwrap();
            assert!(res.omega0 > last);
            last = res.omega0;
        }
        let mut last = f64::NEG_INFINITY;
        for beta in [0.5, 1.0, 2.0] {
            let pot = Potential::inverse_power(beta, 0.5).unwrap();
            let ham = assemble(&g, &pot, 1.0).unwrap();
            let res = ground_eigenpair(&ham, 1e-10, 50_000).unwrap();
            assert!(res.omega0 > last);
            last = res.omega0;
        }
    }

    #[test]
    fn attractive_coupling_produces_a_strictly_negative_eigenvalue() {
        let g = GraphGrid::new(3, 20.0, 400).unwrap();
        let ham = assemble(&g, &Potential::Zero, 1.0).unwrap();
        let res = ground_eigenpair(&ham, 1e-10, 50_000).unwrap();
        assert!(res.omega0 > 1e-8);
    }

    #[test]
    fn coo_dump_has_expected_entry_count() {
        let g = GraphGrid::new(3, 1.0, 5).unwrap();
        let ham = assemble(&g, &Potential::Zero, 1.0).unwrap();
        let mut buf = Vec::new();
        ham.dump_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let n = g.n_dofs();
        // n diagonal entries + 2 per coupling; couplings: N*(M-1)
        let expected = n + 2 * g.n_edges() * (g.cells_per_edge() - 1);
        assert_eq!(text.lines().count(), expected);
    }
}

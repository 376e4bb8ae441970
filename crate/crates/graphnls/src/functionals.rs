//! The variational functionals of the model: quadratic form, energy, action,
//! Nehari functional, and the virial-type functional, together with the
//! closed-form reference profile, the Nehari normalization map, the critical
//! vertex coupling, and the phase-modulated orbital distance.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{GraphFunction, GraphGrid};
use crate::potential::Potential;

/// Full parameter set of one model instance: grid, vertex coupling `gamma`,
/// frequency `omega`, nonlinearity power `p`, and the potential.  The
/// potential's dual-cell weights are folded onto the dof layout once at
/// construction so every functional evaluation is a single pass.
#[derive(Debug, Clone)]
pub struct ModelParams {
    grid: GraphGrid,
    gamma: f64,
    omega: f64,
    p: f64,
    potential: Potential,
    /// per-dof weights of `(V v, v)` (vertex entry already summed over edges)
    vweights: Vec<f64>,
    /// per-dof weights of the radial-derivative term `int x V'(x) |v|^2`,
    /// absent when the potential cannot provide it
    xvpweights: Option<Vec<f64>>,
}

fn fold_onto_dofs(grid: &GraphGrid, cells: &[Vec<f64>]) -> Vec<f64> {
    let m = grid.cells_per_edge();
    let mut w = vec![0.0; grid.n_dofs()];
    for (e, edge_cells) in cells.iter().enumerate() {
        w[0] += edge_cells[0];
        for j in 1..m {
            w[grid.dof(e, j)] = edge_cells[j];
        }
    }
    w
}

impl ModelParams {
    pub fn new(
        grid: GraphGrid,
        potential: Potential,
        gamma: f64,
        omega: f64,
        p: f64,
    ) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nonlinearity power must satisfy p > 1, got {p}"
            )));
        }
        if !gamma.is_finite() || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma and omega must be finite, got gamma = {gamma}, omega = {omega}"
            )));
        }
        let vweights = fold_onto_dofs(&grid, &potential.cell_integrals(&grid)?);
        let xvpweights = if potential.supports_xvprime() {
            Some(fold_onto_dofs(
                &grid,
                &potential.xvprime_cell_integrals(&grid)?,
            ))
        } else {
            None
        };
        Ok(Self {
            grid,
            gamma,
            omega,
            p,
            potential,
            vweights,
            xvpweights,
        })
    }

    /// Same model with a different frequency (weights are frequency-free).
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be finite, got {omega}"
            )));
        }
        let mut out = self.clone();
        out.omega = omega;
        Ok(out)
    }

    pub fn grid(&self) -> GraphGrid {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    fn check(&self, v: &GraphFunction) -> Result<()> {
        if v.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `(V v, v) = int V |v|^2` over the whole star (non-positive).
    pub fn potential_term(&self, v: &GraphFunction) -> Result<f64> {
        self.check(v)?;
        Ok(self
            .vweights
            .iter()
            .zip(v.values())
            .map(|(w, z)| w * z.norm_sqr())
            .sum())
    }

    /// `int x V'(x) |v|^2` over the whole star.
    pub fn xvprime_term(&self, v: &GraphFunction) -> Result<f64> {
        self.check(v)?;
        let w = self.xvpweights.as_ref().ok_or(Error::UnsupportedPotential(
            "x V'(x) moments are unavailable for tabulated potentials",
        ))?;
        Ok(w.iter().zip(v.values()).map(|(w, z)| w * z.norm_sqr()).sum())
    }

    /// Quadratic form `F(v) = ||v'||^2 - gamma |v(0)|^2 + (V v, v)`.
    pub fn form(&self, v: &GraphFunction) -> Result<f64> {
        Ok(v.grad_norm_sq() - self.gamma * v.vertex_value().norm_sqr()
            + self.potential_term(v)?)
    }

    /// Energy `E(v) = F(v)/2 - ||v||_{p+1}^{p+1}/(p+1)`.
    pub fn energy(&self, v: &GraphFunction) -> Result<f64> {
        Ok(0.5 * self.form(v)? - v.lp_power_sum(self.p + 1.0) / (self.p + 1.0))
    }

    /// Charge `Q(v) = ||v||^2` (model-independent, provided for symmetry).
    pub fn charge(&self, v: &GraphFunction) -> Result<f64> {
        self.check(v)?;
        Ok(v.norm_l2_sq())
    }

    /// Action `S_omega(v) = E(v) + (omega/2) Q(v)`.
    pub fn action(&self, v: &GraphFunction) -> Result<f64> {
        Ok(self.energy(v)? + 0.5 * self.omega * v.norm_l2_sq())
    }

    /// Nehari functional `I_omega(v) = F(v) + omega Q(v) - ||v||_{p+1}^{p+1}`.
    pub fn nehari(&self, v: &GraphFunction) -> Result<f64> {
        Ok(self.form(v)? + self.omega * v.norm_l2_sq() - v.lp_power_sum(self.p + 1.0))
    }

    /// Virial-type functional
    /// `P(v) = ||v'||^2 - (1/2) int x V' |v|^2 - (gamma/2) |v(0)|^2
    ///         - (p-1)/(2(p+1)) ||v||_{p+1}^{p+1}`.
    pub fn pohozaev(&self, v: &GraphFunction) -> Result<f64> {
        let p = self.p;
        Ok(v.grad_norm_sq()
            - 0.5 * self.xvprime_term(v)?
            - 0.5 * self.gamma * v.vertex_value().norm_sqr()
            - (p - 1.0) / (2.0 * (p + 1.0)) * v.lp_power_sum(p + 1.0))
    }

    /// The unique `lambda_1 > 0` with `I_omega(lambda_1 v) = 0` for `v != 0`
    /// with positive quadratic part, together with the normalized function.
    pub fn nehari_projection(&self, v: &GraphFunction) -> Result<(GraphFunction, f64)> {
        let d = v.lp_power_sum(self.p + 1.0);
        if d <= 0.0 {
            return Err(Error::InvalidParameter(
                "cannot normalize the zero function onto the Nehari set".into(),
            ));
        }
        let quad = self.form(v)? + self.omega * v.norm_l2_sq();
        if quad <= 0.0 {
            return Err(Error::OmegaBelowSpectrum { omega: self.omega });
        }
        let lambda1 = (quad / d).powf(1.0 / (self.p - 1.0));
        let mut out = v.clone();
        out.scale_by(Complex64::new(lambda1, 0.0));
        Ok((out, lambda1))
    }
}

/// The member `u^lambda(x) = sqrt(lambda) u(lambda x)` of the charge-preserving
/// width family, sampled back onto the grid of `u` by linear interpolation
/// (zero beyond the truncation radius).
pub fn lambda_scaled(u: &GraphFunction, lambda: f64) -> Result<GraphFunction> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "width-scaling parameter must be positive, got {lambda}"
        )));
    }
    let s = lambda.sqrt();
    Ok(GraphFunction::from_fn(u.grid(), |e, x| {
        u.eval(e, lambda * x).scale(s)
    }))
}

/// Closed-form positive stationary profile on the star with `V = 0`:
/// a half-soliton of frequency `omega` shifted so that the vertex slope
/// condition `N phi'(0+) = -gamma phi(0)` holds on every edge.  Exists for
/// `|gamma| < N sqrt(omega)`.
pub fn explicit_soliton_symmetric(
    grid: GraphGrid,
    gamma: f64,
    omega: f64,
    p: f64,
) -> Result<GraphFunction> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nonlinearity power must satisfy p > 1, got {p}"
        )));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "explicit profile needs omega > 0, got {omega}"
        )));
    }
    let n = grid.n_edges() as f64;
    let ratio = gamma / (n * omega.sqrt());
    if ratio.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "explicit profile needs |gamma| < N sqrt(omega); gamma = {gamma}, \
             N sqrt(omega) = {}",
            n * omega.sqrt()
        )));
    }
    let shift = ratio.atanh();
    let amp = (p + 1.0) * omega / 2.0;
    let rate = (p - 1.0) * omega.sqrt() / 2.0;
    let expo = 1.0 / (p - 1.0);
    Ok(GraphFunction::from_real_fn(grid, |_, x| {
        let c = (rate * x + shift).cosh();
        (amp / (c * c)).powf(expo)
    }))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (left, flm) = simpson(f, a, fa, m, fm);
        let (right, frm) = simpson(f, m, fm, b, fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, fm, tol, 48)
}

/// The coupling strength at which the half-soliton family stops minimizing:
/// the root `a` of
/// `int_0^1 (1-t^2)^{2/(p-1)} dt = (N/2) int_a^1 (1-t^2)^{2/(p-1)} dt`
/// rescaled to `gamma = a N sqrt(omega)`.  For two edges the root is zero.
pub fn gamma_star(n_edges: usize, omega: f64, p: f64) -> Result<f64> {
    if n_edges < 2 {
        return Err(Error::InvalidParameter(format!(
            "a star graph needs at least two edges, got {n_edges}"
        )));
    }
    if !(omega > 0.0) || !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma-star needs omega > 0 and p > 1, got omega = {omega}, p = {p}"
        )));
    }
    let s = 2.0 / (p - 1.0);
    let integrand = move |t: f64| (1.0 - t * t).max(0.0).powf(s);
    let full = adaptive_simpson(&integrand, 0.0, 1.0, 1e-10);
    let n = n_edges as f64;
    // g(a) = (N/2) int_a^1 - int_0^1, strictly decreasing from (N/2 - 1) full
    // to -full; two edges make g(0) = 0 exactly.
    if n_edges == 2 {
        return Ok(0.0);
    }
    let g = |a: f64| 0.5 * n * adaptive_simpson(&integrand, a, 1.0, 1e-10) - full;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    debug_assert!(g(lo) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi) * n * omega.sqrt())
}

/// Modulated distance `min_theta ||u - e^{i theta} phi||_{H^1}` together with
/// the minimizing phase.
pub fn orbital_distance(u: &GraphFunction, phi: &GraphFunction) -> Result<(f64, f64)> {
    let ip = u.inner_h1(phi)?;
    let theta = ip.arg();
    let d2 = u.norm_h1_sq() + phi.norm_h1_sq() - 2.0 * ip.norm();
    Ok((d2.max(0.0).sqrt(), theta))
}

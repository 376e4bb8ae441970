//! Oracles shared by the integration suites, written independently of the
//! library internals: plain adaptive Simpson quadrature, the closed-form
//! half-soliton, seeded random profiles, and a brute-force phase scan.
#![allow(dead_code)]

use graphnls::{GraphFunction, GraphGrid};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = rule(f, a, m);
        let right = rule(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    recurse(f, a, b, rule(f, a, b), tol, 48)
}

/// Closed-form positive stationary profile on the star with `V = 0`,
/// written from scratch: amplitude `((p+1) w / 2)^{1/(p-1)}` times
/// `sech^{2/(p-1)}` with the vertex shift `atanh(gamma / (N sqrt(w)))`.
pub fn soliton_value(x: f64, gamma: f64, omega: f64, p: f64, n_edges: f64) -> f64 {
    let shift = (gamma / (n_edges * omega.sqrt())).atanh();
    let arg = (p - 1.0) * omega.sqrt() * x / 2.0 + shift;
    (0.5 * (p + 1.0) * omega).powf(1.0 / (p - 1.0)) * arg.cosh().powf(-2.0 / (p - 1.0))
}

/// Exact spatial derivative of [`soliton_value`]; quadratures over it need the
/// analytic form because a finite-difference stand-in carries a noise floor
/// that adaptive refinement can never integrate below.
pub fn soliton_deriv(x: f64, gamma: f64, omega: f64, p: f64, n_edges: f64) -> f64 {
    let shift = (gamma / (n_edges * omega.sqrt())).atanh();
    let k = (p - 1.0) * omega.sqrt() / 2.0;
    let arg = k * x + shift;
    let amp = (0.5 * (p + 1.0) * omega).powf(1.0 / (p - 1.0));
    -amp * (2.0 / (p - 1.0)) * k * arg.cosh().powf(-2.0 / (p - 1.0)) * arg.tanh()
}

/// Complex random profile with a decaying envelope; deterministic per seed.
pub fn random_profile(grid: &GraphGrid, seed: u64) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_dofs();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.node_x(i);
        let env = (-0.35 * x).exp();
        values.push(Complex64::new(
            env * rng.random_range(-1.0..1.0),
            env * rng.random_range(-1.0..1.0),
        ));
    }
    GraphFunction::from_values(grid.clone(), values).unwrap()
}

/// Real positive random profile (bump heights on a decaying envelope).
pub fn random_positive_profile(grid: &GraphGrid, seed: u64) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_dofs();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.node_x(i);
        let env = (-0.5 * x).exp();
        values.push(Complex64::new(env * rng.random_range(0.1..1.0), 0.0));
    }
    GraphFunction::from_values(grid.clone(), values).unwrap()
}

/// Copy of `u` multiplied by the complex constant `c`.
pub fn scaled(u: &GraphFunction, c: Complex64) -> GraphFunction {
    let mut out = u.clone();
    out.scale_by(c);
    out
}

/// Brute-force orbital distance: minimum of `||u - e^{i theta} phi||_{H^1}`
/// over a uniform grid of `n` phases.
pub fn distance_by_phase_scan(u: &GraphFunction, phi: &GraphFunction, n: usize) -> f64 {
    let uu = u.norm_h1_sq();
    let pp = phi.norm_h1_sq();
    let ip = u.inner_h1(phi).unwrap();
    let mut best = f64::INFINITY;
    for k in 0..n {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let rot = Complex64::from_polar(1.0, theta);
        let d2 = uu + pp - 2.0 * (rot.conj() * ip).re;
        best = best.min(d2.max(0.0));
    }
    best.sqrt()
}

/// Max-norm difference between two profiles on the same grid.
pub fn linf_diff(a: &GraphFunction, b: &GraphFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

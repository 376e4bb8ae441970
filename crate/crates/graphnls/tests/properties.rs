//! Cross-module invariants checked against independent oracles: quadrature
//! on closed forms, algebraic identities among the functionals, brute-force
//! scans, and randomized property tests.

mod common;

use common::*;
use graphnls::*;
use num_complex::Complex64;
use proptest::prelude::*;

const CANON: (f64, f64, f64) = (2.0, 4.0, 3.0); // gamma, omega, p on N = 3

fn canonical_params(edge_length: f64, cells: usize) -> ModelParams {
    let grid = GraphGrid::new(3, edge_length, cells).unwrap();
    ModelParams::new(grid, Potential::Zero, CANON.0, CANON.1, CANON.2).unwrap()
}

/// Exact functional values for the canonical closed-form profile, derived by
/// hand from the sech integrals: Q = 8, A = 416/27, C0 = 64/9, D = 896/27,
/// E = -208/27, S = 224/27.
#[test]
fn closed_form_profile_functionals_match_quadrature_and_the_exact_rationals() {
    let (gamma, omega, p) = CANON;
    let phi = |x: f64| soliton_value(x, gamma, omega, p, 3.0);
    let dphi = |x: f64| soliton_deriv(x, gamma, omega, p, 3.0);
    let q = 3.0 * simpson(&|x| phi(x) * phi(x), 0.0, 40.0, 1e-12);
    let a = 3.0 * simpson(&|x| dphi(x) * dphi(x), 0.0, 40.0, 1e-12);
    let d4 = 3.0 * simpson(&|x| phi(x).powi(4), 0.0, 40.0, 1e-12);
    assert!((q - 8.0).abs() < 1e-8, "Q mismatch: {q}");
    assert!((a - 416.0 / 27.0).abs() < 1e-8, "A mismatch: {a}");
    assert!((d4 - 896.0 / 27.0).abs() < 1e-8, "D mismatch: {d4}");
    assert!((phi(0.0) - 8.0 / 3.0).abs() < 1e-12);

    // The library evaluations on the sampled profile converge to the same
    // rationals at second order; h = 2.5e-3 leaves plenty of margin at 1e-4.
    let params = canonical_params(30.0, 12_000);
    let u = explicit_soliton_symmetric(params.grid(), gamma, omega, p).unwrap();
    let checks = [
        (u.norm_l2_sq(), 8.0),
        (u.grad_norm_sq(), 416.0 / 27.0),
        (u.lp_power_sum(4.0), 896.0 / 27.0),
        (params.energy(&u).unwrap(), -208.0 / 27.0),
        (params.action(&u).unwrap(), 224.0 / 27.0),
        (u.vertex_value().norm_sqr(), 64.0 / 9.0),
    ];
    for (got, exact) in checks {
        assert!(
            (got - exact).abs() / exact.abs() < 1e-4,
            "library value {got} vs exact {exact}"
        );
    }
    assert!((params.nehari(&u).unwrap()).abs() < 1e-3);
}

#[test]
fn library_soliton_matches_the_independently_written_closed_form() {
    let grid = GraphGrid::new(4, 25.0, 500).unwrap();
    let u = explicit_soliton_symmetric(grid.clone(), 1.5, 2.5, 6.0).unwrap();
    for e in 0..grid.n_edges() {
        for j in 0..grid.cells_per_edge() {
            let x = grid.node_x(j);
            let expect = soliton_value(x, 1.5, 2.5, 6.0, 4.0);
            assert!(
                (u.node_value(e, j).re - expect).abs() < 1e-12,
                "edge {e} node {j} at x = {x}"
            );
        }
    }
}

/// E(u^lambda) follows the exact exponents of the scaling family:
/// lambda^2 on the gradient, lambda on the vertex term, lambda^alpha on the
/// potential term, lambda^{(p-1)/2} on the L^{p+1} power.
#[test]
fn energy_along_the_scaling_family_follows_the_closed_form_exponents() {
    let grid = GraphGrid::new(3, 16.0, 8000).unwrap();
    let pot = Potential::inverse_power(1.0, 0.5).unwrap();
    let (gamma, p) = (3.0, 6.0);
    let params = ModelParams::new(grid.clone(), pot, gamma, 10.0, p).unwrap();
    let u = GraphFunction::from_real_fn(grid, |_, x| 1.8 * (-0.8 * x).exp() * (1.0 + 0.4 * x));
    let a = u.grad_norm_sq();
    let c0 = u.vertex_value().norm_sqr();
    let b = params.potential_term(&u).unwrap();
    let d = u.lp_power_sum(p + 1.0);
    for lambda in [0.8, 0.9, 1.1, 1.2] {
        let scaled = lambda_scaled(&u, lambda).unwrap();
        let predicted = 0.5
            * (lambda * lambda * a - gamma * lambda * c0 + lambda.powf(0.5) * b)
            - lambda.powf(0.5 * (p - 1.0)) * d / (p + 1.0);
        let got = params.energy(&scaled).unwrap();
        assert!(
            (got - predicted).abs() / predicted.abs().max(1.0) < 1e-4,
            "lambda {lambda}: got {got}, predicted {predicted}"
        );
    }
}

#[test]
fn nehari_projection_is_ray_invariant_and_lands_on_the_manifold() {
    let params = canonical_params(12.0, 600);
    let grid = params.grid();
    let c_p = (CANON.2 - 1.0) / (2.0 * (CANON.2 + 1.0));
    let mut negatives = 0;
    for seed in 0..40u64 {
        let mut v = random_profile(&grid, seed);
        let quad = params.form(&v).unwrap() + params.omega() * v.norm_l2_sq();
        if quad <= 0.0 {
            continue;
        }
        if seed % 2 == 1 {
            // Push odd draws below the manifold so both branches get
            // exercised: past the projection scale the Nehari value flips.
            let lam1 = (quad / v.lp_power_sum(CANON.2 + 1.0)).powf(1.0 / (CANON.2 - 1.0));
            v.scale_by(Complex64::new(1.5 * lam1, 0.0));
        }
        let quad = params.form(&v).unwrap() + params.omega() * v.norm_l2_sq();
        let (w, lambda1) = params.nehari_projection(&v).unwrap();
        let scale = quad + v.lp_power_sum(CANON.2 + 1.0);
        assert!(
            params.nehari(&w).unwrap().abs() <= 1e-10 * scale,
            "seed {seed}: projection missed the manifold"
        );
        // The projection only sees the ray through v.
        let v3 = scaled(&v, Complex64::new(3.0, 0.0));
        let (w3, _) = params.nehari_projection(&v3).unwrap();
        let w_max = w.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(linf_diff(&w, &w3) <= 1e-9 * (1.0 + w_max));
        let i_v = params.nehari(&v).unwrap();
        if i_v < 0.0 {
            negatives += 1;
            assert!(
                lambda1 > 0.0 && lambda1 < 1.0,
                "seed {seed}: lambda1 = {lambda1} with negative Nehari value"
            );
            // Below the manifold the projected action sits under the
            // L^{p+1}-power bound of the original point.
            let s_w = params.action(&w).unwrap();
            assert!(s_w < c_p * v.lp_power_sum(CANON.2 + 1.0));
        } else {
            assert!(lambda1 >= 1.0, "seed {seed}: lambda1 = {lambda1}");
        }
    }
    assert!(negatives >= 5, "want several I < 0 draws, got {negatives}");
}

#[test]
fn orbital_distance_agrees_with_a_ten_thousand_point_phase_scan() {
    let grid = GraphGrid::new(3, 10.0, 400).unwrap();
    for seed in [7u64, 19, 23] {
        let u = random_profile(&grid, seed);
        let phi = random_profile(&grid, seed + 1000);
        let (dist, theta) = orbital_distance(&u, &phi).unwrap();
        let scan = distance_by_phase_scan(&u, &phi, 10_000);
        let scale = u.norm_h1_sq().sqrt() + phi.norm_h1_sq().sqrt();
        assert!(dist <= scan + 1e-12 * scale, "analytic min must win");
        assert!(scan - dist <= 1e-6 * scale, "scan gap too large: {}", scan - dist);
        // theta realizes the minimum.
        let rot = scaled(&phi, Complex64::from_polar(1.0, theta));
        let mut diff2 = u.norm_h1_sq() + rot.norm_h1_sq() - 2.0 * u.inner_h1(&rot).unwrap().re;
        diff2 = diff2.max(0.0);
        assert!((diff2.sqrt() - dist).abs() <= 1e-9 * scale);
    }
}

#[test]
fn pohozaev_value_matches_quadrature_on_a_closed_form() {
    let (beta, alpha, gamma, p) = (0.7, 0.5, 1.3, 6.0);
    let grid = GraphGrid::new(3, 25.0, 25_000).unwrap();
    let pot = Potential::inverse_power(beta, alpha).unwrap();
    let params = ModelParams::new(grid.clone(), pot, gamma, 2.0, p).unwrap();
    let f = |x: f64| (1.0 + x) * (-x).exp();
    let df = |x: f64| -x * (-x).exp();
    let u = GraphFunction::from_real_fn(grid, |_, x| f(x));
    // P = ||u'||^2 - (1/2) int x V'(x) |u|^2 - (gamma/2)|u(0)|^2
    //     - (p-1)/(2(p+1)) ||u||_{p+1}^{p+1}, with x V'(x) = alpha beta x^{-alpha}.
    let a_q = 3.0 * simpson(&|x| df(x) * df(x), 0.0, 25.0, 1e-13);
    // alpha = 1/2: substituting x = t^2 removes the endpoint singularity,
    // int x^{-1/2} g(x) dx = 2 int g(t^2) dt.
    let xvp_q = 3.0
        * simpson(
            &|t: f64| 2.0 * alpha * beta * f(t * t) * f(t * t),
            0.0,
            25.0_f64.sqrt(),
            1e-13,
        );
    let d_q = 3.0 * simpson(&|x| f(x).abs().powf(p + 1.0), 0.0, 25.0, 1e-13);
    let expected = a_q - 0.5 * xvp_q - 0.5 * gamma * f(0.0) * f(0.0)
        - (p - 1.0) / (2.0 * (p + 1.0)) * d_q;
    let got = params.pohozaev(&u).unwrap();
    assert!(
        (got - expected).abs() / expected.abs() < 1e-5,
        "got {got}, quadrature {expected}"
    );
}

/// The closed-form second derivative along the scaling family minus its
/// P-reduced sibling telescopes to the virial functional exactly, for every
/// profile, and the centered finite difference reproduces the direct value.
#[test]
fn criterion_routes_differ_by_exactly_the_virial_functional() {
    let grid = GraphGrid::new(3, 16.0, 8000).unwrap();
    let pot = Potential::inverse_power(1.0, 0.5).unwrap();
    let params = ModelParams::new(grid.clone(), pot, 3.0, 10.0, 6.0).unwrap();
    let u = GraphFunction::from_real_fn(grid, |_, x| 1.6 * (-0.7 * x).exp() * (1.0 + 0.5 * x));
    let rep = criterion_report(&u, &params, 2e-2).unwrap();
    let p_val = params.pohozaev(&u).unwrap();
    let scale = 1.0 + rep.direct.abs() + p_val.abs();
    assert!(
        ((rep.direct - rep.reduced) - p_val).abs() <= 1e-11 * scale,
        "direct - reduced = {}, P = {p_val}",
        rep.direct - rep.reduced
    );
    assert!(
        (rep.direct - rep.finite_difference).abs() <= 1e-3 * scale,
        "fd {} vs direct {}",
        rep.finite_difference,
        rep.direct
    );
}

#[test]
fn coupling_threshold_satisfies_its_defining_integral_equation() {
    // gamma* solves int_0^1 (1-t^2)^{2/(p-1)} dt = (N/2) int_a^1 ..., with
    // a = gamma*/(N sqrt(omega)); N = 2 degenerates to zero.
    assert!(gamma_star(2, 1.0, 3.0).unwrap().abs() < 1e-12);
    assert!(gamma_star(2, 7.0, 6.0).unwrap().abs() < 1e-12);
    for (n, p) in [(3usize, 3.0f64), (4, 3.0), (3, 6.0), (5, 6.0)] {
        for omega in [1.0, 4.0] {
            let gs = gamma_star(n, omega, p).unwrap();
            let a = gs / (n as f64 * omega.sqrt());
            assert!(a > 0.0 && a < 1.0);
            let w = 2.0 / (p - 1.0);
            let lhs = simpson(&|t: f64| (1.0 - t * t).powf(w), 0.0, 1.0, 1e-13);
            let rhs = n as f64 / 2.0 * simpson(&|t: f64| (1.0 - t * t).powf(w), a, 1.0, 1e-13);
            assert!(
                (lhs - rhs).abs() < 1e-9,
                "N={n} p={p} omega={omega}: equation residual {}",
                lhs - rhs
            );
        }
    }
    // Monotone in the edge count, and scales as sqrt(omega).
    let g3 = gamma_star(3, 1.0, 3.0).unwrap();
    let g4 = gamma_star(4, 1.0, 3.0).unwrap();
    let g6 = gamma_star(6, 1.0, 3.0).unwrap();
    assert!(0.0 < g3 && g3 < g4 && g4 < g6);
    let g3w = gamma_star(3, 9.0, 3.0).unwrap();
    assert!((g3w - 3.0 * g3).abs() < 1e-10);
}

#[test]
fn attractive_potential_deepens_the_bound_state_and_rayleigh_bounds_hold() {
    let grid = GraphGrid::new(3, 40.0, 4000).unwrap();
    let free = assemble(&grid, &Potential::Zero, 2.0).unwrap();
    let free_res = ground_eigenpair(&free, 1e-12, 400).unwrap();
    let pot = Potential::inverse_power(0.5, 0.5).unwrap();
    let dressed = assemble(&grid, &pot, 2.0).unwrap();
    let dressed_res = ground_eigenpair(&dressed, 1e-12, 400).unwrap();
    assert!(
        dressed_res.omega0 > free_res.omega0 + 0.05,
        "V <= 0 must deepen the ground level: {} vs {}",
        dressed_res.omega0,
        free_res.omega0
    );
    // The computed level lower-bounds every Rayleigh quotient.
    for seed in 0..10u64 {
        let v = random_profile(&grid, seed);
        let rv: Vec<f64> = v.values().iter().map(|z| z.re).collect();
        let r = dressed.rayleigh(&rv);
        assert!(r >= -dressed_res.omega0 - 1e-9 * (1.0 + r.abs()));
    }
    assert!(dressed.spectral_lower_bound() <= -dressed_res.omega0);
}

/// The action bound behind the existence theory: with an attractive
/// potential switched on, the computed minimum sits strictly below the
/// potential-free level of the explicit profile at the same coupling.
#[test]
fn potential_strictly_lowers_the_minimal_action() {
    let grid = GraphGrid::new(3, 14.0, 7000).unwrap();
    let (gamma, omega, p) = (2.0, 4.0, 3.0);
    let pot = Potential::inverse_power(0.8, 0.5).unwrap();
    let params = ModelParams::new(grid.clone(), pot, gamma, omega, p).unwrap();
    let gs = solve_ground_state(&params, None, 1e-9, 2000).unwrap();
    // Potential-free action level of the closed form, via quadrature alone.
    let phi = |x: f64| soliton_value(x, gamma, omega, p, 3.0);
    let dphi = |x: f64| soliton_deriv(x, gamma, omega, p, 3.0);
    let a_q = 3.0 * simpson(&|x| dphi(x) * dphi(x), 0.0, 14.0, 1e-12);
    let q_q = 3.0 * simpson(&|x| phi(x) * phi(x), 0.0, 14.0, 1e-12);
    let d_q = 3.0 * simpson(&|x| phi(x).powi(4), 0.0, 14.0, 1e-12);
    let s_free = 0.5 * (a_q - gamma * phi(0.0) * phi(0.0)) + 0.5 * omega * q_q - 0.25 * d_q;
    assert!(
        gs.action_value < s_free - 1e-3,
        "computed action {} should sit below the free level {s_free}",
        gs.action_value
    );
}

#[test]
fn ground_state_profile_decays_monotonically_and_stays_positive() {
    let grid = GraphGrid::new(3, 20.0, 2000).unwrap();
    let pot = Potential::inverse_power(1.0, 0.5).unwrap();
    let params = ModelParams::new(grid, pot, 3.0, 10.0, 6.0).unwrap();
    let gs = solve_ground_state(&params, None, 1e-9, 2000).unwrap();
    let grid = params.grid();
    let m = grid.cells_per_edge();
    // Below this fraction of the vertex value the exact tail is under the
    // double-precision resolution of the solve, so only smallness is checked.
    let floor = 1e-12 * gs.profile.vertex_value().re;
    for e in 0..grid.n_edges() {
        let mut prev = gs.profile.node_value(e, 0).re;
        assert!(prev > 0.0);
        for j in 1..m {
            let cur = gs.profile.node_value(e, j).re;
            if prev > floor {
                assert!(cur > 0.0, "edge {e} node {j} not positive");
                assert!(
                    cur <= prev * (1.0 + 1e-9),
                    "edge {e} node {j} breaks monotone decay"
                );
            } else {
                assert!(cur.abs() <= floor, "edge {e} node {j} tail not small");
            }
            prev = cur;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn charge_and_power_scale_with_the_right_homogeneity(
        seed in 0u64..1000,
        c in 0.1f64..4.0,
        p in 2.0f64..7.0,
    ) {
        let grid = GraphGrid::new(3, 6.0, 60).unwrap();
        let u = random_profile(&grid, seed);
        let cu = scaled(&u, Complex64::new(c, 0.0));
        let q = u.norm_l2_sq();
        prop_assert!((cu.norm_l2_sq() - c * c * q).abs() <= 1e-12 * (1.0 + c * c * q));
        let d = u.lp_power_sum(p + 1.0);
        let want = c.powf(p + 1.0) * d;
        prop_assert!((cu.lp_power_sum(p + 1.0) - want).abs() <= 1e-11 * (1.0 + want));
        let g = u.grad_norm_sq();
        prop_assert!((cu.grad_norm_sq() - c * c * g).abs() <= 1e-11 * (1.0 + c * c * g));
    }

    #[test]
    fn action_splits_into_nehari_plus_power_exactly(
        seed in 0u64..1000,
        gamma in -1.0f64..3.0,
        omega in 0.5f64..8.0,
        p in 2.0f64..7.0,
    ) {
        let grid = GraphGrid::new(3, 6.0, 60).unwrap();
        let params = ModelParams::new(grid.clone(), Potential::Zero, gamma, omega, p).unwrap();
        let u = random_profile(&grid, seed);
        let s = params.action(&u).unwrap();
        let i = params.nehari(&u).unwrap();
        let d = u.lp_power_sum(p + 1.0);
        let rhs = 0.5 * i + (p - 1.0) / (2.0 * (p + 1.0)) * d;
        prop_assert!((s - rhs).abs() <= 1e-12 * (1.0 + s.abs() + i.abs() + d));
    }

    #[test]
    fn phase_rotation_never_leaves_the_orbit(
        seed in 0u64..1000,
        theta in 0.0f64..6.28318,
    ) {
        let grid = GraphGrid::new(3, 6.0, 60).unwrap();
        let u = random_profile(&grid, seed);
        let rotated = scaled(&u, Complex64::from_polar(1.0, theta));
        let (dist, _) = orbital_distance(&rotated, &u).unwrap();
        let norm = u.norm_h1_sq().sqrt();
        prop_assert!(dist <= 2e-7 * (1.0 + norm));
    }

    #[test]
    fn cutoff_support_and_identity_regions_hold(
        seed in 0u64..1000,
        a in 0.5f64..4.0,
    ) {
        let grid = GraphGrid::new(3, 9.0, 90).unwrap();
        let u = random_profile(&grid, seed);
        let cut = apply_cutoff(&u, a).unwrap();
        for e in 0..grid.n_edges() {
            for j in 0..grid.cells_per_edge() {
                let x = grid.node_x(j);
                let (c, orig) = (cut.node_value(e, j), u.node_value(e, j));
                if x <= a {
                    prop_assert!((c - orig).norm() == 0.0);
                } else if x >= 2.0 * a {
                    prop_assert!(c.norm() == 0.0);
                } else {
                    prop_assert!(c.norm() <= orig.norm() + 1e-15);
                }
            }
        }
    }
}

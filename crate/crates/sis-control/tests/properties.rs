//! Randomized checks of the model kernels and the linear solver: admissible
//! ranges, exact-minimizer optimality, smoothness bounds, and discrete
//! comparison-principle behavior that the deterministic unit tests only spot
//! check.

use proptest::prelude::*;

use sis_control::bvp::{assemble, solve_tridiagonal, BoundaryValues, Grid, PolicyField};
use sis_control::mc::{simulate_path, McConfig, Quadrature, StreamPurpose};
use sis_control::model::{
    diffusion, drift, hamiltonian_at, hamiltonian_min, running_cost, update_controls, ControlPair,
    CostParams, ModelParams, Problem, UpdateMode,
};

/// Cost weights satisfying the validation rules: everything nonnegative and
/// reducing activity at least as expensive on infected nodes.
fn valid_costs() -> impl Strategy<Value = CostParams> {
    (0.0..5.0f64, 0.0..10.0f64, 0.0..3.0f64, 0.0..5.0f64, 0.0..10.0f64).prop_map(
        |(a0, a_i, a_m_s, extra, a_r)| CostParams {
            a0,
            a_i,
            a_m_i: a_m_s + extra,
            a_m_s,
            a_r,
        },
    )
}

fn valid_model() -> impl Strategy<Value = ModelParams> {
    (0.0..2.0f64, 0.0..2.0f64, 0.0..1.0f64, 0.05..1.5f64, 0.01..0.5f64).prop_map(
        |(alpha, beta, gamma, sigma, delta)| ModelParams {
            alpha,
            beta,
            gamma,
            sigma,
            delta,
        },
    )
}

fn valid_problem() -> impl Strategy<Value = Problem> {
    (valid_model(), valid_costs(), 0.5..20.0f64).prop_map(|(model, cost, rho_max)| Problem {
        model,
        cost,
        rho_max,
    })
}

proptest! {
    /// Whatever the slope, both update rules return controls inside the
    /// admissible box.
    #[test]
    fn updates_stay_admissible_for_any_slope(
        problem in valid_problem(),
        x in 0.001..0.999f64,
        dv in -1e6..1e6f64,
        legacy in any::<bool>(),
    ) {
        let mode = if legacy { UpdateMode::Legacy } else { UpdateMode::ExactFoc };
        let u = update_controls(x, dv, &problem, mode);
        prop_assert!((0.0..=1.0).contains(&u.eta), "eta = {}", u.eta);
        prop_assert!(
            (0.0..=problem.rho_max).contains(&u.rho),
            "rho = {} (cap {})",
            u.rho,
            problem.rho_max
        );
    }

    /// On rising values the exact minimizer never produces a more expensive
    /// control choice than the legacy closed form: both are plugged into the
    /// same pointwise objective `b * dv + f`.
    #[test]
    fn exact_update_never_loses_to_the_legacy_update(
        problem in valid_problem(),
        x in 0.001..0.999f64,
        dv in 0.0..1e3f64,
    ) {
        let exact = update_controls(x, dv, &problem, UpdateMode::ExactFoc);
        let legacy = update_controls(x, dv, &problem, UpdateMode::Legacy);
        let at = |u: ControlPair| hamiltonian_at(x, 0.0, dv, 0.0, u, &problem);
        let (he, hl) = (at(exact), at(legacy));
        prop_assert!(
            he <= hl + 1e-9 * (1.0 + hl.abs()),
            "exact {he} vs legacy {hl} at x={x}, dv={dv}"
        );
    }

    /// The drift's state derivative is `eta^2 beta - eta alpha - (gamma + rho)
    /// - 2 eta^2 beta x`, so on [0, 1] its magnitude never exceeds
    /// `|eta^2 beta - eta alpha - (gamma + rho)| + 2 eta^2 beta`; the noise
    /// derivative `sigma (1 - 2x)` is bounded by `sigma`. Both coefficients
    /// are therefore Lipschitz in the state, uniformly over controls.
    #[test]
    fn drift_and_noise_are_lipschitz_in_state(
        model in valid_model(),
        x in 0.0..1.0f64,
        y in 0.0..1.0f64,
        eta in 0.0..1.0f64,
        rho in 0.0..20.0f64,
    ) {
        let u = ControlPair::new(eta, rho);
        let k_drift = (eta * eta * model.beta - eta * model.alpha - (model.gamma + rho)).abs()
            + 2.0 * eta * eta * model.beta;
        let gap = (x - y).abs();
        prop_assert!(
            (drift(x, u, &model) - drift(y, u, &model)).abs() <= k_drift * gap + 1e-12,
            "drift moves faster than its slope bound {k_drift}"
        );
        prop_assert!(
            (diffusion(x, &model) - diffusion(y, &model)).abs() <= model.sigma * gap + 1e-12
        );
    }

    /// With nonnegative infection weight and the activity-weight ordering,
    /// a more infected state never costs less to run under the same controls.
    #[test]
    fn cost_rate_never_falls_as_infection_grows(
        cost in valid_costs(),
        lo in 0.0..1.0f64,
        gap in 0.0..1.0f64,
        eta in 0.0..1.0f64,
        rho in 0.0..20.0f64,
    ) {
        let hi = (lo + gap).min(1.0);
        let u = ControlPair::new(eta, rho);
        let (fl, fh) = (running_cost(lo, u, &cost), running_cost(hi, u, &cost));
        prop_assert!(fh >= fl - 1e-12 * (1.0 + fl.abs()), "{fh} < {fl}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The reported pointwise minimum matches a brute-force scan of the
    /// control box on a 401 x 401 grid: never above a sampled control's
    /// objective, and below the scan's best by at most the objective change
    /// across one grid cell.
    #[test]
    fn pointwise_minimum_matches_a_fine_grid_scan(
        x in 0.01..0.99f64,
        v in -50.0..50.0f64,
        dv in -20.0..100.0f64,
        d2v in -100.0..100.0f64,
    ) {
        let problem = Problem::default();
        let h = hamiltonian_min(x, v, dv, d2v, &problem);

        let steps = 400usize;
        let mut brute = f64::INFINITY;
        for i in 0..=steps {
            let eta = i as f64 / steps as f64;
            for j in 0..=steps {
                let rho = problem.rho_max * j as f64 / steps as f64;
                brute = brute.min(hamiltonian_at(x, v, dv, d2v, ControlPair::new(eta, rho), &problem));
            }
        }

        let scale = 1.0 + h.abs().max(brute.abs());
        prop_assert!(h <= brute + 1e-9 * scale, "min {h} beaten by scan {brute}");

        // Objective slope bounds over the control box give the largest value
        // change across one scan cell.
        let k = &problem.cost;
        let p = &problem.model;
        let d_eta = dv.abs() * (p.alpha + 2.0 * p.beta) + 2.0 * (k.a_m_s + k.a_m_i);
        let d_rho = dv.abs() + 2.0 * k.a_r * problem.rho_max;
        let cell_gap = d_eta / steps as f64 + d_rho * problem.rho_max / steps as f64;
        prop_assert!(
            brute - h <= cell_gap + 1e-9 * scale,
            "scan best {brute} is {} below the reported minimum (allowed {cell_gap})",
            brute - h
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Nonnegative cost rate and boundary data force a nonnegative solution
    /// at every node, and with a flat upper edge the solution stays below the
    /// stationary ceiling `max(f_max / delta, dirichlet)`.
    #[test]
    fn nonnegative_data_yields_bounded_nonnegative_solutions(
        problem in valid_problem(),
        eta in 0.0..1.0f64,
        rho_frac in 0.0..1.0f64,
        n in 16usize..200,
        dirichlet_frac in 0.0..1.0f64,
    ) {
        let grid = Grid::new(0.01, 0.99, n).unwrap();
        let u = ControlPair::new(eta, rho_frac * problem.rho_max);
        let policy = PolicyField::constant(grid, u);
        // Running cost rises with the state, so its ceiling sits at x = 1.
        let f_max = running_cost(1.0, u, &problem.cost);
        let ceiling = f_max / problem.model.delta;
        let bc = BoundaryValues {
            dirichlet: dirichlet_frac * ceiling,
            neumann: 0.0,
        };
        let sys = assemble(&grid, &policy, &problem, bc).unwrap();
        let v = solve_tridiagonal(&sys).unwrap();
        let limit = ceiling.max(bc.dirichlet);
        for (i, &vi) in v.iter().enumerate() {
            prop_assert!(vi >= -1e-9 * (1.0 + limit), "v[{i}] = {vi} < 0");
            prop_assert!(vi <= limit + 1e-7 * (1.0 + limit), "v[{i}] = {vi} > {limit}");
        }
    }

    /// The tridiagonal sweep solves the system it was given: substituting the
    /// solution back reproduces every right-hand side.
    #[test]
    fn solved_rows_reproduce_the_right_hand_side(
        problem in valid_problem(),
        eta in 0.0..1.0f64,
        rho_frac in 0.0..1.0f64,
        n in 16usize..200,
        dirichlet in -50.0..50.0f64,
        neumann in -10.0..10.0f64,
    ) {
        let grid = Grid::new(0.01, 0.99, n).unwrap();
        let policy = PolicyField::constant(grid, ControlPair::new(eta, rho_frac * problem.rho_max));
        let sys = assemble(&grid, &policy, &problem, BoundaryValues { dirichlet, neumann }).unwrap();
        let v = solve_tridiagonal(&sys).unwrap();
        let rhs_scale = sys.rhs.iter().fold(1e-6f64, |m, r| m.max(r.abs()));
        for i in 0..sys.len() {
            let mut row = sys.diag[i] * v[i];
            if i > 0 {
                row += sys.lower[i] * v[i - 1];
            }
            if i + 1 < sys.len() {
                row += sys.upper[i] * v[i + 1];
            }
            prop_assert!(
                (row - sys.rhs[i]).abs() < 1e-9 * rhs_scale,
                "row {i}: {row} vs rhs {}",
                sys.rhs[i]
            );
        }
    }

    /// No discounted-cost sample can exceed the ceiling of the cost rate times
    /// the discount integral; the left rule adds at most one step of slack.
    #[test]
    fn cost_samples_respect_the_discount_ceiling(
        problem in valid_problem(),
        eta in 0.0..1.0f64,
        rho_frac in 0.0..1.0f64,
        x0 in 0.01..0.99f64,
        path in 0u64..8,
        trapezoid in any::<bool>(),
    ) {
        let u = ControlPair::new(eta, rho_frac * problem.rho_max);
        let grid = Grid::new(0.01, 0.99, 4).unwrap();
        let policy = PolicyField::constant(grid, u);
        let cfg = McConfig {
            n_paths: 1,
            dt: 0.01,
            horizon: Some(30.0),
            quadrature: if trapezoid { Quadrature::Trapezoid } else { Quadrature::Left },
            ..McConfig::default()
        };
        let (sample, _) = simulate_path(x0, &policy, &problem, &cfg, StreamPurpose::Probe(0), path);
        let f_max = running_cost(1.0, u, &problem.cost);
        let ceiling = f_max * (1.0 / problem.model.delta + cfg.dt);
        prop_assert!(sample >= 0.0);
        prop_assert!(sample <= ceiling + 1e-9 * (1.0 + ceiling), "{sample} > {ceiling}");
    }
}

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use shearflame::fields::{Direction, ScalarField, TorusGrid};
use shearflame::invariants::{self, SLACK_C};
use shearflame::operators::PhysParams;
use shearflame::profiles::{cellular_profile, constant_profile, ShearProfile};
use shearflame::solvers::{
    evolve, read_checkpoint, solve_discounted, solve_discounted_from, solve_line, write_checkpoint, SolverOptions,
};
use shearflame::effective::SolveRecord;

fn cellular(dim: usize, cells: usize) -> ShearProfile {
    cellular_profile(TorusGrid::new(dim, cells).unwrap()).unwrap()
}

fn sup_gap(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values().iter().zip(b.values()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn constant_flow_is_a_fixed_point() {
    let f = constant_profile(-0.4, TorusGrid::new(2, 16).unwrap()).unwrap();
    let dir = Direction::from_components(&[0.2, -0.5, 1.0]).unwrap();
    let sol = solve_discounted(0.1, &dir, PhysParams::new(0.2, 0.9, true).unwrap(), &f, &SolverOptions::default()).unwrap();
    let expect = -(dir.norm() + 0.9 * -0.4);
    for x in sol.scaled().values() {
        assert_abs_diff_eq!(*x, expect, epsilon = 1e-12);
    }
}

#[test]
fn zero_intensity_gives_the_norm() {
    let dir = Direction::from_components(&[0.6, 0.0, -0.8]).unwrap();
    let sol = solve_discounted(0.05, &dir, PhysParams::new(0.2, 0.0, true).unwrap(), &cellular(2, 16), &SolverOptions::default())
        .unwrap();
    for x in sol.scaled().values() {
        assert_abs_diff_eq!(*x, -1.0, epsilon = 1e-10);
    }
}

/// Pinned against the same solve at N = 128 (0.707052).
#[test]
fn cellular_mean_matches_the_fine_grid() {
    let sol = solve_discounted(0.05, &Direction::vertical(2), PhysParams::new(0.2, 0.3, true).unwrap(), &cellular(2, 32), &SolverOptions::default())
        .unwrap();
    let mean = sol.effective_mean();
    assert!((0.4..=1.0).contains(&mean));
    assert_abs_diff_eq!(mean, 0.707052, epsilon = 1e-3);
}

#[test]
fn both_initializations_reach_the_same_solution() {
    let f = cellular(2, 16);
    let dir = Direction::from_components(&[0.4, 0.0, 1.0]).unwrap();
    let opts = SolverOptions::default();
    for (a, cutoff) in [(0.6, true), (2.0, true), (1.0, false)] {
        let params = PhysParams::new(0.2, a, cutoff).unwrap();
        let lambda = 0.04;
        let from_mean = solve_discounted(lambda, &dir, params, &f, &opts).unwrap();
        let from_zero = solve_discounted_from(lambda, &dir, params, &f, &opts, Some(&ScalarField::constant(f.grid(), 0.0))).unwrap();
        assert!(from_mean.converged && from_zero.converged);
        assert!(lambda * sup_gap(&from_mean.v, &from_zero.v) <= 2.0 * opts.tol, "A = {a}, cutoff = {cutoff}");
    }
}

#[test]
fn checkpoint_resumes_a_stopped_solve() {
    let f = cellular(2, 16);
    let dir = Direction::vertical(2);
    let params = PhysParams::new(0.2, 0.8, true).unwrap();
    let short = SolverOptions { max_iter: 3, ..SolverOptions::default() };
    let partial = solve_discounted(0.02, &dir, params, &f, &short).unwrap();
    assert!(!partial.converged);

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("v.csv");
    write_checkpoint(&path, &partial, &dir, params).unwrap();
    let (v, meta) = read_checkpoint(&path).unwrap();
    assert!(!meta.converged);
    assert_eq!(meta.iteration, partial.iterations);

    let opts = SolverOptions::default();
    let resumed = solve_discounted_from(meta.lambda, &Direction::from_components(&meta.direction).unwrap(), meta.params, &f, &opts, Some(&v)).unwrap();
    let direct = solve_discounted(0.02, &dir, params, &f, &opts).unwrap();
    assert!(resumed.converged);
    assert!(0.02 * sup_gap(&resumed.v, &direct.v) <= 2.0 * opts.tol);
}

#[test]
fn evolution_of_a_constant_flow_is_linear_in_time() {
    let f = constant_profile(-0.5, TorusGrid::new(2, 16).unwrap()).unwrap();
    let dir = Direction::from_components(&[0.3, 0.0, 1.0]).unwrap();
    let trace = evolve(&dir, PhysParams::new(0.2, 1.2, true).unwrap(), &f, 4.0, &[1.0, 2.0]).unwrap();
    let rate = dir.norm() + 1.2 * -0.5;
    for (t, v) in &trace.snapshots {
        for x in v.values() {
            assert_abs_diff_eq!(*x, -rate * t, epsilon = 1e-10);
        }
    }
}

#[test]
fn evolution_without_flow_has_slope_equal_to_the_norm() {
    let dir = Direction::from_components(&[0.0, 0.5, 1.0]).unwrap();
    let trace = evolve(&dir, PhysParams::new(0.2, 0.0, true).unwrap(), &cellular(2, 16), 8.0, &[1.0, 4.0]).unwrap();
    assert!(!trace.slope.is_empty());
    for (_, s) in &trace.slope {
        for x in s.values() {
            assert_abs_diff_eq!(*x, dir.norm(), epsilon = 1e-12);
        }
    }
}

#[test]
fn evolution_gradient_grows_at_most_linearly() {
    let f = cellular(2, 16);
    let dir = Direction::vertical(2);
    let trace = evolve(&dir, PhysParams::new(0.2, 1.5, true).unwrap(), &f, 8.0, &[2.0, 4.0]).unwrap();
    assert!(invariants::gradient_growth(&trace, &dir, 1.5, &f).is_empty());
}

#[test]
fn line_solver_without_flow_is_exact() {
    let dir = Direction::from_components(&[0.7, 1.0]).unwrap();
    let f = constant_profile(0.0, TorusGrid::new(1, 1024).unwrap()).unwrap();
    let sol = solve_line(0.05, &dir, PhysParams::new(0.2, 0.5, false).unwrap(), &f, 1024, &SolverOptions::default()).unwrap();
    for x in sol.scaled().values() {
        assert_abs_diff_eq!(*x, -dir.norm(), epsilon = 1e-10);
    }
}

#[test]
fn line_solver_gradient_is_bounded_by_the_flow() {
    let dir = Direction::from_components(&[0.0, 1.0]).unwrap();
    let f = cellular(1, 1024);
    let a = 0.8;
    let sol = solve_line(0.02, &dir, PhysParams::new(0.2, a, false).unwrap(), &f, 1024, &SolverOptions::default()).unwrap();
    assert!(sol.scaled_grad_sup() <= a * f.lip_bound() + SLACK_C * f.grid().h());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn converged_solves_respect_the_discounted_bounds(
        p1 in -1.0f64..1.0,
        last in prop_oneof![0.4f64..1.5, -1.5f64..-0.4],
        d in 0.05f64..0.5,
        a in 0.0f64..2.5,
        cutoff in any::<bool>(),
        lambda in 0.02f64..0.2,
    ) {
        let f = cellular(2, 12);
        let dir = Direction::from_components(&[p1, 0.0, last]).unwrap();
        let params = PhysParams::new(d, a, cutoff).unwrap();
        let sol = solve_discounted(lambda, &dir, params, &f, &SolverOptions::default()).unwrap();
        prop_assert!(sol.converged);
        let record = SolveRecord::from_solution(&sol, &dir, params, &f).unwrap();
        let violations = invariants::discounted_bounds(&record, &dir, a, &f);
        prop_assert!(violations.is_empty(), "{violations:?}");
        prop_assert!(invariants::gradient_bound(&record, &dir, a, &f).is_none());
    }

    #[test]
    fn solutions_are_lipschitz_in_the_intensity(a1 in 0.0f64..2.0, a2 in 0.0f64..2.0, cutoff in any::<bool>()) {
        let f = cellular(2, 12);
        let dir = Direction::vertical(2);
        let opts = SolverOptions::default();
        let s1 = solve_discounted(0.05, &dir, PhysParams::new(0.2, a1, cutoff).unwrap(), &f, &opts).unwrap();
        let s2 = solve_discounted(0.05, &dir, PhysParams::new(0.2, a2, cutoff).unwrap(), &f, &opts).unwrap();
        let violations = invariants::lipschitz_in_a((a1, &s1.scaled()), (a2, &s2.scaled()), &dir, &f, opts.tol);
        prop_assert!(violations.is_none(), "{violations:?}");
    }

    /// A drift that is pointwise larger gives a larger effective mean.
    #[test]
    fn ordered_drifts_give_ordered_means(lift in 0.0f64..1.0, a in 0.1f64..2.0, cutoff in any::<bool>()) {
        let low = cellular(2, 12);
        let high = ShearProfile::from_field("lifted", low.field().map(|x| x + lift).unwrap(), false, None).unwrap();
        let dir = Direction::vertical(2);
        let opts = SolverOptions::default();
        let params = PhysParams::new(0.2, a, cutoff).unwrap();
        let m_low = solve_discounted(0.05, &dir, params, &low, &opts).unwrap().effective_mean();
        let m_high = solve_discounted(0.05, &dir, params, &high, &opts).unwrap().effective_mean();
        prop_assert!(m_high >= m_low - 2.0 * (opts.tol + SLACK_C * low.grid().h()));
    }
}

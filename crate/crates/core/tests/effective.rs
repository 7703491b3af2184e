use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use shearflame::bifurcation::{log_grid, probe_failure, sweep_a, Verdict};
use shearflame::effective::{
    connection_check, estimate_discount, estimate_longtime, inviscid_hbar_1d, EstimateOptions, DEFAULT_SCHEDULE,
    DEFAULT_THETA_U,
};
use shearflame::fields::{Direction, TorusGrid};
use shearflame::operators::PhysParams;
use shearflame::profiles::{cellular_profile, constant_profile, driven_force, ShearProfile};

fn cellular(dim: usize, cells: usize) -> ShearProfile {
    cellular_profile(TorusGrid::new(dim, cells).unwrap()).unwrap()
}

#[test]
fn long_time_estimate_is_exact_for_constant_flow() {
    let f = constant_profile(0.7, TorusGrid::new(2, 16).unwrap()).unwrap();
    let dir = Direction::from_components(&[0.0, 0.4, -1.0]).unwrap();
    let est = estimate_longtime(&dir, PhysParams::new(0.2, 0.5, true).unwrap(), &f, 8.0, DEFAULT_THETA_U).unwrap();
    assert_abs_diff_eq!(est.value, dir.norm() + 0.5 * -0.7, epsilon = 1e-10);
    assert_abs_diff_eq!(est.uniformity, 0.0, epsilon = 1e-10);
}

#[test]
fn short_horizons_are_rejected() {
    let f = cellular(2, 16);
    assert!(estimate_longtime(&Direction::vertical(2), PhysParams::new(0.2, 0.5, true).unwrap(), &f, 4.0, DEFAULT_THETA_U).is_err());
}

#[test]
fn connection_at_zero_intensity_is_trivial() {
    let f = cellular(2, 16);
    let dir = Direction::from_components(&[0.5, 0.0, 1.0]).unwrap();
    let report =
        connection_check(&dir, PhysParams::new(0.2, 0.0, true).unwrap(), &f, &DEFAULT_SCHEDULE, &EstimateOptions::default())
            .unwrap();
    assert_abs_diff_eq!(report.hbar, dir.norm(), epsilon = 1e-9);
    assert!(report.max_formula_gap <= 1e-9);
}

#[test]
fn zero_intensity_probe_homogenizes() {
    let probe = probe_failure(&Direction::vertical(2), 0.2, &cellular(2, 16), 0.0, &DEFAULT_SCHEDULE, &EstimateOptions::default())
        .unwrap();
    assert_eq!(probe.verdict, Verdict::Homogenizes);
    assert!(probe.uniformity_series.iter().all(|u| *u <= 1e-9));
}

/// Below the knee the cutoff curve decreases; its first row is `|P|`.
#[test]
fn cellular_sweep_starts_at_the_norm_and_decreases() {
    let f = cellular(2, 16);
    let dir = Direction::vertical(2);
    let grid = log_grid(0.1, 0.8, 4).unwrap();
    let curve = sweep_a(&dir, 0.2, &f, &grid, true, &DEFAULT_SCHEDULE, &EstimateOptions::default()).unwrap();
    assert_abs_diff_eq!(curve.rows[0].hbar.unwrap(), 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(curve.rows[0].hbar_plus.unwrap(), 1.0, epsilon = 1e-9);
    let force = driven_force(&dir, &f);
    for w in curve.rows.windows(2) {
        assert!(w[1].hbar_plus.unwrap() < w[0].hbar_plus.unwrap());
        assert!(w[1].hbar_plus.unwrap() >= w[1].intensity * force - 1e-3);
    }
}

#[test]
fn inviscid_value_without_flow_is_the_norm() {
    let dir = Direction::from_components(&[0.8, -0.6]).unwrap();
    let h = inviscid_hbar_1d(&dir, 0.0, &cellular(1, 64), 4096).unwrap();
    assert_abs_diff_eq!(h, 1.0, epsilon = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Scaling `P` scales the cutoff value.
    #[test]
    fn cutoff_value_is_positively_homogeneous(p1 in -0.5f64..0.5, scale in 1.5f64..3.0, a in 0.0f64..0.6) {
        let f = cellular(2, 12);
        let one = Direction::from_components(&[p1, 0.0, 1.0]).unwrap();
        let many = Direction::from_components(&[scale * p1, 0.0, scale]).unwrap();
        let params = PhysParams::new(0.2, a, true).unwrap();
        let opts = EstimateOptions::default();
        let e1 = estimate_discount(&one, params, &f, &DEFAULT_SCHEDULE, &opts).unwrap();
        let e2 = estimate_discount(&many, params, &f, &DEFAULT_SCHEDULE, &opts).unwrap();
        prop_assert!((e2.value - scale * e1.value).abs() <= e2.error_bar + scale * e1.error_bar + 1e-9);
    }

    #[test]
    fn inviscid_value_respects_the_drift_bounds(p in -2.0f64..2.0, last in 0.3f64..2.0, a in 0.0f64..2.0) {
        let f = cellular(1, 64);
        let dir = Direction::from_components(&[p, last]).unwrap();
        let h = inviscid_hbar_1d(&dir, a, &f, 4096).unwrap();
        prop_assert!(h >= last + a * driven_force(&dir, &f) - 1e-9);
        prop_assert!(h <= dir.norm() + a * driven_force(&dir, &f) + 1e-6);
    }
}

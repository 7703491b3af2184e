//! Effective values from the discounted and long-time problems, the
//! connection formula, and the inviscid one-dimensional effective Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{oscillation, Direction, ScalarField};
use crate::operators::{g_operator, PhysParams};
use crate::profiles::{driven_force, ShearProfile};
use crate::solvers::{evolve, grad_sup, solve_discounted_from, DiscountedSolution, SolverOptions};

pub const DEFAULT_SCHEDULE: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
/// Largest final oscillation of `lambda v` still read as homogenized.
pub const DEFAULT_THETA_U: f64 = 0.05;
pub const MIN_HORIZON: f64 = 8.0;
pub const MIN_QUADRATURE_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DiscountExtrapolated,
    LongTimeSlope,
    InviscidQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub solver: SolverOptions,
    pub theta_u: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { solver: SolverOptions::default(), theta_u: DEFAULT_THETA_U }
    }
}

/// Diagnostics of one converged discounted solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    /// mean of `-lambda v`
    pub mean: f64,
    /// oscillation of `lambda v`
    pub uniformity: f64,
    pub scaled_min: f64,
    pub scaled_max: f64,
    /// `lambda sup |Dv|`
    pub scaled_grad_sup: f64,
    /// sup of `|G[v] - mean G[v]|`, how far `v` is from an exact corrector
    pub corrector_residual: f64,
}

impl SolveRecord {
    pub fn from_solution(sol: &DiscountedSolution, dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<Self> {
        let scaled = sol.scaled();
        let rhs = g_operator(&sol.v, dir, params, f)?.rhs;
        let mean_rhs = rhs.mean();
        Ok(SolveRecord {
            lambda: sol.lambda,
            residual: sol.residual,
            iterations: sol.iterations,
            mean: -scaled.mean(),
            uniformity: oscillation(&scaled),
            scaled_min: scaled.min(),
            scaled_max: scaled.max(),
            scaled_grad_sup: sol.lambda * grad_sup(&sol.v),
            corrector_residual: rhs.values().iter().fold(0.0, |m, r| m.max((r - mean_rhs).abs())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveEstimate {
    #[serde(rename = "P")]
    pub direction: Vec<f64>,
    pub d: f64,
    #[serde(rename = "A")]
    pub intensity: f64,
    pub cutoff: bool,
    pub method: Method,
    pub value: f64,
    pub error_bar: f64,
    pub uniformity: f64,
    pub homogenized: bool,
    pub schedule: Vec<f64>,
    pub horizon: Option<f64>,
    #[serde(rename = "grid_N")]
    pub grid_n: usize,
    pub residuals: Vec<f64>,
    pub uniformity_series: Vec<f64>,
    pub solves: Vec<SolveRecord>,
    /// `lambda v` of every solve, kept for cross-run invariant checks.
    #[serde(skip)]
    pub scaled_fields: Vec<ScalarField>,
}

impl EffectiveEstimate {
    fn blank(dir: &Direction, params: PhysParams, f: &ShearProfile, method: Method) -> Self {
        EffectiveEstimate {
            direction: dir.components(),
            d: params.d,
            intensity: params.intensity,
            cutoff: params.cutoff,
            method,
            value: 0.0,
            error_bar: 0.0,
            uniformity: 0.0,
            homogenized: false,
            schedule: Vec::new(),
            horizon: None,
            grid_n: f.grid().cells(),
            residuals: Vec::new(),
            uniformity_series: Vec::new(),
            solves: Vec::new(),
            scaled_fields: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Linear-in-lambda extrapolation to `lambda = 0` through the last two points.
pub fn richardson(l1: f64, m1: f64, l2: f64, m2: f64) -> f64 {
    m2 + (m2 - m1) * l2 / (l1 - l2)
}

/// Final value at most `theta_u` and no growth over the last three entries.
pub fn shrinking_below(series: &[f64], theta_u: f64, slack: f64) -> bool {
    let k = series.len();
    k >= 3
        && series[k - 1] <= theta_u
        && series[k - 3..].windows(2).all(|w| w[1] <= w[0] + slack)
}

pub fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(Error::param("schedule", "needs at least 3 discounts"));
    }
    if schedule.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::param("schedule", "discounts must be positive"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("schedule", "must be strictly decreasing"));
    }
    Ok(())
}

/// Vanishing-discount estimate of the effective value, solving along the
/// schedule with each solve seeded by the previous one rescaled to keep
/// `lambda v` fixed.
pub fn estimate_discount(
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<EffectiveEstimate> {
    check_schedule(schedule)?;
    if !(opts.theta_u > 0.0) {
        return Err(Error::param("theta_u", "must be positive"));
    }
    let mut est = EffectiveEstimate::blank(dir, params, f, Method::DiscountExtrapolated);
    est.schedule = schedule.to_vec();
    let mut previous: Option<DiscountedSolution> = None;
    for &lambda in schedule {
        let init = match &previous {
            Some(prev) => {
                let ratio = prev.lambda / lambda;
                Some(prev.v.map(|x| ratio * x)?)
            }
            None => None,
        };
        let sol = solve_discounted_from(lambda, dir, params, f, &opts.solver, init.as_ref())?;
        if !sol.converged {
            return Err(Error::InvalidEstimate(format!(
                "solve at lambda = {lambda} stopped at residual {:.3e} after {} iterations",
                sol.residual, sol.iterations
            )));
        }
        let record = SolveRecord::from_solution(&sol, dir, params, f)?;
        est.residuals.push(record.residual);
        est.uniformity_series.push(record.uniformity);
        est.solves.push(record);
        est.scaled_fields.push(sol.scaled());
        previous = Some(sol);
    }
    let k = schedule.len();
    let (m1, m2) = (est.solves[k - 2].mean, est.solves[k - 1].mean);
    est.value = richardson(schedule[k - 2], m1, schedule[k - 1], m2);
    est.uniformity = est.uniformity_series[k - 1];
    est.error_bar = (m2 - est.value).abs() + est.uniformity;
    est.homogenized = shrinking_below(&est.uniformity_series, opts.theta_u, opts.solver.tol);
    Ok(est)
}

/// Long-time estimate: mean of `-v(., T) / T` from the evolution started at zero.
pub fn estimate_longtime(
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    horizon: f64,
    theta_u: f64,
) -> Result<EffectiveEstimate> {
    if !(horizon >= MIN_HORIZON && horizon.is_finite()) {
        return Err(Error::param("T", format!("horizon must be at least {MIN_HORIZON}")));
    }
    let checkpoints = [horizon / 4.0, horizon / 2.0, horizon];
    let trace = evolve(dir, params, f, horizon, &checkpoints)?;
    let slope_at = |t: f64| -> &ScalarField {
        &trace.slope.iter().find(|(s, _)| *s == t).expect("requested snapshot").1
    };
    let series: Vec<f64> = checkpoints.iter().map(|t| oscillation(slope_at(*t))).collect();
    let half = slope_at(horizon / 2.0).mean();
    let last = slope_at(horizon);

    let mut est = EffectiveEstimate::blank(dir, params, f, Method::LongTimeSlope);
    est.horizon = Some(horizon);
    est.value = last.mean();
    est.uniformity = series[2];
    est.error_bar = (est.value - half).abs() + est.uniformity;
    est.homogenized = shrinking_below(&series, theta_u, 0.0);
    est.uniformity_series = series;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionReport {
    #[serde(rename = "Hbar")]
    pub hbar: f64,
    #[serde(rename = "Hbar_plus")]
    pub hbar_plus: f64,
    #[serde(rename = "AF")]
    pub af: f64,
    pub max_formula_gap: f64,
    pub error_bar: f64,
}

/// Compares the cutoff value with `max(Hbar, A F(P))`.
pub fn connection_check(
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<ConnectionReport> {
    let plain = estimate_discount(dir, params.with_cutoff(false), f, schedule, opts)?;
    let cut = estimate_discount(dir, params.with_cutoff(true), f, schedule, opts)?;
    connection_from(&plain, &cut, params.intensity * driven_force(dir, f))
}

/// The connection report from already computed non-cutoff and cutoff estimates.
pub fn connection_from(plain: &EffectiveEstimate, cut: &EffectiveEstimate, af: f64) -> Result<ConnectionReport> {
    if !plain.homogenized || !cut.homogenized {
        return Err(Error::InvalidEstimate(format!(
            "connection needs homogenized estimates (non-cutoff {}, cutoff {})",
            plain.homogenized, cut.homogenized
        )));
    }
    Ok(ConnectionReport {
        hbar: plain.value,
        hbar_plus: cut.value,
        af,
        max_formula_gap: (cut.value - plain.value.max(af)).abs(),
        error_bar: plain.error_bar + cut.error_bar,
    })
}

/// Effective Hamiltonian of the first-order problem `d = 0` in one transverse
/// dimension: the smallest `H >= |p_last| + A max(p_last f)` with
/// `mean sqrt((H - A p_last f)^2 - p_last^2) >= |p|`.
pub fn inviscid_hbar_1d(dir: &Direction, intensity: f64, f: &ShearProfile, cells: usize) -> Result<f64> {
    if dir.dim() != 1 || f.grid().dim() != 1 {
        return Err(Error::param("P", "the inviscid quadrature needs n = 1"));
    }
    if dir.p_last() == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(Error::param("A", "flow intensity must be finite and >= 0"));
    }
    if cells < MIN_QUADRATURE_CELLS {
        return Err(Error::param("N_dense", format!("must be at least {MIN_QUADRATURE_CELLS}")));
    }
    let dense = crate::solvers::resample_line(f, cells)?;
    let pl = dir.p_last();
    let drift: Vec<f64> = dense.values().iter().map(|x| intensity * pl * x).collect();
    let top = drift.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = dir.p()[0].abs();
    let mut lo = pl.abs() + top;
    if p == 0.0 {
        return Ok(lo);
    }
    let excess = |h: f64| {
        drift.iter().map(|a| ((h - a).powi(2) - pl * pl).max(0.0).sqrt()).sum::<f64>() / drift.len() as f64 - p
    };
    // at |P| + A max(p_last f) every integrand is at least |p|
    let mut hi = dir.norm() + top;
    if excess(lo) >= 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TorusGrid;
    use crate::profiles::{cellular_profile, constant_profile};

    fn line(cells: usize) -> ShearProfile {
        cellular_profile(TorusGrid::new(1, cells).unwrap()).unwrap()
    }

    #[test]
    fn richardson_is_exact_on_lines() {
        let value = richardson(0.04, 1.0 + 3.0 * 0.04, 0.02, 1.0 + 3.0 * 0.02);
        assert!((value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn schedule_validation() {
        assert!(check_schedule(&[0.1, 0.05]).is_err());
        assert!(check_schedule(&[0.1, 0.1, 0.05]).is_err());
        assert!(check_schedule(&[0.1, 0.05, -0.01]).is_err());
        assert!(check_schedule(&DEFAULT_SCHEDULE).is_ok());
    }

    #[test]
    fn shrink_verdict() {
        assert!(shrinking_below(&[0.3, 0.02, 0.01, 0.005], 0.05, 0.0));
        assert!(shrinking_below(&[0.0, 0.0, 0.0], 0.05, 0.0));
        assert!(!shrinking_below(&[0.01, 0.02, 0.01], 0.05, 0.0));
        assert!(!shrinking_below(&[0.3, 0.2, 0.1], 0.05, 0.0));
    }

    #[test]
    fn constant_flow_is_exact() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let f = constant_profile(-0.4, grid).unwrap();
        let dir = Direction::new(vec![0.3, -0.4], 1.2).unwrap();
        let params = PhysParams::new(0.2, 0.7, true).unwrap();
        let est = estimate_discount(&dir, params, &f, &DEFAULT_SCHEDULE, &EstimateOptions::default()).unwrap();
        let exact = dir.norm() + 0.7 * 1.2 * -0.4;
        assert!((est.value - exact).abs() < 1e-6, "{} vs {exact}", est.value);
        assert!(est.uniformity < 1e-9);
        assert!(est.homogenized);
    }

    #[test]
    fn zero_intensity_gives_the_norm() {
        let f = cellular_profile(TorusGrid::new(2, 8).unwrap()).unwrap();
        let dir = Direction::new(vec![0.5, 0.0], 1.0).unwrap();
        let params = PhysParams::new(0.2, 0.0, true).unwrap();
        let est = estimate_discount(&dir, params, &f, &DEFAULT_SCHEDULE, &EstimateOptions::default()).unwrap();
        assert!((est.value - dir.norm()).abs() < 1e-6);
        assert!(est.homogenized);
    }

    #[test]
    fn report_json_has_the_schema_keys() {
        let f = constant_profile(0.0, TorusGrid::new(1, 8).unwrap()).unwrap();
        let dir = Direction::new(vec![0.0], 1.0).unwrap();
        let params = PhysParams::new(0.1, 0.0, false).unwrap();
        let est = estimate_discount(&dir, params, &f, &DEFAULT_SCHEDULE, &EstimateOptions::default()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&est.to_json().unwrap()).unwrap();
        for key in ["P", "d", "A", "cutoff", "method", "value", "error_bar", "uniformity", "homogenized", "schedule", "grid_N", "residuals"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["method"], "discount-extrapolated");
    }

    #[test]
    fn quadrature_endpoint_cases() {
        let f = line(64);
        let vertical = Direction::new(vec![0.0], 1.0).unwrap();
        // p = 0: the bracket endpoint |p_last| + A max(p_last f) = 1 + 0
        assert_eq!(inviscid_hbar_1d(&vertical, 0.5, &f, 4096).unwrap(), 1.0);
        let tilted = Direction::new(vec![0.7], -1.3).unwrap();
        let h = inviscid_hbar_1d(&tilted, 0.0, &f, 4096).unwrap();
        assert!((h - tilted.norm()).abs() < 1e-10);
        assert!(inviscid_hbar_1d(&tilted, 0.5, &f, 1024).is_err());
    }

    #[test]
    fn quadrature_against_closed_form_for_a_two_level_flow() {
        // f = 0 on half the cell and -1 on the other half: the condition reads
        // (sqrt(H^2 - 1) + sqrt((H + A)^2 - 1)) / 2 = |p| for H above the pinned value
        let grid = TorusGrid::new(1, 4096).unwrap();
        let field = ScalarField::from_fn(grid, |x| if x[0] < 0.5 { 0.0 } else { -1.0 }).unwrap();
        let f = ShearProfile::from_field("step", field, false, None).unwrap();
        let dir = Direction::new(vec![2.0], 1.0).unwrap();
        let a = 0.8;
        let h = inviscid_hbar_1d(&dir, a, &f, 4096).unwrap();
        let lhs = 0.5 * ((h * h - 1.0).sqrt() + ((h + a).powi(2) - 1.0).sqrt());
        assert!((lhs - 2.0).abs() < 1e-9, "{lhs}");
    }
}

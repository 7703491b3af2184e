//! The invariant suite behind `validate`: small-grid versions of the
//! structural properties of the effective Hamiltonian, each reported with the
//! measured quantity and its threshold.

use rayon::prelude::*;
use serde::Serialize;
use shearflame::bifurcation::find_a1;
use shearflame::effective::{
    connection_from, estimate_discount, estimate_longtime, inviscid_hbar_1d, EffectiveEstimate, EstimateOptions,
    DEFAULT_SCHEDULE,
};
use shearflame::error::Result;
use shearflame::fields::{oscillation, Direction, ScalarField, TorusGrid};
use shearflame::invariants::{self, Violation, SLACK_C};
use shearflame::operators::PhysParams;
use shearflame::profiles::{cellular_profile, constant_profile, counterexample_profile, driven_force, min_drift, ShearProfile};
use shearflame::solvers::{evolve, solve_discounted_from, solve_line, SolverOptions};

/// Cells per axis of the two-dimensional suite.
pub const SUITE_N: usize = 16;
pub const SUITE_N_LINE: usize = 64;
pub const LINE_CELLS: usize = 1024;
/// Margin below `1 + A F(e_{n+1})` required of the vertical non-cutoff value.
pub const DELTA_DRIFT: f64 = 0.05;
pub const DELTA_MONO: f64 = 1e-3;
/// Strict gap of the counterexample's non-cutoff value below zero.
pub const DELTA_CE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub violations: Vec<Violation>,
    #[serde(skip)]
    pub estimates: Vec<(String, EffectiveEstimate)>,
}

impl ValidationReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

/// Estimates and invariant violations gathered by one check.
#[derive(Default)]
struct Ctx {
    estimates: Vec<(String, EffectiveEstimate)>,
    violations: Vec<Violation>,
}

impl Ctx {
    fn estimate(&mut self, label: &str, dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<EffectiveEstimate> {
        let est = estimate_discount(dir, params, f, &DEFAULT_SCHEDULE, &EstimateOptions::default())?;
        self.violations.extend(invariants::check_estimate(&est, dir, f));
        self.estimates.push((label.to_string(), est.clone()));
        Ok(est)
    }
}

fn result(name: &str, passed: bool, measured: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, measured, threshold, detail }
}

fn cellular(dim: usize, n: usize) -> ShearProfile {
    cellular_profile(TorusGrid::new(dim, n).expect("valid grid")).expect("cellular profile")
}

fn dir(components: &[f64]) -> Direction {
    Direction::from_components(components).expect("valid direction")
}

fn params(d: f64, a: f64, cutoff: bool) -> PhysParams {
    PhysParams { d, intensity: a, cutoff }
}

fn zero_intensity(ctx: &mut Ctx) -> Result<CheckResult> {
    let p = dir(&[0.3, -0.2, 1.0]);
    let est = ctx.estimate("zero-intensity", &p, params(0.2, 0.0, true), &cellular(2, SUITE_N))?;
    let rel = (est.value - p.norm()).abs() / p.norm();
    Ok(result("zero-intensity", rel <= 1e-3, rel, 1e-3, format!("Hbar_plus = {}, |P| = {}", est.value, p.norm())))
}

fn constant_flow(ctx: &mut Ctx) -> Result<CheckResult> {
    let p = dir(&[0.3, -0.2, 1.0]);
    let f = constant_profile(-0.3, TorusGrid::new(2, SUITE_N)?)?;
    let est = ctx.estimate("constant-flow", &p, params(0.2, 0.8, false), &f)?;
    let exact = p.norm() + 0.8 * -0.3;
    let err = (est.value - exact).abs();
    Ok(result("constant-flow", err <= 1e-6, err, 1e-6, format!("Hbar = {}, exact {exact}", est.value)))
}

fn bounds(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let samples: [(f64, f64, [f64; 3]); 6] = [
        (0.05, 0.4, [0.0, 0.0, 1.0]),
        (0.2, 1.0, [0.5, 0.0, 1.0]),
        (0.5, 1.6, [0.3, 0.4, -1.0]),
        (0.2, 2.4, [1.0, 1.0, 0.5]),
        (0.1, 0.8, [0.0, 0.7, -0.8]),
        (0.3, 3.0, [0.0, 0.0, 1.0]),
    ];
    let mut worst = f64::NEG_INFINITY;
    for (d, a, comps) in samples {
        let p = dir(&comps);
        let est = ctx.estimate("bounds", &p, params(d, a, false), &f)?;
        let lo = p.norm() + a * min_drift(&p, &f);
        let hi = p.norm() + a * driven_force(&p, &f);
        let widen = est.error_bar + 1e-2;
        worst = worst.max(lo - widen - est.value).max(est.value - hi - widen);
    }
    Ok(result("bounds", worst <= 0.0, worst, 0.0, "largest excess outside [|P| + A min(p_last f), |P| + A F(P)]".into()))
}

fn monotone_in_a(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = Direction::vertical(2);
    let force = driven_force(&p, &f);
    let mut g = Vec::new();
    let mut estimates = Vec::new();
    for k in 1..=8 {
        let a = 0.2 * k as f64;
        let est = ctx.estimate("monotone-in-A", &p, params(0.2, a, false), &f)?;
        g.push(est.value - a * force);
        estimates.push(est);
    }
    ctx.violations.extend(invariants::check_across_intensities(&estimates, &p, &f, SolverOptions::default().tol));
    let worst = g.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(result("monotone-in-A", worst < -DELTA_MONO, worst, -DELTA_MONO, "largest difference of Hbar - A F over A = 0.2..1.6".into()))
}

fn vanishing_intensity(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = dir(&[0.4, 0.0, 1.0]);
    let mut gaps = Vec::new();
    for a in [0.1, 0.05, 0.025] {
        let est = ctx.estimate("vanishing-intensity", &p, params(0.2, a, false), &f)?;
        gaps.push((est.value - p.norm()).abs());
    }
    let worst = gaps.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(result("vanishing-intensity", worst < 0.0, worst, 0.0, format!("gaps to |P|: {gaps:?}")))
}

fn drift_direction(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = Direction::vertical(2);
    let mut worst = f64::NEG_INFINITY;
    for a in [0.5, 1.0] {
        let est = ctx.estimate("drift-direction", &p, params(0.2, a, false), &f)?;
        worst = worst.max(est.value - (1.0 + a * driven_force(&p, &f)));
    }
    Ok(result("drift-direction", worst < -DELTA_DRIFT, worst, -DELTA_DRIFT, "largest Hbar - (1 + A F(e_3))".into()))
}

fn connection(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = Direction::vertical(2);
    let a1 = find_a1(&p, 0.2, &f, (0.0, 4.0), 1e-2, &DEFAULT_SCHEDULE, &EstimateOptions::default())?;
    let mut worst: f64 = 0.0;
    for k in [0.25, 0.5, 0.75] {
        let a = k * a1.a1;
        let plain = ctx.estimate("connection", &p, params(0.2, a, false), &f)?;
        let cut = ctx.estimate("connection", &p, params(0.2, a, true), &f)?;
        worst = worst.max(connection_from(&plain, &cut, a * driven_force(&p, &f))?.max_formula_gap);
    }
    Ok(result("connection", worst <= 2e-2, worst, 2e-2, format!("A1 = {}", a1.a1)))
}

fn homogeneity(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let one = ctx.estimate("homogeneity", &dir(&[0.3, 0.0, 1.0]), params(0.2, 0.5, true), &f)?;
    let two = ctx.estimate("homogeneity", &dir(&[0.6, 0.0, 2.0]), params(0.2, 0.5, true), &f)?;
    let gap = (two.value - 2.0 * one.value).abs();
    let bar = one.error_bar + two.error_bar;
    Ok(result("homogeneity", gap <= bar, gap, bar, format!("Hbar_plus(P) = {}, Hbar_plus(2P) = {}", one.value, two.value)))
}

fn cross_solver(_: &mut Ctx) -> Result<CheckResult> {
    let p = dir(&[0.0, 1.0]);
    let par = params(0.2, 0.5, false);
    let opts = SolverOptions::default();
    let generic = solve_discounted_from(0.02, &p, par, &cellular(1, SUITE_N_LINE), &opts, None)?;
    let line = solve_line(0.02, &p, par, &cellular(1, LINE_CELLS), LINE_CELLS, &opts)?;
    let gap = (generic.effective_mean() - line.effective_mean()).abs();
    Ok(result("cross-solver", gap <= 5e-3, gap, 5e-3, format!("generic {}, line {}", generic.effective_mean(), line.effective_mean())))
}

fn inviscid_limit(ctx: &mut Ctx) -> Result<CheckResult> {
    let p = dir(&[1.0, 1.0]);
    let target = inviscid_hbar_1d(&p, 0.5, &cellular(1, 4096), 4096)?;
    let est = ctx.estimate("inviscid-limit", &p, params(0.01, 0.5, false), &cellular(1, 128))?;
    let gap = (est.value - target).abs();
    Ok(result("inviscid-limit", gap <= 3e-2, gap, 3e-2, format!("quadrature {target}, d = 0.01 estimate {}", est.value)))
}

fn long_time(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = Direction::vertical(2);
    let par = params(0.2, 0.5, true);
    let disc = ctx.estimate("long-time", &p, par, &f)?;
    let lt = estimate_longtime(&p, par, &f, 16.0, EstimateOptions::default().theta_u)?;
    let gap = (lt.value - disc.value).abs();
    let bar = lt.error_bar.max(disc.error_bar);
    Ok(result("long-time", gap <= bar, gap, bar, format!("long-time {}, discount {}", lt.value, disc.value)))
}

fn ordering(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let half = f.scaled(0.5)?;
    let p = Direction::vertical(2);
    let low = ctx.estimate("ordering", &p, params(0.2, 1.0, false), &f)?;
    let high = ctx.estimate("ordering", &p, params(0.2, 1.0, false), &half)?;
    let slack = 2.0 * (SolverOptions::default().tol + SLACK_C * f.grid().h());
    let excess = low.value - high.value;
    Ok(result("ordering", excess <= slack, excess, slack, "Hbar(f) - Hbar(f / 2) with f <= f / 2".into()))
}

fn dual_init(_: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let p = Direction::vertical(2);
    let par = params(0.2, 0.7, true);
    let opts = SolverOptions::default();
    let lambda = 0.05;
    let a = solve_discounted_from(lambda, &p, par, &f, &opts, None)?;
    let zero = ScalarField::constant(f.grid(), 0.0);
    let b = solve_discounted_from(lambda, &p, par, &f, &opts, Some(&zero))?;
    let gap = lambda * a.v.values().iter().zip(b.v.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let bound = a.residual + b.residual + 1e-12;
    Ok(result("dual-init", gap <= bound, gap, bound, format!("iterations {} and {}", a.iterations, b.iterations)))
}

fn bernstein(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let est = ctx.estimate("gradient-bounded", &Direction::vertical(2), params(0.2, 0.8, false), &f)?;
    let grads: Vec<f64> = est.solves.iter().map(|r| r.scaled_grad_sup / r.lambda).collect();
    let worst = grads.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    Ok(result("gradient-bounded", worst <= 1.2, worst, 1.2, format!("sup |Dv| along the schedule: {grads:?}")))
}

fn corrector(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let est = ctx.estimate("approximate-corrector", &Direction::vertical(2), params(0.2, 0.5, true), &f)?;
    let series: Vec<f64> = est.solves.iter().map(|r| r.corrector_residual).collect();
    let last = *series.last().expect("non-empty schedule");
    let shrinking = series.windows(2).all(|w| w[1] < w[0]);
    Ok(result("approximate-corrector", shrinking, last, series[0], format!("sup |G[v] - mean G[v]|: {series:?}")))
}

fn counterexample(ctx: &mut Ctx) -> Result<CheckResult> {
    let (f, _) = counterexample_profile(shearflame::profiles::DEFAULT_PSI_AMPLITUDE, 0.2, TorusGrid::new(2, SUITE_N)?)?;
    let p = Direction::vertical(2);
    let cut = ctx.estimate("counterexample", &p, params(0.2, 1.0, true), &f)?;
    let plain = ctx.estimate("counterexample", &p, params(0.2, 1.0, false), &f)?;
    let passed = cut.value.abs() <= 1e-2 && plain.value <= -DELTA_CE;
    Ok(result("counterexample", passed, plain.value, -DELTA_CE, format!("Hbar_plus = {}, Hbar = {}", cut.value, plain.value)))
}

fn evolution(ctx: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let flat = dir(&[0.3, 0.0, 1.0]);
    let still = evolve(&flat, params(0.2, 0.0, true), &f, 8.0, &[1.0, 4.0])?;
    let still_err = still.slope.iter().map(|(_, s)| s.values().iter().fold(0.0f64, |m, x| m.max((x - flat.norm()).abs()))).fold(0.0, f64::max);

    let p = Direction::vertical(2);
    let trace = evolve(&p, params(0.2, 0.5, true), &f, 32.0, &[8.0, 16.0])?;
    ctx.violations.extend(invariants::gradient_growth(&trace, &p, 0.5, &f));
    let osc: Vec<f64> = trace.slope.iter().filter(|(t, _)| *t >= 8.0).map(|(_, s)| oscillation(s)).collect();
    let ratios: Vec<f64> = osc.windows(2).map(|w| w[1] / w[0]).collect();
    let passed = still_err <= 1e-12 && ratios.iter().all(|r| (0.3..=0.7).contains(r));
    Ok(result(
        "evolution",
        passed,
        ratios.iter().copied().fold(0.0, f64::max),
        0.7,
        format!("A = 0 slope error {still_err:e}; oscillation of -v/t at t = 8, 16, 32: {osc:?}"),
    ))
}

fn reflection(_: &mut Ctx) -> Result<CheckResult> {
    let f = cellular(2, SUITE_N);
    let opts = EstimateOptions::default();
    let tol_a = 1e-2;
    let up = find_a1(&dir(&[0.0, 0.0, 1.0]), 0.2, &f, (0.0, 4.0), tol_a, &DEFAULT_SCHEDULE, &opts)?;
    let down = find_a1(&dir(&[0.0, 0.0, -1.0]), 0.2, &f, (0.0, 4.0), tol_a, &DEFAULT_SCHEDULE, &opts)?;
    let gap = (up.a1 - down.a1).abs();
    Ok(result("reflection", gap <= 2.0 * tol_a, gap, 2.0 * tol_a, format!("A1(e_3) = {}, A1(-e_3) = {}", up.a1, down.a1)))
}

type Check = fn(&mut Ctx) -> Result<CheckResult>;

const CHECKS: [(&str, Check); 18] = [
    ("zero-intensity", zero_intensity),
    ("constant-flow", constant_flow),
    ("bounds", bounds),
    ("monotone-in-A", monotone_in_a),
    ("vanishing-intensity", vanishing_intensity),
    ("drift-direction", drift_direction),
    ("connection", connection),
    ("homogeneity", homogeneity),
    ("cross-solver", cross_solver),
    ("inviscid-limit", inviscid_limit),
    ("long-time", long_time),
    ("ordering", ordering),
    ("dual-init", dual_init),
    ("gradient-bounded", bernstein),
    ("approximate-corrector", corrector),
    ("counterexample", counterexample),
    ("evolution", evolution),
    ("reflection", reflection),
];

/// Runs every check on the current rayon pool and appends a final check for
/// the runtime invariants collected along the way.
pub fn run_suite() -> Result<ValidationReport> {
    let outcomes: Vec<(CheckResult, Ctx)> = CHECKS
        .par_iter()
        .map(|(name, check)| {
            let mut ctx = Ctx::default();
            let res = check(&mut ctx).unwrap_or_else(|e| result(name, false, f64::NAN, f64::NAN, format!("error: {e}")));
            (res, ctx)
        })
        .collect();
    let mut report = ValidationReport { checks: Vec::new(), violations: Vec::new(), estimates: Vec::new() };
    for (res, ctx) in outcomes {
        report.checks.push(res);
        report.violations.extend(ctx.violations);
        report.estimates.extend(ctx.estimates);
    }
    let count = report.violations.len();
    let solves: usize = report.estimates.iter().map(|(_, e)| e.solves.len()).sum();
    report.checks.push(result(
        "runtime-invariants",
        count == 0,
        count as f64,
        0.0,
        format!("violations across {solves} logged solves"),
    ));
    Ok(report)
}

//! Runtime checks of the a-priori estimates on converged solves: the range
//! of `lambda v`, the uniform gradient bound, Lipschitz dependence on `A`,
//! and linear gradient growth along the evolution.

use serde::{Deserialize, Serialize};

use crate::effective::{EffectiveEstimate, SolveRecord};
use crate::fields::{Direction, ScalarField};
use crate::profiles::{driven_force, min_drift, ShearProfile};
use crate::solvers::EvolutionTrace;

/// Grid-dependent slack `C h` shared by all checks.
pub const SLACK_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
    /// Amount by which the bound is exceeded after slack.
    pub excess: f64,
}

fn violation(check: &str, excess: f64, detail: String) -> Option<Violation> {
    (excess > 0.0).then(|| Violation { check: check.to_string(), detail, excess })
}

/// `-|P| - A max(p_last f) <= lambda v <= -|P| - A min(p_last f)` up to
/// `10 residual + C h`.
pub fn discounted_bounds(record: &SolveRecord, dir: &Direction, intensity: f64, f: &ShearProfile) -> Vec<Violation> {
    let slack = 10.0 * record.residual + SLACK_C * f.grid().h();
    let lo = -dir.norm() - intensity * driven_force(dir, f);
    let hi = -dir.norm() - intensity * min_drift(dir, f);
    let at = format!("A = {intensity}, lambda = {}", record.lambda);
    [
        violation("discounted-lower", lo - slack - record.scaled_min, format!("{at}: min lambda v = {} < {lo}", record.scaled_min)),
        violation("discounted-upper", record.scaled_max - hi - slack, format!("{at}: max lambda v = {} > {hi}", record.scaled_max)),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// `lambda sup |Dv| <= A |p_last| Lip(f) + C h`.
pub fn gradient_bound(record: &SolveRecord, dir: &Direction, intensity: f64, f: &ShearProfile) -> Option<Violation> {
    let bound = intensity * dir.p_last().abs() * f.lip_bound() + SLACK_C * f.grid().h();
    violation(
        "gradient-bound",
        record.scaled_grad_sup - bound,
        format!("A = {intensity}, lambda = {}: {} > {bound}", record.lambda, record.scaled_grad_sup),
    )
}

/// `lambda sup |v1 - v2| <= |A1 - A2| |p_last| max|f| + 2 (tol + C h)` for
/// solves that share everything but `A`.
pub fn lipschitz_in_a(
    (a1, scaled1): (f64, &ScalarField),
    (a2, scaled2): (f64, &ScalarField),
    dir: &Direction,
    f: &ShearProfile,
    tol: f64,
) -> Option<Violation> {
    let gap = scaled1.values().iter().zip(scaled2.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let bound = (a1 - a2).abs() * dir.p_last().abs() * f.max_abs() + 2.0 * (tol + SLACK_C * f.grid().h());
    violation("lipschitz-in-A", gap - bound, format!("A = {a1} vs {a2}: {gap} > {bound}"))
}

/// `sup |Dv(., t)| <= (A |p_last| Lip(f) + C h) t` along an evolution.
pub fn gradient_growth(trace: &EvolutionTrace, dir: &Direction, intensity: f64, f: &ShearProfile) -> Vec<Violation> {
    let rate = intensity * dir.p_last().abs() * f.lip_bound() + SLACK_C * f.grid().h();
    trace
        .grad_sup
        .iter()
        .filter_map(|&(t, g)| violation("gradient-growth", g - rate * t, format!("t = {t}: {g} > {}", rate * t)))
        .collect()
}

/// Per-solve checks on every record of an estimate.
pub fn check_estimate(est: &EffectiveEstimate, dir: &Direction, f: &ShearProfile) -> Vec<Violation> {
    est.solves
        .iter()
        .flat_map(|r| {
            let mut out = discounted_bounds(r, dir, est.intensity, f);
            out.extend(gradient_bound(r, dir, est.intensity, f));
            out
        })
        .collect()
}

/// Lipschitz-in-`A` checks across estimates that differ only in `A`,
/// pairing equal discounts.
pub fn check_across_intensities(estimates: &[EffectiveEstimate], dir: &Direction, f: &ShearProfile, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, e1) in estimates.iter().enumerate() {
        for e2 in &estimates[i + 1..] {
            if e1.cutoff != e2.cutoff || e1.d != e2.d || e1.direction != e2.direction || e1.intensity == e2.intensity {
                continue;
            }
            for (r1, v1) in e1.solves.iter().zip(&e1.scaled_fields) {
                for (r2, v2) in e2.solves.iter().zip(&e2.scaled_fields) {
                    if r1.lambda == r2.lambda {
                        out.extend(lipschitz_in_a((e1.intensity, v1), (e2.intensity, v2), dir, f, tol));
                    }
                }
            }
        }
    }
    out
}

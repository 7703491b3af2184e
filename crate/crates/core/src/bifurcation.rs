//! Intensity sweeps, the bisection for `A1` on the non-cutoff curve, and
//! failure probes beyond it.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{estimate_discount, EffectiveEstimate, EstimateOptions};
use crate::error::{Error, Result};
use crate::fields::Direction;
use crate::operators::PhysParams;
use crate::profiles::{driven_force, ShearProfile};

pub const DEFAULT_TOL_A: f64 = 1e-3;
/// Multiples of `A1` probed for homogenization failure.
pub const DEFAULT_PROBE_FACTORS: [f64; 2] = [0.5, 2.0];
pub const INVALID: &str = "invalid";

/// Solver breakdowns turn into invalid rows; anything else is a caller error.
fn is_solver_failure(err: &Error) -> bool {
    matches!(err, Error::Diverged { .. } | Error::InvalidEstimate(_) | Error::Linear(_) | Error::NonFinite(_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "A")]
    pub intensity: f64,
    #[serde(rename = "Hbar")]
    pub hbar: Option<f64>,
    #[serde(rename = "Hbar_plus")]
    pub hbar_plus: Option<f64>,
    #[serde(rename = "AF")]
    pub af: f64,
    /// Verdict of the cutoff estimate.
    pub homogenized: Option<bool>,
    pub uniformity: Option<f64>,
    pub hbar_error: Option<f64>,
    pub hbar_plus_error: Option<f64>,
    /// Why an estimate is invalid.
    pub failures: Vec<String>,
}

impl SweepRow {
    /// `max(Hbar, A F(P))`, the value the connection formula assigns.
    pub fn connection(&self) -> Option<f64> {
        self.hbar.map(|h| h.max(self.af))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    #[serde(rename = "P")]
    pub direction: Vec<f64>,
    pub d: f64,
    #[serde(rename = "grid_N")]
    pub grid_n: usize,
    pub schedule: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Every estimate behind the rows, non-cutoff first when both were run.
    #[serde(skip)]
    pub estimates: Vec<EffectiveEstimate>,
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.16e}"),
        None => INVALID.to_string(),
    }
}

impl SweepCurve {
    /// `A,H_bar,H_bar_plus,A_F,homogenized,uniformity`; a non-cutoff column
    /// that was not requested is left empty.
    pub fn write_csv<W: Write>(&self, mut out: W, both_variants: bool) -> Result<()> {
        writeln!(out, "A,H_bar,H_bar_plus,A_F,homogenized,uniformity")?;
        for row in &self.rows {
            let hbar = if both_variants { cell(row.hbar) } else { String::new() };
            let verdict = row.homogenized.map_or(INVALID.to_string(), |h| h.to_string());
            writeln!(
                out,
                "{:.16e},{},{},{:.16e},{},{}",
                row.intensity,
                hbar,
                cell(row.hbar_plus),
                row.af,
                verdict,
                cell(row.uniformity)
            )?;
        }
        Ok(())
    }

    /// Plot-ready columns for the graph of the cutoff effective value,
    /// adding the connection-formula curve `max(H_bar, A_F)`.
    pub fn write_figure_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "A,H_bar,H_bar_plus,A_F,H_bar_plus_connection,homogenized,uniformity")?;
        for row in &self.rows {
            writeln!(
                out,
                "{:.16e},{},{},{:.16e},{},{},{}",
                row.intensity,
                cell(row.hbar),
                cell(row.hbar_plus),
                row.af,
                cell(row.connection()),
                row.homogenized.map_or(INVALID.to_string(), |h| h.to_string()),
                cell(row.uniformity)
            )?;
        }
        Ok(())
    }
}

/// One estimate per `(A, variant)`, run in parallel on the current rayon
/// pool; rows come back in grid order regardless of scheduling.
pub fn sweep_a(
    dir: &Direction,
    d: f64,
    f: &ShearProfile,
    a_grid: &[f64],
    both_variants: bool,
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<SweepCurve> {
    if a_grid.is_empty() || a_grid[0] != 0.0 {
        return Err(Error::param("A_grid", "must start at 0"));
    }
    if a_grid.windows(2).any(|w| !(w[1] > w[0])) || a_grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::param("A_grid", "must be finite and strictly increasing"));
    }
    let base = PhysParams::new(d, 0.0, true)?;
    let force = driven_force(dir, f);
    let variants: &[bool] = if both_variants { &[false, true] } else { &[true] };
    let jobs: Vec<(f64, bool)> = a_grid.iter().flat_map(|&a| variants.iter().map(move |&c| (a, c))).collect();
    let results: Vec<Result<EffectiveEstimate>> = jobs
        .par_iter()
        .map(|&(a, cutoff)| estimate_discount(dir, base.with_intensity(a).with_cutoff(cutoff), f, schedule, opts))
        .collect();

    let mut rows = Vec::with_capacity(a_grid.len());
    let mut estimates = Vec::new();
    let mut results = results.into_iter();
    for &a in a_grid {
        let mut row = SweepRow {
            intensity: a,
            hbar: None,
            hbar_plus: None,
            af: a * force,
            homogenized: None,
            uniformity: None,
            hbar_error: None,
            hbar_plus_error: None,
            failures: Vec::new(),
        };
        for &cutoff in variants {
            match results.next().expect("one result per job") {
                Ok(est) => {
                    if cutoff {
                        row.hbar_plus = Some(est.value);
                        row.hbar_plus_error = Some(est.error_bar);
                        row.homogenized = Some(est.homogenized);
                        row.uniformity = Some(est.uniformity);
                    } else {
                        row.hbar = Some(est.value);
                        row.hbar_error = Some(est.error_bar);
                    }
                    estimates.push(est);
                }
                Err(err) if is_solver_failure(&err) => {
                    row.failures.push(format!("{} at A = {a}: {err}", if cutoff { "cutoff" } else { "non-cutoff" }));
                }
                Err(err) => return Err(err),
            }
        }
        rows.push(row);
    }
    Ok(SweepCurve { direction: dir.components(), d, grid_n: f.grid().cells(), schedule: schedule.to_vec(), rows, estimates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Bracket {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A1_lo")]
    pub lo: f64,
    #[serde(rename = "A1_hi")]
    pub hi: f64,
    /// `(A, Hbar(A) - A F(P))` for every bisection evaluation, in order.
    pub evaluations: Vec<(f64, f64)>,
    #[serde(skip)]
    pub estimates: Vec<EffectiveEstimate>,
}

/// Bisection for the root of `g(A) = Hbar(P, d, A) - A F(P)` using
/// non-cutoff estimates. The returned `a1` interpolates `g` linearly across
/// the final bracket.
pub fn find_a1(
    dir: &Direction,
    d: f64,
    f: &ShearProfile,
    bracket: (f64, f64),
    tol_a: f64,
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<A1Bracket> {
    let (mut lo, mut hi) = bracket;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::param("bracket", "need 0 <= A_lo < A_hi"));
    }
    if !(tol_a > 0.0) {
        return Err(Error::param("tol_A", "must be positive"));
    }
    let base = PhysParams::new(d, 0.0, false)?;
    let force = driven_force(dir, f);
    let mut evaluations = Vec::new();
    let mut estimates = Vec::new();
    let mut g = |a: f64| -> Result<f64> {
        let est = estimate_discount(dir, base.with_intensity(a), f, schedule, opts)?;
        let value = est.value - a * force;
        evaluations.push((a, value));
        estimates.push(est);
        Ok(value)
    };
    let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::NoBracket { lo, hi, g_lo, g_hi });
    }
    while hi - lo > tol_a {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid > 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    let a1 = lo + (hi - lo) * g_lo / (g_lo - g_hi);
    Ok(A1Bracket { a1, lo, hi, evaluations, estimates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Homogenizes,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProbe {
    #[serde(rename = "A")]
    pub intensity: f64,
    pub schedule: Vec<f64>,
    /// oscillation of `lambda v` along the schedule
    pub uniformity_series: Vec<f64>,
    pub means: Vec<f64>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub estimate: Option<EffectiveEstimate>,
}

/// Reads a uniformity series: growth (up to `slack`) ending at or above
/// `theta_u` means failure, steady decrease ending below it means
/// homogenization.
pub fn classify(series: &[f64], theta_u: f64, slack: f64) -> Verdict {
    let last = match series.last() {
        Some(x) => *x,
        None => return Verdict::Inconclusive,
    };
    if series.windows(2).all(|w| w[1] >= w[0] - slack) && last >= theta_u {
        Verdict::Fails
    } else if series.windows(2).all(|w| w[1] <= w[0] + slack) && last < theta_u {
        Verdict::Homogenizes
    } else {
        Verdict::Inconclusive
    }
}

/// Cutoff estimate at one intensity with its failure verdict.
pub fn probe_failure(
    dir: &Direction,
    d: f64,
    f: &ShearProfile,
    intensity: f64,
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<FailureProbe> {
    let params = PhysParams::new(d, intensity, true)?;
    let est = estimate_discount(dir, params, f, schedule, opts)?;
    Ok(FailureProbe {
        intensity,
        schedule: schedule.to_vec(),
        verdict: classify(&est.uniformity_series, opts.theta_u, opts.solver.tol),
        uniformity_series: est.uniformity_series.clone(),
        means: est.solves.iter().map(|s| s.mean).collect(),
        estimate: Some(est),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol: f64,
    #[serde(rename = "tol_A")]
    pub tol_a: f64,
    pub theta_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    #[serde(flatten)]
    pub a1: A1Bracket,
    /// Largest intensity known to homogenize: the larger of `A1_lo` (below
    /// `A1` the cutoff value is the non-cutoff one) and any probe read as
    /// homogenizing.
    #[serde(rename = "A0_lower_bound")]
    pub a0_lower_bound: f64,
    /// Smallest probed intensity read as failing, if any.
    #[serde(rename = "A0_upper_bound")]
    pub a0_upper_bound: Option<f64>,
    #[serde(rename = "A0_evidence")]
    pub a0_evidence: Vec<FailureProbe>,
    #[serde(rename = "grid_N")]
    pub grid_n: usize,
    pub n: usize,
    pub schedule: Vec<f64>,
    pub tolerances: Tolerances,
    /// Whether every probe above `A1` reached a verdict.
    pub conclusive: bool,
    pub note: String,
}

/// Locates `A1`, then probes the cutoff problem at `factors * A1`.
#[allow(clippy::too_many_arguments)]
pub fn bifurcate(
    dir: &Direction,
    d: f64,
    f: &ShearProfile,
    bracket: (f64, f64),
    tol_a: f64,
    factors: &[f64],
    schedule: &[f64],
    opts: &EstimateOptions,
) -> Result<BifurcationReport> {
    let a1 = find_a1(dir, d, f, bracket, tol_a, schedule, opts)?;
    let probes: Vec<Result<FailureProbe>> = factors
        .par_iter()
        .map(|k| probe_failure(dir, d, f, k * a1.a1, schedule, opts))
        .collect();
    let probes = probes.into_iter().collect::<Result<Vec<_>>>()?;

    let homogenizing = probes.iter().filter(|p| p.verdict == Verdict::Homogenizes).map(|p| p.intensity);
    let a0_lower_bound = homogenizing.fold(a1.lo, f64::max);
    let a0_upper_bound = probes.iter().filter(|p| p.verdict == Verdict::Fails).map(|p| p.intensity).reduce(f64::min);
    let conclusive = probes.iter().filter(|p| p.intensity > a1.hi).all(|p| p.verdict != Verdict::Inconclusive);
    let n = f.grid().dim();
    let note = if n >= 3 {
        "n >= 3: whether A0 exceeds A1 is open; A0 is bracketed by verdicts only".to_string()
    } else {
        format!("n = {n}: A0 = A1 is expected; the verdicts above A1 test it")
    };
    Ok(BifurcationReport {
        a1,
        a0_lower_bound,
        a0_upper_bound,
        a0_evidence: probes,
        grid_n: f.grid().cells(),
        n,
        schedule: schedule.to_vec(),
        tolerances: Tolerances { tol: opts.solver.tol, tol_a, theta_u: opts.theta_u },
        conclusive,
        note,
    })
}

/// `{0}` followed by `points` log-spaced intensities on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
        return Err(Error::param("A-range", "need 0 < lo < hi and at least 2 points"));
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    let mut grid = vec![0.0];
    grid.extend((0..points).map(|k| lo * (ratio * k as f64).exp()));
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TorusGrid;
    use crate::profiles::constant_profile;

    #[test]
    fn classify_cases() {
        assert_eq!(classify(&[0.0, 0.0, 0.0, 0.0], 0.05, 1e-6), Verdict::Homogenizes);
        assert_eq!(classify(&[0.02, 0.01, 0.005], 0.05, 1e-6), Verdict::Homogenizes);
        assert_eq!(classify(&[0.3, 0.31, 0.32], 0.05, 1e-6), Verdict::Fails);
        assert_eq!(classify(&[0.45, 0.41, 0.38], 0.05, 1e-6), Verdict::Inconclusive);
        assert_eq!(classify(&[0.01, 0.02, 0.01], 0.05, 1e-6), Verdict::Inconclusive);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.25, 4.0, 5).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.25).abs() < 1e-15 && (g[5] - 4.0).abs() < 1e-12);
        assert!((g[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_flow_has_no_a1() {
        let f = constant_profile(-0.5, TorusGrid::new(1, 16).unwrap()).unwrap();
        let dir = Direction::new(vec![0.0], 1.0).unwrap();
        let err = find_a1(&dir, 0.2, &f, (0.0, 1.0), 1e-2, &crate::effective::DEFAULT_SCHEDULE, &Default::default());
        assert!(matches!(err, Err(Error::NoBracket { .. })));
    }

    #[test]
    fn sweep_rows_on_a_constant_flow() {
        let f = constant_profile(-0.5, TorusGrid::new(1, 16).unwrap()).unwrap();
        let dir = Direction::new(vec![0.5], 1.0).unwrap();
        let grid = [0.0, 0.5, 1.0];
        let curve = sweep_a(&dir, 0.2, &f, &grid, true, &crate::effective::DEFAULT_SCHEDULE, &Default::default()).unwrap();
        for row in &curve.rows {
            let exact = dir.norm() - 0.5 * row.intensity;
            assert!((row.hbar.unwrap() - exact).abs() < 1e-6);
            assert!((row.hbar_plus.unwrap() - exact).abs() < 1e-6);
            assert_eq!(row.homogenized, Some(true));
        }
        let mut csv = Vec::new();
        curve.write_csv(&mut csv, true).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("A,H_bar,H_bar_plus,A_F,homogenized,uniformity\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let f = constant_profile(0.0, TorusGrid::new(1, 16).unwrap()).unwrap();
        let dir = Direction::new(vec![0.0], 1.0).unwrap();
        let s = crate::effective::DEFAULT_SCHEDULE;
        assert!(sweep_a(&dir, 0.2, &f, &[0.1, 0.2], false, &s, &Default::default()).is_err());
        assert!(sweep_a(&dir, 0.2, &f, &[0.0, 0.2, 0.2], false, &s, &Default::default()).is_err());
    }
}

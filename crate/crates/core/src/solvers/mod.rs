//! Stationary discounted solves, the initial-value evolution, and the dense
//! one-dimensional line solver used for cross-validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::PatternLu;
use crate::fields::{grad_central, Direction, ScalarField, TorusGrid};
use crate::operators::{EvalStats, GKernel, PhysParams};
use crate::profiles::{driven_force, min_drift, ShearProfile};

mod checkpoint;
mod line;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};
pub use line::{resample_line, solve_line, solve_line_from, MIN_LINE_CELLS};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 2_000_000;
const DT_REFRESH: usize = 100;
const DIVERGENCE_FACTOR: f64 = 10.0;
const INITIAL_PSEUDO_STEP: f64 = 1e-2;
const MIN_PSEUDO_STEP: f64 = 1e-12;
const MAX_PSEUDO_STEP: f64 = 1e12;
const MIN_GROWTH: f64 = 1.5;
const MAX_GROWTH: f64 = 10.0;
/// Largest residual growth accepted from one implicit step.
const ACCEPT_GROWTH: f64 = 2.0;

/// How the stationary problem is marched to steady state in pseudo-time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Marching {
    /// Linearly implicit steps with an adaptive pseudo-time step that grows
    /// as the residual falls; each step solves one sparse linear system.
    #[default]
    Implicit,
    /// Forward Euler with the explicit stability bound.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sup-norm tolerance on `lambda v + G[v]`.
    pub tol: f64,
    pub max_iter: usize,
    pub marching: Marching,
    /// Explicit marching only: re-solve the spatially constant mode exactly
    /// after every step while no node is clamped.
    pub project_mean: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, marching: Marching::Implicit, project_mean: true }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub v: ScalarField,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DiscountedSolution {
    /// `lambda * v`.
    pub fn scaled(&self) -> ScalarField {
        let lambda = self.lambda;
        self.v.map(|x| lambda * x).expect("finite field scaled by finite lambda")
    }

    /// Mean of `-lambda v`, the running estimate of the effective value.
    pub fn effective_mean(&self) -> f64 {
        -self.lambda * self.v.mean()
    }

    /// `lambda * sup |Dv|` with central differences.
    pub fn scaled_grad_sup(&self) -> f64 {
        self.lambda * grad_sup(&self.v)
    }
}

pub fn grad_sup(v: &ScalarField) -> f64 {
    let grad = grad_central(v).expect("finite field");
    (0..v.grid().len())
        .map(|i| grad.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn check_setup(dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<()> {
    params.validate()?;
    if dir.p_last() == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    if dir.dim() != f.grid().dim() {
        return Err(Error::param("P", "dimension does not match the profile grid"));
    }
    Ok(())
}

/// Range `[-|P| - A max(p_last f), -|P| - A min(p_last f)]` of `lambda v`
/// from the maximum principle.
pub fn scaled_bounds(dir: &Direction, params: PhysParams, f: &ShearProfile) -> (f64, f64) {
    let a = params.intensity;
    (-dir.norm() - a * driven_force(dir, f), -dir.norm() - a * min_drift(dir, f))
}

/// Mean-field constant `-(|P| + A p_last mean f) / lambda`.
pub fn mean_field_init(lambda: f64, dir: &Direction, params: PhysParams, f: &ShearProfile) -> ScalarField {
    let value = -(dir.norm() + params.intensity * dir.p_last() * f.field().mean()) / lambda;
    ScalarField::constant(f.grid(), value)
}

/// Solves `lambda v + G[v] = 0` by pseudo-time marching from the mean-field
/// constant.
pub fn solve_discounted(
    lambda: f64,
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    opts: &SolverOptions,
) -> Result<DiscountedSolution> {
    solve_discounted_from(lambda, dir, params, f, opts, None)
}

/// As [`solve_discounted`], starting from `init` when given.
pub fn solve_discounted_from(
    lambda: f64,
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    opts: &SolverOptions,
    init: Option<&ScalarField>,
) -> Result<DiscountedSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "discount must be positive"));
    }
    opts.validate()?;
    check_setup(dir, params, f)?;
    let grid = f.grid();
    let v = match init {
        Some(start) => {
            if start.grid() != grid {
                return Err(Error::param("init", "initial field lives on a different grid"));
            }
            start.values().to_vec()
        }
        None => mean_field_init(lambda, dir, params, f).into_values(),
    };
    let kernel = GKernel::new(dir, params, f)?;
    run_march(lambda, kernel, scaled_bounds(dir, params, f), dir.norm(), v, opts, grid)
}

fn run_march<K: Discretization>(
    lambda: f64,
    kernel: K,
    bounds: (f64, f64),
    norm: f64,
    v: Vec<f64>,
    opts: &SolverOptions,
    grid: TorusGrid,
) -> Result<DiscountedSolution> {
    let mut march = March::new(lambda, kernel, bounds, norm, v)?;
    match opts.marching {
        Marching::Implicit => march.implicit(opts)?,
        Marching::Explicit => march.explicit(opts)?,
    }
    Ok(DiscountedSolution {
        converged: march.residual <= opts.tol,
        v: ScalarField::new(grid, march.v)?,
        lambda,
        residual: march.residual,
        iterations: march.iterations,
    })
}

/// A discrete operator that the pseudo-time march can drive.
pub(crate) trait Discretization {
    fn eval(&mut self, v: &[f64], rhs: &mut [f64]) -> EvalStats;
    fn jacobian(&self, shift: f64, out: &mut Vec<(usize, usize, f64)>);
    fn clamped(&self, i: usize) -> bool;
    fn stable_dt(&self, stats: &EvalStats) -> f64;
}

impl Discretization for GKernel {
    fn eval(&mut self, v: &[f64], rhs: &mut [f64]) -> EvalStats {
        GKernel::eval(self, v, rhs)
    }
    fn jacobian(&self, shift: f64, out: &mut Vec<(usize, usize, f64)>) {
        GKernel::jacobian(self, shift, out)
    }
    fn clamped(&self, i: usize) -> bool {
        GKernel::clamped(self, i)
    }
    fn stable_dt(&self, stats: &EvalStats) -> f64 {
        GKernel::stable_dt(self, stats)
    }
}

struct March<K> {
    lambda: f64,
    kernel: K,
    v: Vec<f64>,
    rhs: Vec<f64>,
    stats: EvalStats,
    residual: f64,
    initial: f64,
    iterations: usize,
    lo: f64,
    hi: f64,
}

impl<K: Discretization> March<K> {
    fn new(lambda: f64, mut kernel: K, bounds: (f64, f64), norm: f64, v: Vec<f64>) -> Result<Self> {
        let mut rhs = vec![0.0; v.len()];
        let stats = kernel.eval(&v, &mut rhs);
        let residual = residual_of(&v, &rhs, lambda);
        // a-priori range of lambda v, widened; leaving it means divergence
        let (lo, hi) = bounds;
        let margin = DIVERGENCE_FACTOR * (hi - lo + norm);
        Ok(March {
            lambda,
            kernel,
            v,
            rhs,
            stats,
            residual,
            initial: residual,
            iterations: 0,
            lo: lo - margin,
            hi: hi + margin,
        })
    }

    fn escaped(&self, v: &[f64]) -> bool {
        v.iter().any(|x| !(self.lambda * x >= self.lo && self.lambda * x <= self.hi))
    }

    fn diverged(&self) -> Error {
        Error::Diverged { iteration: self.iterations, residual: self.residual, initial: self.initial }
    }

    fn explicit(&mut self, opts: &SolverOptions) -> Result<()> {
        let lambda = self.lambda;
        let len = self.v.len() as f64;
        if opts.project_mean && !anchored(&self.kernel, self.v.len()) {
            project_mean(&mut self.v, &self.rhs, lambda, len);
            self.residual = residual_of(&self.v, &self.rhs, lambda);
        }
        let mut dt = self.kernel.stable_dt(&self.stats);
        while self.residual > opts.tol && self.iterations < opts.max_iter {
            for (vi, ri) in self.v.iter_mut().zip(&self.rhs) {
                *vi -= dt * (lambda * *vi + ri);
            }
            self.stats = self.kernel.eval(&self.v, &mut self.rhs);
            if opts.project_mean && !anchored(&self.kernel, self.v.len()) {
                project_mean(&mut self.v, &self.rhs, lambda, len);
            }
            self.iterations += 1;
            self.residual = residual_of(&self.v, &self.rhs, lambda);
            if !self.residual.is_finite() || self.escaped(&self.v) {
                return Err(self.diverged());
            }
            let bound = self.kernel.stable_dt(&self.stats);
            if self.iterations % DT_REFRESH == 0 || bound < dt {
                dt = bound;
            }
        }
        Ok(())
    }

    fn implicit(&mut self, opts: &SolverOptions) -> Result<()> {
        let lambda = self.lambda;
        let n = self.v.len();
        let mut entries = Vec::new();
        let mut lu = PatternLu::new(n);
        let mut delta = vec![0.0; n];
        let mut candidate = vec![0.0; n];
        let mut candidate_rhs = vec![0.0; n];
        let mut step = INITIAL_PSEUDO_STEP;

        while self.residual > opts.tol && self.iterations < opts.max_iter {
            self.kernel.jacobian(lambda + 1.0 / step, &mut entries);
            for (i, x) in delta.iter_mut().enumerate() {
                *x = -(lambda * self.v[i] + self.rhs[i]);
            }
            let solved = lu.solve(&entries, &mut delta).is_ok();
            self.iterations += 1;

            let accepted = solved && {
                    for (i, c) in candidate.iter_mut().enumerate() {
                        *c = self.v[i] + delta[i];
                    }
                    let stats = self.kernel.eval(&candidate, &mut candidate_rhs);
                    let res = residual_of(&candidate, &candidate_rhs, lambda);
                    if res.is_finite() && res <= ACCEPT_GROWTH * self.residual && !self.escaped(&candidate) {
                        let ratio = if res > 0.0 { self.residual / res } else { MAX_GROWTH };
                        let growth = if ratio >= 1.0 { ratio.clamp(MIN_GROWTH, MAX_GROWTH) } else { ratio.max(0.5) };
                        step = (step * growth).min(MAX_PSEUDO_STEP);
                        std::mem::swap(&mut self.v, &mut candidate);
                        std::mem::swap(&mut self.rhs, &mut candidate_rhs);
                        self.stats = stats;
                        self.residual = res;
                        true
                    } else {
                        false
                    }
            };
            if !accepted {
                step *= 0.25;
                if step < MIN_PSEUDO_STEP {
                    return Err(self.diverged());
                }
                // the kernel buffers hold the rejected state
                self.stats = self.kernel.eval(&self.v, &mut self.rhs);
            }
        }
        Ok(())
    }
}

/// Clamped nodes satisfy `lambda v + A p_last f = 0` on their own and fix the
/// level; shifting the whole field then only fights them.
fn anchored<K: Discretization>(kernel: &K, len: usize) -> bool {
    (0..len).any(|i| kernel.clamped(i))
}

/// The operator is invariant under constant shifts, so the constant mode of
/// the discounted equation is solved exactly: `mean(lambda v + G[v]) = 0`.
fn project_mean(v: &mut [f64], rhs: &[f64], lambda: f64, len: f64) {
    let mean_res = v.iter().zip(rhs).map(|(vi, ri)| lambda * vi + ri).sum::<f64>() / len;
    let shift = -mean_res / lambda;
    v.iter_mut().for_each(|vi| *vi += shift);
}

fn residual_of(v: &[f64], rhs: &[f64], lambda: f64) -> f64 {
    v.iter().zip(rhs).fold(0.0, |m, (vi, ri)| {
        let r = (lambda * vi + ri).abs();
        if r.is_nan() {
            f64::NAN
        } else {
            m.max(r)
        }
    })
}

/// Snapshots of the evolution `v_t + G[v] = 0`, `v(., 0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub snapshots: Vec<(f64, ScalarField)>,
    /// `-v(., t) / t` for snapshot times `t >= 1`.
    pub slope: Vec<(f64, ScalarField)>,
    pub grad_sup: Vec<(f64, f64)>,
    pub steps: usize,
}

impl EvolutionTrace {
    pub fn final_slope(&self) -> Option<&ScalarField> {
        self.slope.last().map(|(_, s)| s)
    }
}

/// Explicit marching of the front equation up to `horizon`, storing the
/// requested snapshots (and always the one at `horizon`).
pub fn evolve(
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    horizon: f64,
    snapshot_times: &[f64],
) -> Result<EvolutionTrace> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    check_setup(dir, params, f)?;
    let mut times: Vec<f64> = snapshot_times.iter().copied().filter(|t| *t > 0.0 && *t < horizon).collect();
    if snapshot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::param("snapshot_times", "must be finite and >= 0"));
    }
    times.push(horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let grid = f.grid();
    let max_drift = params.intensity * f.max_abs() * dir.p_last().abs();
    let limit_rate = DIVERGENCE_FACTOR * (dir.norm() + max_drift);
    let mut kernel = GKernel::new(dir, params, f)?;
    let mut v = vec![0.0; grid.len()];
    let mut rhs = vec![0.0; grid.len()];
    let mut stats: EvalStats = kernel.eval(&v, &mut rhs);
    let mut dt = kernel.stable_dt(&stats);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut trace = EvolutionTrace { snapshots: Vec::new(), slope: Vec::new(), grad_sup: Vec::new(), steps: 0 };

    for &target in &times {
        while t < target {
            let step = dt.min(target - t);
            for (vi, ri) in v.iter_mut().zip(&rhs) {
                *vi -= step * ri;
            }
            t = if target - t <= dt { target } else { t + step };
            steps += 1;
            stats = kernel.eval(&v, &mut rhs);
            let bound = kernel.stable_dt(&stats);
            if steps % DT_REFRESH == 0 || bound < dt {
                dt = bound;
            }
            let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !sup.is_finite() || sup > limit_rate * horizon {
                return Err(Error::Unstable { t, sup, limit: limit_rate * horizon });
            }
        }
        let field = ScalarField::new(grid, v.clone())?;
        trace.grad_sup.push((t, grad_sup(&field)));
        if t >= 1.0 {
            trace.slope.push((t, field.map(|x| -x / t)?));
        }
        trace.snapshots.push((t, field));
    }
    trace.steps = steps;
    Ok(trace)
}

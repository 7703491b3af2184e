//! Dense one-dimensional specialization. In one dimension the curvature of
//! the graph is `p_last^2 v'' / (p_last^2 + (p + v')^2)^(3/2)`, which is
//! discretized directly in this non-divergence form.

use super::{mean_field_init, run_march, scaled_bounds, check_setup, DiscountedSolution, Discretization, SolverOptions};
use crate::error::{Error, Result};
use crate::fields::{Direction, ScalarField, TorusGrid};
use crate::operators::{EvalStats, PhysParams, DT_SAFETY};
use crate::profiles::ShearProfile;

/// Smallest grid accepted by [`solve_line`].
pub const MIN_LINE_CELLS: usize = 1024;

pub(crate) struct LineKernel {
    h: f64,
    p: f64,
    p_last: f64,
    params: PhysParams,
    drift: Vec<f64>,
    speed: Vec<f64>,
    /// `sqrt(p_last^2 + (p + v')^2)` with the central derivative
    central_norm: Vec<f64>,
    central: Vec<f64>,
    forward: Vec<f64>,
}

impl LineKernel {
    pub(crate) fn new(dir: &Direction, params: PhysParams, f: &ShearProfile) -> Self {
        let n = f.grid().len();
        let scale = params.intensity * dir.p_last();
        LineKernel {
            h: f.grid().h(),
            p: dir.p()[0],
            p_last: dir.p_last(),
            params,
            drift: f.values().iter().map(|x| scale * x).collect(),
            speed: vec![0.0; n],
            central_norm: vec![0.0; n],
            central: vec![0.0; n],
            forward: vec![0.0; n],
        }
    }

    fn alpha(&self, i: usize, im: usize) -> f64 {
        let pl2 = self.p_last * self.p_last;
        let qmax = (self.p + self.forward[i]).abs().max((self.p + self.forward[im]).abs());
        qmax / (pl2 + qmax * qmax).sqrt()
    }
}

impl Discretization for LineKernel {
    fn eval(&mut self, v: &[f64], rhs: &mut [f64]) -> EvalStats {
        let n = v.len();
        let inv_h = 1.0 / self.h;
        let pl2 = self.p_last * self.p_last;
        for i in 0..n {
            self.forward[i] = (v[(i + 1) % n] - v[i]) * inv_h;
        }
        let mut stats = EvalStats::default();
        for i in 0..n {
            let im = (i + n - 1) % n;
            let (fp, fm) = (self.forward[i], self.forward[im]);
            let c = 0.5 * (fp + fm);
            let q = self.p + c;
            let norm = (pl2 + q * q).sqrt();
            self.central[i] = c;
            self.central_norm[i] = norm;
            let second = (fp - fm) * inv_h;
            let raw = 1.0 - self.params.d * pl2 * second / (norm * norm * norm);
            let s = if self.params.cutoff { raw.max(0.0) } else { raw };
            self.speed[i] = s;
            let dissipation = self.alpha(i, im) * 0.5 * (fp - fm);
            let hamiltonian = (norm - dissipation * s.signum()).max(self.p_last.abs());
            rhs[i] = s * hamiltonian + self.drift[i];
            stats.speed_max = stats.speed_max.max(s.abs());
            stats.slope_max = stats.slope_max.max(q.abs());
            stats.grad_max = stats.grad_max.max(c.abs());
        }
        stats
    }

    fn jacobian(&self, shift: f64, out: &mut Vec<(usize, usize, f64)>) {
        let n = self.speed.len();
        let inv_h = 1.0 / self.h;
        let pl2 = self.p_last * self.p_last;
        let d = self.params.d;
        out.clear();
        out.reserve(3 * n);
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let mut diag = shift;
            let mut plus = 0.0;
            let mut minus = 0.0;
            if !self.clamped(i) {
                let s = self.speed[i];
                let sigma = if s < 0.0 { -1.0 } else { 1.0 };
                let norm = self.central_norm[i];
                let alpha = self.alpha(i, im);
                let raw_h = norm - sigma * alpha * 0.5 * (self.forward[i] - self.forward[im]);
                let hamiltonian = raw_h.max(self.p_last.abs());
                if raw_h > self.p_last.abs() {
                    let g = (self.p + self.central[i]) / norm;
                    plus += s * (g - sigma * alpha) * 0.5 * inv_h;
                    minus += s * (-g - sigma * alpha) * 0.5 * inv_h;
                    diag += s * sigma * alpha * inv_h;
                }
                let w = d * hamiltonian * pl2 / (norm * norm * norm) * inv_h * inv_h;
                plus -= w;
                minus -= w;
                diag += 2.0 * w;
            }
            out.push((i, i, diag));
            out.push((i, ip, plus));
            out.push((i, im, minus));
        }
    }

    fn clamped(&self, i: usize) -> bool {
        self.params.cutoff && self.speed[i] == 0.0
    }

    fn stable_dt(&self, stats: &EvalStats) -> f64 {
        let h = self.h;
        let d = self.params.d;
        let parabolic = if d > 0.0 {
            let ratio = 1.0 + stats.slope_max * stats.slope_max / (self.p_last * self.p_last);
            h * h / (4.0 * d * ratio)
        } else {
            f64::INFINITY
        };
        let hyperbolic = if stats.speed_max > 0.0 {
            h / (2.0 * stats.speed_max * (1.0 + self.p.abs() + stats.grad_max))
        } else {
            f64::INFINITY
        };
        let dt = parabolic.min(hyperbolic);
        DT_SAFETY * if dt.is_finite() { dt } else { h / 2.0 }
    }
}

/// Periodic linear interpolation of a 1-D profile onto `cells` nodes.
pub fn resample_line(f: &ShearProfile, cells: usize) -> Result<ShearProfile> {
    if f.grid().cells() == cells {
        return Ok(f.clone());
    }
    let src = f.values();
    let m = src.len();
    let grid = TorusGrid::new(1, cells)?;
    let field = ScalarField::from_fn(grid, |x| {
        let t = x[0] * m as f64;
        let k = t.floor() as usize % m;
        let w = t - t.floor();
        (1.0 - w) * src[k] + w * src[(k + 1) % m]
    })?;
    ShearProfile::from_field(f.name(), field, f.c1_compliant(), f.q_shift().map(<[f64]>::to_vec))
}

/// Discounted solve on a dense 1-D grid of `cells` nodes; `f` is resampled
/// when its grid differs.
pub fn solve_line(
    lambda: f64,
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    cells: usize,
    opts: &SolverOptions,
) -> Result<DiscountedSolution> {
    solve_line_from(lambda, dir, params, f, cells, opts, None)
}

/// As [`solve_line`], starting from `init` when given.
pub fn solve_line_from(
    lambda: f64,
    dir: &Direction,
    params: PhysParams,
    f: &ShearProfile,
    cells: usize,
    opts: &SolverOptions,
    init: Option<&ScalarField>,
) -> Result<DiscountedSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "discount must be positive"));
    }
    if dir.dim() != 1 || f.grid().dim() != 1 {
        return Err(Error::param("P", "the line solver needs n = 1"));
    }
    if cells < MIN_LINE_CELLS {
        return Err(Error::param("N_dense", format!("must be at least {MIN_LINE_CELLS}")));
    }
    opts.validate()?;
    let dense = resample_line(f, cells)?;
    check_setup(dir, params, &dense)?;
    let v = match init {
        Some(start) if start.grid() == dense.grid() => start.values().to_vec(),
        Some(_) => return Err(Error::param("init", "initial field lives on a different grid")),
        None => mean_field_init(lambda, dir, params, &dense).into_values(),
    };
    let kernel = LineKernel::new(dir, params, &dense);
    run_march(lambda, kernel, scaled_bounds(dir, params, &dense), dir.norm(), v, opts, dense.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::cellular_profile;

    fn cosine(cells: usize) -> ShearProfile {
        cellular_profile(TorusGrid::new(1, cells).unwrap()).unwrap()
    }

    #[test]
    fn resampling_reproduces_the_cosine() {
        let coarse = cosine(256);
        let fine = resample_line(&coarse, 1024).unwrap();
        let exact = cosine(1024);
        let err = fine.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 2e-4, "{err}");
    }

    #[test]
    fn rejects_coarse_grids_and_higher_dimensions() {
        let dir = Direction::new(vec![0.0], 1.0).unwrap();
        let params = PhysParams::new(0.2, 0.5, false).unwrap();
        let opts = SolverOptions::default();
        assert!(solve_line(0.1, &dir, params, &cosine(64), 512, &opts).is_err());
        let dir2 = Direction::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(solve_line(0.1, &dir2, params, &cosine(64), 1024, &opts).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cells = 1024;
        let f = cosine(cells);
        let dir = Direction::new(vec![0.3], 1.0).unwrap();
        let params = PhysParams::new(0.05, 0.7, false).unwrap();
        let mut kernel = LineKernel::new(&dir, params, &f);
        let v: Vec<f64> = (0..cells).map(|i| 0.05 * (2.0 * std::f64::consts::PI * i as f64 / cells as f64).sin()).collect();
        let mut base = vec![0.0; cells];
        kernel.eval(&v, &mut base);
        let mut entries = Vec::new();
        kernel.jacobian(0.0, &mut entries);
        // probe a smooth direction; frozen norms make the match first order in h
        let dv: Vec<f64> = (0..cells).map(|i| (2.0 * std::f64::consts::PI * i as f64 / cells as f64).cos()).collect();
        let mut jv = vec![0.0; cells];
        for &(r, c, x) in &entries {
            jv[r] += x * dv[c];
        }
        let eps = 1e-7;
        let shifted: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + eps * b).collect();
        let mut bumped = vec![0.0; cells];
        let mut probe = LineKernel::new(&dir, params, &f);
        probe.eval(&shifted, &mut bumped);
        let scale = jv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = (0..cells).map(|i| ((bumped[i] - base[i]) / eps - jv[i]).abs()).fold(0.0, f64::max);
        assert!(err < 0.2 * scale, "err {err} scale {scale}");
    }
}

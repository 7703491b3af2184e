//! The reduced G-operator
//! `(1 - d kappa)_(+) sqrt(p_last^2 + |p + Dv|^2) + A p_last f`
//! with and without the cutoff, plus the explicit-step stability bound.
//!
//! The first-order magnitude is discretized with local Lax-Friedrichs
//! splitting and multiplied by the speed factor, so where the cutoff clamps
//! the speed to zero the operator reduces to the drift term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CurvatureKernel, Direction, ScalarField};
use crate::profiles::ShearProfile;

pub const DT_SAFETY: f64 = 0.5;

/// Physical parameters: Markstein number, flow intensity and cutoff switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub d: f64,
    #[serde(rename = "A")]
    pub intensity: f64,
    pub cutoff: bool,
}

impl PhysParams {
    pub fn new(d: f64, intensity: f64, cutoff: bool) -> Result<Self> {
        let params = PhysParams { d, intensity, cutoff };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::param("d", "Markstein number must be finite and >= 0"));
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(Error::param("A", "flow intensity must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn with_intensity(&self, intensity: f64) -> Self {
        PhysParams { intensity, ..*self }
    }

    pub fn with_cutoff(&self, cutoff: bool) -> Self {
        PhysParams { cutoff, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutput {
    pub rhs: ScalarField,
    /// `1 - d kappa`, clamped at zero when the cutoff is on.
    pub speed: ScalarField,
    pub kappa: ScalarField,
}

/// Sup-norm statistics of one operator evaluation, used by the step-size rule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalStats {
    /// max |speed|
    pub speed_max: f64,
    /// max |p + Dv| (central differences)
    pub slope_max: f64,
    /// max |Dv| (central differences)
    pub grad_max: f64,
}

/// Reusable evaluator of the G-operator for fixed `(P, params, f)`.
#[derive(Debug, Clone)]
pub struct GKernel {
    curvature: CurvatureKernel,
    kappa: Vec<f64>,
    speed: Vec<f64>,
    drift: Vec<f64>,
    p: Vec<f64>,
    p_last: f64,
    params: PhysParams,
}

impl GKernel {
    pub fn new(dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<Self> {
        params.validate()?;
        if dir.p_last() == 0.0 {
            return Err(Error::DegenerateDirection);
        }
        let grid = f.grid();
        if dir.dim() != grid.dim() {
            return Err(Error::param("P", format!("expected {} transverse components, got {}", grid.dim(), dir.dim())));
        }
        let scale = params.intensity * dir.p_last();
        Ok(GKernel {
            curvature: CurvatureKernel::new(grid),
            kappa: vec![0.0; grid.len()],
            speed: vec![0.0; grid.len()],
            drift: f.values().iter().map(|v| scale * v).collect(),
            p: dir.p().to_vec(),
            p_last: dir.p_last(),
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn params(&self) -> PhysParams {
        self.params
    }

    /// `A p_last f` at every node.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    /// True where the cutoff clamps the speed to zero in the last evaluation.
    pub fn clamped(&self, i: usize) -> bool {
        self.params.cutoff && self.speed[i] == 0.0
    }

    /// Writes the operator value at every node into `rhs`.
    pub fn eval(&mut self, v: &[f64], rhs: &mut [f64]) -> EvalStats {
        let grid = self.curvature.grid();
        let dim = grid.dim();
        let len = grid.len();
        let d = self.params.d;
        let cutoff = self.params.cutoff;
        let pl2 = self.p_last * self.p_last;
        let p_last_abs = self.p_last.abs();
        self.curvature.compute(v, &self.p, self.p_last, 0.0, &mut self.kappa);

        let central = &self.curvature.central;
        let forward = &self.curvature.forward;
        let mut stats = EvalStats::default();
        for i in 0..len {
            let raw = 1.0 - d * self.kappa[i];
            let s = if cutoff { raw.max(0.0) } else { raw };
            self.speed[i] = s;

            let mut slope2 = 0.0;
            let mut grad2 = 0.0;
            let mut dissipation = 0.0;
            for a in 0..dim {
                let dc = central[a * len + i];
                let q = self.p[a] + dc;
                slope2 += q * q;
                grad2 += dc * dc;
                let fp = forward[a * len + i];
                let im = self.curvature.stencil().minus(a)[i] as usize;
                let fm = forward[a * len + im];
                let qmax = (self.p[a] + fp).abs().max((self.p[a] + fm).abs());
                let alpha = qmax / (pl2 + qmax * qmax).sqrt();
                dissipation += alpha * 0.5 * (fp - fm);
            }
            let magnitude = (pl2 + slope2).sqrt();
            // the dissipation sign follows the speed so the product stays monotone;
            // the floor keeps it a valid lower bound of the continuous magnitude
            let hamiltonian = (magnitude - dissipation * s.signum()).max(p_last_abs);
            rhs[i] = s * hamiltonian + self.drift[i];

            stats.speed_max = stats.speed_max.max(s.abs());
            stats.slope_max = stats.slope_max.max(slope2);
            stats.grad_max = stats.grad_max.max(grad2);
        }
        stats.slope_max = stats.slope_max.sqrt();
        stats.grad_max = stats.grad_max.sqrt();
        stats
    }

    /// Approximate Jacobian of `shift * v + rhs(v)` at the last evaluated state,
    /// as `(row, col, value)` entries in a fixed pattern: the diagonal followed
    /// by the `2 n` neighbours of every node, zeros included.
    ///
    /// Face norms and dissipation coefficients are frozen and the tangential
    /// cross terms of the curvature are dropped, so off-diagonal entries are
    /// non-positive wherever the discrete operator is monotone.
    pub fn jacobian(&self, shift: f64, out: &mut Vec<(usize, usize, f64)>) {
        let grid = self.curvature.grid();
        let dim = grid.dim();
        let len = grid.len();
        let d = self.params.d;
        let pl2 = self.p_last * self.p_last;
        let inv_h = 1.0 / grid.h();
        let inv_h2 = inv_h * inv_h;
        let stencil = self.curvature.stencil();
        let central = &self.curvature.central;
        let forward = &self.curvature.forward;
        let face_norm = &self.curvature.face_norm;
        out.clear();
        out.reserve(len * (1 + 2 * dim));
        for i in 0..len {
            let row_start = out.len();
            out.push((i, i, shift));
            let mut plus = [0.0; 3];
            let mut minus = [0.0; 3];
            if !self.clamped(i) {
                let s = self.speed[i];
                let sigma = if s < 0.0 { -1.0 } else { 1.0 };
                let mut slope2 = 0.0;
                let mut dissipation = 0.0;
                let mut alpha = [0.0; 3];
                for a in 0..dim {
                    let q = self.p[a] + central[a * len + i];
                    slope2 += q * q;
                    let fp = forward[a * len + i];
                    let fm = forward[a * len + stencil.minus(a)[i] as usize];
                    let qmax = (self.p[a] + fp).abs().max((self.p[a] + fm).abs());
                    alpha[a] = qmax / (pl2 + qmax * qmax).sqrt();
                    dissipation += alpha[a] * 0.5 * (fp - fm);
                }
                let magnitude = (pl2 + slope2).sqrt();
                let raw_h = magnitude - sigma * dissipation;
                let hamiltonian = raw_h.max(self.p_last.abs());
                let mut diag = 0.0;
                for a in 0..dim {
                    if raw_h > self.p_last.abs() {
                        let g = (self.p[a] + central[a * len + i]) / magnitude;
                        plus[a] += s * (g - sigma * alpha[a]) * 0.5 * inv_h;
                        minus[a] += s * (-g - sigma * alpha[a]) * 0.5 * inv_h;
                        diag += s * sigma * alpha[a] * inv_h;
                    }
                    if d > 0.0 {
                        let im = stencil.minus(a)[i] as usize;
                        let weight = |k: usize| {
                            let norm = face_norm[a * len + k];
                            let q = self.p[a] + forward[a * len + k];
                            (norm * norm - q * q) / (norm * norm * norm) * inv_h2
                        };
                        let (wp, wm) = (weight(i), weight(im));
                        plus[a] -= d * hamiltonian * wp;
                        minus[a] -= d * hamiltonian * wm;
                        diag += d * hamiltonian * (wp + wm);
                    }
                }
                out[row_start].2 += diag;
            }
            for a in 0..dim {
                out.push((i, stencil.plus(a)[i] as usize, plus[a]));
                out.push((i, stencil.minus(a)[i] as usize, minus[a]));
            }
        }
    }

    /// Largest explicit step allowed after an evaluation with the given stats.
    pub fn stable_dt(&self, stats: &EvalStats) -> f64 {
        let grid = self.curvature.grid();
        let h = grid.h();
        let n = grid.dim() as f64;
        let d = self.params.d;
        let p_norm = self.p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let parabolic = if d > 0.0 {
            let ratio = 1.0 + stats.slope_max * stats.slope_max / (self.p_last * self.p_last);
            h * h / (4.0 * d * n * ratio)
        } else {
            f64::INFINITY
        };
        let hyperbolic = if stats.speed_max > 0.0 {
            h / (2.0 * n * stats.speed_max * (1.0 + p_norm + stats.grad_max))
        } else {
            f64::INFINITY
        };
        let dt = parabolic.min(hyperbolic);
        DT_SAFETY * if dt.is_finite() { dt } else { h / (2.0 * n) }
    }
}

fn check_inputs(v: &ScalarField, f: &ShearProfile) -> Result<()> {
    if v.grid() != f.grid() {
        return Err(Error::param("grid", "field and profile live on different grids"));
    }
    Ok(())
}

/// Evaluates the operator on `v`, returning the value, speed factor and curvature.
pub fn g_operator(v: &ScalarField, dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<OperatorOutput> {
    check_inputs(v, f)?;
    let mut kernel = GKernel::new(dir, params, f)?;
    let grid = v.grid();
    let mut rhs = vec![0.0; grid.len()];
    kernel.eval(v.values(), &mut rhs);
    Ok(OperatorOutput {
        rhs: ScalarField::new(grid, rhs)?,
        speed: ScalarField::new(grid, kernel.speed.clone())?,
        kappa: ScalarField::new(grid, kernel.kappa.clone())?,
    })
}

/// Explicit-scheme step bound
/// `0.5 * min(h^2 / (4 d n (1 + |p+Dv|^2_max / p_last^2)), h / (2 n s_max (1 + |p| + |Dv|_max)))`.
pub fn stable_dt(v: &ScalarField, dir: &Direction, params: PhysParams, f: &ShearProfile) -> Result<f64> {
    check_inputs(v, f)?;
    let mut kernel = GKernel::new(dir, params, f)?;
    let mut rhs = vec![0.0; v.grid().len()];
    let stats = kernel.eval(v.values(), &mut rhs);
    Ok(kernel.stable_dt(&stats))
}

//! Shear-flow profiles `f` on the transverse torus.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{grad_central, Direction, ScalarField, TorusGrid};

/// Safety factor applied to the sampled gradient sup when reporting `lip_bound`.
const LIP_SAFETY: f64 = 1.1;

/// Default amplitude of the sine-sum potential used by [`counterexample_profile`].
pub const DEFAULT_PSI_AMPLITUDE: f64 = 0.1;

/// Sampled shear profile with the metadata the solvers need. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearProfile {
    name: String,
    field: ScalarField,
    f_max: f64,
    f_min: f64,
    lip_bound: f64,
    c1_compliant: bool,
    q_shift: Option<Vec<f64>>,
}

impl ShearProfile {
    /// Wraps samples, computing extrema and the Lipschitz bound from the data.
    pub fn from_field(
        name: impl Into<String>,
        field: ScalarField,
        c1_compliant: bool,
        q_shift: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(q) = &q_shift {
            if q.len() != field.grid().dim() {
                return Err(Error::param("q_shift", "length must equal the grid dimension"));
            }
        }
        let grad = grad_central(&field)?;
        let sup_grad = (0..field.grid().len())
            .map(|i| grad.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(ShearProfile {
            name: name.into(),
            f_max: field.max(),
            f_min: field.min(),
            lip_bound: LIP_SAFETY * sup_grad,
            field,
            c1_compliant,
            q_shift,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> TorusGrid {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn max_abs(&self) -> f64 {
        self.f_max.abs().max(self.f_min.abs())
    }

    pub fn lip_bound(&self) -> f64 {
        self.lip_bound
    }

    pub fn c1_compliant(&self) -> bool {
        self.c1_compliant
    }

    pub fn q_shift(&self) -> Option<&[f64]> {
        self.q_shift.as_deref()
    }

    pub fn is_constant(&self) -> bool {
        self.f_max == self.f_min
    }

    /// `k * f`, with the compliance flag dropped.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let field = self.field.map(|v| k * v)?;
        Self::from_field(format!("{}*{k}", self.name), field, false, None)
    }

    /// Profile CSV: header `x1,...,xn,f`, one row per node in storage order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.field.write_csv(out, "f")
    }

    /// Reads the profile CSV format. The grid is inferred from the row count.
    pub fn read_csv<R: BufRead>(name: impl Into<String>, input: R) -> Result<Self> {
        Self::from_field(name, ScalarField::read_csv(input, "f")?, false, None)
    }
}

/// `f(x) = (1/n) * sum_i (cos(2 pi x_i) - 1)`: maximum 0 on the integer
/// lattice, minimum -2 on the lattice shifted by `(1/2, ..., 1/2)`.
pub fn cellular_profile(grid: TorusGrid) -> Result<ShearProfile> {
    let n = grid.dim() as f64;
    let field = ScalarField::from_fn(grid, |x| x.iter().map(|xi| (2.0 * PI * xi).cos() - 1.0).sum::<f64>() / n)?;
    ShearProfile::from_field("cellular", field, true, Some(vec![0.5; grid.dim()]))
}

pub fn constant_profile(c: f64, grid: TorusGrid) -> Result<ShearProfile> {
    if !c.is_finite() {
        return Err(Error::param("c", "must be finite"));
    }
    ShearProfile::from_field(format!("constant({c})"), ScalarField::constant(grid, c), false, None)
}

/// Potential `Psi = a * sum_i sin(2 pi x_i)` and the closed form of
/// `W = (1 - d div(DPsi / sqrt(1 + |DPsi|^2))) sqrt(1 + |DPsi|^2)` at a point.
pub fn counterexample_w(x: &[f64], amplitude: f64, d: f64) -> f64 {
    let k = 2.0 * PI;
    let grad: Vec<f64> = x.iter().map(|xi| amplitude * k * (k * xi).cos()).collect();
    let hess_diag: Vec<f64> = x.iter().map(|xi| -amplitude * k * k * (k * xi).sin()).collect();
    let s2 = 1.0 + grad.iter().map(|g| g * g).sum::<f64>();
    let s = s2.sqrt();
    let laplacian: f64 = hess_diag.iter().sum();
    let quad: f64 = grad.iter().zip(&hess_diag).map(|(g, hd)| g * g * hd).sum();
    // div(DPsi/S) = (Lap Psi - DPsi.D2Psi.DPsi / S^2) / S
    let div = (laplacian - quad / s2) / s;
    (1.0 - d * div) * s
}

pub fn counterexample_psi(x: &[f64], amplitude: f64) -> f64 {
    amplitude * x.iter().map(|xi| (2.0 * PI * xi).sin()).sum::<f64>()
}

/// Builds `f = -max(0, W)` from a sine-sum potential whose `W` changes sign.
/// Returns the profile together with the sampled `W`.
pub fn counterexample_profile(psi_amplitude: f64, d: f64, grid: TorusGrid) -> Result<(ShearProfile, ScalarField)> {
    if grid.dim() < 2 {
        return Err(Error::param("n", "the counterexample needs n >= 2"));
    }
    if !(psi_amplitude > 0.0 && psi_amplitude.is_finite()) {
        return Err(Error::param("psi_amplitude", "must be positive"));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::param("d", "must be finite and >= 0"));
    }
    let w = ScalarField::from_fn(grid, |x| counterexample_w(x, psi_amplitude, d))?;
    let (min, max) = (w.min(), w.max());
    if min >= 0.0 || max <= 0.0 {
        return Err(Error::NoSignChange { min, max });
    }
    let f = w.map(|v| -v.max(0.0))?;
    let profile = ShearProfile::from_field(format!("counterexample(a={psi_amplitude},d={d})"), f, false, None)?;
    Ok((profile, w))
}

/// Maximal driven force `F(P) = max_x p_last f(x)`.
pub fn driven_force(dir: &Direction, f: &ShearProfile) -> f64 {
    let pl = dir.p_last();
    if pl >= 0.0 {
        pl * f.f_max()
    } else {
        pl * f.f_min()
    }
}

/// `min_x p_last f(x)`.
pub fn min_drift(dir: &Direction, f: &ShearProfile) -> f64 {
    let pl = dir.p_last();
    if pl >= 0.0 {
        pl * f.f_min()
    } else {
        pl * f.f_max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dim: usize, n: usize) -> TorusGrid {
        TorusGrid::new(dim, n).unwrap()
    }

    #[test]
    fn cellular_closed_form() {
        let g = grid(2, 16);
        let f = cellular_profile(g).unwrap();
        assert_eq!(f.values()[g.index_of(&[0, 0])], 0.0);
        assert!((f.values()[g.index_of(&[8, 8])] + 2.0).abs() < 1e-15);
        assert!((f.values()[g.index_of(&[4, 0])] + 0.5).abs() < 1e-15);
        assert_eq!(f.f_max(), 0.0);
        assert!((f.f_min() + 2.0).abs() < 1e-15);
        assert!(f.c1_compliant());
        assert_eq!(f.q_shift(), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn cellular_max_only_at_origin() {
        for n in [8, 16, 32, 64] {
            let f = cellular_profile(grid(2, n)).unwrap();
            let maxima: Vec<usize> =
                f.values().iter().enumerate().filter(|(_, &v)| v == f.f_max()).map(|(i, _)| i).collect();
            assert_eq!(maxima, vec![0]);
        }
    }

    #[test]
    fn constant_profiles() {
        let g = grid(2, 8);
        let zero = constant_profile(0.0, g).unwrap();
        assert_eq!((zero.f_max(), zero.f_min()), (0.0, 0.0));
        let neg = constant_profile(-1.0, g).unwrap();
        assert!(neg.values().iter().all(|&v| v == -1.0));
        assert_eq!(neg.lip_bound(), 0.0);
        assert!(!neg.c1_compliant());
    }

    #[test]
    fn lip_bound_stable_under_refinement() {
        let a = cellular_profile(grid(2, 32)).unwrap().lip_bound();
        let b = cellular_profile(grid(2, 128)).unwrap().lip_bound();
        assert!((a - b).abs() / b < 0.1);
        // |Df| = pi * sqrt(sin^2 + sin^2), largest at (1/4, 1/4)
        let exact = PI * 2f64.sqrt();
        assert!((b / (1.1 * exact) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn counterexample_w_at_origin() {
        for a in [0.05, 0.1, 1.0] {
            let w0 = counterexample_w(&[0.0, 0.0], a, 0.7);
            let expected = (1.0 + 2.0 * (2.0 * PI * a).powi(2)).sqrt();
            assert!((w0 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_properties() {
        let g = grid(2, 64);
        let (f, w) = counterexample_profile(1.0, 1.0, g).unwrap();
        assert!(w.min() < 0.0);
        assert_eq!(f.f_max(), 0.0);
        for (fv, wv) in f.values().iter().zip(w.values()) {
            if *wv <= 0.0 {
                assert_eq!(*fv, 0.0);
            } else {
                assert_eq!(*fv, -wv);
            }
        }
    }

    #[test]
    fn counterexample_rejects_no_sign_change() {
        // d = 0 makes W = sqrt(1+|DPsi|^2) > 0
        let g = grid(2, 32);
        assert!(matches!(counterexample_profile(0.3, 0.0, g), Err(Error::NoSignChange { .. })));
        assert!(counterexample_profile(0.3, 1.0, grid(1, 32)).is_err());
    }

    #[test]
    fn driven_force_cases() {
        let f = cellular_profile(grid(2, 16)).unwrap();
        assert_eq!(driven_force(&Direction::vertical(2), &f), 0.0);
        let down = Direction::new(vec![0.0, 0.0], -1.0).unwrap();
        assert!((driven_force(&down, &f) - 2.0).abs() < 1e-15);
        let flat = Direction::new(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(driven_force(&flat, &f), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let f = cellular_profile(grid(2, 8)).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ShearProfile::read_csv("x", std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid(), f.grid());
    }

    #[test]
    fn csv_rejects_bad_row_count() {
        let text = "x1,x2,f\n0,0,1\n0,0.5,1\n0.5,0,1\n";
        assert!(ShearProfile::read_csv("x", std::io::Cursor::new(text)).is_err());
        let text = "x1,y,f\n0,0,1\n";
        assert!(ShearProfile::read_csv("x", std::io::Cursor::new(text)).is_err());
    }
}

//! Periodic grids on the unit torus `[0,1)^n`, sampled fields, and the
//! discrete differential operators shared by every solver.
//!
//! Nodes sit at cell corners `i*h`. Storage is row-major with the last
//! axis fastest, which is also the row order of the profile CSV format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 8;
pub const MAX_DIM: usize = 3;

/// Uniform periodic grid with `cells` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    cells: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, cells: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::param("n", format!("dimension must be 1, 2 or 3 (got {dim})")));
        }
        if cells < MIN_CELLS {
            return Err(Error::param("grid_N", format!("need at least {MIN_CELLS} cells per axis (got {cells})")));
        }
        Ok(TorusGrid { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.cells.pow((self.dim - 1 - axis) as u32)
    }

    pub fn index_of(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        idx.iter().fold(0, |acc, &i| acc * self.cells + i % self.cells)
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = flat % self.cells;
            flat /= self.cells;
        }
        out
    }

    /// Coordinates of a node, each in `[0, 1)`.
    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let h = self.h();
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Node `step` cells away from `flat` along `axis`, wrapping.
    pub fn neighbor(&self, flat: usize, axis: usize, step: isize) -> usize {
        let stride = self.stride(axis);
        let coord = (flat / stride) % self.cells;
        let shifted = (coord as isize + step).rem_euclid(self.cells as isize) as usize;
        flat - coord * stride + shifted * stride
    }
}

/// Precomputed wrap-around neighbor tables for a grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: TorusGrid,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
}

impl Stencil {
    pub fn new(grid: TorusGrid) -> Self {
        let len = grid.len();
        let mut plus = Vec::with_capacity(grid.dim());
        let mut minus = Vec::with_capacity(grid.dim());
        for axis in 0..grid.dim() {
            plus.push((0..len).map(|i| grid.neighbor(i, axis, 1) as u32).collect());
            minus.push((0..len).map(|i| grid.neighbor(i, axis, -1) as u32).collect());
        }
        Stencil { grid, plus, minus }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn plus(&self, axis: usize) -> &[u32] {
        &self.plus[axis]
    }

    #[inline]
    pub fn minus(&self, axis: usize) -> &[u32] {
        &self.minus[axis]
    }
}

/// A real function sampled at the nodes of a [`TorusGrid`]. Values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field construction"));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        ScalarField { grid, values: vec![value; grid.len()] }
    }

    /// Samples `f` at every node. `f` receives the node coordinates (length `dim`).
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::param("grid", "fields live on different grids"));
        }
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Translate samples by `cells` nodes along `axis`: `out(x) = self(x - cells*h e_axis)`.
    pub fn translated(&self, axis: usize, cells: isize) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            values[self.grid.neighbor(i, axis, cells)] = v;
        }
        ScalarField { grid: self.grid, values }
    }

    /// Node CSV: header `x1,...,xn,<column>`, one row per node in storage
    /// order, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, column: &str) -> Result<()> {
        let dim = self.grid.dim();
        let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).chain([column.to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.point(i);
            let mut row: Vec<String> = x[..dim].iter().map(|c| format!("{c:.16e}")).collect();
            row.push(format!("{v:.16e}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the node CSV format; the grid is inferred from the row count,
    /// which must be `N^n`.
    pub fn read_csv<R: BufRead>(input: R, column: &str) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let dim = cols.len().saturating_sub(1);
        let expected: Vec<String> = (1..=dim).map(|i| format!("x{i}")).chain([column.to_string()]).collect();
        if dim == 0 || cols != expected {
            return Err(Error::Format(format!("CSV header must be x1,...,xn,{column} (got `{}`)", header.trim())));
        }
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Format(format!("row {} has {} columns, expected {}", lineno + 2, fields.len(), dim + 1)));
            }
            let value: f64 = fields[dim]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad value `{}`", lineno + 2, fields[dim])))?;
            values.push(value);
        }
        let cells = (values.len() as f64).powf(1.0 / dim as f64).round() as usize;
        if cells.pow(dim as u32) != values.len() {
            return Err(Error::Format(format!("{} rows is not N^{dim} for any N", values.len())));
        }
        Self::new(TorusGrid::new(dim, cells)?, values)
    }
}

/// Front normal parameters `P = (p, p_last)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    p: Vec<f64>,
    p_last: f64,
}

impl Direction {
    pub fn new(p: Vec<f64>, p_last: f64) -> Result<Self> {
        if p.is_empty() || p.len() > MAX_DIM {
            return Err(Error::param("P", "need 1 to 3 transverse components"));
        }
        if p.iter().chain(std::iter::once(&p_last)).any(|v| !v.is_finite()) {
            return Err(Error::param("P", "components must be finite"));
        }
        let dir = Direction { p, p_last };
        if dir.norm() <= 0.0 {
            return Err(Error::param("P", "|P| must be positive"));
        }
        Ok(dir)
    }

    /// Builds `P` from all `n+1` components; the last one is `p_{n+1}`.
    pub fn from_components(components: &[f64]) -> Result<Self> {
        match components.split_last() {
            Some((&last, p)) => Self::new(p.to_vec(), last),
            None => Err(Error::param("P", "empty direction")),
        }
    }

    /// `e_{n+1}` for an `n`-dimensional transverse space.
    pub fn vertical(dim: usize) -> Self {
        Direction { p: vec![0.0; dim], p_last: 1.0 }
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn p_last(&self) -> f64 {
        self.p_last
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn norm(&self) -> f64 {
        (self.p.iter().map(|x| x * x).sum::<f64>() + self.p_last * self.p_last).sqrt()
    }

    pub fn p_norm(&self) -> f64 {
        self.p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.p.iter().map(|x| x * k).collect(), self.p_last * k)
    }

    pub fn components(&self) -> Vec<f64> {
        let mut out = self.p.clone();
        out.push(self.p_last);
        out
    }
}

/// Central-difference gradient, one field per axis.
pub fn grad_central(v: &ScalarField) -> Result<Vec<ScalarField>> {
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("grad_central input"));
    }
    let grid = v.grid;
    let inv2h = 0.5 / grid.h();
    (0..grid.dim())
        .map(|axis| {
            let values = (0..grid.len())
                .map(|i| (v.values[grid.neighbor(i, axis, 1)] - v.values[grid.neighbor(i, axis, -1)]) * inv2h)
                .collect();
            ScalarField::new(grid, values)
        })
        .collect()
}

/// Scratch buffers for the face-flux curvature of
/// `div((p + Dv) / sqrt(p_last^2 + |p + Dv|^2))`.
///
/// Fluxes live on the faces `(x, x + h e_a)`: the normal component is the
/// one-sided difference across the face, tangential components average the
/// central differences at both ends. The divergence telescopes, so the
/// grid-sum of kappa vanishes up to roundoff.
#[derive(Debug, Clone)]
pub struct CurvatureKernel {
    stencil: Stencil,
    /// Central differences `D_a v` at nodes, axis-major.
    pub(crate) central: Vec<f64>,
    /// Forward differences across faces `(x, x + h e_a)`, axis-major.
    pub(crate) forward: Vec<f64>,
    /// Normalized flux on faces, axis-major.
    pub(crate) flux: Vec<f64>,
    /// `sqrt(p_last^2 + |q|^2)` on faces, axis-major.
    pub(crate) face_norm: Vec<f64>,
}

impl CurvatureKernel {
    pub fn new(grid: TorusGrid) -> Self {
        let total = grid.len() * grid.dim();
        CurvatureKernel {
            stencil: Stencil::new(grid),
            central: vec![0.0; total],
            forward: vec![0.0; total],
            flux: vec![0.0; total],
            face_norm: vec![0.0; total],
        }
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn grid(&self) -> TorusGrid {
        self.stencil.grid()
    }

    /// Fills the difference and flux buffers and writes kappa into `kappa`.
    /// `floor` replaces `p_last` in the normalization when `p_last == 0`.
    pub fn compute(&mut self, v: &[f64], p: &[f64], p_last: f64, floor: f64, kappa: &mut [f64]) {
        let grid = self.stencil.grid();
        let dim = grid.dim();
        let len = grid.len();
        let inv_h = 1.0 / grid.h();
        let inv_2h = 0.5 * inv_h;
        let base = if p_last != 0.0 { p_last * p_last } else { floor * floor };

        for a in 0..dim {
            let plus = self.stencil.plus(a);
            let minus = self.stencil.minus(a);
            let c = &mut self.central[a * len..(a + 1) * len];
            let fw = &mut self.forward[a * len..(a + 1) * len];
            for i in 0..len {
                let vp = v[plus[i] as usize];
                c[i] = (vp - v[minus[i] as usize]) * inv_2h;
                fw[i] = (vp - v[i]) * inv_h;
            }
        }

        for a in 0..dim {
            let plus = self.stencil.plus(a);
            for i in 0..len {
                let j = plus[i] as usize;
                let qa = p[a] + self.forward[a * len + i];
                let mut sq = base + qa * qa;
                for t in 0..dim {
                    if t != a {
                        let qt = p[t] + 0.5 * (self.central[t * len + i] + self.central[t * len + j]);
                        sq += qt * qt;
                    }
                }
                let norm = sq.sqrt();
                self.face_norm[a * len + i] = norm;
                self.flux[a * len + i] = qa / norm;
            }
        }

        kappa.iter_mut().for_each(|k| *k = 0.0);
        for a in 0..dim {
            let minus = self.stencil.minus(a);
            let fl = &self.flux[a * len..(a + 1) * len];
            for i in 0..len {
                kappa[i] += (fl[i] - fl[minus[i] as usize]) * inv_h;
            }
        }
    }
}

/// Discrete mean-curvature term of the reduced front equation.
///
/// `f_reg` is only used when `p_last == 0`; with both zero the normalization
/// can vanish and the call is rejected.
pub fn curvature_kappa(v: &ScalarField, dir: &Direction, f_reg: f64) -> Result<ScalarField> {
    if f_reg < 0.0 || !f_reg.is_finite() {
        return Err(Error::param("f_reg", "must be finite and >= 0"));
    }
    if dir.p_last() == 0.0 && f_reg == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    if dir.dim() != v.grid.dim() {
        return Err(Error::param("P", "dimension does not match the grid"));
    }
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("curvature_kappa input"));
    }
    let mut kernel = CurvatureKernel::new(v.grid);
    let mut kappa = vec![0.0; v.grid.len()];
    kernel.compute(&v.values, dir.p(), dir.p_last(), f_reg, &mut kappa);
    ScalarField::new(v.grid, kappa)
}

/// `max(v) - min(v)`.
pub fn oscillation(v: &ScalarField) -> f64 {
    v.max() - v.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(dim: usize, n: usize) -> TorusGrid {
        TorusGrid::new(dim, n).unwrap()
    }

    #[test]
    fn grid_rejects_small_or_bad_dims() {
        assert!(TorusGrid::new(2, 4).is_err());
        assert!(TorusGrid::new(0, 16).is_err());
        assert!(TorusGrid::new(4, 16).is_err());
        let g = grid(3, 8);
        assert_eq!(g.len(), 512);
        assert_eq!(g.h() * g.cells() as f64, 1.0);
    }

    #[test]
    fn neighbors_wrap() {
        let g = grid(2, 8);
        let corner = g.index_of(&[7, 7]);
        assert_eq!(g.neighbor(corner, 0, 1), g.index_of(&[0, 7]));
        assert_eq!(g.neighbor(corner, 1, 1), g.index_of(&[7, 0]));
        assert_eq!(g.neighbor(0, 1, -1), g.index_of(&[0, 7]));
        for i in 0..g.len() {
            assert_eq!(g.index_of(&g.multi_index(i)[..2]), i);
        }
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = grid(1, 8);
        let mut vals = vec![0.0; 8];
        vals[3] = f64::NAN;
        assert!(matches!(ScalarField::new(g, vals), Err(Error::NonFinite(_))));
    }

    #[test]
    fn grad_of_zero_is_zero() {
        let g = grid(2, 16);
        let v = ScalarField::constant(g, 0.0);
        for comp in grad_central(&v).unwrap() {
            assert_eq!(comp.sup_norm(), 0.0);
        }
    }

    #[test]
    fn grad_of_sine_matches_closed_form_at_origin() {
        let g = grid(2, 64);
        let v = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let dv = grad_central(&v).unwrap();
        let h = g.h();
        let expected = (2.0 * PI * h).sin() / h;
        assert!((dv[0].values()[0] - expected).abs() < 1e-12);
        assert!((dv[0].values()[0] - 2.0 * PI).abs() < 2.0 * PI * (2.0 * PI * h).powi(2) / 6.0 * 1.01);
        assert_eq!(dv[1].sup_norm(), 0.0);
    }

    #[test]
    fn grad_error_is_second_order() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let g = grid(2, n);
                let v = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).unwrap();
                let dv = grad_central(&v).unwrap();
                (0..g.len())
                    .map(|i| {
                        let x = g.point(i);
                        let exact = 2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos();
                        (dv[0].values()[i] - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.9, "rate {rate}");
        }
    }

    #[test]
    fn kappa_flat_front_is_zero() {
        let g = grid(2, 16);
        let v = ScalarField::constant(g, 3.0);
        for p in [vec![0.0, 0.0], vec![0.7, -1.3]] {
            let dir = Direction::new(p, 1.0).unwrap();
            let k = curvature_kappa(&v, &dir, 0.0).unwrap();
            assert!(k.sup_norm() < 1e-12);
        }
    }

    #[test]
    fn kappa_rejects_degenerate_direction() {
        let g = grid(2, 16);
        let v = ScalarField::constant(g, 0.0);
        let dir = Direction::new(vec![1.0, 0.0], 0.0).unwrap();
        assert!(matches!(curvature_kappa(&v, &dir, 0.0), Err(Error::DegenerateDirection)));
        assert!(curvature_kappa(&v, &dir, 0.1).is_ok());
    }

    #[test]
    fn kappa_linearization_small_amplitude() {
        // kappa ~ Laplacian for small slopes with p = 0, p_last = 1
        let g = grid(2, 64);
        let eps = 0.01;
        let v = ScalarField::from_fn(g, |x| eps * (2.0 * PI * x[0]).sin()).unwrap();
        let k = curvature_kappa(&v, &Direction::vertical(2), 0.0).unwrap();
        let peak = eps * (2.0 * PI).powi(2);
        let err = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                (k.values()[i] + peak * (2.0 * PI * x[0]).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err / peak <= 0.05, "relative error {}", err / peak);
    }

    #[test]
    fn kappa_sums_to_zero() {
        let g = grid(2, 32);
        let v = ScalarField::from_fn(g, |x| {
            0.3 * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() + 0.2 * (2.0 * PI * (x[0] + x[1])).cos()
        })
        .unwrap();
        let dir = Direction::new(vec![0.4, -0.2], 0.8).unwrap();
        let k = curvature_kappa(&v, &dir, 0.0).unwrap();
        let total: f64 = k.values().iter().sum();
        assert!(total.abs() <= 1e-10 * (g.cells() * g.cells()) as f64, "sum {total}");
    }

    #[test]
    fn oscillation_cases() {
        let g = grid(2, 16);
        assert_eq!(oscillation(&ScalarField::constant(g, -4.0)), 0.0);
        let v = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!((oscillation(&v) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn direction_norm() {
        let d = Direction::from_components(&[3.0, 0.0, 4.0]).unwrap();
        assert_eq!(d.norm(), 5.0);
        assert_eq!(d.dim(), 2);
        assert!(Direction::new(vec![0.0], 0.0).is_err());
        assert_eq!(d.scaled(2.0).unwrap().norm(), 10.0);
    }
}

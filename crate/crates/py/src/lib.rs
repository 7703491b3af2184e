//! Python bindings: effective values, `A1` and the driven force on built-in
//! profiles. Build with `maturin develop --features extension-module` or
//! `cargo build --release -p shearflame-py --features extension-module`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use shearflame::bifurcation;
use shearflame::effective::{estimate_discount, EstimateOptions, DEFAULT_SCHEDULE};
use shearflame::error::Error;
use shearflame::fields::{Direction, TorusGrid};
use shearflame::operators::PhysParams;
use shearflame::profiles::{self, ShearProfile, DEFAULT_PSI_AMPLITUDE};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidParameter { .. } | Error::DegenerateDirection => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn build_profile(name: &str, dim: usize, grid_n: usize, d: f64) -> Result<ShearProfile, Error> {
    let grid = TorusGrid::new(dim, grid_n)?;
    match name {
        "cellular" => profiles::cellular_profile(grid),
        "counterexample" => Ok(profiles::counterexample_profile(DEFAULT_PSI_AMPLITUDE, d, grid)?.0),
        other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
            Some(Ok(c)) => profiles::constant_profile(c, grid),
            _ => Err(Error::param("profile", "expected cellular, counterexample or constant:<c>")),
        },
    }
}

fn direction(p: &[f64]) -> Result<Direction, Error> {
    if p.len() < 2 {
        return Err(Error::param("P", "needs at least two components"));
    }
    Direction::from_components(p)
}

/// Discount-extrapolated effective value; returns the estimate as JSON.
#[pyfunction]
#[pyo3(signature = (p, d, a, cutoff = true, profile = "cellular", grid_n = 32))]
fn effective(py: Python<'_>, p: Vec<f64>, d: f64, a: f64, cutoff: bool, profile: &str, grid_n: usize) -> PyResult<String> {
    let profile = profile.to_string();
    py.detach(move || {
        let dir = direction(&p)?;
        let f = build_profile(&profile, dir.dim(), grid_n, d)?;
        let params = PhysParams::new(d, a, cutoff)?;
        estimate_discount(&dir, params, &f, &DEFAULT_SCHEDULE, &EstimateOptions::default())?.to_json()
    })
    .map_err(to_py)
}

/// `(A1, A1_lo, A1_hi)` for the cellular profile in direction `e_{n+1}`.
#[pyfunction]
#[pyo3(signature = (d, n = 2, grid_n = 32, tol_a = 1e-3, a_hi = 4.0))]
fn find_a1(py: Python<'_>, d: f64, n: usize, grid_n: usize, tol_a: f64, a_hi: f64) -> PyResult<(f64, f64, f64)> {
    py.detach(move || {
        let f = profiles::cellular_profile(TorusGrid::new(n, grid_n)?)?;
        let dir = Direction::vertical(n);
        let a1 = bifurcation::find_a1(&dir, d, &f, (0.0, a_hi), tol_a, &DEFAULT_SCHEDULE, &EstimateOptions::default())?;
        Ok((a1.a1, a1.lo, a1.hi))
    })
    .map_err(to_py)
}

/// `max p_last f` over the sampled profile.
#[pyfunction]
#[pyo3(signature = (p, profile = "cellular", grid_n = 32, d = 0.2))]
fn driven_force(p: Vec<f64>, profile: &str, grid_n: usize, d: f64) -> PyResult<f64> {
    let dir = direction(&p).map_err(to_py)?;
    let f = build_profile(profile, dir.dim(), grid_n, d).map_err(to_py)?;
    Ok(profiles::driven_force(&dir, &f))
}

#[pymodule]
fn shearflame_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(effective, m)?)?;
    m.add_function(wrap_pyfunction!(find_a1, m)?)?;
    m.add_function(wrap_pyfunction!(driven_force, m)?)?;
    Ok(())
}

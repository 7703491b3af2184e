//! Regenerates the oracle fixtures under `tests/fixtures`.
//!
//! `cargo run --release -p shearflame --example fixtures`

use std::path::Path;

use serde_json::json;
use shearflame::bifurcation::find_a1;
use shearflame::effective::{estimate_discount, EstimateOptions, DEFAULT_SCHEDULE};
use shearflame::fields::{Direction, TorusGrid};
use shearflame::operators::PhysParams;
use shearflame::profiles::{cellular_profile, counterexample_profile, DEFAULT_PSI_AMPLITUDE};

const D: f64 = 0.2;

fn write(name: &str, value: serde_json::Value) -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value)? + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = EstimateOptions::default();
    let dir = Direction::vertical(2);

    let cells = 32;
    let (f, _) = counterexample_profile(DEFAULT_PSI_AMPLITUDE, D, TorusGrid::new(2, cells)?)?;
    let cut = estimate_discount(&dir, PhysParams::new(D, 1.0, true)?, &f, &DEFAULT_SCHEDULE, &opts)?;
    let plain = estimate_discount(&dir, PhysParams::new(D, 1.0, false)?, &f, &DEFAULT_SCHEDULE, &opts)?;
    // the committed gap sits just inside the measured one
    let delta_ce = (-plain.value * 100.0).floor() / 100.0;
    write(
        "counterexample.json",
        json!({
            "grid_N": cells,
            "d": D,
            "A": 1.0,
            "psi_amplitude": DEFAULT_PSI_AMPLITUDE,
            "Hbar_plus": cut.value,
            "Hbar_plus_error": cut.error_bar,
            "Hbar": plain.value,
            "Hbar_error": plain.error_bar,
            "delta_ce": delta_ce,
        }),
    )?;

    let cells = 128;
    let f = cellular_profile(TorusGrid::new(2, cells)?)?;
    let tol_a = 1e-3;
    let a1 = find_a1(&dir, D, &f, (0.0, 4.0), tol_a, &DEFAULT_SCHEDULE, &opts)?;
    write(
        "cellular_a1.json",
        json!({
            "profile": "cellular",
            "n": 2,
            "grid_N": cells,
            "d": D,
            "P": [0.0, 0.0, 1.0],
            "tol_A": tol_a,
            "A1": a1.a1,
            "A1_lo": a1.lo,
            "A1_hi": a1.hi,
        }),
    )?;
    Ok(())
}

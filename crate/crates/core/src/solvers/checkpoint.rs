//! Plain-text solver checkpoints: node values as CSV next to a JSON sidecar
//! (`<path>.json`) carrying the run metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DiscountedSolution;
use crate::error::{Error, Result};
use crate::fields::{Direction, ScalarField};
use crate::operators::PhysParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub lambda: f64,
    #[serde(rename = "P")]
    pub direction: Vec<f64>,
    pub params: PhysParams,
    pub iteration: usize,
    pub residual: f64,
    pub converged: bool,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_checkpoint(path: &Path, solution: &DiscountedSolution, dir: &Direction, params: PhysParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    solution.v.write_csv(&mut out, "v")?;
    out.flush()?;
    let meta = CheckpointMeta {
        lambda: solution.lambda,
        direction: dir.components(),
        params,
        iteration: solution.iterations,
        residual: solution.residual,
        converged: solution.converged,
    };
    let mut side = BufWriter::new(File::create(sidecar(path))?);
    serde_json::to_writer_pretty(&mut side, &meta)?;
    side.flush()?;
    Ok(())
}

/// Reads a checkpoint back; the field can seed `solve_discounted_from`.
pub fn read_checkpoint(path: &Path) -> Result<(ScalarField, CheckpointMeta)> {
    let field = ScalarField::read_csv(BufReader::new(File::open(path)?), "v")?;
    let meta: CheckpointMeta = serde_json::from_reader(BufReader::new(File::open(sidecar(path))?))?;
    if !(meta.lambda > 0.0 && meta.lambda.is_finite()) {
        return Err(Error::Format(format!("checkpoint lambda {} is not positive", meta.lambda)));
    }
    if meta.direction.len() != field.grid().dim() + 1 {
        return Err(Error::Format("checkpoint P does not match the field dimension".into()));
    }
    Ok((field, meta))
}

//! Command-line orchestration: configuration, the subcommands and their
//! artifacts, and the invariant suite behind `validate`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use shearflame::effective::EffectiveEstimate;
use shearflame::error::Error;

pub mod commands;
pub mod config;
pub mod validate;

pub use config::{RawConfig, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config { key: key.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Solver(Error::InvalidParameter { .. }) => 2,
            CliError::Inconclusive(_) => 4,
            _ => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config { key, message } | CliError::Solver(Error::InvalidParameter { key, reason: message }) => {
                json!({ "error": "config", "key": key, "message": message })
            }
            CliError::Solver(e) => json!({ "error": "solver", "message": e.to_string() }),
            CliError::Inconclusive(m) => json!({ "error": "inconclusive", "message": m }),
            CliError::ChecksFailed(n) => json!({ "error": "checks-failed", "failed": n }),
            CliError::Io(e) => json!({ "error": "io", "message": e.to_string() }),
        }
    }
}

/// One solve behind an emitted number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub label: String,
    #[serde(rename = "A")]
    pub intensity: f64,
    pub cutoff: bool,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Every solve a command ran, in a deterministic order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Manifest {
    pub solves: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn add(&mut self, label: &str, est: &EffectiveEstimate) {
        for r in &est.solves {
            self.solves.push(ManifestEntry {
                label: label.to_string(),
                intensity: est.intensity,
                cutoff: est.cutoff,
                lambda: r.lambda,
                residual: r.residual,
                iterations: r.iterations,
            });
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value).map_err(Error::from)?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

/// Runs `f` on a pool of `jobs` threads.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

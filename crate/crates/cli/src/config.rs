//! Run configuration: a flat TOML file whose keys match the fields below,
//! overridden by command-line flags, validated before any solve starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shearflame::bifurcation::{DEFAULT_PROBE_FACTORS, DEFAULT_TOL_A};
use shearflame::effective::{EstimateOptions, DEFAULT_SCHEDULE, DEFAULT_THETA_U};
use shearflame::fields::{Direction, TorusGrid};
use shearflame::operators::PhysParams;
use shearflame::profiles::{cellular_profile, constant_profile, counterexample_profile, ShearProfile, DEFAULT_PSI_AMPLITUDE};
use shearflame::solvers::{SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSpec {
    Cellular,
    Constant(f64),
    Counterexample,
    Csv(PathBuf),
}

impl ProfileSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |msg: &str| CliError::config("profile", msg);
        match text.split_once(':') {
            None if text == "cellular" => Ok(ProfileSpec::Cellular),
            None if text == "counterexample" => Ok(ProfileSpec::Counterexample),
            Some(("constant", c)) => c.trim().parse().map(ProfileSpec::Constant).map_err(|_| bad("constant:<c> needs a number")),
            Some(("csv", path)) if !path.is_empty() => Ok(ProfileSpec::Csv(PathBuf::from(path))),
            _ => Err(bad("expected cellular, constant:<c>, counterexample or csv:<path>")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    On,
    Off,
    Both,
}

impl CutoffMode {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text {
            "on" | "true" => Ok(CutoffMode::On),
            "off" | "false" => Ok(CutoffMode::Off),
            "both" => Ok(CutoffMode::Both),
            _ => Err(CliError::config("cutoff", "expected on, off or both")),
        }
    }

    /// Variants to run, non-cutoff first.
    pub fn variants(self) -> &'static [bool] {
        match self {
            CutoffMode::On => &[true],
            CutoffMode::Off => &[false],
            CutoffMode::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Discount,
    LongTime,
}

/// `lo:hi:k`, `k` evenly spaced intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ARange {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
}

impl ARange {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::config("A_range", "expected lo:hi:k with 0 <= lo < hi and k >= 2");
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) || k < 2 {
            return Err(bad());
        }
        Ok(ARange { lo, hi, k })
    }

    /// The `k` points, preceded by 0 when `lo > 0`.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.k - 1) as f64;
        let mut out = if self.lo > 0.0 { vec![0.0] } else { Vec::new() };
        out.extend((0..self.k).map(|i| if i + 1 == self.k { self.hi } else { self.lo + step * i as f64 }));
        out
    }
}

/// Keys as they appear in a config file; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub n: Option<usize>,
    #[serde(rename = "grid_N")]
    pub grid_n: Option<usize>,
    pub profile: Option<String>,
    #[serde(rename = "P")]
    pub direction: Option<Vec<f64>>,
    pub d: Option<f64>,
    #[serde(rename = "A")]
    pub intensity: Option<f64>,
    #[serde(rename = "A_range")]
    pub a_range: Option<String>,
    #[serde(rename = "A_bracket")]
    pub a_bracket: Option<Vec<f64>>,
    pub cutoff: Option<String>,
    pub schedule: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub method: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    #[serde(rename = "tol_A")]
    pub tol_a: Option<f64>,
    pub theta_u: Option<f64>,
    pub psi_amplitude: Option<f64>,
    pub probe_factors: Option<Vec<f64>>,
    pub figure_points: Option<usize>,
    pub strict: Option<bool>,
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            CliError::Config { key, message }
        })
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: RawConfig) -> RawConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RawConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            n, grid_n, profile, direction, d, intensity, a_range, a_bracket, cutoff, schedule, lambda, horizon, method,
            tol, max_iter, tol_a, theta_u, psi_amplitude, probe_factors, figure_points, strict, init, out, jobs
        )
    }
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    #[serde(rename = "grid_N")]
    pub grid_n: usize,
    pub profile: ProfileSpec,
    #[serde(rename = "P")]
    pub direction: Vec<f64>,
    pub d: f64,
    #[serde(rename = "A")]
    pub intensity: f64,
    #[serde(rename = "A_range")]
    pub a_range: Option<ARange>,
    #[serde(rename = "A_bracket")]
    pub a_bracket: (f64, f64),
    pub cutoff: CutoffMode,
    pub schedule: Vec<f64>,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub method: EstimateMethod,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(rename = "tol_A")]
    pub tol_a: f64,
    pub theta_u: f64,
    pub psi_amplitude: f64,
    pub probe_factors: Vec<f64>,
    pub figure_points: usize,
    pub strict: bool,
    pub init: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; never affects results.
    #[serde(skip)]
    pub jobs: usize,
}

fn positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::config(key, "must be positive and finite"))
    }
}

impl RunConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let n = raw.n.unwrap_or(2);
        if !(1..=3).contains(&n) {
            return Err(CliError::config("n", "must be 1, 2 or 3"));
        }
        let grid_n = raw.grid_n.unwrap_or(32);
        if grid_n < 8 {
            return Err(CliError::config("grid_N", "must be at least 8"));
        }
        let profile = match &raw.profile {
            Some(text) => ProfileSpec::parse(text)?,
            None => ProfileSpec::Cellular,
        };
        let direction = raw.direction.unwrap_or_else(|| {
            let mut e = vec![0.0; n + 1];
            e[n] = 1.0;
            e
        });
        if direction.len() != n + 1 {
            return Err(CliError::config("P", format!("needs n + 1 = {} components", n + 1)));
        }
        if direction.iter().any(|x| !x.is_finite()) {
            return Err(CliError::config("P", "components must be finite"));
        }
        if direction[n] == 0.0 {
            return Err(CliError::config("P", "the last component p_last must be nonzero"));
        }
        let d = raw.d.unwrap_or(0.2);
        if !(d >= 0.0 && d.is_finite()) {
            return Err(CliError::config("d", "must be finite and >= 0"));
        }
        let intensity = raw.intensity.unwrap_or(0.5);
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(CliError::config("A", "must be finite and >= 0"));
        }
        let a_range = raw.a_range.as_deref().map(ARange::parse).transpose()?;
        let a_bracket = match raw.a_bracket.as_deref() {
            None => (0.0, 4.0),
            Some([lo, hi]) if *lo >= 0.0 && hi > lo && hi.is_finite() => (*lo, *hi),
            Some(_) => return Err(CliError::config("A_bracket", "expected [lo, hi] with 0 <= lo < hi")),
        };
        let cutoff = match raw.cutoff.as_deref() {
            Some(text) => CutoffMode::parse(text)?,
            None => CutoffMode::On,
        };
        let schedule = raw.schedule.unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
        shearflame::effective::check_schedule(&schedule).map_err(|e| CliError::config("schedule", e.to_string()))?;
        let lambda = positive("lambda", raw.lambda.unwrap_or(*schedule.last().expect("checked non-empty")))?;
        let horizon = raw.horizon.unwrap_or(16.0);
        if !(horizon >= shearflame::effective::MIN_HORIZON && horizon.is_finite()) {
            return Err(CliError::config("T", format!("must be at least {}", shearflame::effective::MIN_HORIZON)));
        }
        let method = match raw.method.as_deref() {
            None | Some("discount") => EstimateMethod::Discount,
            Some("long-time") => EstimateMethod::LongTime,
            Some(_) => return Err(CliError::config("method", "expected discount or long-time")),
        };
        let tol = positive("tol", raw.tol.unwrap_or(DEFAULT_TOL))?;
        let max_iter = raw.max_iter.unwrap_or(DEFAULT_MAX_ITER);
        if max_iter == 0 {
            return Err(CliError::config("max_iter", "must be positive"));
        }
        let tol_a = positive("tol_A", raw.tol_a.unwrap_or(DEFAULT_TOL_A))?;
        let theta_u = positive("theta_u", raw.theta_u.unwrap_or(DEFAULT_THETA_U))?;
        let psi_amplitude = positive("psi_amplitude", raw.psi_amplitude.unwrap_or(DEFAULT_PSI_AMPLITUDE))?;
        let probe_factors = raw.probe_factors.unwrap_or_else(|| DEFAULT_PROBE_FACTORS.to_vec());
        if probe_factors.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(CliError::config("probe_factors", "must be positive"));
        }
        let figure_points = raw.figure_points.unwrap_or(16);
        if figure_points < 2 {
            return Err(CliError::config("figure_points", "must be at least 2"));
        }
        let jobs = raw.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::config("jobs", "must be at least 1"));
        }
        Ok(RunConfig {
            n,
            grid_n,
            profile,
            direction,
            d,
            intensity,
            a_range,
            a_bracket,
            cutoff,
            schedule,
            lambda,
            horizon,
            method,
            tol,
            max_iter,
            tol_a,
            theta_u,
            psi_amplitude,
            probe_factors,
            figure_points,
            strict: raw.strict.unwrap_or(false),
            init: raw.init,
            out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
            jobs,
        })
    }

    pub fn grid(&self) -> Result<TorusGrid, CliError> {
        TorusGrid::new(self.n, self.grid_n).map_err(|e| CliError::config("grid_N", e.to_string()))
    }

    pub fn dir(&self) -> Direction {
        Direction::from_components(&self.direction).expect("validated direction")
    }

    pub fn params(&self, cutoff: bool) -> PhysParams {
        PhysParams { d: self.d, intensity: self.intensity, cutoff }
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions { solver: self.solver_options(), theta_u: self.theta_u }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iter: self.max_iter, ..SolverOptions::default() }
    }

    /// Samples the configured profile on the configured grid.
    pub fn build_profile(&self) -> Result<ShearProfile, CliError> {
        let grid = self.grid()?;
        let profile = match &self.profile {
            ProfileSpec::Cellular => cellular_profile(grid),
            ProfileSpec::Constant(c) => constant_profile(*c, grid),
            ProfileSpec::Counterexample => counterexample_profile(self.psi_amplitude, self.d, grid).map(|(f, _)| f),
            ProfileSpec::Csv(path) => {
                let file = std::fs::File::open(path).map_err(|e| CliError::config("profile", format!("{}: {e}", path.display())))?;
                let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
                let f = ShearProfile::read_csv(name, std::io::BufReader::new(file)).map_err(|e| CliError::config("profile", e.to_string()))?;
                if f.grid() != grid {
                    return Err(CliError::config(
                        "profile",
                        format!("CSV holds a {}-D grid with N = {}, config asks for n = {}, grid_N = {}", f.grid().dim(), f.grid().cells(), self.n, self.grid_n),
                    ));
                }
                Ok(f)
            }
        };
        profile.map_err(|e| CliError::config("profile", e.to_string()))
    }
}

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;
use shearflame::bifurcation::{bifurcate, find_a1, log_grid, sweep_a, A1Bracket};
use shearflame::effective::{estimate_discount, estimate_longtime, EffectiveEstimate, SolveRecord};
use shearflame::fields::{oscillation, Direction};
use shearflame::invariants::{self, Violation};
use shearflame::profiles::counterexample_profile;
use shearflame::solvers::{evolve, read_checkpoint, solve_discounted_from, write_checkpoint};

use crate::config::{CutoffMode, EstimateMethod, RunConfig};
use crate::{validate, with_pool, write_json, CliError, Manifest};

/// Tolerance on the cutoff value of the counterexample, which should vanish.
pub const COUNTEREXAMPLE_ZERO_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CellSolve,
    Evolve,
    Effective,
    Sweep,
    Bifurcate,
    Figure2,
    Counterexample,
    Validate,
}

fn variant_name(cutoff: bool) -> &'static str {
    if cutoff {
        "cutoff"
    } else {
        "no-cutoff"
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    manifest: Manifest,
    violations: Vec<Violation>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    manifest: Manifest,
    violations: Vec<Violation>,
}

impl<'a> Run<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn record(&mut self, label: &str, est: &EffectiveEstimate, dir: &Direction, f: &shearflame::profiles::ShearProfile) {
        self.manifest.add(label, est);
        self.violations.extend(invariants::check_estimate(est, dir, f));
    }

    fn finish(self) -> Result<(), CliError> {
        let path = self.path("manifest.json");
        write_json(
            &path,
            &RunManifest { command: self.command, config: self.cfg, manifest: self.manifest, violations: self.violations },
        )
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)?;
    with_pool(cfg.jobs, || match command {
        Command::CellSolve => cell_solve(cfg),
        Command::Evolve => evolve_cmd(cfg),
        Command::Effective => effective(cfg),
        Command::Sweep => sweep(cfg),
        Command::Bifurcate => bifurcate_cmd(cfg),
        Command::Figure2 => figure2(cfg),
        Command::Counterexample => counterexample(cfg),
        Command::Validate => validate_cmd(cfg),
    })?
}

fn cell_solve(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let init = match &cfg.init {
        Some(path) => {
            let (field, _) = read_checkpoint(path).map_err(|e| CliError::config("init", e.to_string()))?;
            Some(field)
        }
        None => None,
    };
    let mut run = Run { cfg, command: "cell-solve", manifest: Manifest::default(), violations: Vec::new() };
    let mut reports = Vec::new();
    let mut stalled = Vec::new();
    for &cutoff in cfg.cutoff.variants() {
        let params = cfg.params(cutoff);
        let sol = solve_discounted_from(cfg.lambda, &dir, params, &f, &cfg.solver_options(), init.as_ref())?;
        let record = SolveRecord::from_solution(&sol, &dir, params, &f)?;
        write_checkpoint(&run.path(&format!("v_{}.csv", variant_name(cutoff))), &sol, &dir, params)?;
        if sol.converged {
            run.violations.extend(invariants::discounted_bounds(&record, &dir, cfg.intensity, &f));
            run.violations.extend(invariants::gradient_bound(&record, &dir, cfg.intensity, &f));
        } else {
            stalled.push(variant_name(cutoff));
        }
        run.manifest.solves.push(crate::ManifestEntry {
            label: "cell-solve".into(),
            intensity: cfg.intensity,
            cutoff,
            lambda: sol.lambda,
            residual: sol.residual,
            iterations: sol.iterations,
        });
        reports.push(json!({ "cutoff": cutoff, "converged": sol.converged, "solve": record }));
    }
    write_json(&run.path("cell_solve.json"), &reports)?;
    run.finish()?;
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(shearflame::error::Error::InvalidEstimate(format!("{} solve stopped at max_iter", stalled.join(", "))).into())
    }
}

fn evolve_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let mut times = vec![1.0];
    while times.last().expect("non-empty") * 2.0 < cfg.horizon {
        times.push(times.last().expect("non-empty") * 2.0);
    }
    let mut run = Run { cfg, command: "evolve", manifest: Manifest::default(), violations: Vec::new() };
    let mut reports = Vec::new();
    for &cutoff in cfg.cutoff.variants() {
        let params = cfg.params(cutoff);
        let trace = evolve(&dir, params, &f, cfg.horizon, &times)?;
        run.violations.extend(invariants::gradient_growth(&trace, &dir, cfg.intensity, &f));
        let slopes: Vec<_> = trace
            .slope
            .iter()
            .map(|(t, s)| json!({ "t": t, "slope_mean": s.mean(), "uniformity": oscillation(s) }))
            .collect();
        if let Some(last) = trace.final_slope() {
            last.write_csv(BufWriter::new(File::create(run.path(&format!("slope_{}.csv", variant_name(cutoff))))?), "slope")?;
        }
        reports.push(json!({ "cutoff": cutoff, "steps": trace.steps, "slopes": slopes, "grad_sup": trace.grad_sup }));
    }
    write_json(&run.path("evolve.json"), &reports)?;
    run.finish()
}

fn effective(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let mut run = Run { cfg, command: "effective", manifest: Manifest::default(), violations: Vec::new() };
    for &cutoff in cfg.cutoff.variants() {
        let params = cfg.params(cutoff);
        let est = match cfg.method {
            EstimateMethod::Discount => estimate_discount(&dir, params, &f, &cfg.schedule, &cfg.estimate_options())?,
            EstimateMethod::LongTime => estimate_longtime(&dir, params, &f, cfg.horizon, cfg.theta_u)?,
        };
        run.record("effective", &est, &dir, &f);
        write_json(&run.path(&format!("effective_{}.json", variant_name(cutoff))), &est)?;
    }
    run.finish()
}

fn sweep_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    cfg.a_range.map(|r| r.grid()).ok_or_else(|| CliError::config("A_range", "sweep needs an A range lo:hi:k"))
}

fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let both = match cfg.cutoff {
        CutoffMode::Both => true,
        CutoffMode::On => false,
        CutoffMode::Off => return Err(CliError::config("cutoff", "sweeps always include the cutoff variant; use on or both")),
    };
    let curve = sweep_a(&dir, cfg.d, &f, &sweep_grid(cfg)?, both, &cfg.schedule, &cfg.estimate_options())?;
    let mut run = Run { cfg, command: "sweep", manifest: Manifest::default(), violations: Vec::new() };
    for est in &curve.estimates {
        run.record("sweep", est, &dir, &f);
    }
    run.violations.extend(invariants::check_across_intensities(&curve.estimates, &dir, &f, cfg.tol));
    curve.write_csv(BufWriter::new(File::create(run.path("sweep.csv"))?), both)?;
    run.finish()
}

fn bifurcate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let report = bifurcate(&dir, cfg.d, &f, cfg.a_bracket, cfg.tol_a, &cfg.probe_factors, &cfg.schedule, &cfg.estimate_options())?;
    let mut run = Run { cfg, command: "bifurcate", manifest: Manifest::default(), violations: Vec::new() };
    for est in &report.a1.estimates {
        run.record("find-A1", est, &dir, &f);
    }
    for probe in &report.a0_evidence {
        if let Some(est) = &probe.estimate {
            run.record("probe", est, &dir, &f);
        }
    }
    write_json(&run.path("bifurcation.json"), &report)?;
    run.finish()?;
    if cfg.strict && !report.conclusive {
        return Err(CliError::Inconclusive("a failure probe above A1 reached no verdict".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Figure2Summary<'a> {
    #[serde(flatten)]
    a1: &'a A1Bracket,
    #[serde(rename = "A_grid")]
    a_grid: &'a [f64],
    #[serde(rename = "grid_N")]
    grid_n: usize,
}

fn figure2(cfg: &RunConfig) -> Result<(), CliError> {
    let f = cfg.build_profile()?;
    let dir = cfg.dir();
    let opts = cfg.estimate_options();
    let a1 = find_a1(&dir, cfg.d, &f, cfg.a_bracket, cfg.tol_a, &cfg.schedule, &opts)?;
    let grid = log_grid(a1.a1 / 4.0, 2.0 * a1.a1, cfg.figure_points)?;
    let curve = sweep_a(&dir, cfg.d, &f, &grid, true, &cfg.schedule, &opts)?;
    let mut run = Run { cfg, command: "figure2", manifest: Manifest::default(), violations: Vec::new() };
    for est in &a1.estimates {
        run.record("find-A1", est, &dir, &f);
    }
    for est in &curve.estimates {
        run.record("figure2", est, &dir, &f);
    }
    curve.write_figure_csv(BufWriter::new(File::create(run.path("figure2.csv"))?))?;
    write_json(&run.path("figure2.json"), &Figure2Summary { a1: &a1, a_grid: &grid, grid_n: cfg.grid_n })?;
    run.finish()
}

fn counterexample(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.n < 2 {
        return Err(CliError::config("n", "the counterexample needs n >= 2"));
    }
    let (f, w) = counterexample_profile(cfg.psi_amplitude, cfg.d, cfg.grid()?)?;
    let dir = Direction::vertical(cfg.n);
    let mut run = Run { cfg, command: "counterexample", manifest: Manifest::default(), violations: Vec::new() };
    f.write_csv(BufWriter::new(File::create(run.path("profile.csv"))?))?;
    w.write_csv(BufWriter::new(File::create(run.path("w.csv"))?), "W")?;
    let opts = cfg.estimate_options();
    let base = cfg.params(false).with_intensity(1.0);
    let plain = estimate_discount(&dir, base, &f, &cfg.schedule, &opts)?;
    let cut = estimate_discount(&dir, base.with_cutoff(true), &f, &cfg.schedule, &opts)?;
    run.record("counterexample", &plain, &dir, &f);
    run.record("counterexample", &cut, &dir, &f);
    let report = json!({
        "psi_amplitude": cfg.psi_amplitude,
        "d": cfg.d,
        "P": dir.components(),
        "A": 1.0,
        "W_min": w.min(),
        "W_max": w.max(),
        "Hbar_plus": cut.value,
        "Hbar_plus_error": cut.error_bar,
        "Hbar": plain.value,
        "Hbar_error": plain.error_bar,
        "cutoff_vanishes": cut.value.abs() <= COUNTEREXAMPLE_ZERO_TOL,
        "strict_gap": plain.value < 0.0,
    });
    write_json(&run.path("counterexample.json"), &report)?;
    run.finish()
}

fn validate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let report = validate::run_suite()?;
    let mut run = Run { cfg, command: "validate", manifest: Manifest::default(), violations: Vec::new() };
    for (label, est) in &report.estimates {
        run.manifest.add(label, est);
    }
    run.violations = report.violations.clone();
    write_json(&run.path("validate.json"), &report)?;
    run.finish()?;
    match report.failed() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}

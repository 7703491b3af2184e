use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shearflame_cli::commands::{self, Command};
use shearflame_cli::config::ARange;
use shearflame_cli::{CliError, RawConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "shearflame", version, about = "Effective burning velocity of the curvature G-equation in shear flows")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat TOML config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,
    #[arg(long = "A", global = true, allow_hyphen_values = true)]
    intensity: Option<f64>,
    /// Intensity range `lo:hi:k`.
    #[arg(long = "A-range", global = true, allow_hyphen_values = true)]
    a_range: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    d: Option<f64>,
    /// Comma-separated `p_1,...,p_n,p_last`.
    #[arg(long = "P", global = true, allow_hyphen_values = true)]
    direction: Option<String>,
    /// `cellular`, `constant:<c>`, `counterexample` or `csv:<path>`.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// `on`, `off` or `both`.
    #[arg(long, global = true)]
    cutoff: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// One discounted solve; writes the field and a report.
    CellSolve,
    /// Evolution from zero; writes slope snapshots.
    Evolve,
    /// One effective-value estimate per cutoff variant.
    Effective,
    /// Sweep over the A range.
    Sweep,
    /// Locate A1 and probe homogenization beyond it.
    Bifurcate,
    /// Sweep around A1 for the graph of the cutoff effective value.
    Figure2,
    /// Build the sign-changing counterexample and compare both variants.
    Counterexample,
    /// Run the invariant suite.
    Validate,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::CellSolve => Command::CellSolve,
            Cmd::Evolve => Command::Evolve,
            Cmd::Effective => Command::Effective,
            Cmd::Sweep => Command::Sweep,
            Cmd::Bifurcate => Command::Bifurcate,
            Cmd::Figure2 => Command::Figure2,
            Cmd::Counterexample => Command::Counterexample,
            Cmd::Validate => Command::Validate,
        }
    }
}

fn flags(cli: &Cli) -> Result<RawConfig, CliError> {
    let direction = match &cli.direction {
        Some(text) => Some(
            text.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::config("P", "expected comma-separated numbers"))?,
        ),
        None => None,
    };
    if let Some(r) = &cli.a_range {
        ARange::parse(r)?;
    }
    let n = direction.as_ref().map(|p: &Vec<f64>| p.len().saturating_sub(1));
    Ok(RawConfig {
        n,
        grid_n: cli.grid_n,
        intensity: cli.intensity,
        a_range: cli.a_range.clone(),
        d: cli.d,
        direction,
        profile: cli.profile.clone(),
        cutoff: cli.cutoff.clone(),
        out: cli.out.clone(),
        jobs: cli.jobs,
        ..RawConfig::default()
    })
}

fn main_inner(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let cfg = RunConfig::resolve(file.overlay(flags(cli)?))?;
    commands::run(cli.command.command(), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

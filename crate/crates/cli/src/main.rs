//! `bddc-lfa`: spectra, weight optimization, histograms and finite-grid
//! validation for BDDC preconditioners on periodic 2-D grids.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Failure;
use config::{Command, FileConfig, Format, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "bddc-lfa", version, about = "Local Fourier analysis of two- and three-level BDDC")]
struct Cli {
    /// Subcommand; may instead come from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `q1` or 9 comma-separated coefficients, row by row from the top left.
    #[arg(long)]
    stencil: Option<String>,
    /// Subdomain sizes.
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    /// Frequency sampling resolutions (2n nodes per axis).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Fine-level variants: 1 = deluxe-type weighting, 2 = harmonic extension.
    #[arg(long, value_delimiter = ',')]
    i: Vec<u8>,
    /// Coarse-level variants; 0 solves the coarse problem exactly.
    #[arg(long, value_delimiter = ',')]
    j: Vec<u8>,
    /// Multiplicative wraps: none, f, c, sc, fc.
    #[arg(long, value_delimiter = ',')]
    mult: Vec<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    omega1: Option<f64>,
    #[arg(long)]
    omega2: Option<f64>,
    /// Weight grid `min:max[:step]`.
    #[arg(long)]
    grid: Option<String>,
    /// Outer weight grid for two-weight searches.
    #[arg(long)]
    grid_outer: Option<String>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// Growth bound for the fitted constant: upsilon1, upsilon2 or product:i,j.
    #[arg(long)]
    bound: Option<String>,
    /// Subdomains per axis of the finite grid (validate).
    #[arg(long)]
    m: Option<usize>,
    /// Seed of the Arnoldi start vector.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative spectrum tolerance for validate.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    threads: Option<usize>,
    /// Keep per-frequency spectra in JSON sweep output.
    #[arg(long)]
    keep_spectra: bool,
}

fn resolve(cli: Cli) -> anyhow::Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        stencil: cli.stencil,
        p: cli.p,
        n: cli.n,
        i: cli.i,
        j: cli.j,
        mult: cli.mult,
        omega: cli.omega,
        omega1: cli.omega1,
        omega2: cli.omega2,
        grid: cli.grid,
        grid_outer: cli.grid_outer,
        bin_width: cli.bin_width,
        bound: cli.bound,
        m: cli.m,
        seed: cli.seed,
        tol: cli.tol,
        out: cli.out,
        format: cli.format,
        threads: cli.threads,
        keep_spectra: cli.keep_spectra,
    };
    RunConfig::resolve(cli.command, file, flags)
}

fn run(cfg: &RunConfig) -> Result<(), Failure> {
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    match cfg.command {
        Command::Sweep => commands::sweep(cfg),
        Command::Optimize => commands::optimize(cfg),
        Command::Histogram => commands::histogram(cfg),
        Command::Validate => commands::validate(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let start = std::time::Instant::now();
    let result = run(&cfg);
    eprintln!("elapsed {:.2?}", start.elapsed());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

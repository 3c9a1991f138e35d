//! `hamspec`: spectral geometry experiments with the Hamiltonian `-Δ + μV`.
//!
//! Exit codes: 0 success, 1 usage error or missing input, 2 numerical failure.

mod commands;
mod config;
mod input;
mod output;
mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "hamspec", version, about = "Hamiltonian spectral geometry on triangle meshes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Output directory for artifacts (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (falls back to HAMSPEC_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// key=value file; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Smallest eigenpairs of the Hamiltonian.
    Eig(commands::EigArgs),
    /// Heat diffusion of a point source.
    Diffuse(commands::DiffuseArgs),
    /// Heat kernel signature.
    Hks(commands::HksArgs),
    /// Wave kernel signature.
    Wks(commands::WksArgs),
    /// Nodal domain counts of the first eigenfunctions.
    Nodal(commands::NodalArgs),
    /// Eigenvalue bounds λᵢ + min V ≤ Eᵢ ≤ λᵢ + max V.
    Bounds(commands::BoundsArgs),
    /// Truncation residual against its energy bound.
    Residual(commands::ResidualArgs),
    /// Potential optimization for a data table.
    Optpot(commands::OptpotArgs),
    /// Encode mesh geometry in a spectral basis.
    Compress(commands::CompressArgs),
    /// Rate–distortion sweep over basis sizes.
    Rd(commands::RdArgs),
    /// Compressed manifold modes.
    Cmm(commands::CmmArgs),
    /// Matching potentials (area distortion, intrinsic, landmark).
    Potential(commands::PotentialArgs),
    /// Descriptor matching in the Laplacian and Hamiltonian bases.
    Match(commands::MatchArgs),
    /// Geodesic error curve of a correspondence.
    Curve(commands::CurveArgs),
    /// Eigenfunction stability under noise and the first-order predictor.
    Perturb(commands::PerturbArgs),
    /// Desk-scale versions of the figure experiments.
    Repro(repro::ReproArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eig(_) => "eig",
            Command::Diffuse(_) => "diffuse",
            Command::Hks(_) => "hks",
            Command::Wks(_) => "wks",
            Command::Nodal(_) => "nodal",
            Command::Bounds(_) => "bounds",
            Command::Residual(_) => "residual",
            Command::Optpot(_) => "optpot",
            Command::Compress(_) => "compress",
            Command::Rd(_) => "rd",
            Command::Cmm(_) => "cmm",
            Command::Potential(_) => "potential",
            Command::Match(_) => "match",
            Command::Curve(_) => "curve",
            Command::Perturb(_) => "perturb",
            Command::Repro(_) => "repro",
        }
    }
}

fn init_threads(requested: Option<usize>) -> anyhow::Result<()> {
    let threads = match requested {
        Some(t) => Some(t),
        None => match std::env::var("HAMSPEC_THREADS") {
            Ok(s) => Some(s.trim().parse().map_err(|_| input::usage(format!("HAMSPEC_THREADS must be a count, got {s:?}")))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        // A second initialization (tests in one process) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hamspec::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonConvergence { .. } | E::NotPositiveDefinite { .. } | E::Singular(_) | E::NonFinite(_) | E::Degenerate(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = init_threads(cli.global.threads).and_then(|_| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

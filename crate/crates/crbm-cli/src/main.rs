//! `crbm` — offline/online driver for the reduced-basis contact solver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! non-convergence.

mod commands;
mod config;
mod container;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{read_config, CmdError};

#[derive(Parser)]
#[command(name = "crbm", about = "reduced-basis solver for parametrized contact problems")]
struct Cli {
    /// Run configuration file (flat `key = value`); defaults apply if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the reference mesh and write it as a CRBM container.
    Mesh {
        /// Override the configured target edge length.
        #[arg(long)]
        h: Option<f64>,
    },
    /// One high-fidelity solve with contact-condition error metrics.
    HfSolve {
        /// Half-disk radius.
        #[arg(long)]
        mu: f64,
        /// Friction law: none | tresca | coulomb (overrides the config).
        #[arg(long)]
        friction: Option<String>,
        /// Tresca threshold.
        #[arg(long)]
        s: Option<f64>,
        /// Coulomb coefficient.
        #[arg(long = "nuF")]
        nu_f: Option<f64>,
        /// Override the configured target edge length.
        #[arg(long)]
        h: Option<f64>,
        /// Override the configured polynomial degree.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Snapshots, compression and interpolation training; writes the store.
    Offline,
    /// One reduced online solve against a completed store.
    Online {
        /// Half-disk radius.
        #[arg(long)]
        mu: f64,
        /// Reduced-basis dimension.
        #[arg(long)]
        n: usize,
    },
    /// Error curves (compression, interpolation, reduced solves) with plots.
    Validate,
    /// Mesh-refinement convergence table of the contact-condition error.
    Study {
        /// Also train the interpolations at the configured resolution and
        /// report their ranks.
        #[arg(long)]
        with_eim: bool,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let mut cfg = read_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Mesh { h } => {
            if let Some(h) = h {
                cfg.h = h;
            }
            commands::run_mesh(&cfg)
        }
        Cmd::HfSolve {
            mu,
            friction,
            s,
            nu_f,
            h,
            degree,
        } => {
            if let Some(f) = friction {
                cfg.friction = f;
            }
            if let Some(s) = s {
                cfg.s = s;
            }
            if let Some(nu) = nu_f {
                cfg.nu_f = nu;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(d) = degree {
                cfg.degree = d;
            }
            match cfg.friction.as_str() {
                "none" | "tresca" | "coulomb" => {}
                other => {
                    return Err(CmdError::Usage(format!(
                        "--friction: expected none | tresca | coulomb, got `{other}`"
                    )))
                }
            }
            commands::run_hf_solve(&cfg, mu)
        }
        Cmd::Offline => commands::run_offline(&cfg),
        Cmd::Online { mu, n } => commands::run_online(&cfg, mu, n),
        Cmd::Validate => commands::run_validate(&cfg),
        Cmd::Study { with_eim } => commands::run_study(&cfg, with_eim),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CRBM_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("CRBM_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

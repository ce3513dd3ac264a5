//! `trapsim`: batch front end for the trapped-atom qubit simulator.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "trapsim", version, about = "Simulate and fit qubit experiments on trapped atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Rabi,
    Ramsey,
    Echo,
    Lineshape,
}

impl SimKind {
    pub fn name(self) -> &'static str {
        match self {
            SimKind::Rabi => "rabi",
            SimKind::Ramsey => "ramsey",
            SimKind::Echo => "echo",
            SimKind::Lineshape => "lineshape",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a single-trap trace.
    Simulate {
        kind: SimKind,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluate the closed-form model instead of the Monte-Carlo.
        #[arg(long)]
        analytic: bool,
        /// Echo only: scan the echo visibility over t1 instead of a time trace.
        #[arg(long)]
        visibility_scan: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simultaneous Ramsey measurement over a trap register.
    ArrayRamsey {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit a model to a two-column CSV.
    Fit {
        /// rabi_bloch, ramsey_eq4, lineshape or exp_decay.
        model: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Hold a parameter fixed, `name=value`.
        #[arg(long = "fix", value_name = "NAME=VALUE")]
        fix: Vec<String>,
        /// Starting value for a parameter, `name=value`.
        #[arg(long = "init", value_name = "NAME=VALUE")]
        init: Vec<String>,
        /// Residual-bootstrap resamples written to bootstrap.json.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Seed of the bootstrap resampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render one camera frame of a loaded register.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { kind, config, analytic, visibility_scan, overrides } => {
            commands::simulate(kind, config.as_deref(), analytic, visibility_scan, &overrides)
        }
        Command::ArrayRamsey { config, overrides } => commands::array_ramsey(&config, &overrides),
        Command::Fit { model, input, out, fix, init, bootstrap, seed } => {
            commands::fit(&model, &input, &out, &fix, &init, bootstrap, seed)
        }
        Command::Render { config, overrides } => commands::render(&config, &overrides),
    };
    match result {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("trapsim: {e}");
            e.exit_code()
        }
    }
}

//! `mlwg`: generate data, sample the TV posterior, diagnose chains, audit
//! block dominance and compute MAP estimates.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime failure,
//! 4 operator not block dominant (`dominance` only).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "mlwg", version, about = "Local and parallel MALA-within-Gibbs for TV deblurring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur and add noise to a ground truth, writing the observation.
    Generate(ConfigArgs),
    /// Run the configured sampler and write dumps, summaries and tables.
    Sample(ConfigArgs),
    /// Compute PSRF, nESS and the summary table from sample dumps.
    Diagnose {
        #[command(flatten)]
        args: ConfigArgs,
        /// Sample dumps, or directories holding `chain_*.bin`.
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
    },
    /// Check c-diagonal block dominance of the blur operator.
    Dominance(ConfigArgs),
    /// Compute the MAP estimate by majorization-minimization.
    Map(ConfigArgs),
}

/// Config file plus one flag per config key; flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    observation: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    psf: Option<String>,
    #[arg(long)]
    psf_radius: Option<String>,
    #[arg(long)]
    psf_sigma: Option<String>,
    #[arg(long)]
    motion_length: Option<String>,
    #[arg(long)]
    motion_angle: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    n_chains: Option<String>,
    #[arg(long)]
    n_saved: Option<String>,
    #[arg(long)]
    thin: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    target_accept: Option<String>,
    #[arg(long)]
    initial_tau: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    ci_level: Option<String>,
    #[arg(long)]
    map_tol: Option<String>,
    #[arg(long)]
    map_max_outer: Option<String>,
    #[arg(long)]
    map_max_cg: Option<String>,
    /// Also write PNG previews (`true` or `false`).
    #[arg(long)]
    png: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("truth", &self.truth),
            ("observation", &self.observation),
            ("output", &self.output),
            ("n", &self.n),
            ("m", &self.m),
            ("psf", &self.psf),
            ("psf_radius", &self.psf_radius),
            ("psf_sigma", &self.psf_sigma),
            ("motion_length", &self.motion_length),
            ("motion_angle", &self.motion_angle),
            ("noise_std", &self.noise_std),
            ("lambda", &self.lambda),
            ("delta", &self.delta),
            ("epsilon", &self.epsilon),
            ("sampler", &self.sampler),
            ("n_chains", &self.n_chains),
            ("n_saved", &self.n_saved),
            ("thin", &self.thin),
            ("burn_in", &self.burn_in),
            ("target_accept", &self.target_accept),
            ("initial_tau", &self.initial_tau),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("ci_level", &self.ci_level),
            ("map_tol", &self.map_tol),
            ("map_max_outer", &self.map_max_outer),
            ("map_max_cg", &self.map_max_cg),
            ("png", &self.png),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v, &format!("--{}", key.replace('_', "-")))?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a.resolve()?),
        Command::Sample(a) => commands::sample(&a.resolve()?),
        Command::Diagnose { args, dumps } => commands::diagnose(&args.resolve()?, &dumps),
        Command::Dominance(a) => commands::dominance(&a.resolve()?),
        Command::Map(a) => commands::map(&a.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
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

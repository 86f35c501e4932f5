//! `gpbm`: scattering lengths, Gross-Pitaevskii and Hartree energies,
//! Brownian free energies and rate functions from a TOML run config.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::CliError;
use crate::output::{ManifestInputs, OutputSet, Summary};

/// Environment variable naming the output directory when `--out` is absent.
const OUT_ENV: &str = "GPBM_OUT";

#[derive(Parser)]
#[command(name = "gpbm", version, about = "Dilute Bose gas variational formulas and path-measure free energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo runs; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq)]
enum Command {
    /// Scattering length, Born length and tail estimate of pair potentials.
    Scatter,
    /// Gross-Pitaevskii ground state in a trap.
    Gp,
    /// Hartree product-state minimization, optionally swept over N.
    Hartree,
    /// Importance-sampled free energy of interacting Brownian motions.
    Simulate,
    /// Evaluate a rate function on a density read from CSV.
    Ldp,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Scatter => "scatter",
            Command::Gp => "gp",
            Command::Hartree => "hartree",
            Command::Simulate => "simulate",
            Command::Ldp => "ldp",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let loaded = config::load(&path)?;
    let name = cli.command.name();
    if let Some(declared) = &loaded.config.command {
        if declared != name {
            return Err(config::field_error("command", format!("config is for {declared:?}, not {name:?}")));
        }
    }
    let threads = cli.threads.or(loaded.config.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(config::field_error("threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Module(format!("thread pool: {e}")))?;
    }
    let section_seed = loaded.config.simulate.as_ref().and_then(|s| s.seed);
    let seed = cli.seed.or(section_seed).or(loaded.config.seed).unwrap_or(0);
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| loaded.config.out.as_ref().map(|p| loaded.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = OutputSet::new(&out_dir)?;
    let outcome = match cli.command {
        Command::Scatter => commands::scatter(&loaded, &mut out),
        Command::Gp => commands::gp(&loaded, &mut out),
        Command::Hartree => commands::hartree(&loaded, &mut out),
        Command::Simulate => commands::simulate(&loaded, seed, &mut out),
        Command::Ldp => commands::ldp(&loaded, &mut out),
    }?;
    let summary = Summary {
        command: name.to_string(),
        inputs: echo_inputs(&loaded.raw, name, seed),
        headline: outcome.headline,
        converged: outcome.converged,
        errors: outcome.errors.clone(),
    };
    out.json("summary.json", &summary)?;
    let manifest = out.finish(ManifestInputs {
        config_hash: output::sha256_hex(&loaded.raw),
        seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    println!("{}", serde_json::to_string_pretty(&summary.headline)?);
    eprintln!("wrote {} files to {}", manifest.outputs.len() + 1, out_dir.display());
    if !outcome.converged {
        return Err(CliError::NotConverged(outcome.errors.join("; ")));
    }
    for e in &outcome.errors {
        eprintln!("warning: {e}");
    }
    Ok(())
}

/// Trap, pair and command tables of the config, as JSON.
fn echo_inputs(raw: &[u8], command: &str, seed: u64) -> serde_json::Value {
    let value: toml::Table = std::str::from_utf8(raw).ok().and_then(|s| s.parse().ok()).unwrap_or_default();
    let mut inputs = serde_json::Map::new();
    for key in ["trap", "pair", command] {
        if let Some(v) = value.get(key) {
            inputs.insert(key.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
        }
    }
    inputs.insert("seed".into(), seed.into());
    serde_json::Value::Object(inputs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
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

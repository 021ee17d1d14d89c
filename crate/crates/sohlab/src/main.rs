use clap::{Parser, Subcommand};
use sohlab::commands::run;
use sohlab::config::parse_config;

/// Collective-motion laboratory: particle simulation, closure
/// coefficients, and the SOH finite-volume solver.
#[derive(Parser)]
#[command(name = "sohlab", version, about)]
struct Cli {
    /// Key-value configuration file (`key = value` with `[section]` headers).
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Override a configuration key, e.g. `--set d=0.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Determinism mode: reruns with the same config and seed produce
    /// byte-identical outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Compute SOH closure coefficients over a grid of noise values.
    Coeffs,
    /// Run the microscopic particle simulation.
    Particles,
    /// Solve the SOH macroscopic system.
    Soh,
    /// Run matched particle and SOH Riemann problems and compare them.
    RiemannCompare,
    /// Evaluate the analytic milling solution residuals.
    MillCheck,
}

fn main() {
    let cli = Cli::parse();
    let command = match cli.command {
        CliCommand::Coeffs => "coeffs",
        CliCommand::Particles => "particles",
        CliCommand::Soh => "soh",
        CliCommand::RiemannCompare => "riemann-compare",
        CliCommand::MillCheck => "mill-check",
    };

    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                std::process::exit(2);
            }
        },
        None => String::new(),
    };

    let mut overrides: Vec<(String, String)> = Vec::new();
    for s in &cli.set {
        match s.split_once('=') {
            Some((k, v)) => overrides.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                eprintln!("error: --set expects KEY=VALUE, got `{s}`");
                std::process::exit(2);
            }
        }
    }
    overrides.push(("command".to_string(), command.to_string()));
    if let Some(out) = &cli.out {
        overrides.push(("output_dir".to_string(), out.clone()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    if cli.deterministic {
        overrides.push(("deterministic".to_string(), "true".to_string()));
    }

    let config = match parse_config(&text, &overrides) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                eprintln!("error: {e}");
            }
            std::process::exit(2);
        }
    };

    match run(&config) {
        Ok(files) => {
            for f in files {
                println!("wrote {}/{f}", config.output_dir);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

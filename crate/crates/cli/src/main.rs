use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use freeconv_cli::{describe, load_config, run, with_workers, CliError};

/// Free-probability predictions and random-matrix checks.
#[derive(Debug, Parser)]
#[command(name = "freeconv", version)]
struct Cli {
    /// Experiment name, or `describe`.
    experiment: String,
    /// Experiment to describe (with `describe`).
    name: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo replicas (default: all cores).
    #[arg(long, env = "FREECONV_WORKERS")]
    workers: Option<usize>,
    /// Output directory (default: the config's `output`, else the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    if cli.experiment == "describe" {
        let name = cli
            .name
            .ok_or_else(|| CliError::Config("usage: freeconv describe <experiment>".into()))?;
        print!("{}", describe(&name)?);
        return Ok(0);
    }
    if let Some(extra) = cli.name {
        return Err(CliError::Config(format!("unexpected argument `{extra}`")));
    }
    freeconv_cli::config::check_experiment(&cli.experiment)?;
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("`--config <file>` is required".into()))?;
    let cfg = load_config(&path)?;
    let out_dir = cli
        .out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = with_workers(cli.workers, || run(cfg, &cli.experiment, cli.seed))??;
    let (json_path, csv_path) = outcome.write(&out_dir)?;
    for c in &outcome.contracts {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(outcome.exit_code() as u8)
}

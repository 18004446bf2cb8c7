//! Batch runner for the freeconv experiments.
//!
//! A run resolves a JSON config against one experiment, executes it, and emits
//! a JSON record plus a flat CSV table, both named after the config hash.

pub mod config;
mod describe;
pub mod experiments;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

pub use config::{config_hash, load_config, parse_config, resolve, Config, Resolved, EXPERIMENTS};
pub use describe::describe;
pub use experiments::{Contract, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown experiment `{name}`; valid names: {valid}")]
    UnknownExperiment { name: String, valid: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] freeconv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: String,
    pub hash: String,
    pub record: serde_json::Value,
    pub csv: String,
    pub contracts: Vec<Contract>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.contracts.iter().all(|c| c.pass)
    }

    /// Exit status: 0 when every contract holds, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            2
        }
    }

    fn stem(&self) -> String {
        format!("{}-{}", self.experiment, &self.hash[..16])
    }

    /// Writes `<dir>/<experiment>-<hash>.json` and `.csv`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let json_path = dir.join(format!("{}.json", self.stem()));
        let csv_path = dir.join(format!("{}.csv", self.stem()));
        let body = serde_json::to_string_pretty(&self.record).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&json_path, body + "\n").map_err(io)?;
        std::fs::write(&csv_path, &self.csv).map_err(io)?;
        Ok((json_path, csv_path))
    }
}

fn render_csv(hash: &str, table: &Table) -> Result<String> {
    let head = format!("# config-hash: {hash}\n").into_bytes();
    let mut w = csv::Writer::from_writer(head);
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&table.header).map_err(err)?;
    for row in &table.rows {
        w.write_record(row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Resolves and runs `experiment` on the current rayon pool.
pub fn run(cfg: Config, experiment: &str, seed: Option<u64>) -> Result<Outcome> {
    let resolved = resolve(cfg, experiment, seed)?;
    run_resolved(&resolved)
}

pub fn run_resolved(r: &Resolved) -> Result<Outcome> {
    let start = Instant::now();
    let out = experiments::run(r)?;
    let elapsed = start.elapsed().as_secs_f64();
    let csv = render_csv(&r.hash, &out.table)?;
    let pass = out.contracts.iter().all(|c| c.pass);
    let record = json!({
        "experiment": r.experiment,
        "config_hash": r.hash,
        "seed": r.config.seed,
        "config": r.config,
        "results": out.results,
        "contracts": out.contracts.iter().map(Contract::to_json).collect::<Vec<_>>(),
        "pass": pass,
        "wall_clock_seconds": elapsed,
    });
    Ok(Outcome {
        experiment: r.experiment.clone(),
        hash: r.hash.clone(),
        record,
        csv,
        contracts: out.contracts,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Config("`--workers` must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

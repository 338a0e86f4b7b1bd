//! `logz-lab` runs one experiment from a JSON config and writes
//! `results.csv` and `summary.json` into the output directory.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use logz_lab::ledger::QueryLedger;
use serde_json::json;

use config::{normalize, Config};
use experiments::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or inconsistent config; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] logz_lab::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Parser)]
#[command(name = "logz-lab", version, about = "Sampling and normalizing-constant experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "LOGZ_LAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// ULD, ULD-RMM or MALA samples.
    Sample,
    /// Annealed estimate of the normalizing constant.
    EstimateZ,
    /// Discriminant and walk eigenphases of a finite chain.
    Spectrum,
    /// Multilevel Monte Carlo over coupled Langevin levels.
    Mlmc,
    /// Paired lower-bound instances and their partition gap.
    HardInstance,
    /// Predicted and measured oracle-call counts.
    LedgerReport,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::EstimateZ => "estimate_z",
            Command::Spectrum => "spectrum",
            Command::Mlmc => "mlmc",
            Command::HardInstance => "hard_instance",
            Command::LedgerReport => "ledger_report",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let cfg = Config::load(path)?;
    let name = cli.command.name();
    if normalize(&cfg.experiment) != name {
        return Err(CliError::Usage(format!("experiment {:?} does not match subcommand {name}", cfg.experiment)));
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Usage("output_dir missing from both config and command line".into()))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("threads: {e}")))?;
    }

    let ledger = QueryLedger::new();
    let result = match cli.command {
        Command::Sample => experiments::sample(&cfg, seed, &ledger),
        Command::EstimateZ => experiments::estimate(&cfg, seed, &ledger),
        Command::Spectrum => experiments::spectrum(&cfg, &ledger),
        Command::Mlmc => experiments::mlmc(&cfg, seed, &ledger),
        Command::HardInstance => experiments::hard_instance(&cfg, seed, &ledger),
        Command::LedgerReport => experiments::ledger_report(&cfg, seed, &ledger),
    };
    let (table, mut summary) = match result {
        Ok(Outcome { table, summary }) => (table, summary),
        // a diverged run is a result, not a failure
        Err(CliError::Run(logz_lab::Error::Divergence { stage })) => {
            (output::Table::new(&["status"]), json!({ "status": "diverged", "stage": stage }))
        }
        Err(e) => return Err(e),
    };
    if summary.get("status").is_none() {
        summary["status"] = json!("ok");
    }
    let predictions = summary.as_object_mut().and_then(|m| m.remove("predictions")).unwrap_or_default();
    summary["experiment"] = json!(name);
    summary["seed"] = json!(seed);
    summary["ledger"] = json!({ "oracle_calls": ledger.snapshot(), "predictions": predictions });
    output::write_outputs(&out, &table, &summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

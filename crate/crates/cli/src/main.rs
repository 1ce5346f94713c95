//! `sonarblob` command-line tool.
//!
//! ```text
//! sonarblob simulate --out scenarios/
//! sonarblob detect   --input scenarios/ --out detections/
//! sonarblob evaluate --input detections/ --truth scenarios/ --out metrics/
//! sonarblob sweep    --config sweep.toml --out sweep/
//! ```
//!
//! Every run writes `manifest.json` into its output directory. Passing that
//! manifest back as `--config` repeats the run.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sonarblob::config::RunConfig;
use sonarblob::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sonarblob", version, about = "Blob detection in active-sonar echo trains")]
struct Cli {
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic scenarios (raw pings plus ground truth).
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the detector on ping files.
    Detect {
        #[command(flatten)]
        common: Common,
        /// A scenario directory, or a directory of scenario directories.
        #[arg(long)]
        input: PathBuf,
    },
    /// Score detector outputs against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output directory of `detect`.
        #[arg(long)]
        input: PathBuf,
        /// Directory holding the `truth.json` sidecars (default: --input).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Simulate, detect and score over the configured parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML or JSON config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_scenarios: Option<usize>,
    #[arg(long)]
    clutter_scenarios: Option<usize>,
    #[arg(long)]
    scr_db: Option<f64>,
    #[arg(long)]
    valid_fraction: Option<f64>,
    /// Pings per block.
    #[arg(long)]
    pings: Option<usize>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => manifest::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(n) = self.target_scenarios {
            cfg.target_scenarios = n;
        }
        if let Some(n) = self.clutter_scenarios {
            cfg.clutter_scenarios = n;
        }
        if let Some(v) = self.scr_db {
            cfg.scenario.scr_db = v;
        }
        if let Some(v) = self.valid_fraction {
            cfg.scenario.valid_fraction = v;
        }
        if let Some(n) = self.pings {
            cfg.scenario.n_pings = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Simulate { common } => {
            commands::simulate(&common.run_config()?, &common.out)
        }
        Command::Detect { common, input } => {
            commands::detect(&common.run_config()?, &input, &common.out)
        }
        Command::Evaluate {
            common,
            input,
            truth,
        } => {
            let truth = truth.unwrap_or_else(|| input.clone());
            commands::evaluate(&common.run_config()?, &input, &truth, &common.out)
        }
        Command::Sweep { common } => commands::sweep(&common.run_config()?, &common.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
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

//! Argument parsing and dispatch.

use std::path::PathBuf;

use acl_core::metrics::ToleranceNorm;
use acl_core::training::SweepAxis;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{self, Overrides};
use crate::error::{LabError, LabResult};

pub const THREADS_ENV: &str = "ACL_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "acl-lab", version, about = "Angular contrastive learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    Tau,
    Alpha,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Norm {
    AllPairs,
    SameClassPairs,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Replaces the config's `seed`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// Replaces the config's `output_dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, output_dir: self.output_dir.clone() }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured dataset as train.csv and test.csv.
    GenData(RunArgs),
    /// Train and write records.csv, checkpoint.acl, embeddings.csv and manifest.json.
    Train(RunArgs),
    /// Score a checkpoint on a dataset directory and write class-wise accuracy.
    Probe {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Uniformity and tolerance of an embedding CSV.
    Metrics {
        embeddings: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        #[arg(long, value_enum, default_value = "all-pairs")]
        norm: Norm,
        #[arg(long, default_value = "metrics.csv")]
        output: PathBuf,
    },
    /// Train once per value for ACL and the contrastive baseline.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

/// Sizes the global worker pool from `ACL_LAB_THREADS` when it is set.
pub fn init_threads() -> LabResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| LabError::config(THREADS_ENV, format!("expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| LabError::config(THREADS_ENV, e.to_string()))
}

pub fn run(cli: Cli) -> LabResult<()> {
    init_threads()?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a.config, &a.overrides()).map(drop),
        Command::Train(a) => commands::train(&a.config, &a.overrides()).map(drop),
        Command::Probe { checkpoint, dataset, output_dir } => {
            commands::probe(&checkpoint, &dataset, &output_dir).map(drop)
        }
        Command::Metrics { embeddings, t, norm, output } => {
            let norm = match norm {
                Norm::AllPairs => ToleranceNorm::AllPairs,
                Norm::SameClassPairs => ToleranceNorm::SameClassPairs,
            };
            commands::metrics_report(&embeddings, t, norm, &output).map(drop)
        }
        Command::Sweep { run, axis, values } => {
            let axis = match axis {
                Axis::Tau => SweepAxis::Tau,
                Axis::Alpha => SweepAxis::Alpha,
            };
            commands::sweep(&run.config, &run.overrides(), axis, &values).map(drop)
        }
    }
}

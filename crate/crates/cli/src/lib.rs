//! File formats, configuration and subcommands of the `imcal` tool.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod formats;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{CostArg, ModelArg, ObjectiveArg};
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "imcal", version, about = "Calibrate and use compact models of metasurface-programmable cavities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl From<&CommonArgs> for commands::Common {
    fn from(a: &CommonArgs) -> Self {
        Self {
            config: a.config.clone(),
            out: Some(a.out.clone()),
            seed: a.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the configured ground-truth system and write its description.
    GenCavity {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Simulate a measurement dataset.
    GenDataset {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        ndata: Option<usize>,
        #[arg(long, value_enum)]
        cost: Option<CostArg>,
        /// Comma-separated rows of 0/1, one character per transmit port.
        #[arg(long)]
        mask: Option<String>,
    },
    /// Fit a model to a dataset.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "physical")]
        model: ModelArg,
        #[arg(long, value_enum)]
        cost: Option<CostArg>,
        #[arg(long)]
        mask: Option<String>,
    },
    /// Score a checkpoint on configurations it was not trained on.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Measured evaluation data; the configured ground truth is used otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Drop evaluation configurations that were seen in training.
        #[arg(long)]
        disjoint_eval: bool,
        /// Also score the offset-corrected model of a masked calibration.
        #[arg(long)]
        offset_correct: bool,
    },
    /// Sweep the training-set size for each model kind.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Add wall-clock columns (makes the output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Pick configurations and wavefronts with a calibrated model.
    Control {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[arg(long)]
        pool: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients on random instances.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the mutual-information lower bound against SNR.
    MiCurve {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        zeta_db: Vec<f64>,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        snr_db_min: f64,
        #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
        snr_db_max: f64,
        #[arg(long, default_value_t = 1.0)]
        snr_db_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run a parsed command; the returned text goes to stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenCavity { common } => commands::gen_cavity(&(&common).into()),
        Command::GenDataset {
            common,
            ndata,
            cost,
            mask,
        } => commands::gen_dataset(&commands::GenDatasetArgs {
            common: (&common).into(),
            ndata,
            cost,
            mask,
        }),
        Command::Calibrate {
            common,
            data,
            model,
            cost,
            mask,
        } => commands::calibrate_cmd(&commands::CalibrateArgs {
            common: (&common).into(),
            data,
            model,
            cost,
            mask,
        }),
        Command::Evaluate {
            common,
            checkpoint,
            data,
            disjoint_eval,
            offset_correct,
        } => commands::evaluate(&commands::EvaluateArgs {
            common: (&common).into(),
            checkpoint,
            data,
            disjoint_eval,
            offset_correct,
        }),
        Command::Sweep { common, timing } => commands::sweep(&(&common).into(), timing),
        Command::Control {
            common,
            checkpoint,
            objective,
            pool,
        } => commands::control(&commands::ControlArgs {
            common: (&common).into(),
            checkpoint,
            objective,
            pool,
        }),
        Command::Gradcheck { seed, out } => commands::gradcheck_cmd(seed, out.as_deref()),
        Command::MiCurve {
            zeta_db,
            snr_db_min,
            snr_db_max,
            snr_db_step,
            out,
        } => commands::mi_curve(&commands::MiCurveArgs {
            zeta_db,
            snr_db_min,
            snr_db_max,
            snr_db_step,
            out,
        }),
    }
}

//! `camid`: source camera identification from the command line.
//!
//! Exit codes: 0 success, 1 a method or stage failed at run time,
//! 2 usage or configuration error.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use camid_core::ingest::DecodePolicy;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "camid", version, about = "Identify the source camera of images from pixel statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root with one sub-directory per device.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    on_decode_error: Option<DecodeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeArg {
    Skip,
    Abort,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthModeArg {
    Quantization,
    Prnu,
}

#[derive(Subcommand)]
enum Command {
    /// List devices and image counts of a dataset.
    Scan {
        #[command(flatten)]
        common: Common,
    },
    /// Write per-image feature vectors as CSV.
    Extract {
        #[command(flatten)]
        common: Common,
        /// `jpeg` or `prnu`.
        #[arg(long)]
        method: String,
    },
    /// Train models on the training split and save them.
    Train {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods.
        #[arg(long, alias = "method")]
        methods: Option<String>,
    },
    /// Train and evaluate methods on one shared split and write reports.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods.
        #[arg(long, alias = "method")]
        methods: Option<String>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Generate a synthetic dataset with known device signatures.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "quantization")]
        mode: SynthModeArg,
        #[arg(long, default_value_t = 4)]
        devices: usize,
        #[arg(long, default_value_t = 50)]
        per_device: usize,
        /// Gain-pattern strength for `--mode prnu`.
        #[arg(long, default_value_t = 0.02)]
        strength: f64,
        /// Std of the additive noise for `--mode prnu`, gray levels.
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        /// Square image side; defaults to 256 (quantization) or 512 (prnu).
        #[arg(long)]
        size: Option<usize>,
    },
    /// Print the summary and confusion tables of a saved benchmark.
    Report {
        /// `report.json` or the directory holding it.
        #[arg(long)]
        input: PathBuf,
    },
}

pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.on_decode_error {
        cfg.on_decode_error = match p {
            DecodeArg::Skip => DecodePolicy::Skip,
            DecodeArg::Abort => DecodePolicy::Abort,
        };
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scan { common } => commands::scan(&effective_config(&common)?),
        Command::Extract { common, method } => commands::extract(&effective_config(&common)?, &method),
        Command::Train { common, methods } => {
            let mut cfg = effective_config(&common)?;
            if let Some(m) = methods {
                cfg.methods = m;
            }
            commands::train(&cfg)
        }
        Command::Benchmark { common, methods, ratio } => {
            let mut cfg = effective_config(&common)?;
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(r) = ratio {
                cfg.ratio = r;
            }
            cfg.validate().map_err(CliError::Usage)?;
            commands::benchmark(&cfg)
        }
        Command::Synth {
            common,
            mode,
            devices,
            per_device,
            strength,
            noise_std,
            size,
        } => {
            let cfg = effective_config(&common)?;
            let opts = commands::SynthOptions {
                prnu: matches!(mode, SynthModeArg::Prnu),
                devices,
                per_device,
                strength,
                noise_std,
                size,
            };
            commands::synth(&cfg, &opts)
        }
        Command::Report { input } => commands::report(&input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.code();
            match e {
                CliError::Usage(m) => eprintln!("error: {m}\n\nRun `camid --help` for usage."),
                CliError::Failed(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(code)
        }
    }
}

//! `lpnn` - low-precision CNN inference simulation and FPGA throughput
//! modeling from the command line.
//!
//! Exit codes: 0 success, 2 usage/configuration errors, 3 data/validation
//! errors (malformed bundles, shape mismatches).

mod commands;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lpnn", version, about = "Low-precision CNN datapath simulator and FPGA design-space modeler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a file of real values (one per line) to activation codes.
    Quantize {
        /// Activation width in bits (2-8).
        #[arg(long)]
        bits: u8,
        /// Input values file, one real per line.
        input: PathBuf,
        /// Output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a model bundle on an input tensor through the integer datapath.
    Simulate {
        /// Model bundle (TOML).
        #[arg(long)]
        bundle: PathBuf,
        /// Input tensor container file.
        #[arg(long, conflicts_with = "input_values")]
        input: Option<PathBuf>,
        /// Alternative input: real values, one per line (batch 1), to be
        /// quantized into the bundle's input format.
        #[arg(long, requires = "input_shape")]
        input_values: Option<PathBuf>,
        /// Shape C,H,W for --input-values.
        #[arg(long)]
        input_shape: Option<String>,
        /// Output tensor container path (default: codes as text on stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the output container with sub-byte packed codes.
        #[arg(long)]
        packed_output: bool,
        /// Write a per-layer execution trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also run the fp32 reference path and report match counts.
        #[arg(long)]
        oracle: bool,
        /// Dot-product engine: reference | core-logic | packed-dsp.
        #[arg(long, default_value = "core-logic")]
        pe: String,
    },
    /// Project throughput for device/network/PE combinations.
    Explore {
        /// Device name (arria10-gx1150, stratix10-gx2800) or a device
        /// spec file with a single entry.
        #[arg(long)]
        device: String,
        /// Built-in network name (alexnet, resnet34, resnet50) or a
        /// topology file.
        #[arg(long)]
        network: String,
        /// "all", or comma-separated PE labels (e.g. 2xT/64,1x1/32,fp32).
        #[arg(long, default_value = "all")]
        pe: String,
        /// Comma-separated widening factors from 1,2,3.
        #[arg(long, default_value = "1")]
        wide: String,
        /// Pin the mapping efficiency instead of using the calibrated
        /// per-configuration values.
        #[arg(long)]
        eta: Option<f64>,
        /// Override the ALM budget fraction (default 0.80).
        #[arg(long)]
        budget: Option<f64>,
        /// Add the DSP-packing contribution where a configuration has one.
        #[arg(long)]
        packing: bool,
        /// Sort key: tops | imgs | eqtops.
        #[arg(long, default_value = "tops")]
        sort: String,
        /// Output format: csv | json | tsv.
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit the accuracy/throughput frontier for a network.
    Frontier {
        #[arg(long)]
        network: String,
        /// "fixtures" (published trade-off points; honors LPNN_FIXTURES)
        /// or "explore" (model the grid, join published accuracies).
        #[arg(long = "points-from", default_value = "fixtures")]
        points_from: String,
        /// Device for --points-from explore.
        #[arg(long, default_value = "stratix10-gx2800")]
        device: String,
        #[arg(long, default_value = "all")]
        pe: String,
        #[arg(long, default_value = "1,2,3")]
        wide: String,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replay the measured mid-range-FPGA AlexNet design through the model.
    Regression {
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Command failure with its exit code: 2 for usage/config, 3 for
/// data/validation.
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantize {
            bits,
            input,
            output,
        } => commands::quantize(bits, &input, output.as_deref()),
        Command::Simulate {
            bundle,
            input,
            input_values,
            input_shape,
            output,
            packed_output,
            trace,
            oracle,
            pe,
        } => commands::simulate(commands::SimulateArgs {
            bundle,
            input,
            input_values,
            input_shape,
            output,
            packed_output,
            trace,
            oracle,
            pe,
        }),
        Command::Explore {
            device,
            network,
            pe,
            wide,
            eta,
            budget,
            packing,
            sort,
            format,
            output,
        } => commands::explore(commands::ExploreArgs {
            device,
            network,
            pe,
            wide,
            eta,
            budget,
            packing,
            sort,
            format,
            output,
        }),
        Command::Frontier {
            network,
            points_from,
            device,
            pe,
            wide,
            eta,
            format,
            output,
        } => commands::frontier(commands::FrontierArgs {
            network,
            points_from,
            device,
            pe,
            wide,
            eta,
            format,
            output,
        }),
        Command::Regression { format, output } => commands::regression(&format, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("lpnn: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

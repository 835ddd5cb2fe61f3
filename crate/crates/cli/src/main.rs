// SPDX-License-Identifier: Apache-2.0

//! `netfuzz`: command-line driver for parsing, simulation, dataset
//! generation, training, inference, fault injection and fuzzing.

mod artifact;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "netfuzz", version, about = "Gate-level netlist simulation, learning and fuzzing")]
pub struct Cli {
    /// JSON run configuration. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Falls back to the config, then `NETFUZZ_OUT`, then `netfuzz-out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// PRNG seed for every randomized step.
    #[arg(long, global = true)]
    pub prng: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Zero,
    Unit,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Stimulus as hex, cycle 0 in the most significant bits.
    #[arg(long, conflicts_with = "seed_file")]
    pub seed: Option<String>,
    /// File holding a hex stimulus, such as a corpus entry.
    #[arg(long)]
    pub seed_file: Option<PathBuf>,
    /// Number of cycles in the stimulus.
    #[arg(long = "T", visible_alias = "timesteps")]
    pub timesteps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print netlist statistics as JSON.
    Parse { netlist: Option<PathBuf> },
    /// Print the node graph's edge list and centrality summary as JSON.
    Graph { netlist: Option<PathBuf> },
    /// Simulate one stimulus and print the waveform.
    Simulate {
        netlist: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long, value_enum, default_value = "zero")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Generate a labelled dataset from simulation.
    Dataset {
        netlist: Option<PathBuf>,
        #[arg(long)]
        n_seeds: Option<usize>,
        #[arg(long = "T", visible_alias = "timesteps")]
        timesteps: Option<usize>,
        /// Every input vector once, held for T cycles.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Train a node-value model on a dataset.
    Train {
        netlist: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Comma-separated graph-convolution widths.
        #[arg(long, value_delimiter = ',')]
        gcn_dims: Option<Vec<usize>>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Continue from the checkpoint's model and training state.
        #[arg(long)]
        resume: bool,
    },
    /// Predict node values for one stimulus with a trained model.
    Infer {
        netlist: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the coverage-guided fuzz loop against the golden netlist.
    Fuzz {
        /// Golden reference netlist.
        netlist: Option<PathBuf>,
        /// Design under test; defaults to the golden netlist.
        #[arg(long)]
        dut: Option<PathBuf>,
        /// Seed-count budget.
        #[arg(long, conflicts_with = "seconds")]
        budget: Option<usize>,
        /// Wall-clock budget in seconds (not replayable).
        #[arg(long)]
        seconds: Option<f64>,
        #[arg(long = "T", visible_alias = "timesteps")]
        timesteps: Option<usize>,
        /// Add the model-vs-simulator channel using this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Disable coverage feedback (pure random stimuli).
        #[arg(long)]
        random: bool,
        /// Simulate with unit delays and report glitches.
        #[arg(long)]
        transients: bool,
        /// Require exact equality, including X.
        #[arg(long)]
        strict: bool,
        /// Observe every net instead of primary outputs only.
        #[arg(long)]
        all_nets: bool,
    },
    /// Write a copy of the netlist with one injected fault.
    Inject {
        netlist: Option<PathBuf>,
        /// Target net name.
        #[arg(long)]
        net: String,
        /// `sa0`, `sa1`, `gate:<KIND>` or `invert:<PIN>`.
        #[arg(long)]
        fault: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Summarize artifacts after checking that their digests agree.
    Report {
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
    },
    /// Print the effective configuration and its digest.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report_error(e: &CliError) {
    eprintln!("{}", e.to_json());
}

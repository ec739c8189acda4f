use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Eigenwave decomposition, link simulation and channel statistics.
#[derive(Parser, Debug)]
#[command(name = "eigenwave", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose a kernel file into an eigenwave file.
    Decompose {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only the strongest N eigenwaves.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Run a Monte Carlo sweep and write a CSV report.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// JSON mirror of the report (defaults to the CSV path with a .json extension).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Eigen-characterized statistics of a kernel as JSON.
    Stats {
        /// Kernel file; without it a channel is drawn from --config.
        #[arg(long, conflicts_with_all = ["config", "channel"])]
        kernel: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        channel: Option<ChannelPreset>,
        /// Es/N0 used for the capacity figure.
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        snr_db: f64,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for binary dumps of the 2-D and 4-D arrays.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
    },
    /// Sweep several channel presets and write one tidy CSV.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Presets to compare (overrides --channel).
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ChannelPreset::A, ChannelPreset::B])]
        channels: Vec<ChannelPreset>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the kernel of one channel realization.
    ChannelDump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        channel: Option<ChannelPreset>,
        /// Frame index within the sweep's channel sequence.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, value_enum, default_value_t = DumpDomain::Tf)]
        domain: DumpDomain,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    channel: Option<ChannelPreset>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Worker threads (overrides EIGENWAVE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ChannelPreset {
    A,
    B,
    Lti,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DumpDomain {
    Tf,
    Time,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

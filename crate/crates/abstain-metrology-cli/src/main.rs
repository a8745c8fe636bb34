//! Command-line front end: emits reproducible data files for the tradeoff
//! curves, scaling sweeps, filter profiles, scavenging analysis, Monte Carlo
//! runs and oracle checks.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on numerical failure.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use output::Format;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "abstain-metrology",
    version,
    about = "Precision bounds for probabilistic phase estimation under dephasing"
)]
struct Cli {
    /// Worker threads (default: ABSTAIN_METROLOGY_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Clone)]
struct ProbeArgs {
    /// Probe family
    #[arg(long, value_enum, default_value = "multicopy")]
    probe: commands::ProbeKind,

    /// Probe JSON file (with --probe file)
    #[arg(long)]
    probe_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Uncertainty versus abstention curve for one probe
    Tradeoff {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: f64,
        /// Number of abstention grid points
        #[arg(long, default_value_t = 50)]
        s_grid: usize,
        /// Largest abstention probability on the grid
        #[arg(long, default_value_t = 0.99)]
        s_bar_max: f64,
        /// Maximum acceptable allocation duality gap
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Uncertainty scaling in n at fixed abstention levels
    Scaling {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        n_min: usize,
        #[arg(long)]
        n_max: usize,
        /// Number of n values (geometric spacing)
        #[arg(long, default_value_t = 12)]
        n_steps: usize,
        /// Comma-separated abstention probabilities
        #[arg(long, default_value = "0,0.5,0.9", value_delimiter = ',')]
        s_bar: Vec<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Favorable, scavenged and all-outcome uncertainties over abstention
    Scavenge {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 20)]
        s_grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Filtered and unfiltered block profiles with the continuum potential
    Profile {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: f64,
        /// Block success probability
        #[arg(long, default_value_t = 0.75)]
        s: f64,
        /// Spin of the inspected block (default: the typical value n r / 2)
        #[arg(long)]
        j: Option<f64>,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Maximal-spin post-selection quantities and their asymptotes
    Ultimate {
        #[arg(long)]
        r: f64,
        /// Single n (alternative to the sweep flags)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 9)]
        n_steps: usize,
        /// Also sum the per-block critical successes (needs every block)
        #[arg(long)]
        sum_critical: bool,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo runs of the filtered covariant measurement
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: f64,
        /// Abstention probability the protocol is optimized for
        #[arg(long, default_value_t = 0.4)]
        s_bar: f64,
        #[arg(long)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// True phase
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Dense-basis oracle and SDP agreement checks
    OracleCheck {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.8)]
        r: f64,
        /// Number of random probes tested
        #[arg(long, default_value_t = 5)]
        probes: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// Comparison tolerance
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a probe to its JSON file format
    ProbeGen {
        #[arg(value_enum)]
        kind: commands::GeneratedProbe,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.8)]
        r: f64,
        /// Output probe file
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    // the header records the data-determining invocation; where the output
    // goes and how many workers ran it do not belong there
    let invocation = {
        let mut kept: Vec<String> = Vec::new();
        let mut skip_value = false;
        for arg in std::env::args().skip(1) {
            if skip_value {
                skip_value = false;
                continue;
            }
            if arg == "--out" || arg == "--threads" {
                skip_value = true;
                continue;
            }
            if arg.starts_with("--out=") || arg.starts_with("--threads=") {
                continue;
            }
            kept.push(arg);
        }
        kept.join(" ")
    };
    let cli = Cli::parse();

    if let Some(threads) = cli.threads.or_else(|| {
        std::env::var("ABSTAIN_METROLOGY_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    }) {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("abstain-metrology: thread pool setup failed: {err}");
            return ExitCode::from(3);
        }
    }

    match commands::run(cli.command, &invocation) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("abstain-metrology: {err:#}");
            ExitCode::from(3)
        }
    }
}

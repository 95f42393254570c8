//! `ndmux`: acquisition design, phantom simulation, and unmixing pipelines
//! for multiplex nanodroplet ultrasound imaging.
//!
//! Exit codes: 0 success, 2 validation error, 3 convergence error, 4 I/O
//! error.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "ndmux", version, about = "Multiplex nanodroplet ultrasound imaging toolkit")]
struct Cli {
    /// Experiment configuration JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the configuration's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for simulation and pixel-wise unmixing
    /// (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep pulse count and spacing, writing sweep.csv and sequence.json.
    OptimizeSequence,
    /// Greedily reduce a dense schedule to the target frame count.
    SelectFrames,
    /// Simulate phantom acquisitions into FRS1 stacks plus ground truth.
    Simulate,
    /// Unmix existing FRS1 stacks against an endmember matrix.
    Unmix {
        /// FRS1 stack files (repeatable).
        #[arg(long = "stack", required = true)]
        stacks: Vec<PathBuf>,
        /// Endmember matrix: a frames-by-3 CSV (columns taken at face
        /// value) or an endmembers.json with the normalization record.
        #[arg(long)]
        endmembers: PathBuf,
        /// Pixel pitch of the stacks in millimetres.
        #[arg(long, default_value_t = 0.1)]
        pitch_mm: f64,
        /// Side of the square focal ROI in millimetres.
        #[arg(long, default_value_t = 3.9)]
        roi_mm: f64,
    },
    /// Fit a calibration line from a true/estimated fraction scatter CSV.
    Calibrate {
        /// Scatter CSV: `true_frac,est_frac` or `true_frac,replicate,est_frac`.
        #[arg(long)]
        scatter: PathBuf,
    },
    /// Run the full two-batch experiment: scatter, fit, calibrated batch,
    /// and fraction maps.
    Pipeline,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("ndmux: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let started = std::time::Instant::now();
    let result = match &cli.command {
        Command::OptimizeSequence => commands::optimize_sequence(&cli.config, &cli.out, cli.seed),
        Command::SelectFrames => commands::select_frames(&cli.config, &cli.out, cli.seed),
        Command::Simulate => commands::simulate(&cli.config, &cli.out, cli.seed),
        Command::Unmix {
            stacks,
            endmembers,
            pitch_mm,
            roi_mm,
        } => commands::unmix(&cli.config, &cli.out, cli.seed, stacks, endmembers, *pitch_mm, *roi_mm),
        Command::Calibrate { scatter } => commands::calibrate(&cli.config, &cli.out, cli.seed, scatter),
        Command::Pipeline => commands::pipeline(&cli.config, &cli.out, cli.seed),
    };

    match result {
        Ok(()) => {
            eprintln!("ndmux: done in {:.2}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ndmux: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

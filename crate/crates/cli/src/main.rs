use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smdepth::commands::{eval, gen_data, infer, train};
use smdepth::config::RunConfig;
use smdepth::CliResult;

/// Self-supervised depth estimation: train on rectified stereo pairs with a
/// mirrored Siamese network, infer from a single image.
#[derive(Parser)]
#[command(name = "smdepth", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic stereo pairs with exact ground-truth disparity.
    #[command(name = "gen-data")]
    GenData {
        /// Run config JSON (scene parameters and data_dir).
        #[arg(long)]
        config: PathBuf,
        /// Number of samples to write.
        #[arg(long)]
        count: usize,
        /// Base seed; sample k derives its own seed from it.
        #[arg(long)]
        seed: u64,
    },
    /// Train the Siamese disparity network on a generated dataset.
    Train {
        /// Run config JSON (training, network, and paths).
        #[arg(long)]
        config: PathBuf,
        /// Resume from the checkpoint written at this step.
        #[arg(long)]
        resume: Option<u64>,
    },
    /// Predict disparity maps for single images from a checkpoint.
    Infer {
        /// Model checkpoint (.smck).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config JSON; defaults to run.json next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the disparity PFMs.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Blend with the mirrored-image prediction (post-processing).
        #[arg(long)]
        pp: bool,
        /// Input PPM images.
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Evaluate predicted disparities against ground truth.
    Eval {
        /// Directory of predicted .pfm files (with units sidecars).
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth .pfm files (with units sidecars).
        #[arg(long)]
        gt: PathBuf,
        /// Camera calibration JSON ({"focal_px": .., "baseline_m": ..}).
        #[arg(long)]
        calib: PathBuf,
        /// Metric suite: eigen, silog, or make3d.
        #[arg(long)]
        suite: String,
        /// Depth cap in meters (eigen suite).
        #[arg(long, default_value_t = 80.0)]
        cap: f64,
        /// Apply the standard center crop (eigen suite).
        #[arg(long)]
        eigen_crop: bool,
        /// Output directory for metrics.csv and summary.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { config, count, seed } => {
            let cfg = RunConfig::load(&config)?;
            gen_data::run(&cfg, count, seed)
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::load(&config)?;
            train::run(&cfg, resume)
        }
        Command::Infer {
            checkpoint,
            config,
            out,
            pp,
            images,
        } => infer::run(&checkpoint, config.as_deref(), &images, &out, pp),
        Command::Eval {
            pred,
            gt,
            calib,
            suite,
            cap,
            eigen_crop,
            out,
        } => {
            let suite = eval::Suite::parse(&suite)?;
            eval::run(&pred, &gt, &calib, suite, cap, eigen_crop, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `posecodec` command-line interface.
//!
//! Exit codes: 0 success, 1 invariant or validation failure, 2 I/O or format
//! error, 3 bad flags. Every failure prints a single-line diagnostic on
//! stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "posecodec",
    version,
    about = "Limb-orientation pose codec: training-target encoding, map decoding, evaluation, and a synthetic oracle harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SkeletonArg {
    /// Skeleton config JSON; defaults to the built-in 17-joint skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render heatmaps and orientation maps from pose + keypoint files.
    Encode {
        /// Ground-truth 3D poses (.jsonl).
        #[arg(long)]
        poses: PathBuf,
        /// 2D keypoints at map resolution (.jsonl).
        #[arg(long)]
        keypoints: PathBuf,
        /// Output directory for per-frame .posmap containers.
        #[arg(long)]
        out: PathBuf,
        /// Orientation-map payload: unit orientations or torso-normalized
        /// limb vectors.
        #[arg(long, value_enum, default_value = "orientation")]
        mode: commands::ModeArg,
        /// Heatmap Gaussian sigma in map pixels.
        #[arg(long, default_value_t = posecodec::defaults::SIGMA_PX)]
        sigma: f64,
        /// Map resolution as HxW (e.g. 64x64).
        #[arg(long, value_parser = commands::parse_map_size, default_value = "64x64")]
        map_size: (usize, usize),
        #[command(flatten)]
        skeleton: SkeletonArg,
    },
    /// Decode map stacks back into 3D poses.
    Decode {
        /// Heatmap container file or directory of frame_*.heat.posmap files.
        #[arg(long)]
        heatmaps: PathBuf,
        /// Orientation container file or directory of frame_*.orient.posmap files.
        #[arg(long)]
        orient: PathBuf,
        /// Limb lengths: "ref" (skeleton reference lengths) or
        /// "gt:<posefile>" (per-frame ground-truth lengths).
        #[arg(long, value_parser = commands::parse_lengths)]
        lengths: commands::LengthsArg,
        /// Output pose file (.jsonl).
        #[arg(long)]
        out: PathBuf,
        /// Root joint position in mm as "x,y,z".
        #[arg(long, value_parser = commands::parse_root, default_value = "0,0,0")]
        root: [f64; 3],
        #[command(flatten)]
        skeleton: SkeletonArg,
    },
    /// Evaluate predicted poses against ground truth (MPJPE, PA-MPJPE,
    /// PCK@150, AUC).
    Eval {
        /// Predicted poses (.jsonl).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth poses (.jsonl).
        #[arg(long)]
        gt: PathBuf,
        /// Output report JSON path.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        skeleton: SkeletonArg,
    },
    /// Generate a synthetic dataset from a scenario file.
    Synth {
        /// Scenario JSON.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        skeleton: SkeletonArg,
    },
    /// Run the decode-window jitter/rescale robustness protocol.
    BenchJitter {
        /// Scenario JSON (jitter_px and rescale_range fields apply).
        #[arg(long)]
        scenario: PathBuf,
        /// Number of jitter trials.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Output report JSON path.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        skeleton: SkeletonArg,
    },
    /// Run the built-in invariant suite; nonzero exit on any failure.
    Selftest,
}

/// Die quietly on closed pipes (`posecodec eval ... | head`) like other unix
/// tools instead of panicking on the failed stdout write.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let line = message.lines().next().unwrap_or("bad flags");
            eprintln!("{line}");
            return ExitCode::from(3);
        }
    };

    let result = match cli.command {
        Command::Encode {
            poses,
            keypoints,
            out,
            mode,
            sigma,
            map_size,
            skeleton,
        } => commands::encode(
            &poses,
            &keypoints,
            &out,
            mode,
            sigma,
            map_size,
            skeleton.skeleton.as_deref(),
        ),
        Command::Decode {
            heatmaps,
            orient,
            lengths,
            out,
            root,
            skeleton,
        } => commands::decode(
            &heatmaps,
            &orient,
            &lengths,
            &out,
            root,
            skeleton.skeleton.as_deref(),
        ),
        Command::Eval {
            pred,
            gt,
            report,
            skeleton,
        } => commands::eval(&pred, &gt, &report, skeleton.skeleton.as_deref()),
        Command::Synth {
            scenario,
            out,
            skeleton,
        } => commands::synth(&scenario, &out, skeleton.skeleton.as_deref()),
        Command::BenchJitter {
            scenario,
            trials,
            report,
            skeleton,
        } => commands::bench_jitter(&scenario, trials, &report, skeleton.skeleton.as_deref()),
        Command::Selftest => commands::selftest(),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

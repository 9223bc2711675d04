//! `hummuss`: 2D-keypoint to 3D-pose inference over diagonal state-space
//! models, with streaming and offline modes, a latency/memory benchmark,
//! subsample-rate evaluation, and synthetic weight/input generators.
//!
//! Exit codes: 0 success, 2 malformed input or flags, 3 weights/config/file
//! problems, 4 unsupported mode for the loaded model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hummuss_cli::run::{self, BenchArgs, GenInputArgs, GenWeightsArgs, InferArgs, SubsampleArgs};

#[derive(Parser)]
#[command(name = "hummuss", version, about = "Streaming 3D pose lifting with state-space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    Stream,
    Offline,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum OnOff {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Arch {
    Causal,
    Bidirectional,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference over a keypoint stream.
    Infer(Infer),
    /// Measure per-frame latency: recurrent stepping vs window re-convolution.
    Bench(Bench),
    /// Evaluate robustness to frame subsampling at several rates.
    SubsampleEval(SubsampleEval),
    /// Initialize random model weights and write them to a file.
    GenWeights(GenWeights),
    /// Write a synthetic keypoint stream (optionally with 3D ground truth).
    GenInput(GenInput),
}

#[derive(Args)]
struct Infer {
    /// Weights file.
    #[arg(long)]
    model: PathBuf,
    /// Input keypoint stream; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// stream = frame by frame with O(1) state; offline = buffer and run once.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Scale the temporal step by timestamp gaps (stream mode).
    #[arg(long, value_enum, default_value = "on")]
    fps_adapt: OnOff,
    /// Output pose stream; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    /// Weights file (causal model).
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated context lengths.
    #[arg(long, value_delimiter = ',', default_value = "27,81,243")]
    contexts: Vec<usize>,
    /// Measured frames per context.
    #[arg(long, default_value_t = 200)]
    frames: usize,
    /// Measurement repeats; samples pool across them.
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    /// Joints per synthetic frame.
    #[arg(long, default_value_t = 17)]
    joints: usize,
    /// Synthetic input seed; HUMMUSS_SEED, then 42, when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SubsampleEval {
    /// Weights file.
    #[arg(long)]
    model: PathBuf,
    /// Input keypoint stream; ground truth is read from <input>.gt3d.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated subsample rates.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    rates: Vec<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenWeights {
    /// Temporal block direction.
    #[arg(long, value_enum, default_value = "causal")]
    arch: Arch,
    /// Layer count; architecture default when omitted.
    #[arg(long)]
    n_blocks: Option<usize>,
    /// Model width; architecture default when omitted.
    #[arg(long)]
    d_model: Option<usize>,
    /// Representation width; architecture default when omitted.
    #[arg(long)]
    d_rep: Option<usize>,
    /// State dimension per channel; architecture default when omitted.
    #[arg(long)]
    state_dim: Option<usize>,
    /// Init seed; HUMMUSS_SEED, then 42, when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Destination weights file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenInput {
    /// Joints per frame.
    #[arg(long, default_value_t = 17)]
    joints: usize,
    /// Frame count.
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Nominal frame rate.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Generator seed; HUMMUSS_SEED, then 42, when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the 3D ground-truth companion <output>.gt3d.
    #[arg(long)]
    with_gt: bool,
    /// Destination keypoint file.
    #[arg(long)]
    output: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), hummuss_cli::CliError> {
    match cli.command {
        Command::Infer(a) => run::infer(&InferArgs {
            model: a.model,
            input: a.input,
            mode: match a.mode {
                ModeArg::Stream => run::InferMode::Stream,
                ModeArg::Offline => run::InferMode::Offline,
            },
            fps_adapt: a.fps_adapt == OnOff::On,
            output: a.output,
        }),
        Command::Bench(a) => run::bench(
            &BenchArgs {
                model: a.model,
                contexts: a.contexts,
                frames: a.frames,
                repeat: a.repeat,
                joints: a.joints,
                seed: a.seed,
            },
            &mut std::io::stdout().lock(),
        ),
        Command::SubsampleEval(a) => run::subsample_eval(
            &SubsampleArgs {
                model: a.model,
                input: a.input,
                rates: a.rates,
                output: a.output,
            },
            &mut std::io::stdout().lock(),
        ),
        Command::GenWeights(a) => run::gen_weights(&GenWeightsArgs {
            causal: a.arch == Arch::Causal,
            n_blocks: a.n_blocks,
            d_model: a.d_model,
            d_rep: a.d_rep,
            state_dim: a.state_dim,
            seed: a.seed,
            output: a.output,
        }),
        Command::GenInput(a) => run::gen_input(&GenInputArgs {
            joints: a.joints,
            frames: a.frames,
            fps: a.fps,
            seed: a.seed,
            with_gt: a.with_gt,
            output: a.output,
        }),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hummuss: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

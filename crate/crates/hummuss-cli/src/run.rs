//! The tool engines behind the CLI subcommands: streaming and offline
//! inference, the recurrent-vs-rewindow latency benchmark, subsample-rate
//! evaluation, and synthetic weight/input generation.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hummuss_core::block::CausalExec;
use hummuss_core::model::{ForwardOpts, HummussConfig, HummussModel, MotionTensor};
use hummuss_core::tasks::synth_motion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::keypoints::{Frame, FrameReader, Header, KeypointFile, TRIPLE};
use crate::weights;

/// Frames of stream history discarded before latency samples count.
pub const BENCH_WARMUP: usize = 50;

/// Default seed for synthetic generation when neither `--seed` nor the
/// `HUMMUSS_SEED` environment variable says otherwise.
pub const DEFAULT_SEED: u64 = 42;

/// Seed precedence: explicit flag, then `HUMMUSS_SEED`, then the default.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("HUMMUSS_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("HUMMUSS_SEED=\"{v}\" is not an integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn require_pose_input(config: &HummussConfig) -> Result<(), CliError> {
    if config.d_in != TRIPLE {
        return Err(CliError::Config(format!(
            "model expects {} input features per joint; keypoint streams carry {TRIPLE}",
            config.d_in
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Inference

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferMode {
    Stream,
    Offline,
}

pub struct InferArgs {
    pub model: PathBuf,
    /// None reads stdin.
    pub input: Option<PathBuf>,
    pub mode: InferMode,
    pub fps_adapt: bool,
    /// None writes stdout.
    pub output: Option<PathBuf>,
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufReader::new(std::fs::File::open(p)?)),
        None => Box::new(std::io::BufReader::new(std::io::stdin())),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    })
}

/// Run inference. Stream mode consumes one line at a time with O(1) state;
/// offline mode buffers the input and runs the whole-sequence forward pass.
pub fn infer(args: &InferArgs) -> Result<(), CliError> {
    let model = weights::load_model(&args.model)?;
    require_pose_input(&model.config)?;
    if args.mode == InferMode::Stream && !model.config.causal {
        return Err(CliError::Mode(
            "stream mode needs a causal model; this one has bidirectional temporal blocks".into(),
        ));
    }
    let input = open_input(args.input.as_deref())?;
    let mut out = open_output(args.output.as_deref())?;
    match args.mode {
        InferMode::Stream => infer_stream(&model, args.fps_adapt, input, &mut out)?,
        InferMode::Offline => infer_offline(&model, input, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn infer_stream(
    model: &HummussModel,
    fps_adapt: bool,
    input: Box<dyn BufRead>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut reader = FrameReader::open(input)?;
    let header = match reader.header {
        Some(h) => h,
        None => return Ok(()), // empty input: zero output lines
    };
    writeln!(out, "{}", header.to_line())?;
    let mut state = model.init_state(header.joints)?;
    while let Some(frame) = reader.next_frame()? {
        let ts = fps_adapt.then_some(frame.timestamp_ms);
        let (_, pose) = model.stream_step(&frame.values, ts, &mut state)?;
        let line = Frame {
            timestamp_ms: frame.timestamp_ms,
            values: pose,
        };
        writeln!(out, "{}", line.to_line())?;
    }
    Ok(())
}

fn motion_from_file(file: &KeypointFile) -> Result<MotionTensor, CliError> {
    let joints = file.header.joints;
    let mut data = Vec::with_capacity(file.frames.len() * joints * TRIPLE);
    for f in &file.frames {
        data.extend_from_slice(&f.values);
    }
    Ok(MotionTensor::from_vec(
        data,
        1,
        file.frames.len(),
        joints,
        TRIPLE,
    )?)
}

fn infer_offline(
    model: &HummussModel,
    input: Box<dyn BufRead>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let file = match crate::keypoints::read_all(input)? {
        Some(f) => f,
        None => return Ok(()),
    };
    writeln!(out, "{}", file.header.to_line())?;
    if file.frames.is_empty() {
        return Ok(());
    }
    let motion = motion_from_file(&file)?;
    let (_, pose) = model.forward(&motion)?;
    let joints = file.header.joints;
    for (i, f) in file.frames.iter().enumerate() {
        let values = pose.data[i * joints * TRIPLE..(i + 1) * joints * TRIPLE].to_vec();
        let line = Frame {
            timestamp_ms: f.timestamp_ms,
            values,
        };
        writeln!(out, "{}", line.to_line())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Benchmark

pub struct BenchArgs {
    pub model: PathBuf,
    pub contexts: Vec<usize>,
    /// Measured frames per context.
    pub frames: usize,
    pub repeat: usize,
    pub joints: usize,
    pub seed: Option<u64>,
}

/// One benchmark report row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: &'static str,
    pub context_length: usize,
    pub median_latency_us: f64,
    pub p95_latency_us: f64,
    pub state_bytes_or_window_bytes: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn summarize(mut samples: Vec<f64>) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    (percentile(&samples, 0.5), percentile(&samples, 0.95))
}

/// Measure recurrent stepping and sliding-window re-convolution per context
/// length. Latency wraps only the inference call; each stream discards
/// [`BENCH_WARMUP`] frames of history before samples count, and samples pool
/// across repeats.
pub fn bench_rows(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let model = weights::load_model(&args.model)?;
    require_pose_input(&model.config)?;
    if !model.config.causal {
        return Err(CliError::Mode(
            "the latency benchmark streams frames and needs a causal model".into(),
        ));
    }
    if args.contexts.is_empty() || args.frames == 0 || args.repeat == 0 {
        return Err(CliError::Usage(
            "need at least one context, one frame, and one repeat".into(),
        ));
    }
    if args.joints == 0 {
        return Err(CliError::Usage("joints must be >= 1".into()));
    }
    let seed = resolve_seed(args.seed)?;
    let max_context = *args.contexts.iter().max().unwrap();
    let total = max_context + BENCH_WARMUP + args.frames;
    let (_, proj) = synth_motion(args.joints, total, model.config.nominal_fps, seed)?;
    let input = proj.to_motion();
    let jd = args.joints * TRIPLE;

    let mut rows = Vec::new();
    for &context in &args.contexts {
        if context == 0 {
            return Err(CliError::Usage("context lengths must be >= 1".into()));
        }
        let start = context + BENCH_WARMUP;

        // Recurrent: one stateful step per frame; history length is
        // irrelevant to the work done, which is exactly the claim under test.
        let mut samples = Vec::with_capacity(args.frames * args.repeat);
        let mut state_bytes = 0;
        for _ in 0..args.repeat {
            let mut state = model.init_state(args.joints)?;
            for t in 0..start + args.frames {
                let frame = &input.data[t * jd..(t + 1) * jd];
                if t < start {
                    model.stream_step(frame, None, &mut state)?;
                } else {
                    let t0 = Instant::now();
                    model.stream_step(frame, None, &mut state)?;
                    samples.push(t0.elapsed().as_secs_f64() * 1e6);
                }
            }
            state_bytes = state.accounted_bytes();
        }
        let (median, p95) = summarize(samples);
        rows.push(BenchRow {
            mode: "recurrent",
            context_length: context,
            median_latency_us: median,
            p95_latency_us: p95,
            state_bytes_or_window_bytes: state_bytes,
        });

        // Rewindow: re-run the convolutional forward pass over the trailing
        // window for every frame, the way a stateless model would.
        let mut samples = Vec::with_capacity(args.frames * args.repeat);
        let mut window = MotionTensor::zeros(1, context, args.joints, TRIPLE);
        for rep in 0..args.repeat {
            for t in start..start + args.frames {
                let lo = (t + 1 - context) * jd;
                window.data.copy_from_slice(&input.data[lo..lo + context * jd]);
                if rep == 0 && t < start + 2.min(args.frames) {
                    // Warm caches before the first measured repeat.
                    model.forward_conv(&window)?;
                }
                let t0 = Instant::now();
                model.forward_conv(&window)?;
                samples.push(t0.elapsed().as_secs_f64() * 1e6);
            }
        }
        let (median, p95) = summarize(samples);
        rows.push(BenchRow {
            mode: "rewindow",
            context_length: context,
            median_latency_us: median,
            p95_latency_us: p95,
            state_bytes_or_window_bytes: context * jd * core::mem::size_of::<f64>(),
        });
    }
    Ok(rows)
}

/// Run the benchmark and print the CSV report.
pub fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = bench_rows(args)?;
    writeln!(
        out,
        "# rewindow baseline = sliding-window re-convolution of this same model; \
         it is not a transformer reimplementation, so compare shapes, not absolutes"
    )?;
    writeln!(
        out,
        "# frames={} repeat={} joints={} warmup={BENCH_WARMUP}",
        args.frames, args.repeat, args.joints
    )?;
    writeln!(
        out,
        "mode,context_length,median_latency_us,p95_latency_us,state_bytes_or_window_bytes"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{}",
            r.mode, r.context_length, r.median_latency_us, r.p95_latency_us,
            r.state_bytes_or_window_bytes
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subsample evaluation

pub struct SubsampleArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub rates: Vec<usize>,
    pub output: Option<PathBuf>,
}

/// One subsample-evaluation row: errors are mean per-joint Euclidean
/// distances over the retained frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleRow {
    pub rate: usize,
    pub frames_retained: usize,
    pub mean_err_vs_fullrate: f64,
    pub mean_err_vs_gt: f64,
}

/// The ground-truth companion of an input file: `<input>.gt3d`.
pub fn gt_path(input: &Path) -> PathBuf {
    let mut name = input.as_os_str().to_owned();
    name.push(".gt3d");
    PathBuf::from(name)
}

fn mean_joint_distance(a: &[f64], b: &[f64], joints: usize) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let frames = a.len() / (joints * TRIPLE);
    let mut total = 0.0;
    for f in 0..frames {
        for j in 0..joints {
            let i = (f * joints + j) * TRIPLE;
            let dx = a[i] - b[i];
            let dy = a[i + 1] - b[i + 1];
            let dz = a[i + 2] - b[i + 2];
            total += (dx * dx + dy * dy + dz * dz).sqrt();
        }
    }
    total / (frames * joints) as f64
}

/// Evaluate the model at each subsample rate r: keep frames r-1, 2r-1, ...,
/// run with the step size scaled by r, and compare retained-frame poses
/// against the full-rate run and against ground truth.
pub fn subsample_rows(args: &SubsampleArgs) -> Result<Vec<SubsampleRow>, CliError> {
    let model = weights::load_model(&args.model)?;
    require_pose_input(&model.config)?;
    let input_file = crate::keypoints::read_all(std::io::BufReader::new(std::fs::File::open(
        &args.input,
    )?))?
    .ok_or_else(|| CliError::Usage("input stream is empty".into()))?;
    if input_file.frames.is_empty() {
        return Err(CliError::Usage("input stream has no frames".into()));
    }
    let gt_file = crate::keypoints::read_all(std::io::BufReader::new(std::fs::File::open(
        gt_path(&args.input),
    )?))?
    .ok_or_else(|| CliError::Config("ground-truth companion is empty".into()))?;
    let joints = input_file.header.joints;
    if gt_file.header.joints != joints || gt_file.frames.len() != input_file.frames.len() {
        return Err(CliError::Config(format!(
            "ground truth is {} frames x {} joints, input is {} x {}",
            gt_file.frames.len(),
            gt_file.header.joints,
            input_file.frames.len(),
            joints
        )));
    }
    if args.rates.is_empty() {
        return Err(CliError::Usage("need at least one rate".into()));
    }

    let motion = motion_from_file(&input_file)?;
    let frames = motion.frames;
    let (_, full_pose) = model.forward(&motion)?;

    let mut rows = Vec::new();
    for &rate in &args.rates {
        if rate == 0 {
            return Err(CliError::Usage("rates must be >= 1".into()));
        }
        let retained: Vec<usize> = (0..frames / rate).map(|k| k * rate + rate - 1).collect();
        if retained.is_empty() {
            return Err(CliError::Usage(format!(
                "rate {rate} retains no frames of a {frames}-frame input"
            )));
        }
        let jd = joints * TRIPLE;
        let mut coarse = Vec::with_capacity(retained.len() * jd);
        for &f in &retained {
            coarse.extend_from_slice(&motion.data[f * jd..(f + 1) * jd]);
        }
        let coarse = MotionTensor::from_vec(coarse, 1, retained.len(), joints, TRIPLE)?;
        let (_, pose) = model.forward_opts(
            &coarse,
            ForwardOpts {
                temporal_exec: CausalExec::Scan,
                delta_factor: rate as f64,
            },
        )?;

        let mut reference = Vec::with_capacity(retained.len() * jd);
        let mut gt = Vec::with_capacity(retained.len() * jd);
        for &f in &retained {
            reference.extend_from_slice(&full_pose.data[f * jd..(f + 1) * jd]);
            gt.extend_from_slice(&gt_file.frames[f].values);
        }
        rows.push(SubsampleRow {
            rate,
            frames_retained: retained.len(),
            mean_err_vs_fullrate: mean_joint_distance(&pose.data, &reference, joints),
            mean_err_vs_gt: mean_joint_distance(&pose.data, &gt, joints),
        });
    }
    Ok(rows)
}

/// Run the subsample evaluation and print the CSV report to `--output` or,
/// without one, to `out`.
pub fn subsample_eval(args: &SubsampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = subsample_rows(args)?;
    let mut file_sink;
    let sink: &mut dyn Write = match &args.output {
        Some(p) => {
            file_sink = std::io::BufWriter::new(std::fs::File::create(p)?);
            &mut file_sink
        }
        None => out,
    };
    writeln!(
        sink,
        "rate,frames_retained,mean_err_vs_fullrate,mean_err_vs_gt"
    )?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{}",
            r.rate, r.frames_retained, r.mean_err_vs_fullrate, r.mean_err_vs_gt
        )?;
    }
    sink.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Generators

pub struct GenWeightsArgs {
    pub causal: bool,
    pub n_blocks: Option<usize>,
    pub d_model: Option<usize>,
    pub d_rep: Option<usize>,
    pub state_dim: Option<usize>,
    pub seed: Option<u64>,
    pub output: PathBuf,
}

/// Initialize a model (paper-scale defaults, overridable) and write it out.
pub fn gen_weights(args: &GenWeightsArgs) -> Result<(), CliError> {
    let mut config = if args.causal {
        HummussConfig::default_causal()
    } else {
        HummussConfig::default_bidirectional()
    };
    if let Some(v) = args.n_blocks {
        config.n_blocks = v;
    }
    if let Some(v) = args.d_model {
        config.d_model = v;
    }
    if let Some(v) = args.d_rep {
        config.d_rep = v;
    }
    if let Some(v) = args.state_dim {
        config.state_dim = v;
    }
    config.validate()?;
    let seed = resolve_seed(args.seed)?;
    let model = HummussModel::init(config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    weights::save_model(&args.output, &model)?;
    Ok(())
}

pub struct GenInputArgs {
    pub joints: usize,
    pub frames: usize,
    pub fps: f64,
    pub seed: Option<u64>,
    pub with_gt: bool,
    pub output: PathBuf,
}

/// Write a synthetic keypoint stream (and optionally its 3D ground-truth
/// companion `<output>.gt3d`).
pub fn gen_input(args: &GenInputArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let (gt3d, proj) = synth_motion(args.joints, args.frames, args.fps, seed)?;
    let header = Header {
        joints: args.joints,
        fps: args.fps,
    };
    let ts = |k: usize| k as f64 * 1000.0 / args.fps;

    let mut frames = Vec::with_capacity(args.frames);
    for f in 0..args.frames {
        let mut values = Vec::with_capacity(args.joints * TRIPLE);
        for j in 0..args.joints {
            let (x, y) = proj.xy_at(f, j);
            values.extend_from_slice(&[x, y, proj.conf_at(f, j)]);
        }
        frames.push(Frame {
            timestamp_ms: ts(f),
            values,
        });
    }
    std::fs::write(
        &args.output,
        crate::keypoints::render(&KeypointFile { header, frames }),
    )?;

    if args.with_gt {
        let mut frames = Vec::with_capacity(args.frames);
        for f in 0..args.frames {
            let mut values = Vec::with_capacity(args.joints * TRIPLE);
            for j in 0..args.joints {
                let (x, y, z) = gt3d.at(f, j);
                values.extend_from_slice(&[x, y, z]);
            }
            frames.push(Frame {
                timestamp_ms: ts(f),
                values,
            });
        }
        std::fs::write(
            gt_path(&args.output),
            crate::keypoints::render(&KeypointFile { header, frames }),
        )?;
    }
    Ok(())
}

//! `mvqa`: schedules, downsampling, matched evaluation and RD batches.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use matched_vqa::frame::ChromaSampling;
use matched_vqa::metrics::PlaneSet;
use matched_vqa::resample::ResampleMethod;
use matched_vqa::schedule::FrameRate;
use matched_vqa::video_io::VideoFormat;

#[derive(Parser, Debug)]
#[command(
    name = "mvqa",
    version,
    about = "Matched quality evaluation for temporally downsampled video"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the per-cluster weights and frame indices for a rate pair.
    Schedule {
        f_ref: FrameRate,
        f_down: FrameRate,
        #[arg(long)]
        json: bool,
    },
    /// Reduce a sequence's frame rate by frame dropping or averaging.
    Downsample {
        input: PathBuf,
        output: PathBuf,
        /// Target frame rate (integer, n/d or exact decimal).
        #[arg(long)]
        to: FrameRate,
        #[arg(long, default_value_t = ResampleMethod::Average)]
        method: ResampleMethod,
        /// Output container; default from the output extension.
        #[arg(long)]
        out_format: Option<VideoFormat>,
        #[command(flatten)]
        input_opts: InputArgs,
    },
    /// Score a distorted sequence against a higher-rate reference.
    Evaluate {
        reference: PathBuf,
        distorted: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        input_opts: InputArgs,
        /// Frame rate of a headerless distorted input.
        #[arg(long)]
        dist_fps: Option<FrameRate>,
        /// Print the JSON report.
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        /// Print one CSV row with a header.
        #[arg(long)]
        csv: bool,
        /// Also write the JSON report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include per-cluster scores in the text output.
        #[arg(long)]
        clusters: bool,
    },
    /// Evaluate every point of an RD manifest and write CSV (and SVG).
    RdCurve {
        manifest: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Print intersections as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        metric: MetricArgs,
        /// Limit frames read per input.
        #[arg(long)]
        max_frames: Option<u64>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricName {
    Psnr,
    Ssim,
    External,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PoolingName {
    Frame,
    Mse,
}

#[derive(Args, Debug, Clone)]
struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricName::Psnr)]
    metric: MetricName,
    /// PSNR only: mean of per-pair dB (frame) or dB of the mean MSE (mse).
    #[arg(long, value_enum, default_value_t = PoolingName::Frame)]
    pooling: PoolingName,
    /// y, u, v or yuv (6:1:1).
    #[arg(long, default_value_t = PlaneSet::Y)]
    planes: PlaneSet,
    /// Ceiling for per-pair PSNR in frame pooling.
    #[arg(long, default_value_t = matched_vqa::metrics::DEFAULT_CAP_DB)]
    cap_db: f64,
    /// Command for --metric external, with {ref} {dist} {width} {height}.
    #[arg(long, required_if_eq("metric", "external"))]
    external_cmd: Option<String>,
    /// Name reported for the external metric.
    #[arg(long, default_value = "external")]
    external_name: String,
    /// Worker threads for cluster scoring and RD points.
    #[arg(long)]
    jobs: Option<usize>,
    /// Leave the wall-clock timestamp out of reports.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct InputArgs {
    /// Container of the input(s); detected from the first bytes otherwise.
    #[arg(long)]
    format: Option<VideoFormat>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    bitdepth: Option<u8>,
    /// 420, 422, 444 or mono.
    #[arg(long)]
    chroma: Option<ChromaSampling>,
    /// Frame rate of a headerless (reference) input.
    #[arg(long)]
    fps: Option<FrameRate>,
    /// Stop after this many frames per input.
    #[arg(long)]
    max_frames: Option<u64>,
}

/// Failures caused by how the tool was invoked rather than by the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_EXTERNAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<matched_vqa::metrics::ExternalError>()
            || matches!(
                cause.downcast_ref::<matched_vqa::metrics::MetricError>(),
                Some(matched_vqa::metrics::MetricError::External(_))
            )
        {
            return EXIT_EXTERNAL;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Schedule {
            f_ref,
            f_down,
            json,
        } => commands::schedule(f_ref, f_down, json),
        Command::Downsample {
            input,
            output,
            to,
            method,
            out_format,
            input_opts,
        } => commands::downsample(&input, &output, to, method, out_format, &input_opts),
        Command::Evaluate {
            reference,
            distorted,
            metric,
            input_opts,
            dist_fps,
            json,
            csv,
            report,
            clusters,
        } => commands::evaluate(commands::EvaluateArgs {
            reference: &reference,
            distorted: &distorted,
            metric: &metric,
            input: &input_opts,
            dist_fps,
            json,
            csv,
            report: report.as_deref(),
            show_clusters: clusters,
        }),
        Command::RdCurve {
            manifest,
            csv,
            svg,
            json,
            metric,
            max_frames,
        } => commands::rd_curve(&manifest, &csv, svg.as_deref(), json, &metric, max_frames),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mvqa: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

use std::cell::Cell;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use matched_vqa::frame::{ChromaSampling, FrameGeometry};
use matched_vqa::matched::{evaluate_matched, EvalOptions, MatchedResult};
use matched_vqa::metrics::{ExternalMetric, MetricError, MetricKernel, Psnr, PsnrPooling, Ssim};
use matched_vqa::rd::{find_intersections, read_manifest, run_manifest, to_svg, RunOptions};
use matched_vqa::resample::{downsample as resample, ResampleError, ResampleMethod};
use matched_vqa::schedule::{derive_pair, generate_schedule, FrameRate, FrameRatePair};
use matched_vqa::video_io::{open_sequence, write_sequence, OpenOptions, VideoFormat};
use serde::Serialize;

use crate::report::{EvaluationReport, InputReport, Inputs, TOOL};
use crate::{InputArgs, MetricArgs, MetricName, PoolingName, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn format_score(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}

#[derive(Serialize)]
struct ScheduleReport<'a> {
    w: &'a [u64],
    h: &'a [usize],
    l: &'a [usize],
    f_ref: FrameRate,
    f_down: FrameRate,
    gcd: FrameRate,
    f_lcm: FrameRate,
    n_ref: u64,
    n_down: u64,
    n_virtual: u64,
    factor: String,
}

fn pair_from_args(f_ref: FrameRate, f_down: FrameRate) -> Result<FrameRatePair> {
    derive_pair(f_ref, f_down).map_err(|e| usage(e.to_string()))
}

pub fn schedule(f_ref: FrameRate, f_down: FrameRate, json: bool) -> Result<()> {
    let pair = pair_from_args(f_ref, f_down)?;
    let s = generate_schedule(&pair);
    let (fn_, fd) = pair.factor();
    let mut out = io::stdout().lock();
    if json {
        let report = ScheduleReport {
            w: s.weights(),
            h: s.ref_indices(),
            l: s.down_indices(),
            f_ref: pair.f_ref,
            f_down: pair.f_down,
            gcd: pair.gcd,
            f_lcm: pair.f_lcm,
            n_ref: pair.n_ref,
            n_down: pair.n_down,
            n_virtual: pair.n_virtual,
            factor: format!("{fn_}/{fd}"),
        };
        serde_json::to_writer(&mut out, &report)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(
        out,
        "f_ref {} Hz, f_down {} Hz, factor {fn_}/{fd}, f_lcm {} Hz",
        pair.f_ref, pair.f_down, pair.f_lcm
    )?;
    writeln!(
        out,
        "N_ref {}, N_down {}, N_V {}, {} pairs per cluster",
        pair.n_ref,
        pair.n_down,
        pair.n_virtual,
        s.len()
    )?;
    writeln!(out, "{:>6} {:>6} {:>6} {:>6}", "k", "w", "h", "l")?;
    for (k, e) in s.entries().enumerate() {
        writeln!(
            out,
            "{:>6} {:>6} {:>6} {:>6}",
            k + 1,
            e.weight,
            e.ref_frame,
            e.down_frame
        )?;
    }
    Ok(())
}

fn open_options(args: &InputArgs, rate: Option<FrameRate>) -> Result<OpenOptions> {
    let geometry = match (args.width, args.height) {
        (Some(w), Some(h)) => Some(
            FrameGeometry::new(
                w,
                h,
                args.bitdepth.unwrap_or(8),
                args.chroma.unwrap_or(ChromaSampling::Cs420),
            )
            .map_err(|e| usage(e.to_string()))?,
        ),
        (None, None) => {
            if args.bitdepth.is_some() || args.chroma.is_some() {
                return Err(usage("--bitdepth and --chroma need --width and --height"));
            }
            None
        }
        _ => return Err(usage("--width and --height go together")),
    };
    Ok(OpenOptions {
        format: args.format,
        geometry,
        frame_rate: rate,
        max_frames: args.max_frames,
    })
}

pub fn downsample(
    input: &Path,
    output: &Path,
    to: FrameRate,
    method: ResampleMethod,
    out_format: Option<VideoFormat>,
    input_opts: &InputArgs,
) -> Result<()> {
    let (info, frames) = open_sequence(input, &open_options(input_opts, input_opts.fps)?)
        .with_context(|| format!("opening {}", input.display()))?;
    let pair = pair_from_args(info.frame_rate, to)?;
    let format = out_format.unwrap_or_else(|| VideoFormat::from_path(output));
    let written = Cell::new(0u64);
    let frames = resample(frames, pair, method).inspect(|f| {
        if f.is_ok() {
            written.set(written.get() + 1);
        }
    });
    write_sequence::<_, ResampleError>(info.geometry, to, frames, output, format)
        .with_context(|| format!("downsampling {} to {}", input.display(), output.display()))?;
    eprintln!(
        "{}: {} frames at {} Hz ({method}, factor {}/{}) -> {}",
        input.display(),
        written.get(),
        to,
        pair.n_ref,
        pair.n_down,
        output.display()
    );
    Ok(())
}

fn check_metric_args(m: &MetricArgs) -> Result<()> {
    if m.pooling == PoolingName::Mse && m.metric != MetricName::Psnr {
        return Err(usage("--pooling mse applies to --metric psnr only"));
    }
    if m.jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    if m.metric == MetricName::Psnr && (m.cap_db.is_nan() || m.cap_db <= 0.0) {
        return Err(usage("--cap-db must be positive"));
    }
    if m.metric == MetricName::External
        && m.external_cmd
            .as_deref()
            .is_none_or(|c| c.trim().is_empty())
    {
        return Err(usage("--metric external needs --external-cmd"));
    }
    Ok(())
}

fn build_kernel(m: &MetricArgs) -> Result<Box<dyn MetricKernel>, MetricError> {
    Ok(match m.metric {
        MetricName::Psnr => {
            let pooling = match m.pooling {
                PoolingName::Frame => PsnrPooling::Frame,
                PoolingName::Mse => PsnrPooling::Mse,
            };
            Box::new(Psnr::new(m.planes, pooling, m.cap_db))
        }
        MetricName::Ssim => Box::new(Ssim::new(m.planes)),
        MetricName::External => Box::new(ExternalMetric::new(
            &m.external_name,
            m.external_cmd.as_deref().unwrap_or_default(),
            m.jobs.unwrap_or_else(rayon::current_num_threads),
        )?),
    })
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub struct EvaluateArgs<'a> {
    pub reference: &'a Path,
    pub distorted: &'a Path,
    pub metric: &'a MetricArgs,
    pub input: &'a InputArgs,
    pub dist_fps: Option<FrameRate>,
    pub json: bool,
    pub csv: bool,
    pub report: Option<&'a Path>,
    pub show_clusters: bool,
}

fn metric_label(result: &MatchedResult) -> String {
    format!("m{}", result.metric.to_uppercase())
}

pub fn evaluate(a: EvaluateArgs<'_>) -> Result<()> {
    check_metric_args(a.metric)?;
    if a.reference.as_os_str() == "-" && a.distorted.as_os_str() == "-" {
        return Err(usage("only one input can be standard input"));
    }
    let (ref_info, reference) = open_sequence(a.reference, &open_options(a.input, a.input.fps)?)
        .with_context(|| format!("opening {}", a.reference.display()))?;
    let (dist_info, distorted) = open_sequence(a.distorted, &open_options(a.input, a.dist_fps)?)
        .with_context(|| format!("opening {}", a.distorted.display()))?;
    let pair = derive_pair(ref_info.frame_rate, dist_info.frame_rate)?;
    let kernel = build_kernel(a.metric)?;
    let options = EvalOptions::default();
    let result = with_jobs(a.metric.jobs, || {
        evaluate_matched(reference, distorted, &pair, kernel.as_ref(), &options)
    })?
    .with_context(|| {
        format!(
            "evaluating {} against {}",
            a.distorted.display(),
            a.reference.display()
        )
    })?;

    let report = EvaluationReport {
        tool: TOOL,
        created: (!a.metric.deterministic).then(now_rfc3339),
        inputs: Inputs {
            reference: InputReport::new(a.reference, &ref_info)?,
            distorted: InputReport::new(a.distorted, &dist_info)?,
        },
        kernel: kernel.settings(),
        result,
    };
    if let Some(path) = a.report {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }

    let r = &report.result;
    let mut out = io::stdout().lock();
    if a.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else if a.csv {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([
            "reference",
            "distorted",
            "metric",
            "score",
            "f_ref",
            "f_down",
            "clusters",
            "frame_pairs",
            "truncated",
        ])?;
        w.write_record([
            report.inputs.reference.path.clone(),
            report.inputs.distorted.path.clone(),
            r.metric.clone(),
            if r.score.is_finite() {
                format!("{}", r.score)
            } else {
                format_score(r.score)
            },
            r.pair.f_ref.to_string(),
            r.pair.f_down.to_string(),
            r.clusters.to_string(),
            r.frame_pairs_evaluated.to_string(),
            r.truncated.to_string(),
        ])?;
        w.flush()?;
    } else {
        writeln!(out, "{} {}", metric_label(r), format_score(r.score))?;
        writeln!(
            out,
            "f_ref {} Hz, f_down {} Hz, factor {}/{}, {} clusters, {} frame pairs{}",
            r.pair.f_ref,
            r.pair.f_down,
            r.pair.n_ref,
            r.pair.n_down,
            r.clusters,
            r.frame_pairs_evaluated,
            if r.truncated { " (truncated)" } else { "" }
        )?;
        if r.capped_pairs > 0 && !r.all_perfect {
            writeln!(
                out,
                "{} pairs capped at {} dB",
                r.capped_pairs, a.metric.cap_db
            )?;
        }
        if a.show_clusters {
            for (i, c) in r.cluster_scores.iter().enumerate() {
                writeln!(out, "cluster {i} {}", format_score(*c))?;
            }
        }
    }
    Ok(())
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn rd_curve(
    manifest: &Path,
    csv_out: &Path,
    svg_out: Option<&Path>,
    json: bool,
    metric: &MetricArgs,
    max_frames: Option<u64>,
) -> Result<()> {
    check_metric_args(metric)?;
    let entries =
        read_manifest(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    build_kernel(metric)?;
    let options = RunOptions {
        jobs: metric.jobs.unwrap_or_else(rayon::current_num_threads),
        max_frames,
    };
    let table = run_manifest(&entries, || build_kernel(metric), &options)?;

    let file =
        fs::File::create(csv_out).with_context(|| format!("writing {}", csv_out.display()))?;
    table.write_csv(io::BufWriter::new(file))?;
    if let Some(svg_out) = svg_out {
        fs::write(svg_out, to_svg(&table))
            .with_context(|| format!("writing {}", svg_out.display()))?;
    }
    let crossings = find_intersections(&table);
    let mut out = io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &crossings)?;
        writeln!(out)?;
    } else {
        let points: usize = table.curves.iter().map(|c| c.points.len()).sum();
        writeln!(
            out,
            "{points} points in {} curves -> {}",
            table.curves.len(),
            csv_out.display()
        )?;
        writeln!(out, "{} intersections", crossings.len())?;
        for x in &crossings {
            writeln!(
                out,
                "{:?} x {:?} at {:.4} Mbit, score {:.4} ({:?} {}..{} bits, {:?} {}..{} bits)",
                x.curve_a,
                x.curve_b,
                x.file_size_bits / 1e6,
                x.score,
                x.curve_a,
                x.bracket_a.0,
                x.bracket_a.1,
                x.curve_b,
                x.bracket_b.0,
                x.bracket_b.1
            )?;
        }
    }
    Ok(())
}

//! Rate-distortion batches: a manifest of decoded encodes, their matched
//! scores against a reference, CSV/SVG output and curve crossings.
//!
//! Manifest lines hold `key=value` fields separated by whitespace; values
//! may be double-quoted, `#` starts a comment. One line is one point:
//!
//! ```text
//! # label        reference       decoded            size
//! label="60 Hz"  reference=ref.y4m  decoded=60_crf22.y4m  bitstream=60_crf22.hevc
//! label="60 Hz"  reference=ref.y4m  decoded=60_crf28.y4m  size_bits=1843200
//! ```
//!
//! Required: `label`, `reference`, `decoded`, and one of `bitstream` (file
//! whose size is taken) or `size_bits`. Optional: `fps`, `ref_fps` (needed
//! for headerless input), `width`, `height`, `bitdepth`, `chroma`. Relative
//! paths resolve against the manifest's directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{ChromaSampling, FrameGeometry};
use crate::matched::{evaluate_matched, serialize_score, EvalError, EvalOptions};
use crate::metrics::{MetricError, MetricKernel};
use crate::schedule::{derive_pair, FrameRate};
use crate::video_io::{open_sequence, OpenOptions, VideoError};

#[derive(Debug, Error)]
pub enum RdError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("no points")]
    NoPoints,
    #[error("curve {label:?} has two points with file size {size}")]
    DuplicateSize { label: String, size: u64 },
    #[error("point at manifest line {line} ({label})")]
    Point {
        line: usize,
        label: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {message}")]
    CsvValue { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RdError {
    /// The evaluation failure underneath a point error, if any.
    pub fn eval_error(&self) -> Option<&EvalError> {
        match self {
            RdError::Point { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BitstreamSize {
    File(PathBuf),
    Bits(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub line: usize,
    pub label: String,
    pub reference: PathBuf,
    pub decoded: PathBuf,
    pub size: BitstreamSize,
    pub fps: Option<FrameRate>,
    pub ref_fps: Option<FrameRate>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub bit_depth: Option<u8>,
    pub chroma: Option<ChromaSampling>,
}

fn tokenize(line: &str) -> Result<Vec<(String, String)>, String> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        match chars.peek() {
            None | Some('#') => break,
            _ => {}
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|&c| c != '=' && !c.is_whitespace()) {
            key.push(c);
        }
        if chars.next() != Some('=') {
            return Err(format!("expected key=value, got {key:?}"));
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c) => value.push(c),
                        None => return Err("unterminated quote".into()),
                    },
                    Some(c) => value.push(c),
                    None => return Err("unterminated quote".into()),
                }
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                value.push(c);
            }
        }
        fields.push((key, value));
    }
    Ok(fields)
}

/// Parses manifest text; `base` is prepended to relative paths.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, RdError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| RdError::Manifest { line, message };
        let fields = tokenize(raw).map_err(err)?;
        if fields.is_empty() {
            continue;
        }
        let mut map: HashMap<String, String> = HashMap::new();
        for (k, v) in fields {
            if map.insert(k.clone(), v).is_some() {
                return Err(err(format!("duplicate field {k:?}")));
            }
        }
        let mut take = |key: &str| map.remove(key);
        let required =
            |v: Option<String>, key: &str| v.ok_or_else(|| err(format!("missing field {key:?}")));
        let path = |p: String| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };

        let label = required(take("label"), "label")?;
        let reference = path(required(take("reference"), "reference")?);
        let decoded = path(required(take("decoded"), "decoded")?);
        let size = match (take("bitstream"), take("size_bits")) {
            (Some(b), None) => BitstreamSize::File(path(b)),
            (None, Some(s)) => {
                let bits: u64 = s
                    .parse()
                    .map_err(|_| err(format!("size_bits {s:?} is not an integer")))?;
                if bits == 0 {
                    return Err(err("size_bits must be positive".into()));
                }
                BitstreamSize::Bits(bits)
            }
            (Some(_), Some(_)) => {
                return Err(err("give either bitstream or size_bits, not both".into()))
            }
            (None, None) => return Err(err("missing field \"bitstream\" or \"size_bits\"".into())),
        };
        let rate = |v: Option<String>| {
            v.map(|s| s.parse::<FrameRate>().map_err(|e| err(e.to_string())))
                .transpose()
        };
        let fps = rate(take("fps"))?;
        let ref_fps = rate(take("ref_fps"))?;
        let number = |v: Option<String>, key: &str| {
            v.map(|s| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("{key} {s:?} is not an integer")))
            })
            .transpose()
        };
        let width = number(take("width"), "width")?;
        let height = number(take("height"), "height")?;
        let bit_depth = number(take("bitdepth"), "bitdepth")?.map(|b| b as u8);
        let chroma = take("chroma")
            .map(|s| s.parse::<ChromaSampling>().map_err(|e| err(e.to_string())))
            .transpose()?;
        if let Some(k) = map.keys().min() {
            return Err(err(format!("unknown field {k:?}")));
        }
        entries.push(ManifestEntry {
            line,
            label,
            reference,
            decoded,
            size,
            fps,
            ref_fps,
            width,
            height,
            bit_depth,
            chroma,
        });
    }
    if entries.is_empty() {
        return Err(RdError::NoPoints);
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, RdError> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub label: String,
    /// Frame rate of the evaluated (decoded) sequence.
    pub rate: FrameRate,
    pub file_size_bits: u64,
    pub metric: String,
    #[serde(serialize_with = "serialize_score")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdTable {
    pub curves: Vec<RdCurve>,
}

impl RdTable {
    /// Groups points into curves (in order of first appearance) sorted by
    /// file size.
    pub fn from_points(points: Vec<RdPoint>) -> Result<Self, RdError> {
        if points.is_empty() {
            return Err(RdError::NoPoints);
        }
        let mut curves: Vec<RdCurve> = Vec::new();
        for p in points {
            match curves.iter_mut().find(|c| c.label == p.label) {
                Some(c) => c.points.push(p),
                None => curves.push(RdCurve {
                    label: p.label.clone(),
                    points: vec![p],
                }),
            }
        }
        for c in &mut curves {
            c.points.sort_by_key(|p| p.file_size_bits);
            if let Some(w) = c
                .points
                .windows(2)
                .find(|w| w[0].file_size_bits == w[1].file_size_bits)
            {
                return Err(RdError::DuplicateSize {
                    label: c.label.clone(),
                    size: w[0].file_size_bits,
                });
            }
        }
        Ok(Self { curves })
    }

    pub fn points(&self) -> impl Iterator<Item = &RdPoint> {
        self.curves.iter().flat_map(|c| &c.points)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), RdError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "rate_hz", "file_size_bits", "metric", "score"])?;
        for p in self.points() {
            w.write_record([
                p.label.clone(),
                p.rate.to_string(),
                p.file_size_bits.to_string(),
                p.metric.clone(),
                format_score(p.score),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn from_csv<R: io::Read>(input: R) -> Result<Self, RdError> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let bad = |message: String| RdError::CsvValue { row, message };
            if record.len() != 5 {
                return Err(bad(format!("expected 5 columns, got {}", record.len())));
            }
            points.push(RdPoint {
                label: record[0].to_string(),
                rate: record[1]
                    .parse()
                    .map_err(|e: crate::schedule::ScheduleError| bad(e.to_string()))?,
                file_size_bits: record[2]
                    .parse()
                    .map_err(|_| bad(format!("bad size {:?}", &record[2])))?,
                metric: record[3].to_string(),
                score: record[4]
                    .parse()
                    .map_err(|_| bad(format!("bad score {:?}", &record[4])))?,
            });
        }
        Self::from_points(points)
    }
}

/// Shortest text that parses back to the same value; `inf` for infinity.
fn format_score(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intersection {
    pub curve_a: String,
    pub curve_b: String,
    /// Where the two polylines meet.
    pub file_size_bits: f64,
    pub score: f64,
    /// File sizes of the segment endpoints on each curve around the crossing.
    pub bracket_a: (u64, u64),
    pub bracket_b: (u64, u64),
}

type Segment = ((f64, f64), (f64, f64), (u64, u64));

fn segments(c: &RdCurve) -> Vec<Segment> {
    c.points
        .windows(2)
        .filter(|w| w[0].score.is_finite() && w[1].score.is_finite())
        .map(|w| {
            (
                (w[0].file_size_bits as f64, w[0].score),
                (w[1].file_size_bits as f64, w[1].score),
                (w[0].file_size_bits, w[1].file_size_bits),
            )
        })
        .collect()
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn segment_intersection(p: &Segment, q: &Segment) -> Option<(f64, f64)> {
    let r = (p.1 .0 - p.0 .0, p.1 .1 - p.0 .1);
    let s = (q.1 .0 - q.0 .0, q.1 .1 - q.0 .1);
    let denom = cross(r, s);
    if denom == 0.0 {
        // parallel or collinear; collinear overlap is not a crossing
        return None;
    }
    let qp = (q.0 .0 - p.0 .0, q.0 .1 - p.0 .1);
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((p.0 .0 + t * r.0, p.0 .1 + t * r.1))
    } else {
        None
    }
}

/// Every point where two curves' polylines meet, per curve pair, ordered by
/// file size. A meeting at a shared vertex is reported once.
pub fn find_intersections(table: &RdTable) -> Vec<Intersection> {
    let mut found = Vec::new();
    for (i, a) in table.curves.iter().enumerate() {
        for b in &table.curves[i + 1..] {
            let (sa, sb) = (segments(a), segments(b));
            let mut hits: Vec<Intersection> = Vec::new();
            for p in &sa {
                for q in &sb {
                    let Some((x, y)) = segment_intersection(p, q) else {
                        continue;
                    };
                    let tol = 1e-9 * x.abs().max(1.0);
                    if hits.iter().any(|h| {
                        (h.file_size_bits - x).abs() <= tol
                            && (h.score - y).abs() <= 1e-9 * y.abs().max(1.0)
                    }) {
                        continue;
                    }
                    hits.push(Intersection {
                        curve_a: a.label.clone(),
                        curve_b: b.label.clone(),
                        file_size_bits: x,
                        score: y,
                        bracket_a: p.2,
                        bracket_b: q.2,
                    });
                }
            }
            hits.sort_by(|x, y| x.file_size_bits.total_cmp(&y.file_size_bits));
            found.extend(hits);
        }
    }
    found
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Evenly spaced tick values covering `[lo, hi]` at a 1/2/5 step.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Line plot of score against file size in megabits, one polyline per
/// curve. Infinite scores are left out.
pub fn to_svg(table: &RdTable) -> String {
    let (w, h) = (720.0, 450.0);
    let (left, right, top, bottom) = (70.0, 170.0, 20.0, 50.0);
    let finite: Vec<&RdPoint> = table.points().filter(|p| p.score.is_finite()).collect();
    let mbit = |p: &RdPoint| p.file_size_bits as f64 / 1e6;
    let (mut x0, mut x1) = finite.iter().fold((f64::MAX, f64::MIN), |(a, b), p| {
        (a.min(mbit(p)), b.max(mbit(p)))
    });
    let (mut y0, mut y1) = finite.iter().fold((f64::MAX, f64::MIN), |(a, b), p| {
        (a.min(p.score), b.max(p.score))
    });
    if finite.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let pad_y = (y1 - y0) * 0.05;
    let (y0, y1) = (y0 - pad_y, y1 + pad_y);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * plot_h;
    let metric = finite.first().map(|p| p.metric.as_str()).unwrap_or("score");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{left}" y1="{yb}" x2="{xr}" y2="{yb}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{yb}"/></g>"#,
        yb = top + plot_h,
        xr = left + plot_w
    );
    for t in ticks(x0, x1, 6) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{yb}" x2="{x:.2}" y2="{yt}" stroke="black"/><text x="{x:.2}" y="{yl}" text-anchor="middle">{t}</text>"#,
            yb = top + plot_h,
            yt = top + plot_h + 5.0,
            yl = top + plot_h + 18.0,
            t = trim_float(t)
        );
    }
    for t in ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{xa}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{xl}" y="{yt:.2}" text-anchor="end">{t}</text>"#,
            xa = left - 5.0,
            xl = left - 8.0,
            yt = y + 4.0,
            t = trim_float(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle">File size [Mbit]</text>"#,
        x = left + plot_w / 2.0,
        y = h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{m}</text>"#,
        y = top + plot_h / 2.0,
        m = escape_xml(metric)
    );
    for (i, c) in table.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .filter(|p| p.score.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(mbit(p)), sy(p.score)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{label}</text>"#,
            lx2 = lx + 20.0,
            tx = lx + 26.0,
            ty = ly + 4.0,
            label = escape_xml(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    /// Frames per input, for quick runs.
    pub max_frames: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: rayon::current_num_threads(),
            max_frames: None,
        }
    }
}

fn open_options(
    entry: &ManifestEntry,
    rate: Option<FrameRate>,
    max_frames: Option<u64>,
) -> Result<OpenOptions, VideoError> {
    let geometry = match (entry.width, entry.height) {
        (Some(w), Some(h)) => Some(FrameGeometry::new(
            w,
            h,
            entry.bit_depth.unwrap_or(8),
            entry.chroma.unwrap_or(ChromaSampling::Cs420),
        )?),
        _ => None,
    };
    Ok(OpenOptions {
        format: None,
        geometry,
        frame_rate: rate,
        max_frames,
    })
}

fn bitstream_bits(size: &BitstreamSize) -> Result<u64, io::Error> {
    match size {
        BitstreamSize::Bits(b) => Ok(*b),
        BitstreamSize::File(p) => {
            let bytes = std::fs::metadata(p)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", p.display())))?
                .len();
            if bytes == 0 {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: empty bitstream", p.display()),
                ));
            }
            Ok(bytes * 8)
        }
    }
}

fn evaluate_entry(
    entry: &ManifestEntry,
    kernel: &dyn MetricKernel,
    eval: &EvalOptions,
    max_frames: Option<u64>,
) -> Result<RdPoint, EvalError> {
    let file_size_bits = bitstream_bits(&entry.size).map_err(VideoError::Io)?;
    let (ref_info, reference) = open_sequence(
        &entry.reference,
        &open_options(entry, entry.ref_fps, max_frames)?,
    )?;
    let (down_info, decoded) =
        open_sequence(&entry.decoded, &open_options(entry, entry.fps, max_frames)?)?;
    let pair = derive_pair(ref_info.frame_rate, down_info.frame_rate)?;
    let result = evaluate_matched(reference, decoded, &pair, kernel, eval)?;
    Ok(RdPoint {
        label: entry.label.clone(),
        rate: down_info.frame_rate,
        file_size_bits,
        metric: result.metric,
        score: result.score,
    })
}

/// Evaluates every manifest point, up to `options.jobs` at a time.
/// `make_kernel` is called once per point so stateful kernels never see two
/// sequences.
pub fn run_manifest<F>(
    entries: &[ManifestEntry],
    make_kernel: F,
    options: &RunOptions,
) -> Result<RdTable, RdError>
where
    F: Fn() -> Result<Box<dyn MetricKernel>, MetricError> + Sync,
{
    if entries.is_empty() {
        return Err(RdError::NoPoints);
    }
    let jobs = options.jobs.max(1);
    let eval = EvalOptions {
        parallel: entries.len() < jobs,
        ..EvalOptions::default()
    };
    let point_error = |e: &ManifestEntry, source: EvalError| RdError::Point {
        line: e.line,
        label: e.label.clone(),
        source: Box::new(source),
    };
    let run = |e: &ManifestEntry| -> Result<RdPoint, RdError> {
        let kernel = make_kernel().map_err(|m| {
            point_error(
                e,
                EvalError::Metric {
                    cluster: 0,
                    ref_frame: 0,
                    down_frame: 0,
                    source: m,
                },
            )
        })?;
        log::info!("evaluating {} ({})", e.decoded.display(), e.label);
        evaluate_entry(e, kernel.as_ref(), &eval, options.max_frames).map_err(|s| point_error(e, s))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let results: Vec<Result<RdPoint, RdError>> =
        pool.install(|| entries.par_iter().map(run).collect());
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    RdTable::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(label: &str, size: u64, score: f64) -> RdPoint {
        RdPoint {
            label: label.into(),
            rate: FrameRate::hz(60).unwrap(),
            file_size_bits: size,
            metric: "psnr".into(),
            score,
        }
    }

    #[test]
    fn tokenizer_handles_quotes_and_comments() {
        let t = tokenize(r#"  label="60 Hz \"a\"" size_bits=12 # trailing"#).unwrap();
        assert_eq!(
            t,
            vec![
                ("label".into(), "60 Hz \"a\"".into()),
                ("size_bits".into(), "12".into())
            ]
        );
        assert!(tokenize("# only comment").unwrap().is_empty());
        assert!(tokenize("label").is_err());
        assert!(tokenize("label=\"open").is_err());
    }

    #[test]
    fn manifest_fields() {
        let text = "\n# header\nlabel=a reference=r.y4m decoded=/abs/d.yuv size_bits=800 fps=30000/1001 width=16 height=8 chroma=mono\nlabel=b reference=r.y4m decoded=d2.y4m bitstream=b.bin\n";
        let m = parse_manifest(text, Path::new("/base")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].line, 3);
        assert_eq!(m[0].reference, PathBuf::from("/base/r.y4m"));
        assert_eq!(m[0].decoded, PathBuf::from("/abs/d.yuv"));
        assert_eq!(m[0].size, BitstreamSize::Bits(800));
        assert_eq!(m[0].fps, Some(FrameRate::new(30000, 1001).unwrap()));
        assert_eq!(m[0].chroma, Some(ChromaSampling::Mono));
        assert_eq!(m[1].size, BitstreamSize::File(PathBuf::from("/base/b.bin")));
    }

    #[test]
    fn manifest_errors() {
        let base = Path::new(".");
        assert!(matches!(parse_manifest("", base), Err(RdError::NoPoints)));
        assert!(matches!(
            parse_manifest("# nothing\n\n", base),
            Err(RdError::NoPoints)
        ));
        assert_eq!(
            parse_manifest("", base).unwrap_err().to_string(),
            "no points"
        );
        for bad in [
            "label=a reference=r decoded=d",
            "label=a reference=r decoded=d size_bits=1 bitstream=x",
            "label=a reference=r decoded=d size_bits=0",
            "label=a reference=r decoded=d size_bits=1 colour=red",
            "label=a label=b reference=r decoded=d size_bits=1",
            "reference=r decoded=d size_bits=1",
            "label=a reference=r decoded=d size_bits=1 fps=0",
        ] {
            assert!(
                matches!(
                    parse_manifest(bad, base),
                    Err(RdError::Manifest { line: 1, .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn table_groups_and_sorts() {
        let t = RdTable::from_points(vec![
            point("b", 30, 1.0),
            point("a", 20, 2.0),
            point("b", 10, 0.5),
        ])
        .unwrap();
        assert_eq!(t.curves.len(), 2);
        assert_eq!(t.curves[0].label, "b");
        assert_eq!(
            t.curves[0]
                .points
                .iter()
                .map(|p| p.file_size_bits)
                .collect::<Vec<_>>(),
            vec![10, 30]
        );
        assert!(matches!(
            RdTable::from_points(vec![point("a", 5, 1.0), point("a", 5, 2.0)]),
            Err(RdError::DuplicateSize { .. })
        ));
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let mut p = point("30 Hz, \"crf\" 22", 123_456_789, 0.1 + 0.2);
        p.rate = FrameRate::new(30000, 1001).unwrap();
        let t = RdTable::from_points(vec![
            p,
            point("x", 1, f64::INFINITY),
            point("x", 2, -3.5e-300),
        ])
        .unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("label,rate_hz,file_size_bits,metric,score\n"));
        assert!(
            csv.contains("\"30 Hz, \"\"crf\"\" 22\",30000/1001,123456789,psnr,0.30000000000000004")
        );
        assert!(csv.contains("x,60,1,psnr,inf"));
        assert_eq!(RdTable::from_csv(csv.as_bytes()).unwrap(), t);
    }

    /// Brute-force crossing count: sample the sign of (a - b) on the shared
    /// size range at every vertex of either curve.
    fn sign_changes(a: &RdCurve, b: &RdCurve) -> usize {
        let eval = |c: &RdCurve, x: f64| {
            let w = c
                .points
                .windows(2)
                .find(|w| w[0].file_size_bits as f64 <= x && x <= w[1].file_size_bits as f64)?;
            let (x0, x1) = (w[0].file_size_bits as f64, w[1].file_size_bits as f64);
            Some(w[0].score + (w[1].score - w[0].score) * (x - x0) / (x1 - x0))
        };
        let mut xs: Vec<f64> = a
            .points
            .iter()
            .chain(&b.points)
            .map(|p| p.file_size_bits as f64)
            .collect();
        xs.sort_by(f64::total_cmp);
        let signs: Vec<f64> = xs
            .iter()
            .filter_map(|&x| Some(eval(a, x)? - eval(b, x)?))
            .filter(|d| *d != 0.0)
            .map(f64::signum)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    #[test]
    fn single_crossing_with_brackets() {
        let t = RdTable::from_points(vec![
            point("hi", 100, 30.0),
            point("hi", 200, 36.0),
            point("hi", 400, 40.0),
            point("lo", 100, 33.0),
            point("lo", 200, 35.0),
            point("lo", 400, 37.0),
        ])
        .unwrap();
        let hits = find_intersections(&t);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits.len(), sign_changes(&t.curves[0], &t.curves[1]));
        let h = &hits[0];
        assert_eq!((h.bracket_a, h.bracket_b), ((100, 200), (100, 200)));
        // 30 + 6t = 33 + 2t at t = 3/4
        assert!((h.file_size_bits - 175.0).abs() < 1e-9);
        assert!((h.score - 34.5).abs() < 1e-9);
    }

    #[test]
    fn crossing_at_shared_vertex_counted_once() {
        let t = RdTable::from_points(vec![
            point("a", 1, 1.0),
            point("a", 3, 3.0),
            point("a", 5, 5.0),
            point("b", 1, 3.0),
            point("b", 3, 3.0),
            point("b", 5, 3.0),
        ])
        .unwrap();
        assert_eq!(find_intersections(&t).len(), 1);
    }

    #[test]
    fn parallel_and_disjoint_curves_do_not_cross() {
        let t = RdTable::from_points(vec![
            point("a", 1, 1.0),
            point("a", 2, 2.0),
            point("b", 1, 2.0),
            point("b", 2, 3.0),
            point("c", 10, 0.0),
            point("c", 20, 9.0),
        ])
        .unwrap();
        assert!(find_intersections(&t).is_empty());
    }

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let t = RdTable::from_points(vec![
            point("a&b", 1_000_000, 30.0),
            point("a&b", 2_000_000, 35.0),
            point("c", 1_500_000, 32.0),
            point("c", 2_500_000, f64::INFINITY),
        ])
        .unwrap();
        let svg = to_svg(&t);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&amp;b"));
        assert!(svg.contains("File size [Mbit]"));
        assert!(!svg.contains("inf"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(0.95, 1.0, 5);
        assert!(t.len() >= 3 && t.len() <= 6, "{t:?}");
        assert!(t.iter().all(|v| (0.95..=1.0).contains(v)));
    }
}

//! Adapter for third-party full-reference tools (VMAF and the like).
//!
//! Each scored pair is written as two single-frame Y4M files and the
//! configured command is run on them. The command template is split on
//! whitespace into an argument vector (no shell involved) and the
//! placeholders `{ref}`, `{dist}`, `{width}` and `{height}` are substituted
//! per argument. Standard output must hold either a bare number, one number
//! per line, or JSON (see [`parse_scores`]).

use std::collections::HashMap;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde_json::Value;
use thiserror::Error;

use super::{check_geometry, MetricError, MetricKernel, PairScore, Pooling};
use crate::frame::Frame;
use crate::schedule::FrameRate;
use crate::video_io::{SequenceWriter, VideoFormat};

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("empty external metric command")]
    EmptyCommand,
    #[error("external tool {0:?} not found")]
    ToolMissing(String),
    #[error("external tool {command:?} exited with {status}: {stderr}")]
    ExitStatus {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("cannot parse external tool output: {0}")]
    Unparsable(String),
    #[error("external tool i/o: {0}")]
    Io(#[from] io::Error),
}

/// Pulls scores out of a tool's standard output.
///
/// Accepted shapes: a single number; numbers one per line; a JSON number;
/// a JSON array of numbers or of objects; an object with a `frames` array
/// (libvmaf style). Objects yield their `score`, `vmaf` or `value` field,
/// looking inside a nested `metrics` object as well.
pub fn parse_scores(stdout: &str) -> Result<Vec<f64>, ExternalError> {
    let text = stdout.trim();
    if text.is_empty() {
        return Err(ExternalError::Unparsable("empty output".into()));
    }
    let plain: Result<Vec<f64>, _> = text.lines().map(|l| l.trim().parse::<f64>()).collect();
    if let Ok(scores) = plain {
        return Ok(scores);
    }
    let json: Value =
        serde_json::from_str(text).map_err(|_| ExternalError::Unparsable(truncate(text)))?;
    match &json {
        Value::Array(items) => items.iter().map(score_of).collect(),
        Value::Object(map) => match map.get("frames") {
            Some(Value::Array(frames)) => frames.iter().map(score_of).collect(),
            _ => Ok(vec![score_of(&json)?]),
        },
        other => Ok(vec![score_of(other)?]),
    }
}

fn score_of(value: &Value) -> Result<f64, ExternalError> {
    const KEYS: [&str; 3] = ["score", "vmaf", "value"];
    match value {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| ExternalError::Unparsable(n.to_string())),
        Value::Object(map) => {
            for key in KEYS {
                if let Some(v @ Value::Number(_)) = map.get(key) {
                    return score_of(v);
                }
            }
            match map.get("metrics") {
                Some(inner @ Value::Object(_)) => score_of(inner),
                _ => Err(ExternalError::Unparsable(truncate(&value.to_string()))),
            }
        }
        other => Err(ExternalError::Unparsable(truncate(&other.to_string()))),
    }
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 200;
    if s.len() <= LIMIT {
        s.to_string()
    } else {
        let mut end = LIMIT;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

struct ProcessLimit {
    free: Mutex<usize>,
    cond: Condvar,
}

impl ProcessLimit {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cond: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cond.wait(free).unwrap();
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cond.notify_one();
        out
    }
}

/// Runs an external command per frame pair, caching by
/// `(reference index, distorted index)`.
///
/// The cache assumes one kernel instance per pair of sequences; call
/// [`ExternalMetric::clear_cache`] before reusing it on other inputs.
pub struct ExternalMetric {
    name: String,
    template: Vec<String>,
    workdir: tempfile::TempDir,
    cache: Mutex<HashMap<(u64, u64), f64>>,
    invocations: AtomicU64,
    limit: ProcessLimit,
    bounds: (f64, f64),
}

impl ExternalMetric {
    pub fn new(name: &str, template: &str, max_processes: usize) -> Result<Self, ExternalError> {
        let template: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if template.is_empty() {
            return Err(ExternalError::EmptyCommand);
        }
        Ok(Self {
            name: name.to_string(),
            template,
            workdir: tempfile::Builder::new().prefix("mvqa-ext").tempdir()?,
            cache: Mutex::new(HashMap::new()),
            invocations: AtomicU64::new(0),
            limit: ProcessLimit::new(max_processes),
            bounds: (f64::NEG_INFINITY, f64::INFINITY),
        })
    }

    /// Declares the tool's score range, e.g. `(0, 100)` for VMAF.
    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = (lo, hi);
        self
    }

    /// Number of times the external command has been started.
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }

    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }

    fn command_line(
        &self,
        reference: &Path,
        distorted: &Path,
        width: usize,
        height: usize,
    ) -> Vec<String> {
        self.template
            .iter()
            .map(|arg| {
                arg.replace("{ref}", &reference.display().to_string())
                    .replace("{dist}", &distorted.display().to_string())
                    .replace("{width}", &width.to_string())
                    .replace("{height}", &height.to_string())
            })
            .collect()
    }

    /// Runs the tool once on two whole sequences and returns every score it
    /// reports, in order.
    pub fn score_files(
        &self,
        reference: &Path,
        distorted: &Path,
        width: usize,
        height: usize,
    ) -> Result<Vec<f64>, ExternalError> {
        let argv = self.command_line(reference, distorted, width, height);
        self.limit.run(|| {
            self.invocations.fetch_add(1, Ordering::Relaxed);
            let output = Command::new(&argv[0])
                .args(&argv[1..])
                .stdin(Stdio::null())
                .output()
                .map_err(|e| match e.kind() {
                    io::ErrorKind::NotFound => ExternalError::ToolMissing(argv[0].clone()),
                    _ => ExternalError::Io(e),
                })?;
            if !output.status.success() {
                return Err(ExternalError::ExitStatus {
                    command: argv.join(" "),
                    status: output.status.to_string(),
                    stderr: truncate(String::from_utf8_lossy(&output.stderr).trim()),
                });
            }
            parse_scores(&String::from_utf8_lossy(&output.stdout))
        })
    }

    fn write_frame(&self, frame: &Frame) -> Result<PathBuf, ExternalError> {
        let file = tempfile::Builder::new()
            .suffix(".y4m")
            .tempfile_in(self.workdir.path())?;
        let (file, path) = file.keep().map_err(|e| e.error)?;
        let rate = FrameRate::hz(1).expect("nonzero");
        let mut w = SequenceWriter::new(
            BufWriter::new(file),
            *frame.geometry(),
            rate,
            VideoFormat::Y4m,
        )
        .map_err(to_io)?;
        w.write_frame(frame).map_err(to_io)?;
        w.finish().map_err(to_io)?;
        Ok(path)
    }

    fn score_uncached(&self, reference: &Frame, distorted: &Frame) -> Result<f64, ExternalError> {
        let ref_path = self.write_frame(reference)?;
        let dist_path = self.write_frame(distorted)?;
        let result = self.score_files(&ref_path, &dist_path, reference.width(), reference.height());
        let _ = std::fs::remove_file(&ref_path);
        let _ = std::fs::remove_file(&dist_path);
        match result?.as_slice() {
            [one] => Ok(*one),
            many => Err(ExternalError::Unparsable(format!(
                "expected one score for a frame pair, got {}",
                many.len()
            ))),
        }
    }
}

fn to_io(e: crate::video_io::VideoError) -> ExternalError {
    match e {
        crate::video_io::VideoError::Io(e) => ExternalError::Io(e),
        other => ExternalError::Io(io::Error::other(other.to_string())),
    }
}

impl MetricKernel for ExternalMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn pooling(&self) -> Pooling {
        Pooling::WeightedMeanOfScores
    }

    fn perfect_score(&self) -> f64 {
        self.bounds.1
    }

    fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError> {
        check_geometry(reference, distorted)?;
        let key = (reference.index, distorted.index);
        if let Some(&hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(PairScore::plain(hit));
        }
        let score = self.score_uncached(reference, distorted)?;
        self.cache.lock().unwrap().insert(key, score);
        Ok(PairScore::plain(score))
    }

    fn finalize(&self, pooled: f64, _all_perfect: bool) -> f64 {
        pooled
    }

    fn settings(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "command": self.template.join(" "),
        })
    }
}

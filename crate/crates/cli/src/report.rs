//! JSON report written by `mvqa evaluate`.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use matched_vqa::matched::MatchedResult;
use matched_vqa::video_io::SequenceInfo;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: Tool = Tool {
    name: "mvqa",
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Serialize)]
pub struct InputReport {
    pub path: String,
    /// Hex SHA-256 of the file bytes; absent for standard input.
    pub sha256: Option<String>,
    pub format: matched_vqa::video_io::VideoFormat,
    pub frame_rate: matched_vqa::schedule::FrameRate,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: matched_vqa::frame::ChromaSampling,
    pub frames: Option<u64>,
}

impl InputReport {
    pub fn new(path: &Path, info: &SequenceInfo) -> io::Result<Self> {
        let sha256 = if path.as_os_str() == "-" {
            None
        } else {
            Some(file_sha256(path)?)
        };
        let g = &info.geometry;
        Ok(Self {
            path: path.display().to_string(),
            sha256,
            format: info.format,
            frame_rate: info.frame_rate,
            width: g.width,
            height: g.height,
            bit_depth: g.bit_depth,
            chroma: g.chroma,
            frames: info.frame_count,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Inputs {
    pub reference: InputReport,
    pub distorted: InputReport,
}

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub tool: Tool,
    /// RFC 3339 UTC time; left out with `--deterministic`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub inputs: Inputs,
    pub kernel: serde_json::Value,
    pub result: MatchedResult,
}

pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

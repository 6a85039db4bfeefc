//! Streaming readers and writers for Y4M and headerless planar YUV.
//!
//! Readers are plain iterators over frames: nothing is buffered beyond the
//! frame being decoded, so sequences of any length can be processed in
//! constant memory. 10-bit samples use two little-endian bytes on disk.

mod y4m;

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::frame::{Frame, FrameError, FrameGeometry};
use crate::schedule::FrameRate;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("cannot open {path}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported chroma tag {0:?}")]
    UnsupportedChroma(String),
    #[error("frame {0}: expected a FRAME marker")]
    MissingFrameMarker(u64),
    #[error("trailing {0} bytes do not form a whole frame")]
    TrailingBytes(u64),
    #[error("headerless YUV needs explicit width, height, bit depth, chroma and frame rate")]
    MissingGeometry,
    #[error("frame {index} has geometry {got:?}, expected {expected:?}")]
    GeometryMismatch {
        index: u64,
        expected: FrameGeometry,
        got: FrameGeometry,
    },
    #[error("unknown video format {0:?} (expected y4m or yuv)")]
    UnknownFormat(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoFormat {
    Y4m,
    /// Headerless planar YUV, planes back to back, frames back to back.
    Raw,
}

impl VideoFormat {
    /// Guesses from the file extension; anything but `.y4m` is raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("y4m") => VideoFormat::Y4m,
            _ => VideoFormat::Raw,
        }
    }
}

impl FromStr for VideoFormat {
    type Err = VideoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "y4m" | "yuv4mpeg2" => Ok(VideoFormat::Y4m),
            "yuv" | "raw" => Ok(VideoFormat::Raw),
            _ => Err(VideoError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for VideoFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VideoFormat::Y4m => "y4m",
            VideoFormat::Raw => "yuv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceInfo {
    pub geometry: FrameGeometry,
    pub frame_rate: FrameRate,
    /// `None` for pipes, where the length is only known after exhaustion.
    pub frame_count: Option<u64>,
    pub source: String,
    pub format: VideoFormat,
}

impl SequenceInfo {
    pub fn duration_secs(&self) -> Option<f64> {
        self.frame_count
            .map(|n| n as f64 * self.frame_rate.den() as f64 / self.frame_rate.num() as f64)
    }
}

/// How to interpret an input. Y4M headers take precedence over `geometry`
/// and `frame_rate`; headerless input requires both.
#[derive(Debug, Clone, Default)]
pub struct OpenOptions {
    pub format: Option<VideoFormat>,
    pub geometry: Option<FrameGeometry>,
    pub frame_rate: Option<FrameRate>,
    pub max_frames: Option<u64>,
}

/// `-` means standard input / output.
fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub fn open_sequence(
    path: &Path,
    options: &OpenOptions,
) -> Result<(SequenceInfo, FrameReader), VideoError> {
    let source = path.display().to_string();
    if is_stdio(path) {
        let reader: Box<dyn BufRead + Send> = Box::new(BufReader::new(io::stdin()));
        return open_stream(reader, None, source, options);
    }
    let file = File::open(path).map_err(|source| VideoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(file);

    let format = match options.format {
        Some(f) => f,
        None => {
            if reader.fill_buf()?.starts_with(y4m::MAGIC) {
                VideoFormat::Y4m
            } else {
                VideoFormat::Raw
            }
        }
    };
    if format == VideoFormat::Y4m {
        let header = read_y4m_header(&mut reader)?;
        let count = count_y4m_frames(&mut reader, &header.geometry, len)?;
        let options = OpenOptions {
            format: Some(format),
            ..options.clone()
        };
        return finish_y4m(Box::new(reader), header, Some(count), source, &options);
    }
    let options = OpenOptions {
        format: Some(format),
        ..options.clone()
    };
    open_stream(Box::new(reader), Some(len), source, &options)
}

/// Opens any byte stream. `len` enables the whole-frame check for raw input.
pub fn open_stream(
    mut reader: Box<dyn BufRead + Send>,
    len: Option<u64>,
    source: String,
    options: &OpenOptions,
) -> Result<(SequenceInfo, FrameReader), VideoError> {
    let format = match options.format {
        Some(f) => f,
        None if reader.fill_buf()?.starts_with(y4m::MAGIC) => VideoFormat::Y4m,
        None => VideoFormat::Raw,
    };
    match format {
        VideoFormat::Y4m => {
            let header = read_y4m_header(&mut reader)?;
            finish_y4m(reader, header, None, source, options)
        }
        VideoFormat::Raw => {
            let (geometry, frame_rate) = options
                .geometry
                .zip(options.frame_rate)
                .ok_or(VideoError::MissingGeometry)?;
            let frame_count = match len {
                Some(len) => {
                    let frame_bytes = geometry.frame_bytes() as u64;
                    let trailing = len % frame_bytes;
                    if trailing != 0 {
                        return Err(VideoError::TrailingBytes(trailing));
                    }
                    Some(len / frame_bytes)
                }
                None => None,
            };
            let info = SequenceInfo {
                geometry,
                frame_rate,
                frame_count: clamp_count(frame_count, options.max_frames),
                source,
                format,
            };
            Ok((
                info.clone(),
                FrameReader::new(reader, info, options.max_frames),
            ))
        }
    }
}

fn clamp_count(count: Option<u64>, max: Option<u64>) -> Option<u64> {
    match (count, max) {
        (Some(c), Some(m)) => Some(c.min(m)),
        (c, _) => c,
    }
}

fn finish_y4m(
    reader: Box<dyn BufRead + Send>,
    header: y4m::Header,
    frame_count: Option<u64>,
    source: String,
    options: &OpenOptions,
) -> Result<(SequenceInfo, FrameReader), VideoError> {
    if let Some(rate) = options.frame_rate {
        if rate != header.frame_rate {
            log::warn!(
                "{source}: Y4M header says {} Hz, ignoring requested {} Hz",
                header.frame_rate,
                rate
            );
        }
    }
    if let Some(g) = options.geometry {
        if g != header.geometry {
            log::warn!("{source}: Y4M header geometry overrides the requested geometry");
        }
    }
    let info = SequenceInfo {
        geometry: header.geometry,
        frame_rate: header.frame_rate,
        frame_count: clamp_count(frame_count, options.max_frames),
        source,
        format: VideoFormat::Y4m,
    };
    Ok((
        info.clone(),
        FrameReader::new(reader, info, options.max_frames),
    ))
}

fn read_line_limited<R: BufRead + ?Sized>(reader: &mut R, buf: &mut Vec<u8>) -> io::Result<usize> {
    buf.clear();
    let n = reader.take(y4m::MAX_LINE as u64).read_until(b'\n', buf)?;
    if buf.last() == Some(&b'\n') {
        buf.pop();
    } else if n >= y4m::MAX_LINE {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "line too long"));
    }
    Ok(n)
}

fn read_y4m_header<R: BufRead + ?Sized>(reader: &mut R) -> Result<y4m::Header, VideoError> {
    let mut line = Vec::new();
    if read_line_limited(reader, &mut line)? == 0 {
        return Err(VideoError::MalformedHeader("empty input".into()));
    }
    y4m::parse_header(&line)
}

/// Walks the FRAME markers with seeks and rewinds to where it started.
/// A trailing partial frame is left for the reader to report.
fn count_y4m_frames(
    reader: &mut BufReader<File>,
    geometry: &FrameGeometry,
    len: u64,
) -> Result<u64, VideoError> {
    let start = reader.stream_position()?;
    let frame_bytes = geometry.frame_bytes() as u64;
    let mut line = Vec::new();
    let mut count = 0;
    loop {
        if read_line_limited(reader, &mut line)? == 0 || !line.starts_with(y4m::FRAME_MARKER) {
            break;
        }
        let pos = reader.stream_position()?;
        if pos + frame_bytes > len {
            break;
        }
        reader.seek_relative(frame_bytes as i64)?;
        count += 1;
    }
    reader.seek(io::SeekFrom::Start(start))?;
    Ok(count)
}

/// Sequential frame iterator. Frames come out with `index` set to their
/// 0-based position.
pub struct FrameReader {
    reader: Box<dyn BufRead + Send>,
    info: SequenceInfo,
    next_index: u64,
    limit: Option<u64>,
    failed: bool,
    line: Vec<u8>,
    bytes: Vec<u8>,
}

impl FrameReader {
    fn new(reader: Box<dyn BufRead + Send>, info: SequenceInfo, limit: Option<u64>) -> Self {
        let frame_bytes = info.geometry.frame_bytes();
        Self {
            reader,
            info,
            next_index: 0,
            limit,
            failed: false,
            line: Vec::new(),
            bytes: vec![0; frame_bytes],
        }
    }

    pub fn info(&self) -> &SequenceInfo {
        &self.info
    }

    /// Frames yielded so far.
    pub fn frames_read(&self) -> u64 {
        self.next_index
    }

    fn read_frame(&mut self) -> Result<Option<Frame>, VideoError> {
        if self.info.format == VideoFormat::Y4m {
            if read_line_limited(&mut self.reader, &mut self.line)? == 0 {
                return Ok(None);
            }
            let marker_ok = self.line.starts_with(y4m::FRAME_MARKER)
                && matches!(self.line.get(5), None | Some(b' '));
            if !marker_ok {
                return Err(VideoError::MissingFrameMarker(self.next_index));
            }
        }
        let got = read_full(&mut self.reader, &mut self.bytes)?;
        if got == 0 && self.info.format == VideoFormat::Raw {
            return Ok(None);
        }
        if got < self.bytes.len() {
            return Err(VideoError::TrailingBytes(got as u64));
        }
        let frame = decode_frame(&self.info.geometry, &self.bytes)?.with_index(self.next_index);
        Ok(Some(frame))
    }
}

impl Iterator for FrameReader {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.limit.is_some_and(|l| self.next_index >= l) {
            return None;
        }
        match self.read_frame() {
            Ok(Some(frame)) => {
                self.next_index += 1;
                Some(Ok(frame))
            }
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full<R: Read + ?Sized>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn decode_frame(geometry: &FrameGeometry, bytes: &[u8]) -> Result<Frame, VideoError> {
    let wide = geometry.bytes_per_sample() == 2;
    let mut offset = 0;
    let planes = (0..geometry.plane_count())
        .map(|i| {
            let (w, h) = geometry.plane_dimensions(i);
            let n = w * h * geometry.bytes_per_sample();
            let chunk = &bytes[offset..offset + n];
            offset += n;
            if wide {
                chunk
                    .chunks_exact(2)
                    .map(|b| u16::from_le_bytes([b[0], b[1]]))
                    .collect()
            } else {
                chunk.iter().map(|&b| b as u16).collect()
            }
        })
        .collect();
    Ok(Frame::from_planes(*geometry, planes)?)
}

fn encode_frame(frame: &Frame, out: &mut Vec<u8>) {
    out.clear();
    let wide = frame.geometry().bytes_per_sample() == 2;
    for plane in frame.planes() {
        if wide {
            out.extend(plane.data.iter().flat_map(|s| s.to_le_bytes()));
        } else {
            out.extend(plane.data.iter().map(|&s| s as u8));
        }
    }
}

/// Writes frames one at a time; the Y4M header goes out on construction.
pub struct SequenceWriter<W: Write> {
    out: W,
    geometry: FrameGeometry,
    format: VideoFormat,
    bytes_written: u64,
    frames_written: u64,
    scratch: Vec<u8>,
}

impl<W: Write> SequenceWriter<W> {
    pub fn new(
        mut out: W,
        geometry: FrameGeometry,
        frame_rate: FrameRate,
        format: VideoFormat,
    ) -> Result<Self, VideoError> {
        let mut bytes_written = 0;
        if format == VideoFormat::Y4m {
            let header = y4m::format_header(&geometry, frame_rate);
            out.write_all(header.as_bytes())?;
            bytes_written += header.len() as u64;
        }
        Ok(Self {
            out,
            geometry,
            format,
            bytes_written,
            frames_written: 0,
            scratch: Vec::with_capacity(geometry.frame_bytes()),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), VideoError> {
        if *frame.geometry() != self.geometry {
            return Err(VideoError::GeometryMismatch {
                index: self.frames_written,
                expected: self.geometry,
                got: *frame.geometry(),
            });
        }
        if self.format == VideoFormat::Y4m {
            self.out.write_all(b"FRAME\n")?;
            self.bytes_written += 6;
        }
        encode_frame(frame, &mut self.scratch);
        self.out.write_all(&self.scratch)?;
        self.bytes_written += self.scratch.len() as u64;
        self.frames_written += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames_written
    }

    /// Flushes and returns the total byte count.
    pub fn finish(mut self) -> Result<u64, VideoError> {
        self.out.flush()?;
        Ok(self.bytes_written)
    }

    /// Flushes and hands back the underlying writer.
    pub fn into_inner(mut self) -> Result<W, VideoError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streams `frames` to `path` (`-` for stdout) and returns the bytes written.
pub fn write_sequence<I, E>(
    geometry: FrameGeometry,
    frame_rate: FrameRate,
    frames: I,
    path: &Path,
    format: VideoFormat,
) -> Result<u64, E>
where
    I: IntoIterator<Item = Result<Frame, E>>,
    E: From<VideoError>,
{
    let out: Box<dyn Write> = if is_stdio(path) {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        let file = File::create(path).map_err(|source| VideoError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Box::new(BufWriter::new(file))
    };
    let mut writer = SequenceWriter::new(out, geometry, frame_rate, format)?;
    for frame in frames {
        writer.write_frame(&frame?)?;
    }
    Ok(writer.finish()?)
}

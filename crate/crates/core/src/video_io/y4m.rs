//! YUV4MPEG2 header handling.

use crate::frame::{ChromaSampling, FrameGeometry};
use crate::schedule::FrameRate;

use super::VideoError;

pub(crate) const MAGIC: &[u8] = b"YUV4MPEG2";
pub(crate) const FRAME_MARKER: &[u8] = b"FRAME";
pub(crate) const MAX_LINE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Header {
    pub geometry: FrameGeometry,
    pub frame_rate: FrameRate,
}

fn chroma_from_tag(tag: &str) -> Result<(ChromaSampling, u8), VideoError> {
    let found = match tag {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => (ChromaSampling::Cs420, 8),
        "422" => (ChromaSampling::Cs422, 8),
        "444" => (ChromaSampling::Cs444, 8),
        "mono" => (ChromaSampling::Mono, 8),
        "420p10" => (ChromaSampling::Cs420, 10),
        "422p10" => (ChromaSampling::Cs422, 10),
        "444p10" => (ChromaSampling::Cs444, 10),
        "mono10" => (ChromaSampling::Mono, 10),
        _ => return Err(VideoError::UnsupportedChroma(tag.to_string())),
    };
    Ok(found)
}

pub(crate) fn chroma_tag(geometry: &FrameGeometry) -> &'static str {
    match (geometry.chroma, geometry.bit_depth) {
        (ChromaSampling::Cs420, 8) => "420jpeg",
        (ChromaSampling::Cs422, 8) => "422",
        (ChromaSampling::Cs444, 8) => "444",
        (ChromaSampling::Mono, 8) => "mono",
        (ChromaSampling::Cs420, _) => "420p10 XYSCSS=420P10",
        (ChromaSampling::Cs422, _) => "422p10 XYSCSS=422P10",
        (ChromaSampling::Cs444, _) => "444p10 XYSCSS=444P10",
        (ChromaSampling::Mono, _) => "mono10",
    }
}

/// Parses a header line (without the trailing newline).
pub(crate) fn parse_header(line: &[u8]) -> Result<Header, VideoError> {
    let bad = |why: &str| VideoError::MalformedHeader(why.to_string());
    let text = std::str::from_utf8(line).map_err(|_| bad("header is not ASCII"))?;
    let mut tokens = text.split(' ').filter(|t| !t.is_empty());
    if tokens.next().map(str::as_bytes) != Some(MAGIC) {
        return Err(bad("missing YUV4MPEG2 signature"));
    }

    let (mut width, mut height, mut rate) = (None, None, None);
    let mut chroma = (ChromaSampling::Cs420, 8u8);
    for token in tokens {
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => width = Some(value.parse::<usize>().map_err(|_| bad("bad W tag"))?),
            "H" => height = Some(value.parse::<usize>().map_err(|_| bad("bad H tag"))?),
            "F" => {
                let (n, d) = value.split_once(':').ok_or_else(|| bad("bad F tag"))?;
                let n = n.parse().map_err(|_| bad("bad F tag"))?;
                let d = d.parse().map_err(|_| bad("bad F tag"))?;
                rate = Some(FrameRate::new(n, d).map_err(|_| bad("F tag must be positive"))?);
            }
            "C" => chroma = chroma_from_tag(value)?,
            "I" => {
                if value != "p" && value != "?" {
                    log::warn!("interlaced Y4M input (I{value}) is treated as progressive");
                }
            }
            // aspect ratio and extensions carry nothing we need
            "A" | "X" => {}
            _ => return Err(bad(&format!("unknown tag {token:?}"))),
        }
    }
    let width = width.ok_or_else(|| bad("missing W tag"))?;
    let height = height.ok_or_else(|| bad("missing H tag"))?;
    let frame_rate = rate.ok_or_else(|| bad("missing F tag"))?;
    let geometry = FrameGeometry::new(width, height, chroma.1, chroma.0)?;
    Ok(Header {
        geometry,
        frame_rate,
    })
}

pub(crate) fn format_header(geometry: &FrameGeometry, frame_rate: FrameRate) -> String {
    format!(
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{}\n",
        geometry.width,
        geometry.height,
        frame_rate.num(),
        frame_rate.den(),
        chroma_tag(geometry)
    )
}

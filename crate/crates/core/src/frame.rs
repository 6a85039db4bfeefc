//! Planar frame buffers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("unsupported bit depth {0} (expected 8 or 10)")]
    BitDepth(u8),
    #[error("frame dimensions must be non-zero, got {0}x{1}")]
    EmptyGeometry(usize, usize),
    #[error("plane {plane} has {got} samples, expected {expected}")]
    PlaneSize {
        plane: usize,
        got: usize,
        expected: usize,
    },
    #[error("expected {expected} planes, got {got}")]
    PlaneCount { expected: usize, got: usize },
    #[error("sample {value} in plane {plane} exceeds {bit_depth}-bit range")]
    SampleRange {
        plane: usize,
        value: u16,
        bit_depth: u8,
    },
    #[error("unknown chroma sampling {0:?}")]
    UnknownChroma(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChromaSampling {
    #[serde(rename = "420")]
    Cs420,
    #[serde(rename = "422")]
    Cs422,
    #[serde(rename = "444")]
    Cs444,
    #[serde(rename = "mono")]
    Mono,
}

impl ChromaSampling {
    pub fn plane_count(self) -> usize {
        match self {
            ChromaSampling::Mono => 1,
            _ => 3,
        }
    }

    /// Dimensions of plane `index` for a `width` x `height` frame.
    pub fn plane_dimensions(self, index: usize, width: usize, height: usize) -> (usize, usize) {
        if index == 0 {
            return (width, height);
        }
        match self {
            ChromaSampling::Cs420 => (width.div_ceil(2), height.div_ceil(2)),
            ChromaSampling::Cs422 => (width.div_ceil(2), height),
            ChromaSampling::Cs444 => (width, height),
            ChromaSampling::Mono => (0, 0),
        }
    }
}

impl fmt::Display for ChromaSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChromaSampling::Cs420 => "420",
            ChromaSampling::Cs422 => "422",
            ChromaSampling::Cs444 => "444",
            ChromaSampling::Mono => "mono",
        })
    }
}

impl FromStr for ChromaSampling {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "420" | "yuv420" | "yuv420p" => Ok(ChromaSampling::Cs420),
            "422" | "yuv422" | "yuv422p" => Ok(ChromaSampling::Cs422),
            "444" | "yuv444" | "yuv444p" => Ok(ChromaSampling::Cs444),
            "mono" | "400" | "gray" | "y" => Ok(ChromaSampling::Mono),
            _ => Err(FrameError::UnknownChroma(s.to_string())),
        }
    }
}

/// Everything needed to lay out a frame in memory or on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: ChromaSampling,
}

impl FrameGeometry {
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        chroma: ChromaSampling,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyGeometry(width, height));
        }
        if bit_depth != 8 && bit_depth != 10 {
            return Err(FrameError::BitDepth(bit_depth));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            chroma,
        })
    }

    pub fn plane_count(&self) -> usize {
        self.chroma.plane_count()
    }

    pub fn plane_dimensions(&self, index: usize) -> (usize, usize) {
        self.chroma.plane_dimensions(index, self.width, self.height)
    }

    pub fn samples_per_frame(&self) -> usize {
        (0..self.plane_count())
            .map(|i| {
                let (w, h) = self.plane_dimensions(i);
                w * h
            })
            .sum()
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    /// Size of one frame's sample payload on disk.
    pub fn frame_bytes(&self) -> usize {
        self.samples_per_frame() * self.bytes_per_sample()
    }

    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// One decoded picture. Samples of every bit depth are held as `u16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    geometry: FrameGeometry,
    planes: Vec<Plane>,
    /// 0-based position in the source sequence.
    pub index: u64,
}

impl Frame {
    /// A frame with every sample set to `value` in every plane.
    pub fn filled(geometry: FrameGeometry, value: u16) -> Self {
        let planes = (0..geometry.plane_count())
            .map(|i| {
                let (width, height) = geometry.plane_dimensions(i);
                Plane {
                    width,
                    height,
                    data: vec![value; width * height],
                }
            })
            .collect();
        Self {
            geometry,
            planes,
            index: 0,
        }
    }

    pub fn from_planes(geometry: FrameGeometry, planes: Vec<Vec<u16>>) -> Result<Self, FrameError> {
        if planes.len() != geometry.plane_count() {
            return Err(FrameError::PlaneCount {
                expected: geometry.plane_count(),
                got: planes.len(),
            });
        }
        let max = geometry.max_value();
        let planes = planes
            .into_iter()
            .enumerate()
            .map(|(i, data)| {
                let (width, height) = geometry.plane_dimensions(i);
                if data.len() != width * height {
                    return Err(FrameError::PlaneSize {
                        plane: i,
                        got: data.len(),
                        expected: width * height,
                    });
                }
                if let Some(&value) = data.iter().find(|&&v| v > max) {
                    return Err(FrameError::SampleRange {
                        plane: i,
                        value,
                        bit_depth: geometry.bit_depth,
                    });
                }
                Ok(Plane {
                    width,
                    height,
                    data,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            geometry,
            planes,
            index: 0,
        })
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.geometry.bit_depth
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, index: usize) -> &Plane {
        &self.planes[index]
    }

    /// Mutable plane access. Callers must keep samples within the bit depth.
    pub fn plane_mut(&mut self, index: usize) -> &mut Plane {
        &mut self.planes[index]
    }

    pub fn luma(&self) -> &Plane {
        &self.planes[0]
    }
}

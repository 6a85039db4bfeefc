//! Full-reference frame-pair quality kernels.
//!
//! A kernel scores one reference/distorted frame pair and says how its
//! per-pair values are to be pooled. Pooling happens in a kernel-specific
//! domain (capped dB, MSE, or plain score) and [`MetricKernel::finalize`]
//! turns a pooled mean back into a reportable score.

mod external;
mod psnr;
mod ssim;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::frame::{Frame, FrameGeometry};

pub use external::{parse_scores, ExternalError, ExternalMetric};
pub use psnr::{mse_to_db, Psnr, PsnrPooling, DEFAULT_CAP_DB};
pub use ssim::{gaussian_window, Ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("frame geometry differs: reference {reference:?}, distorted {distorted:?}")]
    GeometryMismatch {
        reference: FrameGeometry,
        distorted: FrameGeometry,
    },
    #[error("plane {plane} is {width}x{height}, smaller than the {window}x{window} SSIM window")]
    FrameTooSmall {
        plane: usize,
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("plane set {0} needs chroma planes but the frames are luma-only")]
    NoChroma(PlaneSet),
    #[error(transparent)]
    External(#[from] ExternalError),
}

/// Which planes a kernel looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneSet {
    #[default]
    Y,
    U,
    V,
    /// 6:1:1 weighted Y, U, V.
    Yuv,
}

impl PlaneSet {
    /// `(plane index, weight)` pairs, weights summing to 1.
    pub(crate) fn weights(self) -> &'static [(usize, f64)] {
        match self {
            PlaneSet::Y => &[(0, 1.0)],
            PlaneSet::U => &[(1, 1.0)],
            PlaneSet::V => &[(2, 1.0)],
            PlaneSet::Yuv => &[(0, 0.75), (1, 0.125), (2, 0.125)],
        }
    }

    pub(crate) fn check(self, frame: &Frame) -> Result<(), MetricError> {
        if self != PlaneSet::Y && frame.planes().len() < 3 {
            return Err(MetricError::NoChroma(self));
        }
        Ok(())
    }
}

impl fmt::Display for PlaneSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaneSet::Y => "y",
            PlaneSet::U => "u",
            PlaneSet::V => "v",
            PlaneSet::Yuv => "yuv",
        })
    }
}

impl FromStr for PlaneSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "y" | "luma" => Ok(PlaneSet::Y),
            "u" | "cb" => Ok(PlaneSet::U),
            "v" | "cr" => Ok(PlaneSet::V),
            "yuv" | "all" => Ok(PlaneSet::Yuv),
            _ => Err(format!("unknown plane set {s:?} (expected y, u, v or yuv)")),
        }
    }
}

/// How per-pair values combine into a sequence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    WeightedMeanOfScores,
    WeightedMeanOfMseThenDb,
}

/// A single pair's contribution in the kernel's pooling domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub value: f64,
    /// The two frames are identical in the scored planes.
    pub perfect: bool,
    /// `value` was clamped (PSNR cap).
    pub capped: bool,
}

impl PairScore {
    pub fn plain(value: f64) -> Self {
        Self {
            value,
            perfect: false,
            capped: false,
        }
    }
}

pub trait MetricKernel: Send + Sync {
    fn name(&self) -> &str;

    fn pooling(&self) -> Pooling;

    /// Score of a frame against itself.
    fn perfect_score(&self) -> f64;

    /// Closed interval valid scores fall into.
    fn bounds(&self) -> (f64, f64);

    fn higher_is_better(&self) -> bool {
        true
    }

    /// Argument order is reference first.
    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError>;

    /// Maps a (weighted) mean of pair values to a score. `all_perfect` is
    /// set when every pooled pair was identical.
    fn finalize(&self, pooled: f64, all_perfect: bool) -> f64;

    /// Stable description of the kernel settings for reports.
    fn settings(&self) -> serde_json::Value {
        serde_json::json!({ "name": self.name() })
    }

    /// Single-pair score in reporting units.
    fn score(&self, reference: &Frame, distorted: &Frame) -> Result<f64, MetricError> {
        let s = self.score_pair(reference, distorted)?;
        Ok(self.finalize(s.value, s.perfect))
    }
}

pub(crate) fn check_geometry(reference: &Frame, distorted: &Frame) -> Result<(), MetricError> {
    if reference.geometry() != distorted.geometry() {
        return Err(MetricError::GeometryMismatch {
            reference: *reference.geometry(),
            distorted: *distorted.geometry(),
        });
    }
    Ok(())
}

impl<K: MetricKernel + ?Sized> MetricKernel for Box<K> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn pooling(&self) -> Pooling {
        (**self).pooling()
    }

    fn perfect_score(&self) -> f64 {
        (**self).perfect_score()
    }

    fn bounds(&self) -> (f64, f64) {
        (**self).bounds()
    }

    fn higher_is_better(&self) -> bool {
        (**self).higher_is_better()
    }

    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError> {
        (**self).score_pair(reference, distorted)
    }

    fn finalize(&self, pooled: f64, all_perfect: bool) -> f64 {
        (**self).finalize(pooled, all_perfect)
    }

    fn settings(&self) -> serde_json::Value {
        (**self).settings()
    }
}

/// Wraps a kernel and counts `score_pair` calls.
pub struct CountingKernel<K> {
    inner: K,
    calls: AtomicU64,
}

impl<K: MetricKernel> CountingKernel<K> {
    pub fn new(inner: K) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &K {
        &self.inner
    }
}

impl<K: MetricKernel> MetricKernel for CountingKernel<K> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn pooling(&self) -> Pooling {
        self.inner.pooling()
    }

    fn perfect_score(&self) -> f64 {
        self.inner.perfect_score()
    }

    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }

    fn higher_is_better(&self) -> bool {
        self.inner.higher_is_better()
    }

    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score_pair(reference, distorted)
    }

    fn finalize(&self, pooled: f64, all_perfect: bool) -> f64 {
        self.inner.finalize(pooled, all_perfect)
    }

    fn settings(&self) -> serde_json::Value {
        self.inner.settings()
    }
}

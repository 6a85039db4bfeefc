//! Peak signal-to-noise ratio.

use serde::Serialize;

use super::{check_geometry, MetricError, MetricKernel, PairScore, PlaneSet, Pooling};
use crate::frame::{Frame, Plane};

/// Per-pair ceiling applied in frame-pooling mode.
pub const DEFAULT_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrPooling {
    /// Weighted mean of per-pair dB values.
    #[default]
    Frame,
    /// Weighted mean of per-pair MSE, converted to dB once at the end.
    /// Pair values are MSE divided by the squared peak sample value.
    Mse,
}

#[derive(Debug, Clone)]
pub struct Psnr {
    pub planes: PlaneSet,
    pub pooling: PsnrPooling,
    pub cap_db: f64,
}

impl Default for Psnr {
    fn default() -> Self {
        Self {
            planes: PlaneSet::Y,
            pooling: PsnrPooling::Frame,
            cap_db: DEFAULT_CAP_DB,
        }
    }
}

impl Psnr {
    pub fn new(planes: PlaneSet, pooling: PsnrPooling, cap_db: f64) -> Self {
        Self {
            planes,
            pooling,
            cap_db,
        }
    }

    /// Weighted MSE over the configured planes.
    pub fn mse(&self, reference: &Frame, distorted: &Frame) -> Result<f64, MetricError> {
        check_geometry(reference, distorted)?;
        self.planes.check(reference)?;
        Ok(self
            .planes
            .weights()
            .iter()
            .map(|&(p, weight)| weight * plane_mse(reference.plane(p), distorted.plane(p)))
            .sum())
    }
}

fn plane_mse(a: &Plane, b: &Plane) -> f64 {
    let sse: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    sse as f64 / a.data.len() as f64
}

/// `10 log10(peak^2 / mse)`, `+inf` for zero error.
pub fn mse_to_db(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

impl MetricKernel for Psnr {
    fn name(&self) -> &str {
        "psnr"
    }

    fn pooling(&self) -> Pooling {
        match self.pooling {
            PsnrPooling::Frame => Pooling::WeightedMeanOfScores,
            PsnrPooling::Mse => Pooling::WeightedMeanOfMseThenDb,
        }
    }

    fn perfect_score(&self) -> f64 {
        f64::INFINITY
    }

    fn bounds(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError> {
        let mse = self.mse(reference, distorted)?;
        let perfect = mse == 0.0;
        let peak = reference.geometry().max_value() as f64;
        match self.pooling {
            PsnrPooling::Mse => Ok(PairScore {
                value: mse / (peak * peak),
                perfect,
                capped: false,
            }),
            PsnrPooling::Frame => {
                let db = mse_to_db(mse, peak);
                let capped = db > self.cap_db;
                Ok(PairScore {
                    value: if capped { self.cap_db } else { db },
                    perfect,
                    capped,
                })
            }
        }
    }

    fn finalize(&self, pooled: f64, all_perfect: bool) -> f64 {
        if all_perfect {
            return f64::INFINITY;
        }
        match self.pooling {
            PsnrPooling::Frame => pooled,
            PsnrPooling::Mse => mse_to_db(pooled, 1.0),
        }
    }

    fn settings(&self) -> serde_json::Value {
        serde_json::json!({
            "name": "psnr",
            "planes": self.planes,
            "pooling": self.pooling,
            "cap_db": self.cap_db,
        })
    }
}

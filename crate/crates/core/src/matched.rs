//! Matched quality evaluation across a rational frame-rate ratio.
//!
//! Both inputs are consumed cluster by cluster. Within a cluster every
//! co-occurring (reference, downsampled) frame pair is scored once and
//! weighted by the number of virtual slots it covers; the weighted sum is
//! normalized by the virtual cluster length, and the per-cluster values are
//! averaged over all clusters.
//!
//! [`evaluate_padded`] is the integer-factor baseline (repeat each
//! downsampled frame `d` times) and [`evaluate_oracle`] expands both
//! sequences to the common rate explicitly; both exist to cross-check
//! [`evaluate_matched`].

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::frame::{Frame, FrameGeometry};
use crate::metrics::{MetricError, MetricKernel, Pooling};
use crate::schedule::{
    cluster_count, generate_schedule, ClusterSchedule, FrameRatePair, ScheduleError,
};
use crate::video_io::VideoError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error("reference geometry {reference:?} differs from downsampled {downsampled:?}")]
    GeometryMismatch {
        reference: FrameGeometry,
        downsampled: FrameGeometry,
    },
    #[error("cluster {cluster}, reference frame {ref_frame} vs downsampled frame {down_frame}")]
    Metric {
        cluster: u64,
        ref_frame: u64,
        down_frame: u64,
        #[source]
        source: MetricError,
    },
    #[error("padding evaluation needs an integer factor, got {}/{}", .0.n_ref, .0.n_down)]
    NonIntegerFactor(FrameRatePair),
}

impl EvalError {
    /// The metric failure underneath, if any.
    pub fn metric_error(&self) -> Option<&MetricError> {
        match self {
            EvalError::Metric { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Writes non-finite values as `"inf"`, `"-inf"` or `"nan"` since JSON has
/// no literal for them.
pub fn serialize_score<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(*value)
    } else if value.is_nan() {
        serializer.serialize_str("nan")
    } else if *value > 0.0 {
        serializer.serialize_str("inf")
    } else {
        serializer.serialize_str("-inf")
    }
}

fn serialize_scores<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    #[derive(Serialize)]
    struct Score(#[serde(serialize_with = "serialize_score")] f64);
    let mut seq = serializer.serialize_seq(Some(values.len()))?;
    for &v in values {
        seq.serialize_element(&Score(v))?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedResult {
    pub metric: String,
    pub pooling: Pooling,
    /// Final pooled score in reporting units.
    #[serde(serialize_with = "serialize_score")]
    pub score: f64,
    /// Mean of `cluster_scores`, before the kernel's final conversion.
    pub pooled_mean: f64,
    /// Per-cluster weighted sums divided by the virtual cluster length, in
    /// the kernel's pooling domain.
    #[serde(serialize_with = "serialize_scores")]
    pub cluster_scores: Vec<f64>,
    pub pair: FrameRatePair,
    pub clusters: u64,
    pub frame_pairs_evaluated: u64,
    /// Pairs whose value hit the kernel's cap.
    pub capped_pairs: u64,
    /// Every scored pair was identical.
    pub all_perfect: bool,
    /// Input frames were left over past the last whole cluster.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledScore {
    #[serde(serialize_with = "serialize_score")]
    pub score: f64,
    pub pooled_mean: f64,
    pub all_perfect: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Score clusters of a batch on the rayon pool.
    pub parallel: bool,
    /// Clusters held in memory at once.
    pub batch_clusters: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            batch_clusters: 2 * rayon::current_num_threads().max(1),
        }
    }
}

impl EvalOptions {
    pub fn sequential() -> Self {
        Self {
            parallel: false,
            batch_clusters: 1,
        }
    }
}

/// Maps a 1-based in-cluster frame index plus a 0-based offset to a 0-based
/// position. Every h/l lookup goes through here.
#[inline]
pub fn frame_position(offset: u64, one_based: usize) -> u64 {
    debug_assert!(one_based >= 1);
    offset + one_based as u64 - 1
}

/// Sum with a fixed binary-tree shape, so the result depends only on the
/// values and their order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

struct ClusterFrames {
    index: u64,
    reference: Vec<Frame>,
    downsampled: Vec<Frame>,
}

#[derive(Debug, Clone, Copy)]
struct ClusterScore {
    value: f64,
    all_perfect: bool,
    capped: u64,
}

fn score_cluster(
    cluster: &ClusterFrames,
    schedule: &ClusterSchedule,
    kernel: &dyn MetricKernel,
) -> Result<ClusterScore, EvalError> {
    let pair = schedule.pair();
    let mut sum = 0.0;
    let mut all_perfect = true;
    let mut capped = 0;
    for e in schedule.entries() {
        let r = &cluster.reference[frame_position(0, e.ref_frame) as usize];
        let d = &cluster.downsampled[frame_position(0, e.down_frame) as usize];
        let s = kernel
            .score_pair(r, d)
            .map_err(|source| EvalError::Metric {
                cluster: cluster.index,
                ref_frame: frame_position(cluster.index * pair.n_ref, e.ref_frame),
                down_frame: frame_position(cluster.index * pair.n_down, e.down_frame),
                source,
            })?;
        sum += e.weight as f64 * s.value;
        all_perfect &= s.perfect;
        capped += s.capped as u64;
    }
    Ok(ClusterScore {
        value: sum / pair.n_virtual as f64,
        all_perfect,
        capped,
    })
}

fn take_frames<I>(it: &mut I, n: u64, out: &mut Vec<Frame>) -> Result<(), VideoError>
where
    I: Iterator<Item = Result<Frame, VideoError>>,
{
    while (out.len() as u64) < n {
        match it.next() {
            Some(f) => out.push(f?),
            None => break,
        }
    }
    Ok(())
}

fn check_pair_geometry(reference: &Frame, downsampled: &Frame) -> Result<(), EvalError> {
    if reference.geometry() != downsampled.geometry() {
        return Err(EvalError::GeometryMismatch {
            reference: *reference.geometry(),
            downsampled: *downsampled.geometry(),
        });
    }
    Ok(())
}

/// Scores `downsampled` against `reference` cluster by cluster.
///
/// Frames are pulled lazily; at most `options.batch_clusters` clusters are
/// buffered. Sequences that do not end on a cluster boundary are truncated
/// to the last whole cluster with a warning.
pub fn evaluate_matched<R, D>(
    reference: R,
    downsampled: D,
    pair: &FrameRatePair,
    kernel: &dyn MetricKernel,
    options: &EvalOptions,
) -> Result<MatchedResult, EvalError>
where
    R: IntoIterator<Item = Result<Frame, VideoError>>,
    D: IntoIterator<Item = Result<Frame, VideoError>>,
{
    let schedule = generate_schedule(pair);
    let mut reference = reference.into_iter();
    let mut downsampled = downsampled.into_iter();
    let batch_size = options.batch_clusters.max(1);

    let mut scores: Vec<ClusterScore> = Vec::new();
    let mut batch: Vec<ClusterFrames> = Vec::with_capacity(batch_size);
    let mut leftover = (0u64, 0u64);
    let mut next_index = 0u64;
    loop {
        let mut cluster = ClusterFrames {
            index: next_index,
            reference: Vec::with_capacity(pair.n_ref as usize),
            downsampled: Vec::with_capacity(pair.n_down as usize),
        };
        take_frames(&mut reference, pair.n_ref, &mut cluster.reference)?;
        take_frames(&mut downsampled, pair.n_down, &mut cluster.downsampled)?;
        let complete = cluster.reference.len() as u64 == pair.n_ref
            && cluster.downsampled.len() as u64 == pair.n_down;
        if complete {
            if next_index == 0 {
                check_pair_geometry(&cluster.reference[0], &cluster.downsampled[0])?;
            }
            next_index += 1;
            batch.push(cluster);
        } else {
            leftover = (
                cluster.reference.len() as u64,
                cluster.downsampled.len() as u64,
            );
        }
        if batch.len() == batch_size || (!complete && !batch.is_empty()) {
            let results: Vec<Result<ClusterScore, EvalError>> =
                if options.parallel && batch.len() > 1 {
                    batch
                        .par_iter()
                        .map(|c| score_cluster(c, &schedule, kernel))
                        .collect()
                } else {
                    batch
                        .iter()
                        .map(|c| score_cluster(c, &schedule, kernel))
                        .collect()
                };
            for r in results {
                scores.push(r?);
            }
            batch.clear();
        }
        if !complete {
            break;
        }
    }

    let clusters = scores.len() as u64;
    if clusters == 0 {
        return Err(ScheduleError::TooShort {
            frames_ref: leftover.0,
            frames_down: leftover.1,
            n_ref: pair.n_ref,
            n_down: pair.n_down,
        }
        .into());
    }
    // anything beyond the last whole cluster, including unread frames, is dropped
    let more_ref = leftover.0 > 0 || reference.next().is_some();
    let more_down = leftover.1 > 0 || downsampled.next().is_some();
    let truncated = more_ref || more_down;
    if truncated {
        log::warn!(
            "evaluation truncated to {clusters} whole clusters ({} + {} frames); remaining frames ignored",
            clusters * pair.n_ref,
            clusters * pair.n_down
        );
    }

    let cluster_scores: Vec<f64> = scores.iter().map(|s| s.value).collect();
    let all_perfect = scores.iter().all(|s| s.all_perfect);
    let pooled_mean = pairwise_mean(&cluster_scores);
    Ok(MatchedResult {
        metric: kernel.name().to_string(),
        pooling: kernel.pooling(),
        score: kernel.finalize(pooled_mean, all_perfect),
        pooled_mean,
        cluster_scores,
        pair: *pair,
        clusters,
        frame_pairs_evaluated: clusters * pair.pairs_per_cluster(),
        capped_pairs: scores.iter().map(|s| s.capped).sum(),
        all_perfect,
        truncated,
    })
}

/// Integer-factor baseline: each downsampled frame is repeated `d` times and
/// compared with the `d` reference frames it covers; the result is the mean
/// over all reference frames. Grouping per downsampled frame keeps the
/// floating-point order identical to [`evaluate_matched`].
pub fn evaluate_padded<R, D>(
    reference: R,
    downsampled: D,
    pair: &FrameRatePair,
    kernel: &dyn MetricKernel,
) -> Result<PooledScore, EvalError>
where
    R: IntoIterator<Item = Result<Frame, VideoError>>,
    D: IntoIterator<Item = Result<Frame, VideoError>>,
{
    if !pair.is_integer_factor() {
        return Err(EvalError::NonIntegerFactor(*pair));
    }
    let d = pair.n_ref;
    let mut reference = reference.into_iter();
    let mut group_means = Vec::new();
    let mut all_perfect = true;
    let mut group = Vec::with_capacity(d as usize);
    for (k, low) in downsampled.into_iter().enumerate() {
        let low = low?;
        group.clear();
        take_frames(&mut reference, d, &mut group)?;
        if (group.len() as u64) < d {
            break;
        }
        let mut sum = 0.0;
        for (i, high) in group.iter().enumerate() {
            let s = kernel
                .score_pair(high, &low)
                .map_err(|source| EvalError::Metric {
                    cluster: k as u64,
                    ref_frame: k as u64 * d + i as u64,
                    down_frame: k as u64,
                    source,
                })?;
            sum += s.value;
            all_perfect &= s.perfect;
        }
        group_means.push(sum / d as f64);
    }
    if group_means.is_empty() {
        return Err(ScheduleError::TooShort {
            frames_ref: group.len() as u64,
            frames_down: 0,
            n_ref: pair.n_ref,
            n_down: pair.n_down,
        }
        .into());
    }
    let pooled_mean = pairwise_mean(&group_means);
    Ok(PooledScore {
        score: kernel.finalize(pooled_mean, all_perfect),
        pooled_mean,
        all_perfect,
    })
}

/// Brute-force reference: repeats every reference frame `n_down` times and
/// every downsampled frame `n_ref` times so both run at the common rate,
/// scores every virtual slot, and takes the plain mean. Memory grows with
/// the sequence; intended for tests and small inputs.
pub fn evaluate_oracle(
    reference: &[Frame],
    downsampled: &[Frame],
    pair: &FrameRatePair,
    kernel: &dyn MetricKernel,
) -> Result<PooledScore, EvalError> {
    let span = cluster_count(pair, reference.len() as u64, downsampled.len() as u64)?;
    let used_ref = &reference[..(span.clusters * pair.n_ref) as usize];
    let used_down = &downsampled[..(span.clusters * pair.n_down) as usize];

    let virtual_ref: Vec<&Frame> = used_ref
        .iter()
        .flat_map(|f| std::iter::repeat_n(f, pair.n_down as usize))
        .collect();
    let virtual_down: Vec<&Frame> = used_down
        .iter()
        .flat_map(|f| std::iter::repeat_n(f, pair.n_ref as usize))
        .collect();
    debug_assert_eq!(virtual_ref.len(), virtual_down.len());

    let mut sum = 0.0;
    let mut all_perfect = true;
    for (slot, (r, d)) in virtual_ref.iter().zip(&virtual_down).enumerate() {
        let s = kernel
            .score_pair(r, d)
            .map_err(|source| EvalError::Metric {
                cluster: slot as u64 / pair.n_virtual,
                ref_frame: r.index,
                down_frame: d.index,
                source,
            })?;
        sum += s.value;
        all_perfect &= s.perfect;
    }
    let pooled_mean = sum / virtual_ref.len() as f64;
    Ok(PooledScore {
        score: kernel.finalize(pooled_mean, all_perfect),
        pooled_mean,
        all_perfect,
    })
}

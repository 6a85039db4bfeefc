//! Temporal downsampling by any rational factor.
//!
//! Works one cluster at a time: `n_ref` input frames in, `n_down` frames out.
//! Averaging weights are the shared virtual-slot counts from the cluster
//! schedule, so for integer factors it is the plain mean of `d` frames.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::frame::{Frame, FrameGeometry};
use crate::schedule::{generate_schedule, FrameRatePair};
use crate::video_io::VideoError;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error("input has {got} frames, shorter than one cluster of {need}")]
    TooShort { got: u64, need: u64 },
    #[error("input frame {index} has geometry {got:?}, expected {expected:?}")]
    GeometryChange {
        index: u64,
        expected: FrameGeometry,
        got: FrameGeometry,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    /// Keep the input frame on screen at each output frame's start time.
    Drop,
    /// Overlap-weighted mean of the input frames covering each output frame.
    #[default]
    Average,
}

impl FromStr for ResampleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drop" => Ok(ResampleMethod::Drop),
            "average" | "avg" => Ok(ResampleMethod::Average),
            _ => Err(format!("unknown method {s:?} (expected drop or average)")),
        }
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMethod::Drop => "drop",
            ResampleMethod::Average => "average",
        })
    }
}

/// For each output frame of a cluster, the `(input frame, weight)` pairs
/// that feed it. Indices are 0-based; each row's weights sum to `n_ref`.
pub fn average_weights(pair: &FrameRatePair) -> Vec<Vec<(usize, u64)>> {
    let schedule = generate_schedule(pair);
    let mut rows = vec![Vec::new(); pair.n_down as usize];
    for e in schedule.entries() {
        rows[e.down_frame - 1].push((e.ref_frame - 1, e.weight));
    }
    rows
}

/// 0-based input frame shown at the start of output frame `j` of a cluster.
pub fn drop_source(pair: &FrameRatePair, j: u64) -> usize {
    // output j starts at virtual stamp j * n_ref; input i spans [i * n_down, (i+1) * n_down)
    (j * pair.n_ref / pair.n_down) as usize
}

/// `acc / div` rounded half away from zero, for non-negative `acc`.
fn round_div(acc: u64, div: u64) -> u16 {
    ((2 * acc + div) / (2 * div)) as u16
}

fn average_frame(inputs: &[Frame], row: &[(usize, u64)], n_ref: u64) -> Frame {
    let first = &inputs[row[0].0];
    let mut out = Frame::filled(*first.geometry(), 0);
    let mut acc: Vec<u64> = Vec::new();
    for p in 0..first.planes().len() {
        let n = first.plane(p).data.len();
        acc.clear();
        acc.resize(n, 0);
        for &(i, w) in row {
            for (a, &s) in acc.iter_mut().zip(&inputs[i].plane(p).data) {
                *a += w * s as u64;
            }
        }
        for (o, &a) in out.plane_mut(p).data.iter_mut().zip(&acc) {
            *o = round_div(a, n_ref);
        }
    }
    out
}

/// Iterator adapter produced by [`downsample`].
pub struct Downsampler<I> {
    input: I,
    pair: FrameRatePair,
    method: ResampleMethod,
    weights: Vec<Vec<(usize, u64)>>,
    geometry: Option<FrameGeometry>,
    cluster: Vec<Frame>,
    pending: VecDeque<Frame>,
    clusters_done: u64,
    consumed: u64,
    finished: bool,
}

pub fn downsample<I>(
    frames: I,
    pair: FrameRatePair,
    method: ResampleMethod,
) -> Downsampler<I::IntoIter>
where
    I: IntoIterator<Item = Result<Frame, VideoError>>,
{
    Downsampler {
        input: frames.into_iter(),
        weights: match method {
            ResampleMethod::Average => average_weights(&pair),
            ResampleMethod::Drop => Vec::new(),
        },
        pair,
        method,
        geometry: None,
        cluster: Vec::with_capacity(pair.n_ref as usize),
        pending: VecDeque::with_capacity(pair.n_down as usize),
        clusters_done: 0,
        consumed: 0,
        finished: false,
    }
}

impl<I> Downsampler<I>
where
    I: Iterator<Item = Result<Frame, VideoError>>,
{
    /// Whole clusters emitted so far.
    pub fn clusters(&self) -> u64 {
        self.clusters_done
    }

    fn fill_cluster(&mut self) -> Result<bool, ResampleError> {
        self.cluster.clear();
        while (self.cluster.len() as u64) < self.pair.n_ref {
            match self.input.next() {
                Some(frame) => {
                    let frame = frame?;
                    let g = *frame.geometry();
                    match self.geometry {
                        None => self.geometry = Some(g),
                        Some(expected) if expected != g => {
                            return Err(ResampleError::GeometryChange {
                                index: self.consumed,
                                expected,
                                got: g,
                            })
                        }
                        _ => {}
                    }
                    self.consumed += 1;
                    self.cluster.push(frame);
                }
                None => break,
            }
        }
        if (self.cluster.len() as u64) == self.pair.n_ref {
            return Ok(true);
        }
        if self.clusters_done == 0 {
            return Err(ResampleError::TooShort {
                got: self.cluster.len() as u64,
                need: self.pair.n_ref,
            });
        }
        if !self.cluster.is_empty() {
            log::warn!(
                "dropping {} trailing input frames that do not fill a cluster of {}",
                self.cluster.len(),
                self.pair.n_ref
            );
        }
        Ok(false)
    }

    fn emit_cluster(&mut self) {
        let base = self.clusters_done * self.pair.n_down;
        for j in 0..self.pair.n_down {
            let frame = match self.method {
                ResampleMethod::Drop => self.cluster[drop_source(&self.pair, j)].clone(),
                ResampleMethod::Average => {
                    average_frame(&self.cluster, &self.weights[j as usize], self.pair.n_ref)
                }
            };
            self.pending.push_back(frame.with_index(base + j));
        }
        self.clusters_done += 1;
    }
}

impl<I> Iterator for Downsampler<I>
where
    I: Iterator<Item = Result<Frame, VideoError>>,
{
    type Item = Result<Frame, ResampleError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(f) = self.pending.pop_front() {
            return Some(Ok(f));
        }
        if self.finished {
            return None;
        }
        match self.fill_cluster() {
            Ok(true) => {
                self.emit_cluster();
                self.pending.pop_front().map(Ok)
            }
            Ok(false) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ChromaSampling;
    use crate::schedule::derive_pair_hz;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn geometry() -> FrameGeometry {
        FrameGeometry::new(4, 2, 8, ChromaSampling::Cs420).unwrap()
    }

    fn constants(values: &[u16]) -> Vec<Result<Frame, VideoError>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Ok(Frame::filled(geometry(), v).with_index(i as u64)))
            .collect()
    }

    fn run(
        pair: FrameRatePair,
        method: ResampleMethod,
        input: Vec<Result<Frame, VideoError>>,
    ) -> Vec<Frame> {
        downsample(input, pair, method)
            .collect::<Result<_, _>>()
            .unwrap()
    }

    fn luma0(frames: &[Frame]) -> Vec<u16> {
        frames.iter().map(|f| f.luma().data[0]).collect()
    }

    #[test]
    fn average_of_constant() {
        let out = run(
            derive_pair_hz(4, 1).unwrap(),
            ResampleMethod::Average,
            constants(&[9, 9, 9, 9]),
        );
        assert_eq!(out, vec![Frame::filled(geometry(), 9)]);
    }

    #[test]
    fn average_two_to_one() {
        let out = run(
            derive_pair_hz(2, 1).unwrap(),
            ResampleMethod::Average,
            constants(&[10, 20]),
        );
        assert_eq!(luma0(&out), vec![15]);
        assert!(out[0]
            .planes()
            .iter()
            .all(|p| p.data.iter().all(|&v| v == 15)));
    }

    #[test]
    fn average_three_to_two() {
        // slot expansion at 6 Hz: output 1 covers ref {1,1,2}, output 2 covers {2,3,3}
        let out = run(
            derive_pair_hz(3, 2).unwrap(),
            ResampleMethod::Average,
            constants(&[10, 20, 30]),
        );
        assert_eq!(luma0(&out), vec![13, 27]);
        assert_eq!(out[1].index, 1);
    }

    #[test]
    fn drop_three_to_two() {
        let out = run(
            derive_pair_hz(3, 2).unwrap(),
            ResampleMethod::Drop,
            constants(&[1, 2, 3]),
        );
        assert_eq!(luma0(&out), vec![1, 2]);
    }

    #[test]
    fn drop_integer_factor_takes_every_dth() {
        let input: Vec<u16> = (0..12).collect();
        let out = run(
            derive_pair_hz(120, 40).unwrap(),
            ResampleMethod::Drop,
            constants(&input),
        );
        assert_eq!(luma0(&out), vec![0, 3, 6, 9]);
    }

    #[test]
    fn drop_matches_schedule_start() {
        for (a, b) in [(6u64, 5u64), (24, 5), (12, 5), (7, 3), (5, 2)] {
            let pair = derive_pair_hz(a, b).unwrap();
            let s = generate_schedule(&pair);
            for j in 0..b {
                let first = s
                    .entries()
                    .find(|e| e.down_frame == j as usize + 1)
                    .unwrap();
                assert_eq!(
                    drop_source(&pair, j),
                    first.ref_frame - 1,
                    "({a},{b}) j={j}"
                );
            }
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_div(3, 2), 2);
        assert_eq!(round_div(5, 2), 3);
        assert_eq!(round_div(40, 3), 13);
        assert_eq!(round_div(80, 3), 27);
        assert_eq!(round_div(0, 7), 0);
    }

    #[test]
    fn weights_equal_interval_overlaps() {
        for n_ref in 1..=16u64 {
            for n_down in 1..=n_ref {
                let Ok(pair) = derive_pair_hz(n_ref, n_down) else {
                    continue;
                };
                if pair.n_ref != n_ref {
                    continue;
                }
                let rows = average_weights(&pair);
                for (j, row) in rows.iter().enumerate() {
                    assert_eq!(row.iter().map(|&(_, w)| w).sum::<u64>(), n_ref);
                    // dense overlap of [i*n_down, (i+1)*n_down) with [j*n_ref, (j+1)*n_ref)
                    let j = j as u64;
                    let dense: Vec<(usize, u64)> = (0..n_ref)
                        .filter_map(|i| {
                            let lo = (i * n_down).max(j * n_ref);
                            let hi = ((i + 1) * n_down).min((j + 1) * n_ref);
                            (hi > lo).then(|| (i as usize, hi - lo))
                        })
                        .collect();
                    assert_eq!(row, &dense);
                }
            }
        }
    }

    #[test]
    fn integer_average_is_plain_mean() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let g = FrameGeometry::new(5, 3, 10, ChromaSampling::Cs422).unwrap();
        for d in [2u64, 3, 4, 8] {
            let frames: Vec<Frame> = (0..2 * d)
                .map(|i| {
                    let planes = (0..3)
                        .map(|p| {
                            let (w, h) = g.plane_dimensions(p);
                            (0..w * h).map(|_| rng.gen_range(0..1024)).collect()
                        })
                        .collect();
                    Frame::from_planes(g, planes).unwrap().with_index(i)
                })
                .collect();
            let out: Vec<Frame> = downsample(
                frames.iter().cloned().map(Ok),
                derive_pair_hz(d * 10, 10).unwrap(),
                ResampleMethod::Average,
            )
            .collect::<Result<_, _>>()
            .unwrap();
            assert_eq!(out.len(), 2);
            for (k, o) in out.iter().enumerate() {
                let group = &frames[k * d as usize..(k + 1) * d as usize];
                for p in 0..3 {
                    for (s, &v) in o.plane(p).data.iter().enumerate() {
                        let sum: u64 = group.iter().map(|f| f.plane(p).data[s] as u64).sum();
                        let mean = (sum as f64 / d as f64).round() as u16;
                        assert_eq!(v, mean);
                    }
                }
            }
        }
    }

    #[test]
    fn too_short_input() {
        let mut it = downsample(
            constants(&[1, 2]),
            derive_pair_hz(3, 2).unwrap(),
            ResampleMethod::Average,
        );
        assert!(matches!(
            it.next(),
            Some(Err(ResampleError::TooShort { got: 2, need: 3 }))
        ));
        assert!(it.next().is_none());
    }

    #[test]
    fn partial_tail_is_dropped() {
        let out = run(
            derive_pair_hz(6, 5).unwrap(),
            ResampleMethod::Average,
            constants(&[7; 14]),
        );
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn geometry_change_rejected() {
        let other = FrameGeometry::new(2, 2, 8, ChromaSampling::Mono).unwrap();
        let input = vec![
            Ok(Frame::filled(geometry(), 1)),
            Ok(Frame::filled(other, 1)),
        ];
        let result: Result<Vec<_>, _> = downsample(
            input,
            derive_pair_hz(2, 1).unwrap(),
            ResampleMethod::Average,
        )
        .collect();
        assert!(matches!(
            result,
            Err(ResampleError::GeometryChange { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn constant_sequences_are_fixed_points(
            v in 0u16..256,
            n_ref in 1u64..=12,
            n_down in 1u64..=12,
            clusters in 1u64..=3,
            drop in any::<bool>(),
        ) {
            prop_assume!(n_down <= n_ref);
            let pair = derive_pair_hz(n_ref, n_down).unwrap();
            let method = if drop { ResampleMethod::Drop } else { ResampleMethod::Average };
            let input = constants(&vec![v; (pair.n_ref * clusters) as usize]);
            let out = run(pair, method, input);
            prop_assert_eq!(out.len() as u64, clusters * pair.n_down);
            prop_assert!(out.iter().all(|f| f.planes().iter().all(|p| p.data.iter().all(|&s| s == v))));
        }
    }
}

use std::fs;

use matched_vqa::frame::{ChromaSampling, Frame, FrameGeometry};
use matched_vqa::matched::{evaluate_matched, evaluate_oracle, EvalOptions};
use matched_vqa::metrics::{ExternalMetric, MetricKernel, Psnr, Ssim};
use matched_vqa::resample::{downsample, ResampleError, ResampleMethod};
use matched_vqa::schedule::{derive_pair_hz, FrameRate};
use matched_vqa::video_io::{open_sequence, write_sequence, OpenOptions, VideoError, VideoFormat};

fn moving_pattern(count: usize) -> Vec<Frame> {
    let g = FrameGeometry::new(24, 16, 8, ChromaSampling::Cs420).unwrap();
    (0..count)
        .map(|t| {
            let mut f = Frame::filled(g, 128);
            for (i, v) in f.plane_mut(0).data.iter_mut().enumerate() {
                let (x, y) = (i % 24, i / 24);
                *v = ((x * 9 + y * 5 + t * 7) % 200 + 20) as u16;
            }
            f.with_index(t as u64)
        })
        .collect()
}

#[test]
fn downsample_to_file_then_evaluate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let reference = moving_pattern(24);
    let g = *reference[0].geometry();
    let ref_path = dir.path().join("ref.y4m");
    let down_path = dir.path().join("down.yuv");
    write_sequence::<_, VideoError>(
        g,
        FrameRate::hz(120).unwrap(),
        reference.iter().cloned().map(Ok),
        &ref_path,
        VideoFormat::Y4m,
    )
    .unwrap();

    let pair = derive_pair_hz(120, 50).unwrap();
    let (_, frames) = open_sequence(&ref_path, &OpenOptions::default()).unwrap();
    write_sequence::<_, ResampleError>(
        g,
        FrameRate::hz(50).unwrap(),
        downsample(frames, pair, ResampleMethod::Average),
        &down_path,
        VideoFormat::Raw,
    )
    .unwrap();
    assert_eq!(
        fs::metadata(&down_path).unwrap().len(),
        10 * g.frame_bytes() as u64
    );

    let raw = OpenOptions {
        geometry: Some(g),
        frame_rate: Some(FrameRate::hz(50).unwrap()),
        ..OpenOptions::default()
    };
    let (ref_info, ref_frames) = open_sequence(&ref_path, &OpenOptions::default()).unwrap();
    let (down_info, down_frames) = open_sequence(&down_path, &raw).unwrap();
    assert_eq!(down_info.frame_count, Some(10));
    let pair =
        matched_vqa::schedule::derive_pair(ref_info.frame_rate, down_info.frame_rate).unwrap();
    let from_files = evaluate_matched(
        ref_frames,
        down_frames,
        &pair,
        &Ssim::default(),
        &EvalOptions::default(),
    )
    .unwrap();
    assert_eq!(from_files.clusters, 2);
    assert!(!from_files.truncated);

    let (_, again) = open_sequence(&down_path, &raw).unwrap();
    let down: Vec<Frame> = again.collect::<Result<_, _>>().unwrap();
    let oracle = evaluate_oracle(&reference, &down, &pair, &Ssim::default()).unwrap();
    assert!((from_files.score - oracle.score).abs() < 1e-12);
    assert!(from_files.score < 1.0 && from_files.score > 0.0);
}

#[test]
fn drop_method_keeps_source_frames() {
    let reference = moving_pattern(12);
    let pair = derive_pair_hz(120, 100).unwrap();
    let dropped: Vec<Frame> = downsample(
        reference.iter().cloned().map(Ok),
        pair,
        ResampleMethod::Drop,
    )
    .collect::<Result<_, _>>()
    .unwrap();
    assert_eq!(dropped.len(), 10);
    // output j shows input floor(j * 6 / 5)
    for (j, f) in dropped.iter().enumerate() {
        assert_eq!(f.planes(), reference[j * 6 / 5].planes(), "output {j}");
    }
    let psnr = evaluate_matched(
        reference.iter().cloned().map(Ok),
        dropped.iter().cloned().map(Ok),
        &pair,
        &Psnr::default(),
        &EvalOptions::default(),
    )
    .unwrap();
    assert!(psnr.capped_pairs > 0 && !psnr.all_perfect);
}

#[cfg(unix)]
#[test]
fn external_metric_runs_once_per_distinct_pair() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("metric.sh");
    // score = size of the distorted file, constant here; enough to count calls
    fs::write(&script, "#!/bin/sh\nwc -c < \"$2\"\n").unwrap();
    let template = format!("sh {} {{ref}} {{dist}}", script.display());
    let kernel = ExternalMetric::new("bytes", &template, 2).unwrap();

    let pair = derive_pair_hz(3, 2).unwrap();
    let reference = moving_pattern(6);
    let distorted: Vec<Frame> = moving_pattern(4);
    let result = evaluate_matched(
        reference.iter().cloned().map(Ok),
        distorted.iter().cloned().map(Ok),
        &pair,
        &kernel,
        &EvalOptions::default(),
    )
    .unwrap();
    assert_eq!(result.clusters, 2);
    assert_eq!(kernel.invocations(), 8);
    assert!(result.score > 0.0);

    // the oracle revisits the same pairs across 12 virtual slots
    let oracle = evaluate_oracle(&reference, &distorted, &pair, &kernel).unwrap();
    assert_eq!(kernel.invocations(), 8);
    assert!((oracle.score - result.score).abs() < 1e-9);

    kernel.clear_cache();
    evaluate_oracle(&reference, &distorted, &pair, &kernel).unwrap();
    assert_eq!(kernel.invocations(), 16);
    assert_eq!(kernel.name(), "bytes");
}

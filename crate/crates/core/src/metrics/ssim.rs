//! Structural similarity with the 11x11 Gaussian window (sigma 1.5).
//!
//! Local statistics are taken over every window position that fits inside
//! the plane (no padding) and the SSIM map is averaged. Filtering is done
//! separably in `f64`.

use super::{check_geometry, MetricError, MetricKernel, PairScore, PlaneSet, Pooling};
use crate::frame::{Frame, Plane};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - center;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Ssim {
    pub planes: PlaneSet,
}

impl Ssim {
    pub fn new(planes: PlaneSet) -> Self {
        Self { planes }
    }

    pub fn frame_ssim(&self, reference: &Frame, distorted: &Frame) -> Result<f64, MetricError> {
        check_geometry(reference, distorted)?;
        self.planes.check(reference)?;
        let peak = reference.geometry().max_value() as f64;
        let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
        let mut total = 0.0;
        for &(p, weight) in self.planes.weights() {
            total += weight * plane_ssim(p, reference.plane(p), distorted.plane(p), peak, &taps)?;
        }
        Ok(total)
    }
}

/// Horizontal pass: for each row, convolve `x`, `y`, `x*x`, `y*y`, `x*y`.
fn plane_ssim(
    index: usize,
    a: &Plane,
    b: &Plane,
    peak: f64,
    taps: &[f64],
) -> Result<f64, MetricError> {
    let k = taps.len();
    if a.width < k || a.height < k {
        return Err(MetricError::FrameTooSmall {
            plane: index,
            width: a.width,
            height: a.height,
            window: k,
        });
    }
    let out_w = a.width - k + 1;
    let out_h = a.height - k + 1;
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);

    // [mu_x, mu_y, xx, yy, xy] filtered along rows, each out_w x height
    let mut rows = vec![[0.0f64; 5]; out_w * a.height];
    for y in 0..a.height {
        let ra = a.row(y);
        let rb = b.row(y);
        for x in 0..out_w {
            let mut acc = [0.0f64; 5];
            for (t, &wt) in taps.iter().enumerate() {
                let p = ra[x + t] as f64;
                let q = rb[x + t] as f64;
                acc[0] += wt * p;
                acc[1] += wt * q;
                acc[2] += wt * (p * p);
                acc[3] += wt * (q * q);
                acc[4] += wt * (p * q);
            }
            rows[y * out_w + x] = acc;
        }
    }

    let mut sum = 0.0;
    for y in 0..out_h {
        for x in 0..out_w {
            let mut m = [0.0f64; 5];
            for (t, &wt) in taps.iter().enumerate() {
                let r = &rows[(y + t) * out_w + x];
                for (mi, ri) in m.iter_mut().zip(r) {
                    *mi += wt * ri;
                }
            }
            let [mu_x, mu_y, exx, eyy, exy] = m;
            let var_x = exx - mu_x * mu_x;
            let var_y = eyy - mu_y * mu_y;
            let cov = exy - mu_x * mu_y;
            let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            sum += num / den;
        }
    }
    Ok(sum / (out_w * out_h) as f64)
}

impl MetricKernel for Ssim {
    fn name(&self) -> &str {
        "ssim"
    }

    fn pooling(&self) -> Pooling {
        Pooling::WeightedMeanOfScores
    }

    fn perfect_score(&self) -> f64 {
        1.0
    }

    fn bounds(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn score_pair(&self, reference: &Frame, distorted: &Frame) -> Result<PairScore, MetricError> {
        let value = self.frame_ssim(reference, distorted)?;
        let perfect = self
            .planes
            .weights()
            .iter()
            .all(|&(p, _)| reference.plane(p) == distorted.plane(p));
        Ok(PairScore {
            value,
            perfect,
            capped: false,
        })
    }

    fn finalize(&self, pooled: f64, _all_perfect: bool) -> f64 {
        pooled
    }

    fn settings(&self) -> serde_json::Value {
        serde_json::json!({
            "name": "ssim",
            "planes": self.planes,
            "window": SSIM_WINDOW,
            "sigma": SSIM_SIGMA,
            "k1": SSIM_K1,
            "k2": SSIM_K2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ChromaSampling, FrameGeometry};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn mono(w: usize, h: usize, data: Vec<u16>) -> Frame {
        Frame::from_planes(
            FrameGeometry::new(w, h, 8, ChromaSampling::Mono).unwrap(),
            vec![data],
        )
        .unwrap()
    }

    /// Straight from the definition: full 2-D Gaussian weights per window,
    /// no separable passes, no shared accumulators.
    fn reference_ssim(a: &[u16], b: &[u16], w: usize, h: usize) -> f64 {
        let n = SSIM_WINDOW;
        let c = (n as f64 - 1.0) / 2.0;
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (i as f64 - c, j as f64 - c);
                g[j * n + i] = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            }
        }
        let total: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= total);
        let c1 = (SSIM_K1 * 255.0f64).powi(2);
        let c2 = (SSIM_K2 * 255.0f64).powi(2);
        let mut acc = 0.0;
        let mut count = 0;
        for oy in 0..=h - n {
            for ox in 0..=w - n {
                let (mut mx, mut my) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let idx = (oy + j) * w + ox + i;
                        mx += g[j * n + i] * a[idx] as f64;
                        my += g[j * n + i] * b[idx] as f64;
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let idx = (oy + j) * w + ox + i;
                        let dx = a[idx] as f64 - mx;
                        let dy = b[idx] as f64 - my;
                        vx += g[j * n + i] * dx * dx;
                        vy += g[j * n + i] * dy * dy;
                        cxy += g[j * n + i] * dx * dy;
                    }
                }
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    fn random_plane(w: usize, h: usize, seed: u64) -> Vec<u16> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..w * h).map(|_| rng.gen_range(0..256)).collect()
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let t = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(t[i], t[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn identical_is_exactly_one() {
        let f = mono(20, 17, random_plane(20, 17, 1));
        assert_eq!(Ssim::default().score(&f, &f).unwrap(), 1.0);
        assert!(Ssim::default().score_pair(&f, &f).unwrap().perfect);
    }

    #[test]
    fn offset_only_hurts_luminance() {
        let base: Vec<u16> = (0..32 * 32)
            .map(|i| {
                let (x, y) = (i % 32, i / 32);
                (60 + 3 * x + 2 * y + ((x * y) % 7) * 4) as u16
            })
            .collect();
        let shifted: Vec<u16> = base.iter().map(|v| v + 10).collect();
        let s = Ssim::default()
            .score(&mono(32, 32, base), &mono(32, 32, shifted))
            .unwrap();
        assert!(s < 1.0 && s > 0.9, "{s}");
    }

    #[test]
    fn checkerboard_against_inverse_is_negative() {
        let board: Vec<u16> = (0..256)
            .map(|i| {
                if ((i % 16) + (i / 16)) % 2 == 0 {
                    0
                } else {
                    255
                }
            })
            .collect();
        let inverse: Vec<u16> = board.iter().map(|v| 255 - v).collect();
        let s = Ssim::default()
            .score(&mono(16, 16, board.clone()), &mono(16, 16, inverse.clone()))
            .unwrap();
        let oracle = reference_ssim(&board, &inverse, 16, 16);
        assert!(s < 0.0, "{s}");
        assert!(s > -1.0);
        assert!((s - oracle).abs() < 1e-12, "{s} vs {oracle}");
    }

    #[test]
    fn matches_direct_windowed_formula() {
        for seed in 0..5 {
            let (w, h) = (11 + seed as usize * 3, 13 + seed as usize);
            let a = random_plane(w, h, seed);
            let b = random_plane(w, h, seed + 100);
            let s = Ssim::default()
                .score(&mono(w, h, a.clone()), &mono(w, h, b.clone()))
                .unwrap();
            let oracle = reference_ssim(&a, &b, w, h);
            assert!((s - oracle).abs() < 1e-12, "seed {seed}: {s} vs {oracle}");
        }
    }

    #[test]
    fn too_small_for_window() {
        let f = mono(10, 20, vec![0; 200]);
        assert!(matches!(
            Ssim::default().score(&f, &f),
            Err(MetricError::FrameTooSmall { width: 10, .. })
        ));
        // 4:2:0 chroma of a 16x16 frame is 8x8
        let g = FrameGeometry::new(16, 16, 8, ChromaSampling::Cs420).unwrap();
        let f = Frame::filled(g, 3);
        assert!(Ssim::default().score(&f, &f).is_ok());
        assert!(Ssim::new(PlaneSet::Yuv).score(&f, &f).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bounded_and_symmetric(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let fa = mono(16, 12 + 2, random_plane(16, 14, seed_a));
            let fb = mono(16, 14, random_plane(16, 14, seed_b));
            let k = Ssim::default();
            let ab = k.score(&fa, &fb).unwrap();
            let ba = k.score(&fb, &fa).unwrap();
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert_eq!(ab.to_bits(), k.score(&fa, &fb).unwrap().to_bits());
            if seed_a != seed_b {
                prop_assert!(ab < 1.0);
            }
        }
    }
}

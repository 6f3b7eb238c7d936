//! Image comparison over the effective (ROI) pixels.
//!
//! Images are expected in `[0, 1]`. PSNR counts every channel of every
//! effective pixel, so the effective count is `channels × ROI size`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Image, RoiMask};

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Decibels; `None` when the images agree exactly (see `inf`).
    pub psnr: Option<f64>,
    /// Set when the squared error is zero and PSNR is unbounded.
    pub inf: bool,
    pub ssim: f64,
    /// Channels × ROI pixels entering the PSNR.
    pub effective_pixel_count: usize,
}

fn check_inputs(pred: &Image, truth: &Image, roi: &RoiMask) -> Result<()> {
    pred.check_same_shape(truth)?;
    roi.check_dims(pred.height(), pred.width())
}

/// `−10·log10(SSE / n)` over ROI pixels and all channels; `+∞` for a
/// perfect match.
pub fn psnr_effective(pred: &Image, truth: &Image, roi: &RoiMask) -> Result<f64> {
    check_inputs(pred, truth, roi)?;
    if roi.count() == 0 {
        return Err(Error::Precondition("empty ROI".into()));
    }
    let c = pred.channels();
    let mut sse = 0.0;
    for ((p, t), &m) in pred.data().chunks_exact(c).zip(truth.data().chunks_exact(c)).zip(roi.data()) {
        if m {
            sse += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    let n = (c * roi.count()) as f64;
    Ok(if sse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (sse / n).log10()
    })
}

fn gaussian_window() -> Vec<f64> {
    let size = 2 * SSIM_RADIUS + 1;
    let mut w: Vec<f64> = (0..size * size)
        .map(|k| {
            let dy = (k / size) as f64 - SSIM_RADIUS as f64;
            let dx = (k % size) as f64 - SSIM_RADIUS as f64;
            (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5).
///
/// Only windows that fit inside the image and are centered on an ROI pixel
/// contribute. Each channel is averaged separately, then the channels.
pub fn ssim(pred: &Image, truth: &Image, roi: &RoiMask) -> Result<f64> {
    check_inputs(pred, truth, roi)?;
    let (h, w, c) = (pred.height(), pred.width(), pred.channels());
    let r = SSIM_RADIUS;
    if h < 2 * r + 1 || w < 2 * r + 1 {
        return Err(Error::Precondition("image smaller than the 11x11 SSIM window".into()));
    }
    let window = gaussian_window();
    let size = 2 * r + 1;
    let rows: Vec<(Vec<f64>, usize)> = (r..h - r)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; c];
            let mut count = 0;
            for j in r..w - r {
                if !roi.get(i, j) {
                    continue;
                }
                count += 1;
                for (ch, sum) in sums.iter_mut().enumerate() {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for (k, wk) in window.iter().enumerate() {
                        let (ii, jj) = (i + k / size - r, j + k % size - r);
                        let x = pred.get(ii, jj, ch);
                        let y = truth.get(ii, jj, ch);
                        mx += wk * x;
                        my += wk * y;
                        xx += wk * x * x;
                        yy += wk * y * y;
                        xy += wk * x * y;
                    }
                    let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                    *sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                }
            }
            (sums, count)
        })
        .collect();
    let count: usize = rows.iter().map(|(_, n)| n).sum();
    if count == 0 {
        return Err(Error::Precondition("ROI smaller than the SSIM window".into()));
    }
    let mut per_channel = vec![0.0; c];
    for (sums, _) in &rows {
        per_channel.iter_mut().zip(sums).for_each(|(a, s)| *a += s);
    }
    Ok(per_channel.iter().map(|s| s / count as f64).sum::<f64>() / c as f64)
}

pub fn compare(pred: &Image, truth: &Image, roi: &RoiMask) -> Result<MetricReport> {
    let psnr = psnr_effective(pred, truth, roi)?;
    let ssim = ssim(pred, truth, roi)?;
    Ok(MetricReport {
        psnr: psnr.is_finite().then_some(psnr),
        inf: psnr.is_infinite(),
        ssim,
        effective_pixel_count: pred.channels() * roi.count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 3, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn identical_images_are_infinite() {
        let x = random(12, 12, 1);
        let roi = RoiMask::full(12, 12);
        assert_eq!(psnr_effective(&x, &x, &roi).unwrap(), f64::INFINITY);
        let report = compare(&x, &x, &roi).unwrap();
        assert!(report.inf && report.psnr.is_none());
        assert!((report.ssim - 1.0).abs() < 1e-12);
        assert_eq!(report.effective_pixel_count, 432);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["inf"], true);
    }

    #[test]
    fn uniform_error_gives_twenty_db() {
        let x = Image::filled(8, 8, 3, 0.5);
        let y = Image::filled(8, 8, 3, 0.4);
        let roi = RoiMask::from_fn(8, 8, |i, _| i < 5);
        assert!((psnr_effective(&x, &y, &roi).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn empty_roi_is_an_error() {
        let x = Image::filled(4, 4, 3, 0.5);
        let roi = RoiMask::from_fn(4, 4, |_, _| false);
        assert!(psnr_effective(&x, &x, &roi).is_err());
    }

    #[test]
    fn psnr_matches_double_loop() {
        let (x, y) = (random(17, 23, 2), random(17, 23, 3));
        let roi = RoiMask::from_fn(17, 23, |i, j| (i * 31 + j * 7) % 5 != 0);
        let mut sse = 0.0;
        let mut n = 0usize;
        for i in 0..17 {
            for j in 0..23 {
                if roi.get(i, j) {
                    for c in 0..3 {
                        sse += (x.get(i, j, c) - y.get(i, j, c)).powi(2);
                        n += 1;
                    }
                }
            }
        }
        let oracle = -10.0 * (sse / n as f64).log10();
        assert!((psnr_effective(&x, &y, &roi).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn psnr_ignores_non_roi_content() {
        let (x, y) = (random(9, 9, 4), random(9, 9, 5));
        let roi = RoiMask::from_fn(9, 9, |i, _| i < 4);
        let mut z = y.clone();
        z.set(8, 8, 0, 123.0);
        assert_eq!(psnr_effective(&x, &y, &roi).unwrap(), psnr_effective(&x, &z, &roi).unwrap());
    }

    #[test]
    fn negative_lowers_ssim() {
        let x = random(20, 20, 6);
        let neg = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &neg, &RoiMask::full(20, 20)).unwrap() < 1.0);
    }

    #[test]
    fn constant_shift_matches_closed_form() {
        // With y = x + δ the variances and covariance coincide, leaving only
        // the luminance term (2μ(μ+δ) + C1) / (μ² + (μ+δ)² + C1) per window.
        let x = random(24, 20, 7).map(|v| 0.2 + 0.5 * v);
        let delta = 0.07;
        let y = x.map(|v| v + delta);
        let roi = RoiMask::from_fn(24, 20, |i, j| (i + j) % 3 != 0);
        let mut weights = [[0.0f64; 11]; 11];
        let mut total = 0.0;
        for (a, row) in weights.iter_mut().enumerate() {
            for (b, wv) in row.iter_mut().enumerate() {
                let (da, db) = (a as f64 - 5.0, b as f64 - 5.0);
                *wv = (-(da * da + db * db) / 4.5).exp();
                total += *wv;
            }
        }
        let mut acc = 0.0;
        let mut n = 0;
        for c in 0..3 {
            for i in 5..19 {
                for j in 5..15 {
                    if !roi.get(i, j) {
                        continue;
                    }
                    let mut mu = 0.0;
                    for a in 0..11 {
                        for b in 0..11 {
                            mu += weights[a][b] / total * x.get(i + a - 5, j + b - 5, c);
                        }
                    }
                    let mv = mu + delta;
                    acc += (2.0 * mu * mv + 1e-4) / (mu * mu + mv * mv + 1e-4);
                    n += 1;
                }
            }
        }
        let oracle = acc / n as f64;
        assert!((ssim(&x, &y, &roi).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn tiny_roi_is_an_error() {
        let x = random(12, 12, 8);
        let roi = RoiMask::from_fn(12, 12, |i, j| i == 0 && j == 0);
        assert!(ssim(&x, &x, &roi).is_err());
    }

    proptest! {
        #[test]
        fn psnr_decreases_with_error(e1 in 0.001f64..0.2, extra in 0.001f64..0.2) {
            let x = Image::filled(6, 6, 3, 0.5);
            let roi = RoiMask::full(6, 6);
            let p1 = psnr_effective(&x, &x.map(|v| v + e1), &roi).unwrap();
            let p2 = psnr_effective(&x, &x.map(|v| v + e1 + extra), &roi).unwrap();
            prop_assert!(p2 < p1);
        }
    }
}

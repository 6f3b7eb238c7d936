use serde::{Deserialize, Serialize};

use super::regress::{zero_intercept_regress, RegressionResult};
use crate::error::{Error, Result};
use crate::imagecore::{plane_coords, CameraSettings, Image};
use crate::pipeline::DV_MAX;

#[derive(Debug, Clone, Copy)]
pub struct VignettingOptions {
    /// Digital value subtracted before taking ratios (the CRF bias).
    pub black_level: f64,
    /// Reference disc radius as a fraction of the half-diagonal.
    pub center_radius_fraction: f64,
    /// Averaged values at or above this are treated as saturated.
    pub saturation: f64,
}

impl Default for VignettingOptions {
    fn default() -> Self {
        VignettingOptions {
            black_level: 0.0,
            center_radius_fraction: 0.05,
            saturation: 0.95 * DV_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VignettingFit {
    /// Slope clamped to `[0, 1]`.
    pub gain: f64,
    pub raw_slope: f64,
    /// Unvignetted level estimated from the central disc.
    pub reference: f64,
    pub regression: RegressionResult,
}

/// Averages a stack of flat-field images over frames and channels.
fn average_stack(stack: &[Image]) -> Result<Image> {
    let first = stack
        .first()
        .ok_or_else(|| Error::Precondition("vignetting calibration needs at least one image".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut mean = Image::zeros(h, w, 1);
    for img in stack {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::shape(format!("{h}x{w} frames"), img.shape_str()));
        }
        let c = img.channels();
        for (m, px) in mean.data_mut().iter_mut().zip(img.data().chunks_exact(c)) {
            *m += px.iter().sum::<f64>() / c as f64;
        }
    }
    let n = stack.len() as f64;
    for m in mean.data_mut() {
        *m /= n;
    }
    Ok(mean)
}

/// Regresses the per-pixel falloff `1 − y/x` on `1 − cos⁴θ` through the
/// origin, with `x` the mean of the central disc.
pub fn calibrate_vignetting(
    stack: &[Image],
    settings: &CameraSettings,
    opts: &VignettingOptions,
) -> Result<VignettingFit> {
    let mean = average_stack(stack)?;
    let (h, w) = (mean.height(), mean.width());
    if mean.data().iter().any(|&v| v >= opts.saturation) {
        return Err(Error::Precondition("saturated flat field".into()));
    }

    let half_diag = ((h as f64 - 1.0).powi(2) + (w as f64 - 1.0).powi(2)).sqrt() / 2.0;
    let radius = (opts.center_radius_fraction * half_diag).max(0.5_f64.sqrt());
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..h {
        for j in 0..w {
            if (i as f64 - cy).hypot(j as f64 - cx) <= radius {
                sum += mean.get(i, j, 0) - opts.black_level;
                count += 1;
            }
        }
    }
    let reference = sum / count as f64;
    if reference <= 0.0 {
        return Err(Error::Degenerate("flat field has no signal at the center".into()));
    }

    let f2 = settings.focal_length.powi(2);
    let mut xs = Vec::with_capacity(h * w);
    let mut ys = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (a, b) = plane_coords(i, j, h, w, settings.pixel_size);
            let cos2 = f2 / (f2 + a * a + b * b);
            xs.push(1.0 - cos2 * cos2);
            ys.push(1.0 - (mean.get(i, j, 0) - opts.black_level) / reference);
        }
    }
    let slope = zero_intercept_regress(&xs, &ys)?;
    let rss = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    Ok(VignettingFit {
        gain: slope.clamp(0.0, 1.0),
        raw_slope: slope,
        reference,
        regression: RegressionResult {
            coefficients: vec![slope],
            residual_sum_squares: rss,
            sample_count: xs.len(),
            undetermined: Vec::new(),
        },
    })
}

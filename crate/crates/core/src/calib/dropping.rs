//! Edge-spread measurement on slanted-edge images.
//!
//! Each row is normalized so its bright plateau is 1 and its dark plateau
//! 0, then shifted so its 50% crossing sits at zero. The shifted rows are
//! averaged on a common sub-pixel grid, and the dropping length is the
//! distance between the 90% and 10% crossings of that average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{CameraSettings, Image};

/// Converts scan-axis samples to millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub sample_pitch_mm: f64,
}

impl ScanGeometry {
    /// Lengths reported in pixels.
    pub const PIXELS: ScanGeometry = ScanGeometry { sample_pitch_mm: 1.0 };

    /// Pixel footprint on a target plane at `depth` meters: `C·d/f`.
    pub fn object_plane(settings: &CameraSettings, depth: f64) -> Self {
        ScanGeometry {
            sample_pitch_mm: settings.pixel_size * depth / settings.focal_length * 1e3,
        }
    }

    /// Pixel pitch on the sensor itself.
    pub fn sensor_plane(settings: &CameraSettings) -> Self {
        ScanGeometry {
            sample_pitch_mm: settings.pixel_size * 1e3,
        }
    }
}

/// Row-averaged, normalized, 50%-aligned edge profile running from the
/// bright plateau (1) to the dark plateau (0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    /// Millimeters along the scan axis; the 50% level sits at 0.
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
}

/// Resampling step of the averaged profile, in pixels.
const GRID_STEP: f64 = 0.25;

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Maps the plateau levels to 1 (start) and 0 (end). Plateaus are the
/// medians of the outer quarters, which ignores the brightening a
/// renormalized blur leaves along image borders.
fn normalize(row: &mut [f64]) -> bool {
    let q = (row.len() / 4).max(1);
    let hi = median(&row[..q]);
    let lo = median(&row[row.len() - q..]);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return false;
    }
    for v in row.iter_mut() {
        *v = (*v - lo) / span;
    }
    true
}

/// First downward crossing of `level`, with linear interpolation.
fn falling_crossing(values: &[f64], level: f64) -> Option<f64> {
    values.windows(2).enumerate().find_map(|(k, w)| {
        (w[0] >= level && w[1] < level).then(|| k as f64 + (w[0] - level) / (w[0] - w[1]))
    })
}

fn sample_linear(values: &[f64], x: f64) -> f64 {
    let k = (x.floor() as usize).min(values.len() - 2);
    let t = x - k as f64;
    values[k] * (1.0 - t) + values[k + 1] * t
}

/// Builds the averaged step response of an edge image.
pub fn step_response(edge: &Image, geometry: &ScanGeometry) -> Result<StepResponse> {
    let (h, w, c) = (edge.height(), edge.width(), edge.channels());
    if w < 3 {
        return Err(Error::Precondition("edge image too narrow".into()));
    }
    let gray: Vec<f64> = edge
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().sum::<f64>() / c as f64)
        .collect();

    // Orient every row bright-to-dark.
    let left: f64 = (0..h).map(|i| gray[i * w]).sum();
    let right: f64 = (0..h).map(|i| gray[i * w + w - 1]).sum();
    let flip = left < right;

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(h);
    for i in 0..h {
        let mut row = gray[i * w..(i + 1) * w].to_vec();
        if flip {
            row.reverse();
        }
        if !normalize(&mut row) {
            continue;
        }
        if let Some(x50) = falling_crossing(&row, 0.5) {
            rows.push((row, x50));
        }
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("no crossing found: image has no edge".into()));
    }

    // Offsets every row can supply.
    let reach_left = rows.iter().map(|(_, x)| *x).fold(f64::INFINITY, f64::min);
    let reach_right = rows
        .iter()
        .map(|(_, x)| (w - 1) as f64 - x)
        .fold(f64::INFINITY, f64::min);
    let n_left = (reach_left / GRID_STEP).floor() as i64;
    let n_right = (reach_right / GRID_STEP).floor() as i64;
    if n_left < 1 || n_right < 1 {
        return Err(Error::Degenerate("no crossing found: edge touches the border".into()));
    }

    let mut positions = Vec::new();
    let mut values = Vec::new();
    for k in -n_left..=n_right {
        let offset = k as f64 * GRID_STEP;
        let mean = rows
            .iter()
            .map(|(row, x50)| sample_linear(row, x50 + offset))
            .sum::<f64>()
            / rows.len() as f64;
        positions.push(offset * geometry.sample_pitch_mm);
        values.push(mean);
    }
    if !normalize(&mut values) {
        return Err(Error::Degenerate("no crossing found: flat profile".into()));
    }
    Ok(StepResponse { positions, values })
}

impl StepResponse {
    /// Distance between the 90% and 10% crossings around the 50% point.
    pub fn dropping_length(&self) -> Result<f64> {
        let v = &self.values;
        let p = &self.positions;
        let center = p
            .iter()
            .position(|&x| x >= 0.0)
            .ok_or_else(|| Error::Degenerate("no crossing found".into()))?;
        let interp = |k: usize, level: f64| {
            let t = (v[k] - level) / (v[k] - v[k + 1]);
            p[k] + t * (p[k + 1] - p[k])
        };
        // Walk outwards from the center to the nearest crossings.
        let upper = (0..center.min(v.len() - 1))
            .rev()
            .find(|&k| v[k] >= 0.9 && v[k + 1] < 0.9)
            .map(|k| interp(k, 0.9));
        let lower = (center.saturating_sub(1)..v.len() - 1)
            .find(|&k| v[k] > 0.1 && v[k + 1] <= 0.1)
            .map(|k| interp(k, 0.1));
        match (upper, lower) {
            (Some(a), Some(b)) => Ok(b - a),
            _ => Err(Error::Degenerate("no crossing found at the 90% / 10% levels".into())),
        }
    }
}

/// 90%→10% transition width of the row-averaged edge profile, in the
/// units of `geometry`.
pub fn dropping_length(edge: &Image, geometry: &ScanGeometry) -> Result<f64> {
    step_response(edge, geometry)?.dropping_length()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{BlurDiameterMap, BlurWeightMatrix};

    /// Exact pixel-area coverage of a vertical edge at column `x0`.
    fn vertical_edge(h: usize, w: usize, x0: f64) -> Image {
        Image::from_fn(h, w, 1, |_, j, _| {
            let cover = (x0 - (j as f64 - 0.5)).clamp(0.0, 1.0);
            0.05 + 0.95 * cover
        })
    }

    #[test]
    fn hard_step_is_at_most_one_sample() {
        let img = vertical_edge(8, 32, 15.5);
        let len = dropping_length(&img, &ScanGeometry::PIXELS).unwrap();
        assert!(len <= 1.0 && len > 0.0, "{len}");
    }

    #[test]
    fn dark_to_bright_edges_are_flipped() {
        let img = vertical_edge(8, 32, 15.5).map(|v| 1.05 - v);
        assert!(dropping_length(&img, &ScanGeometry::PIXELS).unwrap() <= 1.0);
    }

    #[test]
    fn uniform_image_has_no_crossing() {
        let err = dropping_length(&Image::filled(4, 10, 3, 0.5), &ScanGeometry::PIXELS).unwrap_err();
        assert!(err.to_string().contains("no crossing"));
    }

    #[test]
    fn gaussian_blurred_edge_matches_erf_width() {
        for sigma in [2.0, 3.0, 4.0] {
            let img = vertical_edge(24, 96, 47.3);
            let blur = BlurWeightMatrix::build(&BlurDiameterMap::constant(24, 96, 6.0 * sigma));
            let blurred = blur.apply(&img).unwrap();
            let len = dropping_length(&blurred, &ScanGeometry::PIXELS).unwrap();
            let expected = 2.5631 * sigma;
            assert!((len - expected).abs() < 0.05 * expected, "σ={sigma}: {len} vs {expected}");
        }
    }

    #[test]
    fn pitch_scales_length() {
        let img = vertical_edge(6, 64, 31.0);
        let blur = BlurWeightMatrix::build(&BlurDiameterMap::constant(6, 64, 12.0));
        let blurred = blur.apply(&img).unwrap();
        let px = dropping_length(&blurred, &ScanGeometry::PIXELS).unwrap();
        let mm = dropping_length(&blurred, &ScanGeometry { sample_pitch_mm: 0.5 }).unwrap();
        assert!((mm - 0.5 * px).abs() < 1e-12);
    }
}

//! Geometric layers: field of view, radial distortion and cos⁴ vignetting.

use rayon::prelude::*;

use crate::imagecore::{plane_coords, CameraSettings, Image, SensorModelParams};

/// Horizontal field of view in radians.
pub fn compute_fov(settings: &CameraSettings) -> f64 {
    2.0 * (settings.sensor_width / (2.0 * settings.focal_length)).atan()
}

/// One bilinear tap: linear source pixel index and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub source: usize,
    pub weight: f64,
}

/// Precomputed bilinear gather for the radial distortion model.
///
/// Output pixel `p` reads `Σ taps[p][k].weight * input[taps[p][k].source]`.
/// Taps that fall outside the image are dropped, so out-of-bounds samples
/// read as zero. The table is a fixed linear operator, which makes the
/// backward pass its exact transpose.
#[derive(Debug, Clone)]
pub struct RemapTable {
    height: usize,
    width: usize,
    taps: Vec<[Tap; 4]>,
    identity: bool,
}

impl RemapTable {
    pub fn new(height: usize, width: usize, settings: &CameraSettings, params: &SensorModelParams) -> Self {
        let identity = params.k1 == 0.0 && params.k2 == 0.0 && params.k3 == 0.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let norm = settings.pixel_size / settings.focal_length;
        let zero = Tap {
            source: 0,
            weight: 0.0,
        };
        let taps = (0..height * width)
            .into_par_iter()
            .map(|p| {
                let (i, j) = (p / width, p % width);
                let dx = j as f64 - cx;
                let dy = i as f64 - cy;
                let r2 = (dx * dx + dy * dy) * norm * norm;
                let scale = 1.0 + r2 * (params.k1 + r2 * (params.k2 + r2 * params.k3));
                let sx = cx + dx * scale;
                let sy = cy + dy * scale;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let mut out = [zero; 4];
                let corners = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x0 + 1.0, (1.0 - fy) * fx),
                    (y0 + 1.0, x0, fy * (1.0 - fx)),
                    (y0 + 1.0, x0 + 1.0, fy * fx),
                ];
                for (slot, (y, x, w)) in out.iter_mut().zip(corners) {
                    if w != 0.0 && y >= 0.0 && x >= 0.0 && y < height as f64 && x < width as f64 {
                        *slot = Tap {
                            source: y as usize * width + x as usize,
                            weight: w,
                        };
                    }
                }
                out
            })
            .collect();
        RemapTable {
            height,
            width,
            taps,
            identity,
        }
    }

    pub fn taps(&self, pixel: usize) -> &[Tap; 4] {
        &self.taps[pixel]
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Bilinear gather of every channel.
    pub fn apply(&self, img: &Image) -> Image {
        assert_eq!((img.height(), img.width()), (self.height, self.width));
        if self.identity {
            return img.clone();
        }
        let c = img.channels();
        let src = img.data();
        let mut out = Image::zeros(self.height, self.width, c);
        out.data_mut()
            .par_chunks_mut(c)
            .zip(self.taps.par_iter())
            .for_each(|(px, taps)| {
                for tap in taps {
                    if tap.weight == 0.0 {
                        continue;
                    }
                    for (ch, v) in px.iter_mut().enumerate() {
                        *v += tap.weight * src[tap.source * c + ch];
                    }
                }
            });
        out
    }

    /// Transpose of [`RemapTable::apply`]: scatters each value back to its taps.
    pub fn apply_transpose(&self, img: &Image) -> Image {
        assert_eq!((img.height(), img.width()), (self.height, self.width));
        if self.identity {
            return img.clone();
        }
        let c = img.channels();
        let src = img.data();
        let mut out = Image::zeros(self.height, self.width, c);
        let dst = out.data_mut();
        for (p, taps) in self.taps.iter().enumerate() {
            for tap in taps {
                if tap.weight == 0.0 {
                    continue;
                }
                for ch in 0..c {
                    dst[tap.source * c + ch] += tap.weight * src[p * c + ch];
                }
            }
        }
        out
    }
}

/// Resamples the image through the 3-coefficient radial polynomial:
/// each output pixel at normalized radius `r` reads the input at
/// `r * (1 + k1 r² + k2 r⁴ + k3 r⁶)`.
pub fn distort(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    RemapTable::new(img.height(), img.width(), settings, params).apply(img)
}

/// Per-pixel vignetting transmission `1 − G·(1 − cos⁴θ)`, row-major.
pub fn vignette_factors(
    height: usize,
    width: usize,
    settings: &CameraSettings,
    params: &SensorModelParams,
) -> Vec<f64> {
    let f2 = settings.focal_length * settings.focal_length;
    let g = params.vignetting_gain;
    (0..height * width)
        .map(|p| {
            let (a, b) = plane_coords(p / width, p % width, height, width, settings.pixel_size);
            // cos θ = f / sqrt(f² + r²) for θ = atan(r / f)
            let cos2 = f2 / (f2 + a * a + b * b);
            1.0 - g * (1.0 - cos2 * cos2)
        })
        .collect()
}

pub(crate) fn scale_pixels(img: &Image, factors: &[f64]) -> Image {
    let c = img.channels();
    let mut out = img.clone();
    out.data_mut()
        .par_chunks_mut(c)
        .zip(factors.par_iter())
        .for_each(|(px, &k)| px.iter_mut().for_each(|v| *v *= k));
    out
}

/// cos⁴ falloff: `y = x · (1 − G_vignet · (1 − cos⁴θ))` with
/// `θ = atan(√(a² + b²) / f)` from the pixel's own plane coordinates.
pub fn vignette(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    let factors = vignette_factors(img.height(), img.width(), settings, params);
    scale_pixels(img, &factors)
}

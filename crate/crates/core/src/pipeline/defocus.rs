//! Thin-lens defocus: per-pixel circle-of-confusion diameters and the
//! spatially varying Gaussian blur operator built from them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{CameraSettings, DepthMap, Image, RoiMask, SensorModelParams};

/// Blur diameters in pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurDiameterMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl BlurDiameterMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{height}x{width} diameters"),
                format!("{} samples", data.len()),
            ));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Precondition(
                "blur diameters must be finite and >= 0".into(),
            ));
        }
        Ok(BlurDiameterMap {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, diameter: f64) -> Self {
        BlurDiameterMap {
            height,
            width,
            data: vec![diameter; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Diameter for a single depth: `G·f²·|d − U| / (N·C·d·(U − f))`, in pixels.
#[inline]
pub fn blur_diameter(depth: f64, settings: &CameraSettings, params: &SensorModelParams) -> f64 {
    let f = settings.focal_length;
    let u = settings.focus_distance;
    params.defocus_gain * f * f * (depth - u).abs()
        / (settings.aperture_number * settings.pixel_size * depth * (u - f))
}

/// Evaluates the thin-lens diameter at every pixel. Pixels outside `roi`
/// get diameter 0 and are not checked against the focal length.
pub fn blur_diameters(
    depth: &DepthMap,
    roi: Option<&RoiMask>,
    settings: &CameraSettings,
    params: &SensorModelParams,
) -> Result<BlurDiameterMap> {
    if let Some(roi) = roi {
        roi.check_dims(depth.height(), depth.width())?;
    }
    let f = settings.focal_length;
    let mut data = Vec::with_capacity(depth.data().len());
    for (p, &d) in depth.data().iter().enumerate() {
        let effective = roi.is_none_or(|m| m.data()[p]);
        if !effective {
            data.push(0.0);
            continue;
        }
        if d <= f {
            return Err(Error::Precondition(format!(
                "depth inside focal length at pixel ({}, {}): {d} <= {f}",
                p / depth.width(),
                p % depth.width()
            )));
        }
        data.push(blur_diameter(d, settings, params));
    }
    BlurDiameterMap::new(depth.height(), depth.width(), data)
}

/// How Gaussian window weights are scaled after truncation to the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelNormalization {
    /// Each source pixel's weights sum to 1 (energy conserving).
    #[default]
    Renormalized,
    /// The continuous `1 / (2πσ²)` prefactor, as written in the thin-lens model.
    Continuous,
}

/// Below this diameter a source pixel maps to itself unchanged.
pub const PASS_THROUGH_DIAMETER: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct KernelRow {
    row0: u32,
    col0: u32,
    n_rows: u32,
    n_cols: u32,
    v_off: u32,
    h_off: u32,
}

/// Sparse `(H·W) × (H·W)` blur operator in scatter form.
///
/// Row `s` (a source pixel) lists the weights it spreads onto the output
/// pixels of its clipped square window. The Gaussian window is separable,
/// so a row is stored as its clipped rectangle plus one vertical and one
/// horizontal weight vector; entry `(s, t)` is their outer product. The
/// forward apply scatters rows, the transpose apply gathers them.
#[derive(Debug, Clone)]
pub struct BlurWeightMatrix {
    height: usize,
    width: usize,
    rows: Vec<KernelRow>,
    vertical: Vec<f64>,
    horizontal: Vec<f64>,
}

/// Source rows handled per scatter band. Fixed so the summation order, and
/// therefore the result, does not depend on the worker count.
const SCATTER_BAND: usize = 8;

/// 1-D Gaussian taps for offsets `lo..=hi`, scaled by `norm`.
fn gaussian_taps(lo: i64, hi: i64, sigma: f64, mode: KernelNormalization) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut taps: Vec<f64> = (lo..=hi).map(|o| (-(o * o) as f64 * inv).exp()).collect();
    let norm = match mode {
        KernelNormalization::Renormalized => 1.0 / taps.iter().sum::<f64>(),
        KernelNormalization::Continuous => 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma),
    };
    for t in &mut taps {
        *t *= norm;
    }
    taps
}

impl BlurWeightMatrix {
    /// Builds the operator with renormalized weights.
    pub fn build(diam: &BlurDiameterMap) -> Self {
        Self::build_with(diam, KernelNormalization::Renormalized)
    }

    /// Builds the operator. Diameters under one pixel pass through;
    /// otherwise `σ = D/6` over a square window of half-width `⌈D/2⌉`,
    /// clipped at the image border.
    pub fn build_with(diam: &BlurDiameterMap, mode: KernelNormalization) -> Self {
        let (h, w) = (diam.height, diam.width);
        let per_source: Vec<(KernelRow, Vec<f64>, Vec<f64>)> = (0..h * w)
            .into_par_iter()
            .map(|p| {
                let (i, j) = ((p / w) as i64, (p % w) as i64);
                let d = diam.data[p];
                if d < PASS_THROUGH_DIAMETER {
                    let row = KernelRow {
                        row0: i as u32,
                        col0: j as u32,
                        n_rows: 1,
                        n_cols: 1,
                        v_off: 0,
                        h_off: 0,
                    };
                    return (row, vec![1.0], vec![1.0]);
                }
                let sigma = d / 6.0;
                let half = (d / 2.0).ceil() as i64;
                let (top, bottom) = ((i - half).max(0), (i + half).min(h as i64 - 1));
                let (left, right) = ((j - half).max(0), (j + half).min(w as i64 - 1));
                let v = gaussian_taps(top - i, bottom - i, sigma, mode);
                let hz = gaussian_taps(left - j, right - j, sigma, mode);
                let row = KernelRow {
                    row0: top as u32,
                    col0: left as u32,
                    n_rows: v.len() as u32,
                    n_cols: hz.len() as u32,
                    v_off: 0,
                    h_off: 0,
                };
                (row, v, hz)
            })
            .collect();

        let mut rows = Vec::with_capacity(per_source.len());
        let mut vertical = Vec::new();
        let mut horizontal = Vec::new();
        for (mut row, v, hz) in per_source {
            row.v_off = vertical.len() as u32;
            row.h_off = horizontal.len() as u32;
            vertical.extend_from_slice(&v);
            horizontal.extend_from_slice(&hz);
            rows.push(row);
        }
        BlurWeightMatrix {
            height: h,
            width: w,
            rows,
            vertical,
            horizontal,
        }
    }

    /// The operator that leaves every pixel unchanged.
    pub fn identity(height: usize, width: usize) -> Self {
        Self::build(&BlurDiameterMap::constant(height, width, 0.0))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Logical side length `H·W` of the square operator.
    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn row_nnz(&self, source: usize) -> usize {
        let r = &self.rows[source];
        (r.n_rows * r.n_cols) as usize
    }

    pub fn nnz(&self) -> usize {
        (0..self.dim()).map(|s| self.row_nnz(s)).sum()
    }

    fn factors(&self, source: usize) -> (&KernelRow, &[f64], &[f64]) {
        let r = &self.rows[source];
        let v = &self.vertical[r.v_off as usize..(r.v_off + r.n_rows) as usize];
        let hz = &self.horizontal[r.h_off as usize..(r.h_off + r.n_cols) as usize];
        (r, v, hz)
    }

    /// Nonzero entries `(target pixel, weight)` of one source row.
    pub fn row_entries(&self, source: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (r, v, hz) = self.factors(source);
        let width = self.width;
        v.iter().enumerate().flat_map(move |(dk, &wv)| {
            let k = r.row0 as usize + dk;
            hz.iter()
                .enumerate()
                .map(move |(dl, &wh)| (k * width + r.col0 as usize + dl, wv * wh))
        })
    }

    /// Dense copy, for small operators in tests and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut dense = vec![vec![0.0; n]; n];
        for (s, row) in dense.iter_mut().enumerate() {
            for (t, w) in self.row_entries(s) {
                row[t] = w;
            }
        }
        dense
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.height() == self.height && img.width() == self.width {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{} image", img.height(), img.width()),
            ))
        }
    }

    /// `y_t = Σ_s w[s, t] · x_s` per channel.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let (h, w, c) = (self.height, self.width, img.channels());
        let x = img.data();
        let bands: Vec<(usize, Vec<f64>)> = (0..h.div_ceil(SCATTER_BAND))
            .into_par_iter()
            .map(|band| {
                let first = band * SCATTER_BAND;
                let last = (first + SCATTER_BAND).min(h);
                let sources = first * w..last * w;
                let lo = sources.clone().map(|s| self.rows[s].row0 as usize).min().unwrap_or(0);
                let hi = sources
                    .clone()
                    .map(|s| (self.rows[s].row0 + self.rows[s].n_rows) as usize)
                    .max()
                    .unwrap_or(0);
                let mut acc = vec![0.0; (hi - lo) * w * c];
                for s in sources {
                    let (r, v, hz) = self.factors(s);
                    let xs = &x[s * c..(s + 1) * c];
                    for (dk, &wv) in v.iter().enumerate() {
                        let base = ((r.row0 as usize + dk - lo) * w + r.col0 as usize) * c;
                        let dst = &mut acc[base..base + hz.len() * c];
                        for (px, &wh) in dst.chunks_exact_mut(c).zip(hz) {
                            let wt = wv * wh;
                            for (o, &xv) in px.iter_mut().zip(xs) {
                                *o += wt * xv;
                            }
                        }
                    }
                }
                (lo, acc)
            })
            .collect();
        let mut out = Image::zeros(h, w, c);
        let y = out.data_mut();
        for (lo, acc) in bands {
            let start = lo * w * c;
            for (o, a) in y[start..start + acc.len()].iter_mut().zip(&acc) {
                *o += a;
            }
        }
        Ok(out)
    }

    /// `g_s = Σ_t w[s, t] · u_t` per channel: the adjoint of [`apply`](Self::apply).
    pub fn apply_transpose(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let (w, c) = (self.width, img.channels());
        let u = img.data();
        let mut out = Image::zeros(self.height, w, c);
        out.data_mut()
            .par_chunks_mut(c)
            .enumerate()
            .for_each(|(s, px)| {
                let (r, v, hz) = self.factors(s);
                for (dk, &wv) in v.iter().enumerate() {
                    let base = ((r.row0 as usize + dk) * w + r.col0 as usize) * c;
                    let mut row_acc = [0.0f64; 4];
                    for (dl, &wh) in hz.iter().enumerate() {
                        for ch in 0..c {
                            row_acc[ch] += wh * u[base + dl * c + ch];
                        }
                    }
                    for ch in 0..c {
                        px[ch] += wv * row_acc[ch];
                    }
                }
            });
        Ok(out)
    }
}

/// Shorthand for [`BlurWeightMatrix::build`].
pub fn build_blur_weights(diam: &BlurDiameterMap) -> BlurWeightMatrix {
    BlurWeightMatrix::build(diam)
}

/// Shorthand for [`BlurWeightMatrix::apply`].
pub fn apply_blur(img: &Image, weights: &BlurWeightMatrix) -> Result<Image> {
    weights.apply(img)
}

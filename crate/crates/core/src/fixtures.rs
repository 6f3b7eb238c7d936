//! Synthetic calibration targets and the desk-scale datasets built from
//! them.
//!
//! Scene generators are pure functions of a [`SceneSpec`]. The dataset
//! helpers further down render those scenes through the camera model so
//! every calibration procedure can run end to end without photographs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{
    DefocusCondition, EdgeRender, ExposureProbe, ExposureSweep, NoiseCalibSample, ScanGeometry, SweepFactor,
};
use crate::error::{Error, Result};
use crate::imagecore::{
    CameraSettings, DepthMap, Image, LayerToggles, RadianceImage, RoiMask, SensorModelParams,
};
use crate::pipeline::{forward, PipelineConfig};

fn default_depth() -> f64 {
    1.0
}

fn one() -> f64 {
    1.0
}

fn dark_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatFieldSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub level: f64,
    #[serde(default = "default_depth")]
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlantEdgeSpec {
    pub height: usize,
    pub width: usize,
    /// Edge angle from the vertical, degrees in `(0, 45]`.
    pub tilt_deg: f64,
    #[serde(default = "default_depth")]
    pub depth: f64,
    #[serde(default = "one")]
    pub bright: f64,
    #[serde(default = "dark_level")]
    pub dark: f64,
    #[serde(default = "one")]
    pub illumination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckerGridSpec {
    pub patch_rows: usize,
    pub patch_cols: usize,
    /// Side of each square patch in pixels.
    pub patch_size: usize,
    /// Black border between neighboring patches, in pixels.
    #[serde(default)]
    pub gap: usize,
    /// Per-patch RGB reflectance, row-major. Defaults to
    /// [`default_reflectances`].
    #[serde(default)]
    pub reflectances: Option<Vec<[f64; 3]>>,
    #[serde(default = "one")]
    pub illumination: f64,
    #[serde(default = "default_depth")]
    pub depth: f64,
}

impl CheckerGridSpec {
    /// 120 patches in a 12×10 layout.
    pub fn desk_default() -> Self {
        CheckerGridSpec {
            patch_rows: 12,
            patch_cols: 10,
            patch_size: 6,
            gap: 0,
            reflectances: None,
            illumination: 1.0,
            depth: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    FlatField(FlatFieldSpec),
    SlantEdge(SlantEdgeSpec),
    CheckerGrid(CheckerGridSpec),
}

/// Pixel rectangle of one checker patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRegion {
    pub patch: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub reflectance: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SceneFixture {
    pub radiance: RadianceImage,
    pub depth: DepthMap,
    pub roi: RoiMask,
    pub probes: Vec<ProbeRegion>,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::param("height/width", format!("must be positive (got {height}x{width})")));
    }
    Ok(())
}

fn check_depth(depth: f64) -> Result<()> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::param("depth", format!("must be > 0 (got {depth})")));
    }
    Ok(())
}

fn fixture(radiance: Image, depth: f64, probes: Vec<ProbeRegion>) -> Result<SceneFixture> {
    let (h, w) = (radiance.height(), radiance.width());
    Ok(SceneFixture {
        radiance: RadianceImage::new(radiance)?,
        depth: DepthMap::constant(h, w, depth),
        roi: RoiMask::full(h, w),
        probes,
    })
}

pub fn gen_flat_field(spec: &FlatFieldSpec) -> Result<SceneFixture> {
    check_dims(spec.height, spec.width)?;
    check_depth(spec.depth)?;
    if !(spec.level > 0.0 && spec.level.is_finite()) {
        return Err(Error::param("level", format!("must be > 0 (got {})", spec.level)));
    }
    fixture(Image::filled(spec.height, spec.width, 3, spec.level), spec.depth, Vec::new())
}

/// Antiderivative of `clamp(u, 0, 1)`.
fn ramp_integral(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u < 1.0 {
        0.5 * u * u
    } else {
        u - 0.5
    }
}

/// Bright-on-the-left edge through the image center, tilted clockwise
/// from the vertical. Each pixel holds its exact bright area fraction.
pub fn gen_slant_edge(spec: &SlantEdgeSpec) -> Result<SceneFixture> {
    check_dims(spec.height, spec.width)?;
    check_depth(spec.depth)?;
    if !(spec.tilt_deg > 0.0 && spec.tilt_deg <= 45.0) {
        return Err(Error::param("tilt_deg", format!("must be in (0, 45] (got {})", spec.tilt_deg)));
    }
    for (key, v) in [("bright", spec.bright), ("dark", spec.dark), ("illumination", spec.illumination)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(key, format!("must be >= 0 (got {v})")));
        }
    }
    let slope = spec.tilt_deg.to_radians().tan();
    let (cy, cx) = ((spec.height as f64 - 1.0) / 2.0, (spec.width as f64 - 1.0) / 2.0);
    let img = Image::from_fn(spec.height, spec.width, 3, |i, j, _| {
        // Bright width inside the pixel at row offset y, as a linear
        // function u(y) = u0 + slope·y over y ∈ [i − ½, i + ½].
        let u_at = |y: f64| cx + (y - cy) * slope - (j as f64 - 0.5);
        let (lo, hi) = (u_at(i as f64 - 0.5), u_at(i as f64 + 0.5));
        let cover = (ramp_integral(hi) - ramp_integral(lo)) / slope;
        spec.illumination * (spec.dark + (spec.bright - spec.dark) * cover)
    });
    fixture(img, spec.depth, Vec::new())
}

/// Reflectances spread over `[0.03, 0.95]` by additive golden-ratio
/// sequences, one phase per channel.
pub fn default_reflectances(n: usize) -> Vec<[f64; 3]> {
    const PHI: f64 = 0.618_033_988_749_894_9;
    (0..n)
        .map(|k| {
            let k = k as f64;
            [0.1, 0.45, 0.8].map(|phase| 0.03 + 0.92 * (phase + k * PHI).fract())
        })
        .collect()
}

pub fn gen_checker_grid(spec: &CheckerGridSpec) -> Result<SceneFixture> {
    check_depth(spec.depth)?;
    let n = spec.patch_rows * spec.patch_cols;
    if n == 0 || spec.patch_size == 0 {
        return Err(Error::param("patch_rows/patch_cols/patch_size", "must be positive"));
    }
    let refl = spec.reflectances.clone().unwrap_or_else(|| default_reflectances(n));
    if refl.len() != n {
        return Err(Error::param(
            "reflectances",
            format!("expected {n} entries (got {})", refl.len()),
        ));
    }
    if refl.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::param("reflectances", "must lie in [0, 1]"));
    }
    let pitch = spec.patch_size + spec.gap;
    let h = spec.patch_rows * pitch + spec.gap;
    let w = spec.patch_cols * pitch + spec.gap;
    let mut img = Image::zeros(h, w, 3);
    let mut probes = Vec::with_capacity(n);
    for (patch, r) in refl.iter().enumerate() {
        let region = ProbeRegion {
            patch,
            row0: spec.gap + (patch / spec.patch_cols) * pitch,
            col0: spec.gap + (patch % spec.patch_cols) * pitch,
            rows: spec.patch_size,
            cols: spec.patch_size,
            reflectance: *r,
        };
        for i in region.row0..region.row0 + region.rows {
            for j in region.col0..region.col0 + region.cols {
                for c in 0..3 {
                    img.set(i, j, c, r[c] * spec.illumination);
                }
            }
        }
        probes.push(region);
    }
    fixture(img, spec.depth, probes)
}

pub fn generate(spec: &SceneSpec) -> Result<SceneFixture> {
    match spec {
        SceneSpec::FlatField(s) => gen_flat_field(s),
        SceneSpec::SlantEdge(s) => gen_slant_edge(s),
        SceneSpec::CheckerGrid(s) => gen_checker_grid(s),
    }
}

/// Mean of each channel inside every probe rectangle.
pub fn probe_means(img: &Image, probes: &[ProbeRegion]) -> Result<Vec<[f64; 3]>> {
    if img.channels() != 3 {
        return Err(Error::shape("3 channels", img.shape_str()));
    }
    probes
        .iter()
        .map(|p| {
            if p.row0 + p.rows > img.height() || p.col0 + p.cols > img.width() {
                return Err(Error::Precondition(format!("probe {} outside the image", p.patch)));
            }
            // Deviations from the first sample, so a uniform patch
            // averages to its value exactly.
            let first = [0, 1, 2].map(|c| img.get(p.row0, p.col0, c));
            let mut dev = [0.0; 3];
            for i in p.row0..p.row0 + p.rows {
                for j in p.col0..p.col0 + p.cols {
                    for (c, d) in dev.iter_mut().enumerate() {
                        *d += img.get(i, j, c) - first[c];
                    }
                }
            }
            let n = (p.rows * p.cols) as f64;
            Ok([0, 1, 2].map(|c| first[c] + dev[c] / n))
        })
        .collect()
}

// Defocus rig -------------------------------------------------------------

/// Target and focus distances of the defocus grid, meters.
pub const DEFOCUS_GRID_M: [f64; 5] = [0.162, 0.312, 0.612, 0.998, 2.023];

/// Measured dropping lengths in mm, indexed `[depth][focus]` over
/// [`DEFOCUS_GRID_M`]; in-focus entries were not measured.
pub const MEASURED_DROPPING_LENGTHS_MM: [[Option<f64>; 5]; 5] = [
    [None, Some(0.860), Some(1.229), Some(1.229), Some(1.474)],
    [Some(1.912), None, Some(0.956), Some(0.956), Some(0.956)],
    [Some(8.837), Some(3.399), None, Some(1.360), Some(1.360)],
    [Some(15.234), Some(5.859), Some(2.344), None, Some(2.344)],
    [Some(31.621), Some(14.594), Some(4.865), Some(4.865), None],
];

/// Edge tilt used by the defocus renders.
pub const DEFOCUS_EDGE_TILT_DEG: f64 = 5.0;

/// All 25 `(depth, focus)` pairs, depth-major.
pub fn defocus_conditions() -> Vec<DefocusCondition> {
    DEFOCUS_GRID_M
        .iter()
        .flat_map(|&depth| DEFOCUS_GRID_M.iter().map(move |&focus| DefocusCondition { depth, focus }))
        .collect()
}

/// Small machine-vision camera: 5 mm lens at f/1.6, 3.45 µm pixels.
pub fn desk_camera(size: usize, focus: f64) -> CameraSettings {
    CameraSettings {
        aperture_number: 1.6,
        focus_distance: focus,
        focal_length: 0.005,
        pixel_size: 3.45e-6,
        sensor_width: size as f64 * 3.45e-6,
        ..Default::default()
    }
}

/// Renders the slanted edge of one condition through the defocus layer
/// alone, at `gain`, on a `size`×`size` sensor.
pub fn render_defocus_edge(condition: &DefocusCondition, gain: f64, size: usize) -> Result<EdgeRender> {
    let scene = gen_slant_edge(&SlantEdgeSpec {
        height: size,
        width: size,
        tilt_deg: DEFOCUS_EDGE_TILT_DEG,
        depth: condition.depth,
        bright: 1.0,
        dark: 0.05,
        illumination: 1.0,
    })?;
    let settings = desk_camera(size, condition.focus);
    let params = SensorModelParams {
        defocus_gain: gain,
        ..Default::default()
    };
    let toggles = LayerToggles {
        defocus: true,
        ..LayerToggles::all_off()
    };
    let trace = forward(
        scene.radiance.image(),
        Some(&scene.depth),
        None,
        &PipelineConfig::new(settings, params, toggles),
    )?;
    Ok(EdgeRender {
        image: trace.analog,
        geometry: ScanGeometry::object_plane(&settings, condition.depth),
    })
}

/// Synthetic dropping lengths (mm) over the 25-condition grid, indexed
/// `[depth][focus]`. In-focus entries carry no defocus and are reported
/// as 0.
pub fn dropping_length_table(gain: f64, size: usize) -> Result<[[f64; 5]; 5]> {
    let conditions = defocus_conditions();
    let lengths: Vec<f64> = conditions
        .par_iter()
        .map(|c| {
            if c.in_focus() {
                return Ok(0.0);
            }
            let r = render_defocus_edge(c, gain, size)?;
            crate::calib::dropping_length(&r.image, &r.geometry)
        })
        .collect::<Result<_>>()?;
    let mut table = [[0.0; 5]; 5];
    for (k, v) in lengths.into_iter().enumerate() {
        table[k / 5][k % 5] = v;
    }
    Ok(table)
}

// Exposure rig ------------------------------------------------------------

/// One `(N, t, ISO)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureSetting {
    pub aperture_number: f64,
    pub exposure_time: f64,
    pub iso: f64,
}

/// Six stops of aperture: `N² = 2, 4, …, 64`.
pub const SWEEP_APERTURES: [f64; 6] = [
    std::f64::consts::SQRT_2,
    2.0,
    2.0 * std::f64::consts::SQRT_2,
    4.0,
    4.0 * std::f64::consts::SQRT_2,
    8.0,
];
/// Six stops of exposure time, seconds.
pub const SWEEP_TIMES: [f64; 6] = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
/// Six stops of relative ISO gain.
pub const SWEEP_ISOS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// Every combination of the given lists, aperture-major then time.
pub fn exposure_sweep(apertures: &[f64], times: &[f64], isos: &[f64]) -> Vec<ExposureSetting> {
    let mut out = Vec::with_capacity(apertures.len() * times.len() * isos.len());
    for &aperture_number in apertures {
        for &exposure_time in times {
            for &iso in isos {
                out.push(ExposureSetting {
                    aperture_number,
                    exposure_time,
                    iso,
                });
            }
        }
    }
    out
}

/// The 6×6×6 = 216 combination sweep.
pub fn default_exposure_sweep() -> Vec<ExposureSetting> {
    exposure_sweep(&SWEEP_APERTURES, &SWEEP_TIMES, &SWEEP_ISOS)
}

/// Camera whose illumination cancels the pixel area so the radiance term
/// of the exposure model has constant `K = 1` (with CRF slope `a = 1`).
pub fn exposure_camera(setting: &ExposureSetting) -> CameraSettings {
    let base = desk_camera(60, 1.0);
    CameraSettings {
        aperture_number: setting.aperture_number,
        exposure_time: setting.exposure_time,
        iso: setting.iso,
        scene_illumination: 1.0 / (base.pixel_size * base.pixel_size),
        ..base
    }
}

/// Reference linear camera for the exposure and gamma fixtures.
pub fn exposure_truth() -> SensorModelParams {
    SensorModelParams {
        aggregator_qe_rgb: [6000.0, 8000.0, 5000.0],
        dark_current: 200.0,
        crf_b_rgb: [512.0, 480.0, 530.0],
        ..Default::default()
    }
}

/// Noise-free probe means of the checker grid under each setting, through
/// aggregation, dark current and the CRF.
pub fn render_checker_probes(
    grid: &SceneFixture,
    settings: &[ExposureSetting],
    params: &SensorModelParams,
) -> Result<Vec<Vec<[f64; 3]>>> {
    let params = SensorModelParams {
        noise_gain: 0.0,
        read_sigma: 0.0,
        ..*params
    };
    let toggles = LayerToggles {
        aggregator: true,
        noise: true,
        crf: true,
        ..LayerToggles::all_off()
    };
    settings
        .par_iter()
        .map(|s| {
            let config = PipelineConfig::new(exposure_camera(s), params, toggles);
            let trace = forward(grid.radiance.image(), None, None, &config)?;
            probe_means(&trace.analog, &grid.probes)
        })
        .collect()
}

/// Exposure probes of the 120-patch grid over the 216-combination sweep,
/// with optional Gaussian noise of `dv_sigma` added to each probe value.
pub fn exposure_probes(params: &SensorModelParams, dv_sigma: f64, seed: u64) -> Result<Vec<ExposureProbe>> {
    let grid = gen_checker_grid(&CheckerGridSpec::desk_default())?;
    let sweep = default_exposure_sweep();
    let means = render_checker_probes(&grid, &sweep, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, dv_sigma.max(0.0)).map_err(|e| Error::param("dv_sigma", e.to_string()))?;
    let mut probes = Vec::with_capacity(sweep.len() * grid.probes.len() * 3);
    for (s, photo) in sweep.iter().zip(&means) {
        for (region, dv) in grid.probes.iter().zip(photo) {
            for c in 0..3 {
                let jitter = if dv_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                probes.push(ExposureProbe {
                    aperture_number: s.aperture_number,
                    exposure_time: s.exposure_time,
                    iso: s.iso,
                    channel: c,
                    radiance: region.reflectance[c],
                    k: 1.0,
                    real_dv: (dv[c] + jitter).clamp(0.0, crate::pipeline::DV_MAX),
                });
            }
        }
    }
    Ok(probes)
}

/// Stop-by-stop sweeps of every patch and channel, one factor varying while
/// the other two are held at each of their values.
pub fn gamma_sweeps(params: &SensorModelParams) -> Result<Vec<ExposureSweep>> {
    let grid = gen_checker_grid(&CheckerGridSpec::desk_default())?;
    let sweep = default_exposure_sweep();
    let means = render_checker_probes(&grid, &sweep, params)?;
    let n = SWEEP_ISOS.len();
    // Index of (aperture a, time t, iso i) in the aperture-major sweep.
    let at = |a: usize, t: usize, i: usize| (a * n + t) * n + i;
    let mut out = Vec::new();
    for factor in [SweepFactor::ExposureTime, SweepFactor::Iso, SweepFactor::Aperture] {
        for p in 0..n {
            for q in 0..n {
                let indices: Vec<(usize, f64)> = (0..n)
                    .map(|k| match factor {
                        SweepFactor::ExposureTime => (at(p, k, q), SWEEP_TIMES[k].log2()),
                        SweepFactor::Iso => (at(p, q, k), SWEEP_ISOS[k].log2()),
                        SweepFactor::Aperture => (at(k, p, q), -2.0 * SWEEP_APERTURES[k].log2()),
                    })
                    .collect();
                for patch in 0..grid.probes.len() {
                    for channel in 0..3 {
                        out.push(ExposureSweep {
                            factor,
                            channel,
                            points: indices.iter().map(|&(s, x)| (x, means[s][patch][channel])).collect(),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

// Noise and vignetting ----------------------------------------------------

/// Gray levels of the six noise patches, as fractions of the full level.
pub const NOISE_PATCH_LEVELS: [f64; 6] = [0.9, 0.59, 0.36, 0.19, 0.09, 0.03];

/// Per-patch statistics of six uniform gray patches of `pixels` pixels
/// each, read from the red channel after noise, CRF and quantization.
/// `energy` is the accumulated signal of the brightest patch level 1.0.
pub fn noise_patch_samples(
    settings: &CameraSettings,
    params: &SensorModelParams,
    energy: f64,
    pixels: usize,
    seed: u64,
) -> Result<Vec<NoiseCalibSample>> {
    let toggles = LayerToggles {
        noise: true,
        crf: true,
        ..LayerToggles::all_off()
    };
    NOISE_PATCH_LEVELS
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let patch = Image::filled(1, pixels, 3, level * energy);
            let config = PipelineConfig::new(*settings, *params, toggles).with_seed(seed.wrapping_add(k as u64));
            let raw = forward(&patch, None, None, &config)?.quantize();
            let red: Vec<f64> = raw.data().iter().step_by(3).map(|&v| f64::from(v)).collect();
            NoiseCalibSample::from_values(&red, settings.iso, params.crf_b_rgb[0])
        })
        .collect()
}

/// Wide-angle camera for flat fields: a 7 mm sensor behind a 5 mm lens,
/// so the corners fall off noticeably.
pub fn vignetting_camera(width: usize) -> CameraSettings {
    CameraSettings {
        focal_length: 0.005,
        pixel_size: 7.0e-3 / width as f64,
        sensor_width: 7.0e-3,
        ..Default::default()
    }
}

/// `frames` renders of a flat field through vignetting, noise and the CRF,
/// each with its own noise seed.
pub fn flat_field_stack(
    spec: &FlatFieldSpec,
    settings: &CameraSettings,
    params: &SensorModelParams,
    frames: usize,
    seed: u64,
) -> Result<Vec<Image>> {
    let scene = gen_flat_field(spec)?;
    let toggles = LayerToggles {
        vignetting: true,
        noise: true,
        crf: true,
        ..LayerToggles::all_off()
    };
    (0..frames)
        .map(|k| {
            let config = PipelineConfig::new(*settings, *params, toggles).with_seed(seed.wrapping_add(k as u64));
            Ok(forward(scene.radiance.image(), None, None, &config)?.quantize().to_image())
        })
        .collect()
}

//! Central finite-difference checks of the analytic VJPs.
//!
//! For a layer `f` and a random cotangent `u`, the scalar `L(x) = ⟨f(x), u⟩`
//! has gradient `vjp(u)`. Every input sample is perturbed by
//! `h = 1e-6 · max(1, |x|)` and the central difference compared against the
//! analytic value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{vjp_aggregate, vjp_blur, vjp_crf, vjp_distort, vjp_pipeline, vjp_vignette};
use crate::error::Result;
use crate::imagecore::{CameraSettings, CrfKind, DepthMap, Image, LayerToggles, RoiMask, SensorModelParams};
use crate::pipeline::{
    aggregate, blur_diameters, crf_analog, forward, vignette, BlurWeightMatrix, PipelineConfig,
    RemapTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradLayer {
    Distortion,
    Vignette,
    Blur,
    Aggregate,
    CrfLinear,
    CrfGamma,
    CrfSigmoid,
    /// Every deterministic layer composed, noise off.
    Pipeline,
}

impl GradLayer {
    pub const ALL: [GradLayer; 8] = [
        GradLayer::Distortion,
        GradLayer::Vignette,
        GradLayer::Blur,
        GradLayer::Aggregate,
        GradLayer::CrfLinear,
        GradLayer::CrfGamma,
        GradLayer::CrfSigmoid,
        GradLayer::Pipeline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GradLayer::Distortion => "distortion",
            GradLayer::Vignette => "vignette",
            GradLayer::Blur => "blur",
            GradLayer::Aggregate => "aggregate",
            GradLayer::CrfLinear => "crf_linear",
            GradLayer::CrfGamma => "crf_gamma",
            GradLayer::CrfSigmoid => "crf_sigmoid",
            GradLayer::Pipeline => "pipeline",
        }
    }
}

impl std::str::FromStr for GradLayer {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        GradLayer::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| crate::error::Error::Precondition(format!("unknown layer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub tolerance: f64,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 10,
            tolerance: 1e-5,
            height: 16,
            width: 16,
            seed: 0,
        }
    }
}

/// One record of the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub trials: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Elementwise relative error between analytic and numeric gradients.
///
/// Denominator is `max(|a|, |n|)`, floored at `1e-4` times the largest
/// numeric magnitude. At the fixed step the differences carry rounding of
/// about `ε/h ≈ 1e-10` per entry, so entries far below the gradient's scale
/// are judged against the floor instead of amplifying that rounding.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-4 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Checks `vjp(u)` against central differences of `⟨f(x), u⟩` at `x`.
/// Returns the maximum elementwise relative error.
pub fn check_vjp(
    f: impl Fn(&Image) -> Image,
    vjp: impl Fn(&Image) -> Image,
    x: &Image,
    u: &Image,
) -> f64 {
    let analytic = vjp(u);
    let mut probe = x.clone();
    let mut numeric = vec![0.0; x.data().len()];
    for (k, n) in numeric.iter_mut().enumerate() {
        let x0 = x.data()[k];
        let h = 1e-6 * x0.abs().max(1.0);
        probe.data_mut()[k] = x0 + h;
        let plus = f(&probe);
        probe.data_mut()[k] = x0 - h;
        let minus = f(&probe);
        probe.data_mut()[k] = x0;
        // Differencing outputs before contracting with `u` keeps untouched
        // entries exactly zero instead of cancelling two large sums.
        let diff: f64 = plus
            .data()
            .iter()
            .zip(minus.data())
            .zip(u.data())
            .map(|((p, m), w)| (p - m) * w)
            .sum();
        *n = diff / (2.0 * h);
    }
    relative_error(analytic.data(), &numeric)
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(h, w, 3, |_, _, _| rng.random_range(lo..hi))
}

/// Settings with every layer of order one on a 16×16 image.
fn check_settings() -> CameraSettings {
    CameraSettings {
        aperture_number: 1.6,
        exposure_time: 0.5,
        iso: 2.0,
        focus_distance: 1.0,
        focal_length: 0.005,
        pixel_size: 1.5e-4,
        sensor_width: 16.0 * 1.5e-4,
        scene_illumination: 1.0,
    }
}

fn check_params(settings: &CameraSettings) -> SensorModelParams {
    let common = settings.scene_illumination * settings.pixel_size.powi(2)
        / settings.aperture_number.powi(2)
        * settings.exposure_time;
    SensorModelParams {
        k1: 0.08,
        k2: -0.01,
        k3: 0.002,
        vignetting_gain: 0.6,
        defocus_gain: 30.0,
        aggregator_qe_rgb: [0.7 / common, 1.0 / common, 1.3 / common],
        crf_a: 25.0,
        crf_b_rgb: [0.25, -0.5, 0.75],
        crf_gamma: 2.2,
        ..Default::default()
    }
}

fn crf_params(base: SensorModelParams, kind: CrfKind) -> SensorModelParams {
    SensorModelParams {
        crf_kind: kind,
        crf_a: if kind == CrfKind::Sigmoid { 1.2 } else { base.crf_a },
        ..base
    }
}

/// Runs one trial of `layer` and returns its max relative error.
fn trial(layer: GradLayer, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let s = check_settings();
    let p = check_params(&s);
    let x = random_image(rng, h, w, 0.05, 1.0);
    let u = random_image(rng, h, w, -1.0, 1.0);
    let err = match layer {
        GradLayer::Distortion => {
            let table = RemapTable::new(h, w, &s, &p);
            check_vjp(|x| table.apply(x), |u| vjp_distort(u, &table), &x, &u)
        }
        GradLayer::Vignette => check_vjp(|x| vignette(x, &s, &p), |u| vjp_vignette(u, &s, &p), &x, &u),
        GradLayer::Blur => {
            let depth = DepthMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.3..3.0)).collect())?;
            let diam = blur_diameters(&depth, None, &s, &p)?;
            let weights = BlurWeightMatrix::build(&diam);
            check_vjp(
                |x| weights.apply(x).expect("shape"),
                |u| vjp_blur(u, &weights).expect("shape"),
                &x,
                &u,
            )
        }
        GradLayer::Aggregate => check_vjp(|x| aggregate(x, &s, &p), |u| vjp_aggregate(u, &s, &p), &x, &u),
        GradLayer::CrfLinear | GradLayer::CrfGamma | GradLayer::CrfSigmoid => {
            let kind = match layer {
                GradLayer::CrfLinear => CrfKind::Linear,
                GradLayer::CrfGamma => CrfKind::Gamma,
                _ => CrfKind::Sigmoid,
            };
            let p = crf_params(p, kind);
            check_vjp(
                |x| crf_analog(x, &s, &p),
                |u| vjp_crf(u, &x, &s, &p).expect("shape"),
                &x,
                &u,
            )
        }
        GradLayer::Pipeline => {
            let depth = DepthMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.3..3.0)).collect())?;
            let roi = RoiMask::from_fn(h, w, |i, j| (i + j) % 7 != 0);
            let p = crf_params(p, CrfKind::Gamma);
            let config = PipelineConfig::new(s, p, LayerToggles::all_on().deterministic());
            let trace = forward(&x, Some(&depth), Some(&roi), &config)?;
            check_vjp(
                |x| forward(x, Some(&depth), Some(&roi), &config).expect("valid config").analog,
                |u| vjp_pipeline(u, &trace).expect("trace"),
                &x,
                &u,
            )
        }
    };
    Ok(err)
}

pub fn gradcheck_layer(layer: GradLayer, cfg: &GradcheckConfig) -> Result<LayerReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (layer as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut max_rel_err = 0.0f64;
    for _ in 0..cfg.trials {
        let err = trial(layer, cfg, &mut rng)?;
        max_rel_err = if err.is_nan() { f64::INFINITY } else { max_rel_err.max(err) };
    }
    Ok(LayerReport {
        layer: layer.name().to_owned(),
        trials: cfg.trials,
        max_rel_err,
        pass: max_rel_err < cfg.tolerance,
    })
}

/// Checks each requested layer; one report record per layer.
pub fn gradcheck(layers: &[GradLayer], cfg: &GradcheckConfig) -> Result<Vec<LayerReport>> {
    layers.iter().map(|&l| gradcheck_layer(l, cfg)).collect()
}

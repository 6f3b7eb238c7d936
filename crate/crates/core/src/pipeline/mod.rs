//! Forward camera model.
//!
//! Layers run in a fixed order, each behind its own toggle:
//! distortion, vignetting, ROI masking + defocus blur, aggregation,
//! noise, CRF, and finally 16-bit quantization. [`forward`] keeps every
//! intermediate the backward pass needs in a [`ForwardTrace`].

mod defocus;
mod optics;
mod sensor;

pub use defocus::{
    apply_blur, blur_diameter, blur_diameters, build_blur_weights, BlurDiameterMap,
    BlurWeightMatrix, KernelNormalization, PASS_THROUGH_DIAMETER,
};
pub use optics::{compute_fov, distort, vignette, vignette_factors, RemapTable, Tap};
pub use sensor::{
    add_noise, aggregate, aggregate_gains, apply_crf, crf_analog, crf_derivative, crf_value,
    dark_mean, quantize, quantize_sample, CRF_EPSILON, DV_MAX,
};

pub(crate) use optics::scale_pixels;
pub(crate) use sensor::scale_channels;

use crate::error::{Error, Result};
use crate::imagecore::{
    CameraSettings, DepthMap, Image, LayerToggles, Precision, RawImage16, RoiMask,
    SensorModelParams, FALLBACK_BASELINE_EXPOSURE,
};

/// Everything besides the images that determines a render.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub settings: CameraSettings,
    pub params: SensorModelParams,
    pub toggles: LayerToggles,
    pub seed: u64,
    pub precision: Precision,
    pub kernel: KernelNormalization,
}

impl PipelineConfig {
    pub fn new(settings: CameraSettings, params: SensorModelParams, toggles: LayerToggles) -> Self {
        PipelineConfig {
            settings,
            params,
            toggles,
            seed: 0,
            precision: Precision::F64,
            kernel: KernelNormalization::Renormalized,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }
}

/// Retained forward state. Layer fields are `None` when the layer was off.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub config: PipelineConfig,
    pub remap: Option<RemapTable>,
    pub vignette: Option<Vec<f64>>,
    /// Per-pixel 0/1 factors applied before the blur.
    pub mask: Option<Vec<f64>>,
    pub blur: Option<BlurWeightMatrix>,
    pub aggregate: Option<[f64; 3]>,
    /// The additive noise realization `Y − x` (dark current included).
    pub noise: Option<Image>,
    /// Input of the CRF, needed for its input-dependent derivative.
    pub crf_input: Option<Image>,
    pub fallback_scale: Option<f64>,
    /// Continuous output just before clamping and rounding.
    pub analog: Image,
}

impl ForwardTrace {
    pub fn quantize(&self) -> RawImage16 {
        quantize(&self.analog)
    }
}

fn storage(img: &mut Image, precision: Precision) {
    if precision == Precision::F32 {
        img.round_to_f32();
    }
}

/// Runs the enabled layers and keeps the state needed for gradients.
pub fn forward(
    radiance: &Image,
    depth: Option<&DepthMap>,
    roi: Option<&RoiMask>,
    config: &PipelineConfig,
) -> Result<ForwardTrace> {
    let PipelineConfig {
        settings,
        params,
        toggles,
        seed,
        precision,
        kernel,
    } = *config;
    settings.validate()?;
    params.validate()?;
    if radiance.channels() != 3 {
        return Err(Error::shape("3-channel radiance", radiance.shape_str()));
    }
    let (h, w) = (radiance.height(), radiance.width());
    if let Some(roi) = roi {
        roi.check_dims(h, w)?;
    }

    let mut trace = ForwardTrace {
        config: *config,
        remap: None,
        vignette: None,
        mask: None,
        blur: None,
        aggregate: None,
        noise: None,
        crf_input: None,
        fallback_scale: None,
        analog: Image::zeros(0, 0, 3),
    };

    let mut x = radiance.clone();
    storage(&mut x, precision);

    if toggles.distortion {
        let table = RemapTable::new(h, w, &settings, &params);
        x = table.apply(&x);
        storage(&mut x, precision);
        trace.remap = Some(table);
    }
    if toggles.vignetting {
        let factors = vignette_factors(h, w, &settings, &params);
        x = scale_pixels(&x, &factors);
        storage(&mut x, precision);
        trace.vignette = Some(factors);
    }
    if let Some(roi) = roi {
        let factors: Vec<f64> = roi.data().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        x = scale_pixels(&x, &factors);
        trace.mask = Some(factors);
    }
    if toggles.defocus {
        let depth = depth.ok_or_else(|| Error::Precondition("defocus requires depth".into()))?;
        if (depth.height(), depth.width()) != (h, w) {
            return Err(Error::shape(
                format!("{h}x{w} depth"),
                format!("{}x{} depth", depth.height(), depth.width()),
            ));
        }
        let diam = blur_diameters(depth, roi, &settings, &params)?;
        let weights = BlurWeightMatrix::build_with(&diam, kernel);
        x = weights.apply(&x)?;
        storage(&mut x, precision);
        trace.blur = Some(weights);
    }
    if toggles.aggregator {
        let gains = aggregate_gains(&settings, &params);
        x = scale_channels(&x, &gains);
        storage(&mut x, precision);
        trace.aggregate = Some(gains);
    }
    if toggles.noise {
        let noisy = add_noise(&x, &settings, &params, seed);
        let delta = Image::from_vec(
            h,
            w,
            3,
            noisy.data().iter().zip(x.data()).map(|(y, x)| y - x).collect(),
        )?;
        x = noisy;
        storage(&mut x, precision);
        trace.noise = Some(delta);
    }
    if toggles.crf {
        let out = crf_analog(&x, &settings, &params);
        trace.crf_input = Some(x);
        x = out;
        storage(&mut x, precision);
    }
    if toggles.fallback_active() {
        let scale = settings.exposure_time / FALLBACK_BASELINE_EXPOSURE;
        x = x.map(|v| v * scale);
        storage(&mut x, precision);
        trace.fallback_scale = Some(scale);
    }
    trace.analog = x;
    Ok(trace)
}

/// Renders radiance (and depth, when defocus is on) to a 16-bit RAW image.
pub fn run_pipeline(
    radiance: &Image,
    depth: Option<&DepthMap>,
    roi: Option<&RoiMask>,
    config: &PipelineConfig,
) -> Result<RawImage16> {
    Ok(forward(radiance, depth, roi, config)?.quantize())
}

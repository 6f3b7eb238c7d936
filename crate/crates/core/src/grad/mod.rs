//! Reverse-mode gradients with respect to the input radiance.
//!
//! Each function takes the cotangent of a layer's output and returns the
//! cotangent of its input. Distortion, vignetting, blur and aggregation are
//! linear, so their VJPs are exact transposes; the CRF VJP needs the
//! retained forward input. Quantization and clamping pass gradients
//! straight through inside `[0, 65535]` and block them outside.

mod gradcheck;

pub use gradcheck::{
    check_vjp, gradcheck, gradcheck_layer, relative_error, GradLayer, GradcheckConfig, LayerReport,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{CameraSettings, Image, SensorModelParams};
use crate::pipeline::{
    aggregate_gains, crf_derivative, scale_channels, scale_pixels, vignette_factors,
    BlurWeightMatrix, ForwardTrace, RemapTable, DV_MAX,
};

pub fn vjp_distort(cotangent: &Image, table: &RemapTable) -> Image {
    table.apply_transpose(cotangent)
}

pub fn vjp_vignette(cotangent: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    let factors = vignette_factors(cotangent.height(), cotangent.width(), settings, params);
    scale_pixels(cotangent, &factors)
}

pub fn vjp_blur(cotangent: &Image, weights: &BlurWeightMatrix) -> Result<Image> {
    weights.apply_transpose(cotangent)
}

pub fn vjp_aggregate(cotangent: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    scale_channels(cotangent, &aggregate_gains(settings, params))
}

/// Multiplies by the CRF slope at the retained forward input.
pub fn vjp_crf(
    cotangent: &Image,
    forward_input: &Image,
    settings: &CameraSettings,
    params: &SensorModelParams,
) -> Result<Image> {
    cotangent.check_same_shape(forward_input)?;
    let c = cotangent.channels();
    let mut out = cotangent.clone();
    out.data_mut()
        .par_chunks_mut(c)
        .zip(forward_input.data().par_chunks(c))
        .for_each(|(g, x)| {
            for ch in 0..c {
                g[ch] *= crf_derivative(x[ch], ch, settings, params);
            }
        });
    Ok(out)
}

/// Straight-through gradient of the final clamp: zero where the analog
/// output left the 16-bit range.
pub fn vjp_clamp(cotangent: &Image, analog: &Image) -> Result<Image> {
    cotangent.check_same_shape(analog)?;
    let mut out = cotangent.clone();
    for (g, &y) in out.data_mut().iter_mut().zip(analog.data()) {
        if !(0.0..=DV_MAX).contains(&y) {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Back-propagates a cotangent of the analog output through every layer
/// that ran in `trace`, in reverse order. The noise realization is held
/// fixed, so it contributes an identity.
pub fn vjp_pipeline(cotangent: &Image, trace: &ForwardTrace) -> Result<Image> {
    if trace.analog.channels() == 0 || trace.analog.pixel_count() == 0 {
        return Err(Error::Precondition("forward state missing".into()));
    }
    let cfg = &trace.config;
    let mut g = vjp_clamp(cotangent, &trace.analog)?;
    if let Some(scale) = trace.fallback_scale {
        g = g.map(|v| v * scale);
    }
    if cfg.toggles.crf {
        let input = trace
            .crf_input
            .as_ref()
            .ok_or_else(|| Error::Precondition("forward state missing: CRF input".into()))?;
        g = vjp_crf(&g, input, &cfg.settings, &cfg.params)?;
    }
    if let Some(gains) = trace.aggregate {
        g = scale_channels(&g, &gains);
    }
    if let Some(blur) = &trace.blur {
        g = vjp_blur(&g, blur)?;
    }
    if let Some(mask) = &trace.mask {
        g = scale_pixels(&g, mask);
    }
    if let Some(factors) = &trace.vignette {
        g = scale_pixels(&g, factors);
    }
    if let Some(table) = &trace.remap {
        g = vjp_distort(&g, table);
    }
    Ok(g)
}

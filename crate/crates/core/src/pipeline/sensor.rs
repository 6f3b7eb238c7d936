//! Sensor-side layers: exposure aggregation, dark current and
//! Poisson-Gaussian noise, and the camera response function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::imagecore::{CameraSettings, CrfKind, Image, RawImage16, SensorModelParams};

/// Full-scale digital value of the RAW output.
pub const DV_MAX: f64 = 65535.0;

/// Arguments of the gamma and sigmoid curves are clamped up to this value.
pub const CRF_EPSILON: f64 = 1e-12;

/// Stream tag mixed into the noise seed so other stochastic layers added
/// later draw from disjoint streams.
const NOISE_LAYER_ID: u64 = 0x6e6f_6973_655f_3031;

/// Per-channel multiplier `G_aggregator·QE_c · L_scene · C²/N² · t`.
pub fn aggregate_gains(settings: &CameraSettings, params: &SensorModelParams) -> [f64; 3] {
    let common = settings.scene_illumination * settings.pixel_size * settings.pixel_size
        / (settings.aperture_number * settings.aperture_number)
        * settings.exposure_time;
    params.aggregator_qe_rgb.map(|g| g * common)
}

pub(crate) fn scale_channels(img: &Image, gains: &[f64]) -> Image {
    let c = img.channels();
    let mut out = img.clone();
    out.data_mut()
        .par_chunks_mut(c)
        .for_each(|px| px.iter_mut().zip(gains).for_each(|(v, g)| *v *= g));
    out
}

/// Irradiance to accumulated energy over the exposure.
pub fn aggregate(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    scale_channels(img, &aggregate_gains(settings, params))
}

/// Mean signal after dark current: `μ = x + D_dark · t`.
pub fn dark_mean(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    let offset = params.dark_current * settings.exposure_time;
    img.map(|v| v + offset)
}

/// Adds dark current, shot noise `N(0, G_noise²·μ)` and read noise
/// `N(0, σ_read²)`.
///
/// Each pixel draws from its own ChaCha stream selected by its linear
/// index, in a fixed per-channel order, so a given `seed` yields the same
/// image regardless of how the work is scheduled.
pub fn add_noise(img: &Image, settings: &CameraSettings, params: &SensorModelParams, seed: u64) -> Image {
    let mut out = dark_mean(img, settings, params);
    let gain = params.noise_gain;
    let read = params.read_sigma;
    if gain == 0.0 && read == 0.0 {
        return out;
    }
    let base = ChaCha8Rng::seed_from_u64(seed ^ NOISE_LAYER_ID);
    let c = out.channels();
    out.data_mut()
        .par_chunks_mut(c)
        .enumerate()
        .for_each(|(p, px)| {
            let mut rng = base.clone();
            rng.set_stream(p as u64);
            for v in px.iter_mut() {
                let shot: f64 = rng.sample(StandardNormal);
                let readout: f64 = rng.sample(StandardNormal);
                let mu = *v;
                *v = mu + gain * mu.max(0.0).sqrt() * shot + read * readout;
            }
        });
    out
}

/// Continuous response of one sample, before clamping and rounding.
#[inline]
pub fn crf_value(x: f64, channel: usize, settings: &CameraSettings, params: &SensorModelParams) -> f64 {
    let iso = settings.iso;
    match params.crf_kind {
        CrfKind::Linear => params.crf_a * iso * x + params.crf_b_rgb[channel],
        CrfKind::Gamma => (params.crf_a * iso * x).max(CRF_EPSILON).powf(params.crf_gamma),
        CrfKind::Sigmoid => {
            let z = params.crf_a * (iso * x).max(CRF_EPSILON).log2() + params.crf_b_rgb[channel];
            DV_MAX / (1.0 + (-z).exp())
        }
    }
}

/// Derivative of [`crf_value`] with respect to `x`, evaluated at the clamped
/// argument where the curve clamps.
#[inline]
pub fn crf_derivative(x: f64, channel: usize, settings: &CameraSettings, params: &SensorModelParams) -> f64 {
    let iso = settings.iso;
    let a = params.crf_a;
    match params.crf_kind {
        CrfKind::Linear => a * iso,
        CrfKind::Gamma => {
            let g = params.crf_gamma;
            let xc = x.max(CRF_EPSILON / (a * iso));
            g * (a * iso).powf(g) * xc.powf(g - 1.0)
        }
        CrfKind::Sigmoid => {
            let xc = x.max(CRF_EPSILON / iso);
            let z = a * (iso * xc).log2() + params.crf_b_rgb[channel];
            let s = 1.0 / (1.0 + (-z).exp());
            DV_MAX * s * (1.0 - s) * a / (std::f64::consts::LN_2 * xc)
        }
    }
}

/// Applies the CRF without quantizing.
pub fn crf_analog(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> Image {
    let c = img.channels();
    let mut out = img.clone();
    out.data_mut().par_chunks_mut(c).for_each(|px| {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = crf_value(*v, ch, settings, params);
        }
    });
    out
}

/// Clamps to `[0, 65535]` and rounds half to even.
#[inline]
pub fn quantize_sample(v: f64) -> u16 {
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, DV_MAX).round_ties_even() as u16
}

pub fn quantize(img: &Image) -> RawImage16 {
    assert_eq!(img.channels(), RawImage16::CHANNELS);
    let data = img.data().iter().map(|&v| quantize_sample(v)).collect();
    RawImage16::new(img.height(), img.width(), data).expect("shape preserved")
}

/// Analog signal to 16-bit digital values.
pub fn apply_crf(img: &Image, settings: &CameraSettings, params: &SensorModelParams) -> RawImage16 {
    quantize(&crf_analog(img, settings, params))
}

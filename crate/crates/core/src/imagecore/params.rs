use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exposure-time baseline for the ablation fallback, in seconds.
pub const FALLBACK_BASELINE_EXPOSURE: f64 = 0.256;

/// User-facing exposure triangle and optics. Lengths are in meters, time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSettings {
    pub aperture_number: f64,
    pub exposure_time: f64,
    pub iso: f64,
    pub focus_distance: f64,
    pub focal_length: f64,
    pub pixel_size: f64,
    pub sensor_width: f64,
    pub scene_illumination: f64,
}

impl Default for CameraSettings {
    /// Neutral exposure (N = t = ISO = L = 1) on a 5 mm lens with 3.45 µm
    /// pixels, a 2048-pixel-wide sensor and focus at 1 m.
    fn default() -> Self {
        CameraSettings {
            aperture_number: 1.0,
            exposure_time: 1.0,
            iso: 1.0,
            focus_distance: 1.0,
            focal_length: 0.005,
            pixel_size: 3.45e-6,
            sensor_width: 2048.0 * 3.45e-6,
            scene_illumination: 1.0,
        }
    }
}

impl CameraSettings {
    pub fn validate(&self) -> Result<()> {
        positive("aperture_number", self.aperture_number)?;
        positive("exposure_time", self.exposure_time)?;
        positive("iso", self.iso)?;
        positive("focal_length", self.focal_length)?;
        positive("pixel_size", self.pixel_size)?;
        positive("sensor_width", self.sensor_width)?;
        finite("focus_distance", self.focus_distance)?;
        if self.focus_distance <= self.focal_length {
            return Err(Error::param(
                "focus_distance",
                format!(
                    "must exceed focal_length ({} <= {})",
                    self.focus_distance, self.focal_length
                ),
            ));
        }
        finite("scene_illumination", self.scene_illumination)?;
        if self.scene_illumination < 0.0 {
            return Err(Error::param("scene_illumination", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CrfKind {
    #[default]
    Linear,
    Gamma,
    Sigmoid,
}

impl std::str::FromStr for CrfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(CrfKind::Linear),
            "gamma" => Ok(CrfKind::Gamma),
            "sigmoid" => Ok(CrfKind::Sigmoid),
            other => Err(Error::param("crf_kind", format!("unknown kind `{other}`"))),
        }
    }
}

/// Calibratable gains of every layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModelParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub vignetting_gain: f64,
    pub defocus_gain: f64,
    /// Aggregator gain times quantum efficiency, per RGB channel.
    pub aggregator_qe_rgb: [f64; 3],
    pub dark_current: f64,
    pub crf_kind: CrfKind,
    pub crf_a: f64,
    pub crf_b_rgb: [f64; 3],
    pub crf_gamma: f64,
    pub noise_gain: f64,
    pub read_sigma: f64,
}

impl Default for SensorModelParams {
    /// Neutral values: gains 1, offsets 0, γ = 1, linear CRF, no distortion.
    fn default() -> Self {
        SensorModelParams {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            vignetting_gain: 1.0,
            defocus_gain: 1.0,
            aggregator_qe_rgb: [1.0; 3],
            dark_current: 0.0,
            crf_kind: CrfKind::Linear,
            crf_a: 1.0,
            crf_b_rgb: [0.0; 3],
            crf_gamma: 1.0,
            noise_gain: 1.0,
            read_sigma: 0.0,
        }
    }
}

impl SensorModelParams {
    pub fn validate(&self) -> Result<()> {
        finite("k1", self.k1)?;
        finite("k2", self.k2)?;
        finite("k3", self.k3)?;
        finite("vignetting_gain", self.vignetting_gain)?;
        if !(0.0..=1.0).contains(&self.vignetting_gain) {
            return Err(Error::param("vignetting_gain", "must lie in [0, 1]"));
        }
        non_negative("defocus_gain", self.defocus_gain)?;
        for &g in &self.aggregator_qe_rgb {
            non_negative("aggregator_qe_rgb", g)?;
        }
        finite("dark_current", self.dark_current)?;
        finite("crf_a", self.crf_a)?;
        for &b in &self.crf_b_rgb {
            finite("crf_b_rgb", b)?;
        }
        positive("crf_gamma", self.crf_gamma)?;
        non_negative("noise_gain", self.noise_gain)?;
        non_negative("read_sigma", self.read_sigma)?;
        Ok(())
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    finite(key, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(key, format!("must be > 0 (got {v})")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    finite(key, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(key, format!("must be >= 0 (got {v})")))
    }
}

/// Flat on-disk form: one key per field of both structs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParamDocument {
    aperture_number: f64,
    exposure_time: f64,
    iso: f64,
    focus_distance: f64,
    focal_length: f64,
    pixel_size: f64,
    sensor_width: f64,
    scene_illumination: f64,
    k1: f64,
    k2: f64,
    k3: f64,
    vignetting_gain: f64,
    defocus_gain: f64,
    aggregator_qe_rgb: [f64; 3],
    dark_current: f64,
    crf_kind: CrfKind,
    crf_a: f64,
    crf_b_rgb: [f64; 3],
    crf_gamma: f64,
    noise_gain: f64,
    read_sigma: f64,
}

impl Default for ParamDocument {
    fn default() -> Self {
        ParamDocument::from_parts(&CameraSettings::default(), &SensorModelParams::default())
    }
}

impl ParamDocument {
    fn from_parts(c: &CameraSettings, s: &SensorModelParams) -> Self {
        ParamDocument {
            aperture_number: c.aperture_number,
            exposure_time: c.exposure_time,
            iso: c.iso,
            focus_distance: c.focus_distance,
            focal_length: c.focal_length,
            pixel_size: c.pixel_size,
            sensor_width: c.sensor_width,
            scene_illumination: c.scene_illumination,
            k1: s.k1,
            k2: s.k2,
            k3: s.k3,
            vignetting_gain: s.vignetting_gain,
            defocus_gain: s.defocus_gain,
            aggregator_qe_rgb: s.aggregator_qe_rgb,
            dark_current: s.dark_current,
            crf_kind: s.crf_kind,
            crf_a: s.crf_a,
            crf_b_rgb: s.crf_b_rgb,
            crf_gamma: s.crf_gamma,
            noise_gain: s.noise_gain,
            read_sigma: s.read_sigma,
        }
    }

    fn into_parts(self) -> (CameraSettings, SensorModelParams) {
        (
            CameraSettings {
                aperture_number: self.aperture_number,
                exposure_time: self.exposure_time,
                iso: self.iso,
                focus_distance: self.focus_distance,
                focal_length: self.focal_length,
                pixel_size: self.pixel_size,
                sensor_width: self.sensor_width,
                scene_illumination: self.scene_illumination,
            },
            SensorModelParams {
                k1: self.k1,
                k2: self.k2,
                k3: self.k3,
                vignetting_gain: self.vignetting_gain,
                defocus_gain: self.defocus_gain,
                aggregator_qe_rgb: self.aggregator_qe_rgb,
                dark_current: self.dark_current,
                crf_kind: self.crf_kind,
                crf_a: self.crf_a,
                crf_b_rgb: self.crf_b_rgb,
                crf_gamma: self.crf_gamma,
                noise_gain: self.noise_gain,
                read_sigma: self.read_sigma,
            },
        )
    }
}

/// Parses and validates a parameter document. Missing keys take the
/// neutral defaults; unknown keys are rejected by name.
pub fn params_from_json(text: &str) -> Result<(CameraSettings, SensorModelParams)> {
    let doc: ParamDocument = serde_json::from_str(text).map_err(|e| Error::Format {
        format: "parameter JSON",
        reason: e.to_string(),
    })?;
    let (camera, sensor) = doc.into_parts();
    camera.validate()?;
    sensor.validate()?;
    Ok((camera, sensor))
}

pub fn params_to_json(camera: &CameraSettings, sensor: &SensorModelParams) -> String {
    serde_json::to_string_pretty(&ParamDocument::from_parts(camera, sensor))
        .expect("plain struct serializes")
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(CameraSettings, SensorModelParams)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}

pub fn save_params(
    path: impl AsRef<Path>,
    camera: &CameraSettings,
    sensor: &SensorModelParams,
) -> Result<()> {
    let path = path.as_ref();
    let mut text = params_to_json(camera, sensor);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Which layers of the forward model run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerToggles {
    pub distortion: bool,
    pub vignetting: bool,
    pub defocus: bool,
    pub aggregator: bool,
    pub noise: bool,
    pub crf: bool,
    /// With aggregator and CRF both off, scale the output by t / 256 ms.
    pub exposure_ratio_fallback: bool,
}

impl LayerToggles {
    pub const fn all_on() -> Self {
        LayerToggles {
            distortion: true,
            vignetting: true,
            defocus: true,
            aggregator: true,
            noise: true,
            crf: true,
            exposure_ratio_fallback: false,
        }
    }

    pub const fn all_off() -> Self {
        LayerToggles {
            distortion: false,
            vignetting: false,
            defocus: false,
            aggregator: false,
            noise: false,
            crf: false,
            exposure_ratio_fallback: false,
        }
    }

    /// Every layer, including noise and distortion.
    pub const fn full_camera() -> Self {
        Self::all_on()
    }

    /// Exposure layers only; noise and distortion stay off.
    pub const fn without_defocus() -> Self {
        LayerToggles {
            vignetting: true,
            aggregator: true,
            crf: true,
            ..Self::all_off()
        }
    }

    /// Defocus blur only, with the exposure-time ratio standing in for brightness.
    pub const fn without_exposure() -> Self {
        LayerToggles {
            defocus: true,
            exposure_ratio_fallback: true,
            ..Self::all_off()
        }
    }

    /// No camera layers at all; brightness follows the exposure-time ratio.
    pub const fn without_camera() -> Self {
        LayerToggles {
            exposure_ratio_fallback: true,
            ..Self::all_off()
        }
    }

    /// True when the fallback scaling actually applies.
    pub fn fallback_active(&self) -> bool {
        self.exposure_ratio_fallback && !self.aggregator && !self.crf
    }

    /// All stochastic layers disabled.
    pub fn deterministic(mut self) -> Self {
        self.noise = false;
        self
    }
}

impl Default for LayerToggles {
    fn default() -> Self {
        Self::all_on()
    }
}

/// Storage precision of intermediate images in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_neutral() {
        let (camera, sensor) = params_from_json("{}").unwrap();
        assert_eq!(camera, CameraSettings::default());
        assert_eq!(sensor, SensorModelParams::default());
        assert_eq!(sensor.crf_kind, CrfKind::Linear);
        assert_eq!(sensor.crf_gamma, 1.0);
        assert_eq!(sensor.crf_b_rgb, [0.0; 3]);
        assert_eq!(sensor.aggregator_qe_rgb, [1.0; 3]);
    }

    #[test]
    fn negative_aperture_names_the_key() {
        let err = params_from_json(r#"{"aperture_number": -1}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("aperture_number"), "{msg}");
        assert!(msg.contains("> 0"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = params_from_json(r#"{"apperture": 2.0}"#).unwrap_err();
        assert!(err.to_string().contains("apperture"));
    }

    #[test]
    fn focus_inside_focal_length_rejected() {
        let err = params_from_json(r#"{"focus_distance": 0.004}"#).unwrap_err();
        assert!(err.to_string().contains("focus_distance"));
    }

    #[test]
    fn vignetting_gain_range() {
        assert!(params_from_json(r#"{"vignetting_gain": 1.2}"#).is_err());
        assert!(params_from_json(r#"{"vignetting_gain": 0.0}"#).is_ok());
    }

    #[test]
    fn save_then_load_is_field_exact() {
        let camera = CameraSettings {
            aperture_number: 1.6,
            exposure_time: 0.256,
            iso: 3.7,
            focus_distance: 0.612,
            focal_length: 0.005,
            pixel_size: 3.45e-6,
            sensor_width: 7.0656e-3,
            scene_illumination: 0.1 + 0.2,
        };
        let sensor = SensorModelParams {
            k1: -0.123456789012345,
            k2: 1e-17,
            k3: 3.0,
            vignetting_gain: 0.7,
            defocus_gain: 0.8,
            aggregator_qe_rgb: [1.0 / 3.0, 2.5e10, 7.0],
            dark_current: 12.5,
            crf_kind: CrfKind::Sigmoid,
            crf_a: 0.9,
            crf_b_rgb: [100.0, -3.25, 0.0],
            crf_gamma: 2.2,
            noise_gain: 2.0,
            read_sigma: 50.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_params(&path, &camera, &sensor).unwrap();
        let (c2, s2) = load_params(&path).unwrap();
        assert_eq!(c2, camera);
        assert_eq!(s2, sensor);
    }

    #[test]
    fn fallback_only_without_aggregator_and_crf() {
        assert!(LayerToggles::without_camera().fallback_active());
        assert!(LayerToggles::without_exposure().fallback_active());
        let mut t = LayerToggles::without_camera();
        t.crf = true;
        assert!(!t.fallback_active());
    }
}

use serde::{Deserialize, Serialize};

use super::regress::{least_squares, RegressionResult};
use crate::error::{Error, Result};
use crate::pipeline::DV_MAX;

/// Mean digital value of one patch in one channel under one exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureProbe {
    pub aperture_number: f64,
    pub exposure_time: f64,
    pub iso: f64,
    pub channel: usize,
    /// Probe radiance.
    pub radiance: f64,
    /// Dataset constant multiplying the radiance term.
    pub k: f64,
    pub real_dv: f64,
}

/// The exposure-related parameters recovered by [`calibrate_exposure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureParams {
    pub aggregator_qe_rgb: [f64; 3],
    pub dark_current: f64,
    pub crf_b_rgb: [f64; 3],
}

impl Default for ExposureParams {
    fn default() -> Self {
        ExposureParams {
            aggregator_qe_rgb: [1.0; 3],
            dark_current: 0.0,
            crf_b_rgb: [0.0; 3],
        }
    }
}

impl ExposureProbe {
    /// Regressors `[ISO·t·K·R/N², ISO·t, 1]`.
    pub fn features(&self) -> [f64; 3] {
        let it = self.iso * self.exposure_time;
        [it * self.k * self.radiance / self.aperture_number.powi(2), it, 1.0]
    }

    /// Digital value the linear camera model predicts for this probe.
    pub fn predict(&self, p: &ExposureParams) -> f64 {
        let [x1, x2, _] = self.features();
        let c = self.channel;
        (p.aggregator_qe_rgb[c] * x1 + p.dark_current * x2 + p.crf_b_rgb[c]).clamp(0.0, DV_MAX)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExposureCalibOptions {
    pub initial: ExposureParams,
    pub rounds: usize,
    /// Probes whose real or synthetic value reaches this are left out.
    pub saturation: f64,
}

impl Default for ExposureCalibOptions {
    fn default() -> Self {
        ExposureCalibOptions {
            initial: ExposureParams::default(),
            rounds: 3,
            saturation: 0.95 * DV_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureCalibration {
    pub params: ExposureParams,
    /// Dark current fitted independently in each channel; `params` holds
    /// their sample-weighted mean.
    pub dark_current_rgb: [f64; 3],
    pub per_channel: Vec<RegressionResult>,
    pub rounds: usize,
}

/// Per-channel regression of real digital values on
/// `[ISO·t·K·R/N², ISO·t, 1]`, repeated for `rounds` with synthetic probes
/// re-predicted from the latest fit so saturated ones drop out.
pub fn calibrate_exposure(probes: &[ExposureProbe], opts: &ExposureCalibOptions) -> Result<ExposureCalibration> {
    if let Some(p) = probes.iter().find(|p| p.channel >= 3) {
        return Err(Error::Precondition(format!("probe channel {} out of range", p.channel)));
    }
    if opts.rounds == 0 {
        return Err(Error::Precondition("exposure calibration needs at least one round".into()));
    }
    let mut params = opts.initial;
    let mut dark_rgb = [params.dark_current; 3];
    let mut per_channel = Vec::new();
    for round in 0..opts.rounds {
        per_channel.clear();
        let mut next = params;
        let (mut dark_sum, mut dark_weight) = (0.0, 0.0);
        for c in 0..3 {
            let selected: Vec<&ExposureProbe> = probes
                .iter()
                .filter(|p| p.channel == c && p.real_dv < opts.saturation)
                // The starting guess may be far off; only trust its
                // saturation verdict once it has been fitted.
                .filter(|p| round == 0 || p.predict(&params) < opts.saturation)
                .collect();
            if selected.is_empty() {
                return Err(Error::Degenerate(format!("no unsaturated probes in channel {c}")));
            }
            let design: Vec<f64> = selected.iter().flat_map(|p| p.features()).collect();
            let ys: Vec<f64> = selected.iter().map(|p| p.real_dv).collect();
            let fit = least_squares(&design, 3, &ys)?;
            if !fit.undetermined.contains(&0) {
                next.aggregator_qe_rgb[c] = fit.coefficients[0];
            }
            if !fit.undetermined.contains(&1) {
                dark_rgb[c] = fit.coefficients[1];
                dark_sum += fit.coefficients[1] * selected.len() as f64;
                dark_weight += selected.len() as f64;
            }
            next.crf_b_rgb[c] = fit.coefficients[2];
            per_channel.push(fit);
        }
        if dark_weight > 0.0 {
            next.dark_current = dark_sum / dark_weight;
        }
        params = next;
    }
    Ok(ExposureCalibration {
        params,
        dark_current_rgb: dark_rgb,
        per_channel,
        rounds: opts.rounds,
    })
}

use serde::{Deserialize, Serialize};

use super::regress::{linear_fit, RegressionResult};
use crate::error::{Error, Result};

/// Sample statistics of one uniform patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibSample {
    pub mean_dv: f64,
    pub var_dv: f64,
    pub iso: f64,
    /// CRF bias of the channel the patch was read from.
    pub bias: f64,
}

impl NoiseCalibSample {
    /// Mean and unbiased variance of `values`.
    pub fn from_values(values: &[f64], iso: f64, bias: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Precondition("a noise patch needs at least two pixels".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(NoiseCalibSample {
            mean_dv: mean,
            var_dv: var,
            iso,
            bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub noise_gain: f64,
    pub read_sigma: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Set when a negative slope or intercept had to be clamped to zero.
    pub clamped: bool,
    pub regression: RegressionResult,
}

/// Regresses `V/ISO²` on `(E − b)/ISO`: the slope is `G_noise²` and the
/// intercept `σ_read²`.
pub fn calibrate_noise(samples: &[NoiseCalibSample]) -> Result<NoiseCalibration> {
    if let Some(s) = samples.iter().find(|s| !(s.var_dv >= 0.0) || !(s.iso > 0.0)) {
        return Err(Error::Precondition(format!("invalid noise sample {s:?}")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| (s.mean_dv - s.bias) / s.iso).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.var_dv / (s.iso * s.iso)).collect();
    let distinct = xs.iter().any(|&x| x != xs[0]);
    if xs.len() < 2 || !distinct {
        return Err(Error::Degenerate(
            "noise calibration needs at least 2 samples with distinct means".into(),
        ));
    }
    let regression = linear_fit(&xs, &ys)?;
    let (slope, intercept) = (regression.coefficients[0], regression.coefficients[1]);
    let clamped = slope < 0.0 || intercept < 0.0;
    if clamped {
        log::warn!("noise fit clamped: slope {slope}, intercept {intercept}");
    }
    Ok(NoiseCalibration {
        noise_gain: slope.max(0.0).sqrt(),
        read_sigma: intercept.max(0.0).sqrt(),
        slope,
        intercept,
        clamped,
        regression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_moments_recover_parameters() {
        let (g, s, iso, b) = (2.0f64, 50.0f64, 2.0, 100.0);
        let samples: Vec<NoiseCalibSample> = [300.0, 900.0, 2000.0, 5000.0]
            .iter()
            .map(|&mu| NoiseCalibSample {
                mean_dv: iso * mu + b,
                var_dv: iso * iso * (g * g * mu + s * s),
                iso,
                bias: b,
            })
            .collect();
        let cal = calibrate_noise(&samples).unwrap();
        assert!((cal.noise_gain - 2.0).abs() < 1e-9);
        assert!((cal.read_sigma - 50.0).abs() < 1e-9);
        assert!(!cal.clamped);
    }

    #[test]
    fn zero_noise_gives_zero() {
        let samples: Vec<NoiseCalibSample> = (1..=6)
            .map(|k| NoiseCalibSample::from_values(&[k as f64 * 100.0; 10], 1.0, 0.0).unwrap())
            .collect();
        let cal = calibrate_noise(&samples).unwrap();
        assert_eq!(cal.regression.sample_count, 6);
        assert!(cal.slope.abs() < 1e-12 && cal.intercept.abs() < 1e-9);
    }

    #[test]
    fn single_mean_is_degenerate() {
        let s = NoiseCalibSample::from_values(&[10.0, 12.0, 11.0], 1.0, 0.0).unwrap();
        assert!(calibrate_noise(&[s]).is_err());
        assert!(calibrate_noise(&[s, s]).is_err());
    }

    #[test]
    fn negative_intercept_is_clamped() {
        let samples = [
            NoiseCalibSample { mean_dv: 100.0, var_dv: 50.0, iso: 1.0, bias: 0.0 },
            NoiseCalibSample { mean_dv: 200.0, var_dv: 250.0, iso: 1.0, bias: 0.0 },
        ];
        let cal = calibrate_noise(&samples).unwrap();
        assert!(cal.clamped);
        assert_eq!(cal.read_sigma, 0.0);
        assert!(cal.intercept < 0.0);
    }
}

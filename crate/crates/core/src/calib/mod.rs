//! Closed-form and iterative calibration of the sensor model from images.
//!
//! Each procedure recovers one group of [`SensorModelParams`] fields and
//! works the same on fixture renders and on measured photo sets.
//!
//! [`SensorModelParams`]: crate::imagecore::SensorModelParams

mod defocus;
mod dropping;
mod exposure;
mod gamma;
mod noise;
mod regress;
mod vignetting;

pub use defocus::{
    calibrate_defocus, synthetic_lengths, DefocusCalibOptions, DefocusCalibration, DefocusCondition,
    DefocusIteration, EdgeRender,
};
pub use dropping::{dropping_length, step_response, ScanGeometry, StepResponse};
pub use exposure::{
    calibrate_exposure, ExposureCalibOptions, ExposureCalibration, ExposureParams, ExposureProbe,
};
pub use gamma::{estimate_gamma, ExposureSweep, GammaEstimate, GammaOptions, GroupSlope, SweepFactor};
pub use noise::{calibrate_noise, NoiseCalibSample, NoiseCalibration};
pub use regress::{least_squares, linear_fit, zero_intercept_regress, RegressionResult};
pub use vignetting::{calibrate_vignetting, VignettingFit, VignettingOptions};

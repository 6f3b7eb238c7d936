//! Differentiable physics-based camera simulation.
//!
//! The crate turns a scene radiance field plus a depth map into a 16-bit RAW
//! image through a chain of calibratable layers:
//!
//! ```text
//! distortion -> vignetting -> defocus blur -> aggregation -> noise -> CRF
//! ```
//!
//! Every deterministic layer has an analytic vector-Jacobian product
//! ([`grad`]), so the simulator can sit behind any differentiable renderer.
//! The [`calib`] module recovers the sensor parameters from flat fields,
//! slanted edges, color-checker probes and grayscale patches, and
//! [`fixtures`] generates synthetic versions of those targets.

// Channel loops index several parallel arrays, and `!(x > 0.0)` is the
// deliberate NaN-rejecting form of validation used throughout.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod error;
pub mod fixtures;
pub mod grad;
pub mod imagecore;
pub mod metrics;
pub mod pipeline;

pub use error::{Error, ErrorKind, Result};
pub use imagecore::{
    CameraSettings, CrfKind, DepthMap, Image, LayerToggles, Precision, RadianceImage, RawImage16,
    RoiMask, SensorModelParams,
};

//! Value types shared by every layer plus the on-disk formats: PFM for
//! radiance and depth, a 16-bit big-endian container for RAW output, and
//! strict JSON for camera and sensor parameters.

mod image;
mod params;
mod pfm;
mod raw16;

pub use image::{plane_coords, DepthMap, Image, RadianceImage, RawImage16, RoiMask};
pub use params::{
    load_params, params_from_json, params_to_json, save_params, CameraSettings, CrfKind,
    LayerToggles, Precision, SensorModelParams, FALLBACK_BASELINE_EXPOSURE,
};
pub use pfm::{
    load_depth, load_pfm, load_radiance, load_roi, read_pfm, save_depth, save_pfm, save_roi,
    write_pfm, ByteOrder, PfmData,
};
pub use raw16::{load_raw16, read_raw16, save_raw16, write_raw16, RAW16_MAGIC};

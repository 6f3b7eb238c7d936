use std::io::Read;
use std::path::{Path, PathBuf};

use diffcam::imagecore::{load_pfm, load_raw16, PfmData, RAW16_MAGIC};
use diffcam::Image;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{CliResult, Failure};

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn is_raw16(path: &Path) -> CliResult<bool> {
    let mut head = [0u8; 5];
    let mut file = std::fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let n = file.read(&mut head).map_err(|e| io_failure(path, e))?;
    Ok(&head[..n] == RAW16_MAGIC.as_bytes())
}

/// Loads a RAW16 or PFM file as floating-point samples, RAW16 in digital
/// values and PFM as stored.
pub fn load_image(path: &Path) -> CliResult<Image> {
    if is_raw16(path)? {
        return Ok(load_raw16(path)?.to_image());
    }
    Ok(match load_pfm(path)? {
        PfmData::Radiance(r) => r.into_image(),
        PfmData::Depth(d) => Image::from_vec(d.height(), d.width(), 1, d.data().to_vec())?,
    })
}

/// Like [`load_image`], but RAW16 samples are divided by full scale so
/// both formats land in `[0, 1]`.
pub fn load_unit_image(path: &Path) -> CliResult<Image> {
    if is_raw16(path)? {
        return Ok(load_raw16(path)?.to_image().map(|v| v / 65535.0));
    }
    load_image(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

/// Resolves `path` against `base` unless it is already absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// `out.raw16` → `out.raw16.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

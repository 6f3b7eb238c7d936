//! `calibrate` subcommands.
//!
//! A calibration manifest is JSON of the form
//!
//! ```json
//! {
//!   "radiance": "grid_radiance.pfm",
//!   "probes": "grid_probes.json",
//!   "images": [
//!     { "path": "shot01.raw16", "settings": { "exposure_time": 0.125 }, "depth": 0.3 }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Per-image
//! `settings` override camera keys of the base parameter file. `radiance`
//! and `probes` are only read by the exposure and gamma calibrations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand};
use diffcam::calib::{
    calibrate_defocus, calibrate_exposure, calibrate_noise, calibrate_vignetting, dropping_length,
    estimate_gamma, DefocusCalibOptions, DefocusCondition, EdgeRender, ExposureCalibOptions,
    ExposureProbe, ExposureSweep, GammaOptions, NoiseCalibSample, ScanGeometry, SweepFactor,
    VignettingOptions,
};
use diffcam::fixtures::{
    defocus_conditions, dropping_length_table, gen_slant_edge, probe_means, render_defocus_edge,
    ProbeRegion, SlantEdgeSpec, DEFOCUS_EDGE_TILT_DEG,
};
use diffcam::imagecore::{params_from_json, params_to_json, save_params};
use diffcam::pipeline::{forward, PipelineConfig};
use diffcam::{CameraSettings, CrfKind, Image, LayerToggles, SensorModelParams};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::io::{load_image, read_json, resolve};
use crate::manifest::RunManifest;
use crate::render::load_params_or_default;
use crate::{CliResult, Failure, ParamsArg};

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(subcommand)]
    pub sub: CalibSub,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Calibration manifest JSON.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamsArg,
    /// Where to write the merged parameters (default: overwrite --params).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum CalibSub {
    /// Vignetting gain from a stack of flat fields.
    Vignetting {
        #[command(flatten)]
        common: CommonArgs,
        /// Digital value subtracted before taking ratios (default: mean CRF bias).
        #[arg(long)]
        black_level: Option<f64>,
    },
    /// Defocus gain from slanted-edge shots at known depth and focus.
    Defocus {
        #[command(flatten)]
        common: CommonArgs,
        /// Use synthetic edges rendered at --truth-gain as the real shots.
        #[arg(long)]
        self_test: bool,
        #[arg(long, default_value_t = 0.8)]
        truth_gain: f64,
        /// Sensor side of the synthetic renders, pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 1.0)]
        initial_gain: f64,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        /// Tilt of the synthetic edge used to match manifest shots, degrees.
        #[arg(long, default_value_t = DEFOCUS_EDGE_TILT_DEG)]
        tilt: f64,
    },
    /// Aggregator gains, dark current and CRF bias from checker probes.
    Exposure {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
    },
    /// Shot-noise gain and read noise from uniform patches.
    Noise {
        #[command(flatten)]
        common: CommonArgs,
        /// Channel the statistics are read from.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// CRF exponent from stop-by-stop exposure sweeps.
    Gamma {
        #[command(flatten)]
        common: CommonArgs,
        /// Black level, one value or one per channel (default: CRF bias of
        /// a linear CRF, else 0).
        #[arg(long, value_delimiter = ',')]
        black_level: Vec<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibManifest {
    #[serde(default)]
    radiance: Option<PathBuf>,
    #[serde(default)]
    probes: Option<PathBuf>,
    images: Vec<ManifestImage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestImage {
    path: PathBuf,
    #[serde(default)]
    settings: Map<String, Value>,
    /// Target distance in meters (defocus only).
    #[serde(default)]
    depth: Option<f64>,
    /// Measured dropping length in mm; measured from the image if absent.
    #[serde(default)]
    real_length_mm: Option<f64>,
}

/// A manifest entry with its image loaded and settings resolved.
struct Shot {
    path: PathBuf,
    image: Image,
    settings: CameraSettings,
    depth: Option<f64>,
    real_length_mm: Option<f64>,
}

struct Loaded {
    dir: PathBuf,
    radiance: Option<PathBuf>,
    probes: Option<PathBuf>,
    shots: Vec<Shot>,
}

fn overlay_settings(
    base: &CameraSettings,
    sensor: &SensorModelParams,
    overrides: &Map<String, Value>,
    path: &Path,
) -> CliResult<CameraSettings> {
    if overrides.is_empty() {
        return Ok(*base);
    }
    let camera_keys = serde_json::to_value(CameraSettings::default()).expect("serializable");
    let mut doc: Value = serde_json::from_str(&params_to_json(base, sensor)).expect("valid JSON");
    for (k, v) in overrides {
        if camera_keys.get(k).is_none() {
            return Err(Failure::input(format!(
                "{}: `{k}` is not a camera setting",
                path.display()
            )));
        }
        doc[k] = v.clone();
    }
    Ok(params_from_json(&doc.to_string())?.0)
}

fn load_manifest(
    path: Option<&PathBuf>,
    camera: &CameraSettings,
    sensor: &SensorModelParams,
) -> CliResult<Loaded> {
    let path = path.ok_or_else(|| Failure::input("--manifest is required"))?;
    let manifest: CalibManifest = read_json(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut shots = Vec::with_capacity(manifest.images.len());
    for entry in manifest.images {
        let image_path = resolve(&dir, &entry.path);
        shots.push(Shot {
            image: load_image(&image_path)?,
            settings: overlay_settings(camera, sensor, &entry.settings, &image_path)?,
            path: image_path,
            depth: entry.depth,
            real_length_mm: entry.real_length_mm,
        });
    }
    if shots.is_empty() {
        return Err(Failure::input("manifest lists no images"));
    }
    Ok(Loaded {
        radiance: manifest.radiance.map(|p| resolve(&dir, &p)),
        probes: manifest.probes.map(|p| resolve(&dir, &p)),
        dir,
        shots,
    })
}

fn log_regression(name: &str, value: &impl serde::Serialize) {
    log::info!("{name}: {}", serde_json::to_string(value).expect("serializable"));
}

pub fn run(args: CalibrateArgs) -> CliResult<u8> {
    let started = Instant::now();
    let (sub_name, common) = match &args.sub {
        CalibSub::Vignetting { common, .. } => ("vignetting", common),
        CalibSub::Defocus { common, .. } => ("defocus", common),
        CalibSub::Exposure { common, .. } => ("exposure", common),
        CalibSub::Noise { common, .. } => ("noise", common),
        CalibSub::Gamma { common, .. } => ("gamma", common),
    };
    let out = common
        .out
        .clone()
        .or_else(|| common.params.params.clone())
        .ok_or_else(|| Failure::input("--out is required when --params is not given"))?;
    let (camera, mut sensor) = load_params_or_default(common.params.params.as_ref())?;
    let mut manifest = RunManifest::new(&format!("calibrate {sub_name}"));
    manifest.params = common.params.params.clone();

    let report: Value = match &args.sub {
        CalibSub::Vignetting { black_level, .. } => {
            let loaded = load_manifest(common.manifest.as_ref(), &camera, &sensor)?;
            record_inputs(&mut manifest, &loaded);
            let opts = VignettingOptions {
                black_level: black_level.unwrap_or(sensor.crf_b_rgb.iter().sum::<f64>() / 3.0),
                ..Default::default()
            };
            let stack: Vec<Image> = loaded.shots.iter().map(|s| s.image.clone()).collect();
            let fit = calibrate_vignetting(&stack, &loaded.shots[0].settings, &opts)?;
            log_regression("vignetting regression", &fit.regression);
            sensor.vignetting_gain = fit.gain;
            serde_json::to_value(&fit)
        }
        CalibSub::Defocus {
            self_test,
            truth_gain,
            size,
            initial_gain,
            iterations,
            tilt,
            ..
        } => {
            let opts = DefocusCalibOptions {
                initial_gain: *initial_gain,
                iterations: *iterations,
                early_stop: None,
            };
            let cal = if *self_test {
                let table = dropping_length_table(*truth_gain, *size)?;
                let real: Vec<f64> = table.iter().flatten().copied().collect();
                let size = *size;
                calibrate_defocus(&defocus_conditions(), &real, |c, g| render_defocus_edge(c, g, size), &opts)?
            } else {
                let loaded = load_manifest(common.manifest.as_ref(), &camera, &sensor)?;
                record_inputs(&mut manifest, &loaded);
                defocus_from_shots(&loaded.shots, &sensor, *tilt, &opts)?
            };
            log_regression("defocus history", &cal.history);
            sensor.defocus_gain = cal.gain;
            serde_json::to_value(&cal)
        }
        CalibSub::Exposure { rounds, .. } => {
            let loaded = load_manifest(common.manifest.as_ref(), &camera, &sensor)?;
            record_inputs(&mut manifest, &loaded);
            if sensor.crf_kind != CrfKind::Linear {
                return Err(Failure::input("exposure calibration assumes a linear CRF"));
            }
            let probes = exposure_probes(&loaded, &sensor)?;
            let opts = ExposureCalibOptions {
                rounds: *rounds,
                ..Default::default()
            };
            let cal = calibrate_exposure(&probes, &opts)?;
            log_regression("exposure regressions", &cal.per_channel);
            sensor.aggregator_qe_rgb = cal.params.aggregator_qe_rgb;
            // The ISO·t regressor absorbs the CRF slope.
            sensor.dark_current = cal.params.dark_current / sensor.crf_a;
            sensor.crf_b_rgb = cal.params.crf_b_rgb;
            serde_json::to_value(&cal)
        }
        CalibSub::Noise { channel, .. } => {
            let loaded = load_manifest(common.manifest.as_ref(), &camera, &sensor)?;
            record_inputs(&mut manifest, &loaded);
            if *channel >= 3 {
                return Err(Failure::input(format!("channel {channel} out of range")));
            }
            let samples = loaded
                .shots
                .iter()
                .map(|s| {
                    let c = s.image.channels();
                    if *channel >= c {
                        return Err(Failure::input(format!("{} has {c} channel(s)", s.path.display())));
                    }
                    let values: Vec<f64> = s.image.data().iter().skip(*channel).step_by(c).copied().collect();
                    Ok(NoiseCalibSample::from_values(&values, s.settings.iso, sensor.crf_b_rgb[*channel])?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let cal = calibrate_noise(&samples)?;
            log_regression("noise regression", &cal.regression);
            sensor.noise_gain = cal.noise_gain;
            sensor.read_sigma = cal.read_sigma;
            serde_json::to_value(&cal)
        }
        CalibSub::Gamma { black_level, .. } => {
            let loaded = load_manifest(common.manifest.as_ref(), &camera, &sensor)?;
            record_inputs(&mut manifest, &loaded);
            let black = match black_level.as_slice() {
                [] if sensor.crf_kind == CrfKind::Linear => sensor.crf_b_rgb,
                [] => [0.0; 3],
                [v] => [*v; 3],
                [r, g, b] => [*r, *g, *b],
                _ => return Err(Failure::input("--black-level takes one or three values")),
            };
            let sweeps = gamma_sweeps(&loaded)?;
            let opts = GammaOptions {
                black_level: black,
                ..Default::default()
            };
            let est = estimate_gamma(&sweeps, &opts)?;
            log_regression("gamma groups", &est.groups);
            sensor.crf_gamma = est.gamma;
            serde_json::to_value(&est)
        }
    }
    .expect("serializable");

    save_params(&out, &camera, &sensor)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "calibration": sub_name, "result": report }))
            .expect("serializable")
    );
    manifest.outputs.push(out.clone());
    manifest.finish(&out, started)?;
    Ok(0)
}

fn record_inputs(manifest: &mut RunManifest, loaded: &Loaded) {
    manifest.input("manifest_dir", &loaded.dir);
    for (k, shot) in loaded.shots.iter().enumerate() {
        manifest.input(&format!("image{k:03}"), &shot.path);
    }
    if let Some(p) = &loaded.radiance {
        manifest.input("radiance", p);
    }
    if let Some(p) = &loaded.probes {
        manifest.input("probes", p);
    }
}

/// Renders a synthetic slanted edge matching one shot through the defocus
/// layer alone.
fn render_matching_edge(
    shot: &Shot,
    depth: f64,
    sensor: &SensorModelParams,
    tilt: f64,
    gain: f64,
) -> diffcam::Result<EdgeRender> {
    let (h, w) = (shot.image.height(), shot.image.width());
    let scene = gen_slant_edge(&SlantEdgeSpec {
        height: h,
        width: w,
        tilt_deg: tilt,
        depth,
        bright: 1.0,
        dark: 0.05,
        illumination: 1.0,
    })?;
    let params = SensorModelParams {
        defocus_gain: gain,
        ..*sensor
    };
    let toggles = LayerToggles {
        defocus: true,
        ..LayerToggles::all_off()
    };
    let config = PipelineConfig::new(shot.settings, params, toggles);
    let trace = forward(scene.radiance.image(), Some(&scene.depth), None, &config)?;
    Ok(EdgeRender {
        image: trace.analog,
        geometry: ScanGeometry::object_plane(&shot.settings, depth),
    })
}

fn defocus_from_shots(
    shots: &[Shot],
    sensor: &SensorModelParams,
    tilt: f64,
    opts: &DefocusCalibOptions,
) -> CliResult<diffcam::calib::DefocusCalibration> {
    let mut conditions = Vec::with_capacity(shots.len());
    let mut real = Vec::with_capacity(shots.len());
    for shot in shots {
        let depth = shot.depth.ok_or_else(|| {
            Failure::input(format!("defocus requires depth ({})", shot.path.display()))
        })?;
        let condition = DefocusCondition {
            depth,
            focus: shot.settings.focus_distance,
        };
        let length = match shot.real_length_mm {
            Some(l) => l,
            None if condition.in_focus() => 0.0,
            None => dropping_length(&shot.image, &ScanGeometry::object_plane(&shot.settings, depth))?,
        };
        conditions.push(condition);
        real.push(length);
    }
    let render = |c: &DefocusCondition, gain: f64| {
        let shot = conditions
            .iter()
            .position(|k| k == c)
            .map(|k| &shots[k])
            .expect("condition comes from the shot list");
        render_matching_edge(shot, c.depth, sensor, tilt, gain)
    };
    Ok(calibrate_defocus(&conditions, &real, render, opts)?)
}

fn load_probes(loaded: &Loaded) -> CliResult<Vec<ProbeRegion>> {
    let path = loaded
        .probes
        .as_ref()
        .ok_or_else(|| Failure::input("manifest needs `probes` for this calibration"))?;
    let probes: Vec<ProbeRegion> = read_json(path)?;
    if probes.is_empty() {
        return Err(Failure::input(format!("{}: no probe regions", path.display())));
    }
    Ok(probes)
}

fn exposure_probes(loaded: &Loaded, sensor: &SensorModelParams) -> CliResult<Vec<ExposureProbe>> {
    let probes = load_probes(loaded)?;
    let radiance_path = loaded
        .radiance
        .as_ref()
        .ok_or_else(|| Failure::input("manifest needs `radiance` for exposure calibration"))?;
    let radiance = probe_means(&load_image(radiance_path)?, &probes)?;
    let mut out = Vec::new();
    for shot in &loaded.shots {
        let means = probe_means(&shot.image, &probes)?;
        let s = &shot.settings;
        let k = sensor.crf_a * s.scene_illumination * s.pixel_size * s.pixel_size;
        for (dv, r) in means.iter().zip(&radiance) {
            for c in 0..3 {
                out.push(ExposureProbe {
                    aperture_number: s.aperture_number,
                    exposure_time: s.exposure_time,
                    iso: s.iso,
                    channel: c,
                    radiance: r[c],
                    k,
                    real_dv: dv[c],
                });
            }
        }
    }
    Ok(out)
}

/// Groups shots that differ in exactly one exposure factor and turns each
/// group into per-patch, per-channel sweeps.
fn gamma_sweeps(loaded: &Loaded) -> CliResult<Vec<ExposureSweep>> {
    let probes = load_probes(loaded)?;
    let means: Vec<Vec<[f64; 3]>> = loaded
        .shots
        .iter()
        .map(|s| probe_means(&s.image, &probes))
        .collect::<diffcam::Result<_>>()?;
    let mut sweeps = Vec::new();
    for factor in [SweepFactor::ExposureTime, SweepFactor::Iso, SweepFactor::Aperture] {
        let mut groups: BTreeMap<(u64, u64), Vec<(f64, usize)>> = BTreeMap::new();
        for (k, shot) in loaded.shots.iter().enumerate() {
            let s = &shot.settings;
            let (key, x) = match factor {
                SweepFactor::ExposureTime => ((s.aperture_number, s.iso), s.exposure_time.log2()),
                SweepFactor::Iso => ((s.aperture_number, s.exposure_time), s.iso.log2()),
                SweepFactor::Aperture => ((s.exposure_time, s.iso), -2.0 * s.aperture_number.log2()),
            };
            groups.entry((key.0.to_bits(), key.1.to_bits())).or_default().push((x, k));
        }
        for mut members in groups.into_values() {
            members.sort_by(|a, b| a.0.total_cmp(&b.0));
            members.dedup_by(|a, b| a.0 == b.0);
            if members.len() < 2 {
                continue;
            }
            for patch in 0..probes.len() {
                for channel in 0..3 {
                    sweeps.push(ExposureSweep {
                        factor,
                        channel,
                        points: members.iter().map(|&(x, k)| (x, means[k][patch][channel])).collect(),
                    });
                }
            }
        }
    }
    if sweeps.is_empty() {
        return Err(Failure::input(
            "gamma calibration needs shots that differ in a single exposure factor",
        ));
    }
    Ok(sweeps)
}

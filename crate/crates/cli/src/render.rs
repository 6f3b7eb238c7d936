use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use diffcam::imagecore::{load_depth, load_params, load_radiance, load_roi, save_raw16};
use diffcam::pipeline::{run_pipeline, PipelineConfig};
use diffcam::{CameraSettings, LayerToggles, Precision, SensorModelParams};

use crate::manifest::RunManifest;
use crate::{CliResult, OnOff, ParamsArg};

/// The four ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    NoDefocus,
    NoExposure,
    NoCamera,
}

impl Preset {
    pub fn toggles(self) -> LayerToggles {
        match self {
            Preset::Full => LayerToggles::full_camera(),
            Preset::NoDefocus => LayerToggles::without_defocus(),
            Preset::NoExposure => LayerToggles::without_exposure(),
            Preset::NoCamera => LayerToggles::without_camera(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

/// Per-layer overrides applied on top of the preset.
#[derive(Args, Debug, Clone)]
pub struct LayerFlags {
    #[arg(long, value_enum)]
    pub distortion: Option<OnOff>,
    #[arg(long, value_enum)]
    pub vignetting: Option<OnOff>,
    #[arg(long, value_enum)]
    pub defocus: Option<OnOff>,
    #[arg(long, value_enum)]
    pub aggregator: Option<OnOff>,
    #[arg(long, value_enum)]
    pub noise: Option<OnOff>,
    #[arg(long, value_enum)]
    pub crf: Option<OnOff>,
    /// Scale by exposure time over 256 ms when aggregator and CRF are off.
    #[arg(long, value_enum)]
    pub fallback: Option<OnOff>,
    /// Shorthand for `--noise off`.
    #[arg(long)]
    pub no_noise: bool,
}

impl LayerFlags {
    pub fn apply(&self, mut t: LayerToggles) -> LayerToggles {
        let set = |flag: Option<OnOff>, field: &mut bool| {
            if let Some(v) = flag {
                *field = v.enabled();
            }
        };
        set(self.distortion, &mut t.distortion);
        set(self.vignetting, &mut t.vignetting);
        set(self.defocus, &mut t.defocus);
        set(self.aggregator, &mut t.aggregator);
        set(self.noise, &mut t.noise);
        set(self.crf, &mut t.crf);
        set(self.fallback, &mut t.exposure_ratio_fallback);
        if self.no_noise {
            t.noise = false;
        }
        t
    }
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Scene radiance (color PFM).
    #[arg(long)]
    pub radiance: PathBuf,
    /// Per-pixel depth in meters (grayscale PFM); required by defocus.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Effective-pixel mask (grayscale PFM, > 0.5 is effective).
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, value_enum, default_value = "full")]
    pub preset: Preset,
    #[command(flatten)]
    pub layers: LayerFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,
    /// Output RAW16 file; the run manifest goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_params_or_default(path: Option<&PathBuf>) -> CliResult<(CameraSettings, SensorModelParams)> {
    match path {
        Some(p) => Ok(load_params(p)?),
        None => Ok(Default::default()),
    }
}

pub fn run(args: RenderArgs, threads: Option<usize>) -> CliResult<u8> {
    let started = Instant::now();
    let toggles = args.layers.apply(args.preset.toggles());
    let (settings, params) = load_params_or_default(args.params.params.as_ref())?;
    let radiance = load_radiance(&args.radiance)?;
    let depth = args.depth.as_ref().map(load_depth).transpose()?;
    let roi = args.roi.as_ref().map(load_roi).transpose()?;

    let config = PipelineConfig::new(settings, params, toggles)
        .with_seed(args.seed)
        .with_precision(args.precision.into());
    let raw = run_pipeline(radiance.image(), depth.as_ref(), roi.as_ref(), &config)?;
    save_raw16(&args.out, &raw)?;

    let mut manifest = RunManifest::new("render");
    manifest.input("radiance", &args.radiance);
    if let Some(p) = &args.depth {
        manifest.input("depth", p);
    }
    if let Some(p) = &args.roi {
        manifest.input("roi", p);
    }
    manifest.params = args.params.params.clone();
    manifest.toggles = Some(toggles);
    manifest.seed = Some(args.seed);
    manifest.precision = Some(args.precision.into());
    manifest.threads = threads;
    manifest.outputs.push(args.out.clone());
    manifest.finish(&args.out, started)?;
    Ok(0)
}

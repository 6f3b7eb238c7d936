use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use diffcam::fixtures::{generate, SceneSpec};
use diffcam::grad::{gradcheck as check_layers, GradLayer, GradcheckConfig};
use diffcam::imagecore::{load_roi, save_depth, save_pfm, save_roi};
use diffcam::metrics::compare as compare_images;
use diffcam::RoiMask;

use crate::io::{load_unit_image, read_json, write_json};
use crate::manifest::RunManifest;
use crate::{CliResult, Failure};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Layers to check, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Side of the square test images.
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; the report is always printed to stdout too.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gradcheck(args: GradcheckArgs) -> CliResult<u8> {
    let layers: Vec<GradLayer> = if args.layers.is_empty() {
        GradLayer::ALL.to_vec()
    } else {
        args.layers
            .iter()
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()?
    };
    let cfg = GradcheckConfig {
        trials: args.trials,
        tolerance: args.tol,
        height: args.size,
        width: args.size,
        seed: args.seed,
    };
    let reports = check_layers(&layers, &cfg)?;
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    println!("{}", serde_json::to_string_pretty(&reports).expect("serializable"));
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("gradcheck failed: {} max_rel_err={:e} tol={:e}", r.layer, r.max_rel_err, args.tol);
    }
    Ok(if reports.iter().all(|r| r.pass) { 0 } else { 1 })
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    /// Scene spec JSON (`kind`: flat_field, slant_edge or checker_grid).
    #[arg(long)]
    pub spec: PathBuf,
    /// Writes `<prefix>_radiance.pfm`, `_depth.pfm`, `_roi.pfm`, plus
    /// `_probes.json` for checker grids.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn fixture(args: FixtureArgs) -> CliResult<u8> {
    let started = Instant::now();
    let spec: SceneSpec = read_json(&args.spec)?;
    let scene = generate(&spec)?;
    let radiance = with_suffix(&args.out_prefix, "_radiance.pfm");
    let depth = with_suffix(&args.out_prefix, "_depth.pfm");
    let roi = with_suffix(&args.out_prefix, "_roi.pfm");
    save_pfm(&radiance, scene.radiance.image())?;
    save_depth(&depth, &scene.depth)?;
    save_roi(&roi, &scene.roi)?;
    let mut manifest = RunManifest::new("fixture");
    manifest.input("spec", &args.spec);
    manifest.outputs = vec![radiance, depth, roi];
    if !scene.probes.is_empty() {
        let probes = with_suffix(&args.out_prefix, "_probes.json");
        write_json(&probes, &scene.probes)?;
        manifest.outputs.push(probes);
    }
    manifest.finish(&args.out_prefix, started)?;
    Ok(0)
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Predicted image (PFM, or RAW16 scaled to [0, 1]).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Effective-pixel mask; every pixel when omitted.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn compare(args: CompareArgs) -> CliResult<u8> {
    let pred = load_unit_image(&args.pred)?;
    let truth = load_unit_image(&args.truth)?;
    let roi = match &args.roi {
        Some(p) => load_roi(p)?,
        None => RoiMask::full(pred.height(), pred.width()),
    };
    let report = compare_images(&pred, &truth, &roi)?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!(
        "{}",
        serde_json::to_string(&report).map_err(|e| Failure::input(e.to_string()))?
    );
    Ok(0)
}

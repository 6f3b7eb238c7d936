//! Public-API round trips through the on-disk formats.

use diffcam::calib::{calibrate_vignetting, VignettingOptions};
use diffcam::fixtures::{flat_field_stack, gen_slant_edge, vignetting_camera, FlatFieldSpec, SlantEdgeSpec};
use diffcam::imagecore::{
    load_depth, load_params, load_radiance, load_raw16, save_depth, save_params, save_pfm, save_raw16,
    FALLBACK_BASELINE_EXPOSURE,
};
use diffcam::pipeline::{quantize, run_pipeline, PipelineConfig};
use diffcam::{CameraSettings, CrfKind, LayerToggles, SensorModelParams};
use tempfile::TempDir;

fn edge_scene() -> diffcam::fixtures::SceneFixture {
    gen_slant_edge(&SlantEdgeSpec {
        height: 32,
        width: 40,
        tilt_deg: 8.0,
        depth: 0.25,
        bright: 1.0,
        dark: 0.05,
        illumination: 1.0,
    })
    .unwrap()
}

#[test]
fn render_from_files_matches_in_memory_render() {
    let dir = TempDir::new().unwrap();
    let scene = edge_scene();
    let radiance = scene.radiance.image().map(|v| (v * 3.0e4).round());
    save_pfm(dir.path().join("r.pfm"), &radiance).unwrap();
    save_depth(dir.path().join("d.pfm"), &scene.depth).unwrap();
    let camera = CameraSettings {
        aperture_number: 2.0,
        exposure_time: 0.05,
        sensor_width: 40.0 * 3.45e-6,
        scene_illumination: 1.0 / (3.45e-6f64 * 3.45e-6),
        ..Default::default()
    };
    let sensor = SensorModelParams {
        k1: 0.02,
        vignetting_gain: 0.5,
        defocus_gain: 0.8,
        dark_current: 20.0,
        crf_kind: CrfKind::Linear,
        crf_b_rgb: [64.0, 80.0, 96.0],
        noise_gain: 1.0,
        read_sigma: 5.0,
        ..Default::default()
    };
    save_params(dir.path().join("p.json"), &camera, &sensor).unwrap();

    let (camera2, sensor2) = load_params(dir.path().join("p.json")).unwrap();
    assert_eq!((camera2, sensor2), (camera, sensor));
    let radiance2 = load_radiance(dir.path().join("r.pfm")).unwrap();
    let depth2 = load_depth(dir.path().join("d.pfm")).unwrap();

    let config = PipelineConfig::new(camera, sensor, LayerToggles::full_camera()).with_seed(9);
    let direct = run_pipeline(&radiance, Some(&scene.depth), None, &config).unwrap();
    let via_files = run_pipeline(radiance2.image(), Some(&depth2), None, &config).unwrap();
    // Depth goes through f32 storage; 0.25 is exact in both.
    assert_eq!(direct, via_files);

    save_raw16(dir.path().join("o.raw16"), &direct).unwrap();
    assert_eq!(load_raw16(dir.path().join("o.raw16")).unwrap(), direct);
}

#[test]
fn no_camera_preset_scales_by_exposure_ratio() {
    let scene = edge_scene();
    let radiance = scene.radiance.image().map(|v| v * 1.0e4);
    let camera = CameraSettings {
        exposure_time: 0.064,
        ..Default::default()
    };
    let config = PipelineConfig::new(camera, SensorModelParams::default(), LayerToggles::without_camera());
    let raw = run_pipeline(&radiance, None, None, &config).unwrap();
    let expected = quantize(&radiance.map(|v| v * 0.064 / FALLBACK_BASELINE_EXPOSURE));
    assert_eq!(raw, expected);
}

#[test]
fn vignetting_calibrates_from_saved_raw_frames() {
    let dir = TempDir::new().unwrap();
    let camera = vignetting_camera(96);
    let truth = SensorModelParams {
        vignetting_gain: 0.5,
        noise_gain: 1.0,
        read_sigma: 10.0,
        crf_b_rgb: [128.0; 3],
        ..Default::default()
    };
    let spec = FlatFieldSpec {
        height: 72,
        width: 96,
        level: 30000.0,
        depth: 1.0,
    };
    let frames = flat_field_stack(&spec, &camera, &truth, 6, 1).unwrap();
    let reloaded: Vec<_> = frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let path = dir.path().join(format!("f{k}.raw16"));
            save_raw16(&path, &quantize(f)).unwrap();
            load_raw16(&path).unwrap().to_image()
        })
        .collect();
    assert_eq!(reloaded, frames);
    let opts = VignettingOptions {
        black_level: 128.0,
        ..Default::default()
    };
    let fit = calibrate_vignetting(&reloaded, &camera, &opts).unwrap();
    assert!((fit.gain - 0.5).abs() < 0.01, "{fit:?}");
}

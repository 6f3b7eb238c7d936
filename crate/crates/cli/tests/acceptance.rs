//! End-to-end acceptance checks. Runs without the test harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use diffcam::calib::{
    calibrate_defocus, calibrate_exposure, calibrate_noise, calibrate_vignetting, dropping_length,
    estimate_gamma, DefocusCalibOptions, ExposureCalibOptions, GammaOptions, ScanGeometry,
    VignettingOptions,
};
use diffcam::fixtures::{
    defocus_conditions, desk_camera, dropping_length_table, exposure_probes, exposure_truth,
    flat_field_stack, gamma_sweeps, noise_patch_samples, render_defocus_edge, vignetting_camera,
    FlatFieldSpec,
};
use diffcam::grad::{gradcheck, GradLayer, GradcheckConfig};
use diffcam::imagecore::{save_depth, save_pfm};
use diffcam::metrics::psnr_effective;
use diffcam::pipeline::{add_noise, apply_blur, blur_diameters, BlurDiameterMap, BlurWeightMatrix};
use diffcam::{CameraSettings, CrfKind, DepthMap, Image, RoiMask, SensorModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let cfg = GradcheckConfig::default();
    ensure(cfg.trials >= 10 && cfg.height == 16 && cfg.width == 16, || format!("{cfg:?}"))?;
    let reports = gradcheck(&GradLayer::ALL, &cfg).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    for r in &reports {
        ensure(r.pass && r.max_rel_err < 1e-5, || format!("{} max_rel_err {:e}", r.layer, r.max_rel_err))?;
    }
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} layers, worst {worst:.2e}, {secs:.1} s", reports.len()))
}

/// Defocus round-trip; also returns the G = 0.8 table for the ordering check.
fn defocus_round_trip() -> (Outcome, Option<[[f64; 5]; 5]>) {
    let run = || -> Result<(String, [[f64; 5]; 5]), String> {
        let start = Instant::now();
        let size = 256;
        let table = dropping_length_table(0.8, size).map_err(err)?;
        let real: Vec<f64> = table.iter().flatten().copied().collect();
        let conditions = defocus_conditions();
        ensure(conditions.len() == 25, || format!("{} conditions", conditions.len()))?;
        let cal = calibrate_defocus(
            &conditions,
            &real,
            |c, g| render_defocus_edge(c, g, size),
            &DefocusCalibOptions::default(),
        )
        .map_err(err)?;
        let secs = start.elapsed().as_secs_f64();
        ensure(cal.history.len() <= 3, || format!("{} iterations", cal.history.len()))?;
        ensure((cal.gain - 0.8).abs() <= 0.05 * 0.8, || format!("gain {}", cal.gain))?;
        ensure(secs < 300.0, || format!("took {secs:.1} s"))?;
        Ok((format!("G = {:.4} after {} iterations, {secs:.1} s", cal.gain, cal.history.len()), table))
    };
    match run() {
        Ok((msg, table)) => (Ok(msg), Some(table)),
        Err(e) => (Err(e), None),
    }
}

/// Standard normal CDF by composite Simpson integration of the density.
fn normal_cdf(z: f64) -> f64 {
    let n = 4000;
    let h = z / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(k as f64 * h);
    }
    0.5 + s * h / 3.0
}

fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn erf_oracle() -> Outcome {
    // A Gaussian-blurred step falls from 90% to 10% over 2·z₀.₉·σ.
    let factor = 2.0 * normal_quantile(0.9);
    ensure((factor - 2.5631).abs() < 1e-4, || format!("oracle factor {factor}"))?;
    let (h, w) = (24, 128);
    let edge = Image::from_fn(h, w, 3, |_, j, _| {
        let cover = (63.3 - (j as f64 - 0.5)).clamp(0.0, 1.0);
        0.05 + 0.95 * cover
    });
    let mut worst = 0.0f64;
    for sigma in [2.0, 3.0, 4.0, 6.0] {
        let blur = BlurWeightMatrix::build(&BlurDiameterMap::constant(h, w, 6.0 * sigma));
        let blurred = apply_blur(&edge, &blur).map_err(err)?;
        let len = dropping_length(&blurred, &ScanGeometry::PIXELS).map_err(err)?;
        let expected = factor * sigma;
        let rel = (len - expected).abs() / expected;
        ensure(rel < 0.05, || format!("σ = {sigma}: {len:.3} vs {expected:.3}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("σ ∈ {{2, 3, 4, 6}}, worst deviation {:.2}%", 100.0 * worst))
}

fn dropping_ordering(table: Option<[[f64; 5]; 5]>) -> Outcome {
    let t = table.ok_or("table unavailable (defocus round-trip failed)")?;
    for (k, row) in t.iter().enumerate() {
        ensure(row[k] == 0.0, || format!("diagonal ({k}, {k}) = {}", row[k]))?;
    }
    // Strictly increasing moving away from the diagonal, along rows and columns.
    for k in 0..5 {
        for far in k + 1..5 {
            let near = far - 1;
            ensure(t[k][far] > t[k][near], || format!("row d#{k}: U#{far} <= U#{near}"))?;
            ensure(t[far][k] > t[near][k], || format!("column U#{k}: d#{far} <= d#{near}"))?;
        }
        for far in (0..k).rev() {
            let near = far + 1;
            ensure(t[k][far] > t[k][near], || format!("row d#{k}: U#{far} <= U#{near}"))?;
            ensure(t[far][k] > t[near][k], || format!("column U#{k}: d#{far} <= d#{near}"))?;
        }
    }
    let max = t.iter().flatten().copied().fold(0.0, f64::max);
    ensure(t[4][0] == max, || format!("maximum {max} is not at d = 2023, U = 162"))?;
    Ok(format!("diagonal 0, monotone off-focus, max {:.3} mm at (2023, 162)", t[4][0]))
}

fn gamma_estimation() -> Outcome {
    let linear = exposure_truth();
    let sweeps = gamma_sweeps(&linear).map_err(err)?;
    let est = estimate_gamma(
        &sweeps,
        &GammaOptions {
            black_level: linear.crf_b_rgb,
            ..Default::default()
        },
    )
    .map_err(err)?;
    ensure(est.gamma == 1.0, || format!("linear camera gave {}", est.gamma))?;
    let curved = SensorModelParams {
        crf_kind: CrfKind::Gamma,
        crf_gamma: 2.2,
        crf_a: 1.0 / 400.0,
        ..linear
    };
    let est22 = estimate_gamma(&gamma_sweeps(&curved).map_err(err)?, &GammaOptions::default()).map_err(err)?;
    ensure((est22.gamma - 2.2).abs() <= 0.05, || format!("γ = 2.2 camera gave {}", est22.gamma))?;
    Ok(format!("linear → {:.1}, γ 2.2 → {:.2} (mean slope {:.4})", est.gamma, est22.gamma, est22.mean_slope))
}

fn max_rel_param_error(fit: &diffcam::calib::ExposureParams, truth: &SensorModelParams) -> f64 {
    let mut worst = (fit.dark_current / truth.dark_current - 1.0).abs();
    for c in 0..3 {
        worst = worst.max((fit.aggregator_qe_rgb[c] / truth.aggregator_qe_rgb[c] - 1.0).abs());
        worst = worst.max((fit.crf_b_rgb[c] / truth.crf_b_rgb[c] - 1.0).abs());
    }
    worst
}

fn exposure_round_trip() -> Outcome {
    let truth = exposure_truth();
    let clean = exposure_probes(&truth, 0.0, 0).map_err(err)?;
    let combos = clean.len() / (120 * 3);
    ensure(combos == 216, || format!("{combos} exposure combinations"))?;
    let exact = calibrate_exposure(&clean, &ExposureCalibOptions::default()).map_err(err)?;
    let e_clean = max_rel_param_error(&exact.params, &truth);
    ensure(e_clean <= 1e-9, || format!("noiseless error {e_clean:e}"))?;
    let noisy = exposure_probes(&truth, 50.0, 2024).map_err(err)?;
    let fit = calibrate_exposure(&noisy, &ExposureCalibOptions::default()).map_err(err)?;
    let e_noisy = max_rel_param_error(&fit.params, &truth);
    ensure(e_noisy <= 0.05, || format!("σ = 50 error {:.2}%", 100.0 * e_noisy))?;
    Ok(format!("noiseless {e_clean:.1e}, σ = 50 DV {:.3}%", 100.0 * e_noisy))
}

fn noise_round_trip() -> Outcome {
    let settings = CameraSettings::default();
    let params = SensorModelParams {
        noise_gain: 2.0,
        read_sigma: 50.0,
        crf_b_rgb: [100.0; 3],
        ..Default::default()
    };
    let samples = noise_patch_samples(&settings, &params, 2000.0, 100_000, 7).map_err(err)?;
    ensure(samples.len() == 6, || format!("{} patches", samples.len()))?;
    let cal = calibrate_noise(&samples).map_err(err)?;
    let eg = (cal.noise_gain / 2.0 - 1.0).abs();
    let es = (cal.read_sigma / 50.0 - 1.0).abs();
    ensure(eg < 0.1 && es < 0.1, || format!("G = {}, σ = {}", cal.noise_gain, cal.read_sigma))?;
    Ok(format!("G_noise {:.4} (true 2), σ_read {:.3} (true 50)", cal.noise_gain, cal.read_sigma))
}

fn vignetting_round_trip() -> Outcome {
    let camera = vignetting_camera(128);
    let spec = FlatFieldSpec {
        height: 96,
        width: 128,
        level: 40000.0,
        depth: 1.0,
    };
    let mut found = Vec::new();
    for truth in [0.3, 0.7, 1.0] {
        let params = SensorModelParams {
            vignetting_gain: truth,
            noise_gain: 1.0,
            read_sigma: 20.0,
            crf_b_rgb: [256.0; 3],
            ..Default::default()
        };
        let stack = flat_field_stack(&spec, &camera, &params, 20, 11).map_err(err)?;
        let opts = VignettingOptions {
            black_level: 256.0,
            ..Default::default()
        };
        let fit = calibrate_vignetting(&stack, &camera, &opts).map_err(err)?;
        ensure((fit.gain - truth).abs() <= 0.01, || format!("G* = {truth}: got {}", fit.gain))?;
        found.push(format!("{truth} → {:.4}", fit.gain));
    }
    Ok(found.join(", "))
}

fn noise_statistics() -> Outcome {
    let (mu, gain, read) = (1000.0, 2.0, 30.0);
    let settings = CameraSettings::default();
    let params = SensorModelParams {
        noise_gain: gain,
        read_sigma: read,
        ..Default::default()
    };
    let out = add_noise(&Image::filled(1000, 1000, 1, mu), &settings, &params, 42);
    let n = out.data().len() as f64;
    let mean = out.data().iter().sum::<f64>() / n;
    let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected_var = gain * gain * mu + read * read;
    let se = (expected_var / n).sqrt();
    let z = (mean - mu) / se;
    ensure(z.abs() < 5.0, || format!("mean {mean} is {z:.2} SE from {mu}"))?;
    let rel = (var / expected_var - 1.0).abs();
    ensure(rel < 0.02, || format!("variance {var} vs {expected_var}"))?;
    Ok(format!("mean {z:+.2} SE, variance {:+.3}%", 100.0 * (var / expected_var - 1.0)))
}

fn energy_and_adjoint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // Constant image with an interior ROI under strongly varying blur.
    let (h, w) = (40, 48);
    let settings = CameraSettings {
        aperture_number: 1.6,
        pixel_size: 6e-6,
        focus_distance: 1.0,
        ..desk_camera(w, 1.0)
    };
    let params = SensorModelParams::default();
    let depth = DepthMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.3..3.0)).collect()).map_err(err)?;
    let roi = RoiMask::from_fn(h, w, |i, j| (8..h - 8).contains(&i) && (8..w - 8).contains(&j));
    let diam = blur_diameters(&depth, Some(&roi), &settings, &params).map_err(err)?;
    let max_d = diam.data().iter().copied().fold(0.0, f64::max);
    ensure(max_d > 4.0, || format!("blur too small to test (max D {max_d})"))?;
    let weights = BlurWeightMatrix::build(&diam);
    let input = Image::from_fn(h, w, 3, |i, j, c| if roi.get(i, j) { 0.25 + 0.5 * c as f64 } else { 0.0 });
    let out = apply_blur(&input, &weights).map_err(err)?;
    let mut worst_sum = 0.0f64;
    for c in 0..3 {
        let (a, b) = (input.channel_sum(c), out.channel_sum(c));
        worst_sum = worst_sum.max((b - a).abs() / a);
    }
    ensure(worst_sum <= 1e-6, || format!("channel sum drift {worst_sum:e}"))?;

    let mut worst_adj = 0.0f64;
    let mut worst_dense = 0.0f64;
    for _ in 0..20 {
        let d = BlurDiameterMap::new(8, 8, (0..64).map(|_| rng.random_range(0.0..6.0)).collect()).map_err(err)?;
        let wm = BlurWeightMatrix::build(&d);
        let x = Image::from_fn(8, 8, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let u = Image::from_fn(8, 8, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let wx = wm.apply(&x).map_err(err)?;
        let wtu = wm.apply_transpose(&u).map_err(err)?;
        let lhs = wx.dot(&u);
        let rhs = x.dot(&wtu);
        worst_adj = worst_adj.max((lhs - rhs).abs());
        // Dense oracle: entry [s][t] is the weight source s spreads onto t.
        let dense = wm.to_dense();
        for c in 0..3 {
            for t in 0..64 {
                let fwd: f64 = (0..64).map(|s| dense[s][t] * x.data()[s * 3 + c]).sum();
                let adj: f64 = (0..64).map(|s| dense[t][s] * u.data()[s * 3 + c]).sum();
                worst_dense = worst_dense
                    .max((fwd - wx.data()[t * 3 + c]).abs())
                    .max((adj - wtu.data()[t * 3 + c]).abs());
            }
        }
    }
    ensure(worst_adj <= 1e-10, || format!("adjoint gap {worst_adj:e}"))?;
    ensure(worst_dense <= 1e-10, || format!("dense oracle gap {worst_dense:e}"))?;
    Ok(format!(
        "sum drift {worst_sum:.1e}, adjoint gap {worst_adj:.1e}, dense gap {worst_dense:.1e}"
    ))
}

fn render_once(dir: &Path, threads: &str, out: &str) -> Result<Vec<u8>, String> {
    let out = dir.join(out);
    let status = Command::new(env!("CARGO_BIN_EXE_diffcam"))
        .args(["--threads", threads, "render", "--seed", "5", "--out"])
        .arg(&out)
        .arg("--radiance")
        .arg(dir.join("radiance.pfm"))
        .arg("--depth")
        .arg(dir.join("depth.pfm"))
        .arg("--params")
        .arg(dir.join("params.json"))
        .env_remove("DIFFCAM_THREADS")
        .output()
        .map_err(err)?;
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
    std::fs::read(&out).map_err(err)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (48, 64);
    let radiance = Image::from_fn(h, w, 3, |_, _, _| rng.random_range(1000.0..20000.0));
    save_pfm(dir.path().join("radiance.pfm"), &radiance).map_err(err)?;
    let depth = DepthMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.3..3.0)).collect()).map_err(err)?;
    save_depth(dir.path().join("depth.pfm"), &depth).map_err(err)?;
    let camera = CameraSettings {
        aperture_number: 1.6,
        exposure_time: 0.1,
        sensor_width: w as f64 * 3.45e-6,
        scene_illumination: 1.0 / (3.45e-6f64 * 3.45e-6),
        ..Default::default()
    };
    let sensor = SensorModelParams {
        k1: 0.05,
        vignetting_gain: 0.8,
        defocus_gain: 0.8,
        dark_current: 50.0,
        crf_b_rgb: [256.0; 3],
        noise_gain: 1.5,
        read_sigma: 20.0,
        ..Default::default()
    };
    diffcam::imagecore::save_params(dir.path().join("params.json"), &camera, &sensor).map_err(err)?;
    let a = render_once(dir.path(), "1", "a.raw16")?;
    let b = render_once(dir.path(), "1", "b.raw16")?;
    let c = render_once(dir.path(), "8", "c.raw16")?;
    ensure(a == b, || "repeated runs differ".into())?;
    ensure(a == c, || "--threads 1 and --threads 8 differ".into())?;
    Ok(format!("{} bytes identical across runs and thread counts (noise on)", a.len()))
}

fn psnr_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (h, w) = (rng.random_range(4..30), rng.random_range(4..30));
        let x = Image::from_fn(h, w, 3, |_, _, _| rng.random::<f64>());
        let y = Image::from_fn(h, w, 3, |_, _, _| rng.random::<f64>());
        let roi = RoiMask::from_fn(h, w, |_, _| rng.random_bool(0.7));
        if roi.count() == 0 {
            continue;
        }
        let (mut sse, mut n) = (0.0, 0usize);
        for i in 0..h {
            for j in 0..w {
                if roi.get(i, j) {
                    for c in 0..3 {
                        sse += (x.get(i, j, c) - y.get(i, j, c)).powi(2);
                        n += 1;
                    }
                }
            }
        }
        let oracle = 10.0 * (1.0 / (sse / n as f64)).log10();
        let got = psnr_effective(&x, &y, &roi).map_err(err)?;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst <= 1e-12, || format!("oracle gap {worst:e}"))?;
    let roi = RoiMask::from_fn(12, 12, |i, j| (i + j) % 3 != 0);
    let db = psnr_effective(&Image::filled(12, 12, 3, 0.5), &Image::filled(12, 12, 3, 0.4), &roi).map_err(err)?;
    ensure((db - 20.0).abs() <= 1e-12, || format!("uniform 0.1 error gave {db} dB"))?;
    Ok(format!("oracle gap {worst:.1e}, uniform 0.1 error → {db:.12} dB"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("gradient suite", gradient_suite()));
    let (defocus, table) = defocus_round_trip();
    results.push(("defocus self-calibration round-trip", defocus));
    results.push(("dropping-length erf oracle", erf_oracle()));
    results.push(("dropping-length table ordering", dropping_ordering(table)));
    results.push(("gamma estimation", gamma_estimation()));
    results.push(("exposure regression round-trip", exposure_round_trip()));
    results.push(("noise regression round-trip", noise_round_trip()));
    results.push(("vignetting round-trip", vignetting_round_trip()));
    results.push(("noise statistics", noise_statistics()));
    results.push(("blur energy conservation and adjoint", energy_and_adjoint()));
    results.push(("render determinism", determinism()));
    results.push(("effective-pixel PSNR", psnr_oracle()));

    let mut failed = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

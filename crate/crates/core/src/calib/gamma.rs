use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::DV_MAX;

/// Which exposure control a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFactor {
    ExposureTime,
    Iso,
    Aperture,
}

/// Probe values of one patch and channel while a single factor changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSweep {
    pub factor: SweepFactor,
    pub channel: usize,
    /// `(log2 exposure, digital value)`, ordered along the sweep. One unit
    /// of log2 exposure is one stop.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct GammaOptions {
    pub bin_width: f64,
    pub saturation: f64,
    /// Per-channel black level subtracted before taking logarithms.
    pub black_level: [f64; 3],
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            bin_width: 0.05,
            saturation: 0.95 * DV_MAX,
            black_level: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlope {
    pub factor: SweepFactor,
    pub channel: usize,
    pub slope: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Mean slope rounded to one decimal.
    pub gamma: f64,
    pub mean_slope: f64,
    pub groups: Vec<GroupSlope>,
}

/// Slopes of `log2 DV` against `log2 exposure` between consecutive
/// unsaturated points.
fn segment_slopes(sweep: &ExposureSweep, opts: &GammaOptions) -> Vec<f64> {
    let black = opts.black_level.get(sweep.channel).copied().unwrap_or(0.0);
    sweep
        .points
        .windows(2)
        .filter(|w| w.iter().all(|&(_, dv)| dv - black > 0.0 && dv <= opts.saturation))
        .filter(|w| w[1].0 != w[0].0)
        .map(|w| ((w[1].1 - black).log2() - (w[0].1 - black).log2()) / (w[1].0 - w[0].0))
        .collect()
}

/// Histogram mode average: drop the lowest bin (it collects saturation
/// outliers), then average the slopes in the two most populated bins.
fn mode_average(slopes: &[f64], bin_width: f64) -> f64 {
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &s in slopes {
        bins.entry((s / bin_width).floor() as i64).or_default().push(s);
    }
    if bins.len() > 1 {
        bins.pop_first();
    }
    let mut ranked: Vec<(&i64, &Vec<f64>)> = bins.iter().collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    let chosen: Vec<f64> = ranked.iter().take(2).flat_map(|(_, v)| v.iter().copied()).collect();
    chosen.iter().sum::<f64>() / chosen.len() as f64
}

/// Estimates the CRF exponent from stop-by-stop exposure sweeps.
///
/// Slopes are pooled per factor and channel, reduced by [`mode_average`],
/// and the resulting group slopes averaged. Aperture sweeps are reported in
/// `groups` but excluded from the average because apertures are rarely set
/// precisely.
pub fn estimate_gamma(sweeps: &[ExposureSweep], opts: &GammaOptions) -> Result<GammaEstimate> {
    let mut pooled: BTreeMap<(SweepFactor, usize), Vec<f64>> = BTreeMap::new();
    for sweep in sweeps {
        let slopes = segment_slopes(sweep, opts);
        if !slopes.is_empty() {
            pooled.entry((sweep.factor, sweep.channel)).or_default().extend(slopes);
        }
    }
    let groups: Vec<GroupSlope> = pooled
        .iter()
        .map(|(&(factor, channel), slopes)| GroupSlope {
            factor,
            channel,
            slope: mode_average(slopes, opts.bin_width),
            segments: slopes.len(),
        })
        .collect();
    let used: Vec<f64> = groups
        .iter()
        .filter(|g| g.factor != SweepFactor::Aperture)
        .map(|g| g.slope)
        .collect();
    if used.is_empty() {
        return Err(Error::Degenerate(
            "all probes saturated: no usable exposure-time or ISO segments".into(),
        ));
    }
    let mean_slope = used.iter().sum::<f64>() / used.len() as f64;
    Ok(GammaEstimate {
        gamma: (mean_slope * 10.0).round() / 10.0,
        mean_slope,
        groups,
    })
}

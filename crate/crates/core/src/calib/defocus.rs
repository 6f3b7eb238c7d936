use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dropping::{dropping_length, ScanGeometry};
use crate::error::{Error, Result};
use crate::imagecore::Image;

/// One target placement: edge at `depth`, lens focused at `focus` (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefocusCondition {
    pub depth: f64,
    pub focus: f64,
}

impl DefocusCondition {
    pub fn in_focus(&self) -> bool {
        self.depth == self.focus
    }
}

/// A rendered edge plus the geometry needed to express its dropping
/// length in millimeters.
#[derive(Debug, Clone)]
pub struct EdgeRender {
    pub image: Image,
    pub geometry: ScanGeometry,
}

#[derive(Debug, Clone, Copy)]
pub struct DefocusCalibOptions {
    pub initial_gain: f64,
    pub iterations: usize,
    /// Stop once the relative gain change drops below this.
    pub early_stop: Option<f64>,
}

impl Default for DefocusCalibOptions {
    fn default() -> Self {
        DefocusCalibOptions {
            initial_gain: 1.0,
            iterations: 3,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefocusIteration {
    /// Gain the synthetic lengths were rendered with.
    pub gain: f64,
    pub synthetic_lengths: Vec<f64>,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefocusCalibration {
    pub gain: f64,
    pub history: Vec<DefocusIteration>,
}

/// Measures the dropping length (mm) of every condition at `gain`.
pub fn synthetic_lengths<F>(conditions: &[DefocusCondition], gain: f64, render: &F) -> Result<Vec<f64>>
where
    F: Fn(&DefocusCondition, f64) -> Result<EdgeRender> + Sync,
{
    conditions
        .par_iter()
        .map(|c| {
            let r = render(c, gain)?;
            dropping_length(&r.image, &r.geometry)
        })
        .collect()
}

/// Fits the defocus gain by repeatedly scaling it with the mean ratio of
/// real to synthetic dropping lengths.
///
/// In-focus conditions (`depth == focus`) carry no defocus information and
/// are skipped; `real_lengths` runs parallel to `conditions`.
pub fn calibrate_defocus<F>(
    conditions: &[DefocusCondition],
    real_lengths: &[f64],
    render: F,
    opts: &DefocusCalibOptions,
) -> Result<DefocusCalibration>
where
    F: Fn(&DefocusCondition, f64) -> Result<EdgeRender> + Sync,
{
    if conditions.len() != real_lengths.len() {
        return Err(Error::shape(
            format!("{} real lengths", conditions.len()),
            real_lengths.len().to_string(),
        ));
    }
    let (used, real): (Vec<DefocusCondition>, Vec<f64>) = conditions
        .iter()
        .zip(real_lengths)
        .filter(|(c, _)| !c.in_focus())
        .map(|(c, &r)| (*c, r))
        .unzip();
    if used.is_empty() {
        return Err(Error::Precondition("no out-of-focus conditions".into()));
    }

    let mut gain = opts.initial_gain;
    let mut history = Vec::with_capacity(opts.iterations);
    for _ in 0..opts.iterations {
        let synth = synthetic_lengths(&used, gain, &render)?;
        if let Some(k) = synth.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Degenerate(format!(
                "zero synthetic dropping length at d={} U={}",
                used[k].depth, used[k].focus
            )));
        }
        let mean_ratio = real.iter().zip(&synth).map(|(r, s)| r / s).sum::<f64>() / synth.len() as f64;
        history.push(DefocusIteration {
            gain,
            synthetic_lengths: synth,
            mean_ratio,
        });
        let next = gain * mean_ratio;
        let change = ((next - gain) / gain).abs();
        gain = next;
        if opts.early_stop.is_some_and(|tol| change < tol) {
            break;
        }
    }
    Ok(DefocusCalibration { gain, history })
}

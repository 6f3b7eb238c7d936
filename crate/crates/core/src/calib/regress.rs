use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub residual_sum_squares: f64,
    pub sample_count: usize,
    /// Indices of coefficients the data could not determine (their design
    /// column was identically zero). Those coefficients are reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undetermined: Vec<usize>,
}

/// Least-squares slope of a line through the origin: `Σxy / Σx²`.
pub fn zero_intercept_regress(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(format!("{} ys", xs.len()), format!("{} ys", ys.len())));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::Degenerate(
            "zero-intercept regression needs a nonzero regressor".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    Ok(sxy / sxx)
}

/// Ordinary least squares of `ys` on the columns of `design` (row-major,
/// `ys.len()` rows of `cols` entries).
///
/// All-zero columns are dropped and flagged in
/// [`RegressionResult::undetermined`]; any other rank deficiency is an error.
pub fn least_squares(design: &[f64], cols: usize, ys: &[f64]) -> Result<RegressionResult> {
    let n = ys.len();
    if design.len() != n * cols {
        return Err(Error::shape(
            format!("{n}x{cols} design"),
            format!("{} entries", design.len()),
        ));
    }
    let scales: Vec<f64> = (0..cols)
        .map(|c| (0..n).map(|r| design[r * cols + c].abs()).fold(0.0, f64::max))
        .collect();
    let active: Vec<usize> = (0..cols).filter(|&c| scales[c] > 0.0).collect();
    let undetermined: Vec<usize> = (0..cols).filter(|&c| scales[c] == 0.0).collect();
    if active.is_empty() {
        return Err(Error::Degenerate("design matrix is all zeros".into()));
    }
    if n < active.len() {
        return Err(Error::Degenerate(format!(
            "{n} samples cannot determine {} coefficients",
            active.len()
        )));
    }

    // Column equilibration keeps the singular values comparable.
    let a = DMatrix::from_fn(n, active.len(), |r, k| {
        let c = active[k];
        design[r * cols + c] / scales[c]
    });
    let b = DVector::from_column_slice(ys);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-12 {
        return Err(Error::Degenerate(
            "rank-deficient design matrix".into(),
        ));
    }
    let solution = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Degenerate(format!("least squares failed: {e}")))?;
    let residual = &a * &solution - &b;

    let mut coefficients = vec![0.0; cols];
    for (k, &c) in active.iter().enumerate() {
        coefficients[c] = solution[k] / scales[c];
    }
    Ok(RegressionResult {
        coefficients,
        residual_sum_squares: residual.norm_squared(),
        sample_count: n,
        undetermined,
    })
}

/// Fits `y = slope·x + intercept`; coefficients are `[slope, intercept]`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<RegressionResult> {
    if xs.len() != ys.len() {
        return Err(Error::shape(format!("{} ys", xs.len()), format!("{} ys", ys.len())));
    }
    let design: Vec<f64> = xs.iter().flat_map(|&x| [x, 1.0]).collect();
    least_squares(&design, 2, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn slope_through_origin() {
        assert_eq!(zero_intercept_regress(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.0);
        assert_eq!(zero_intercept_regress(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(zero_intercept_regress(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn noisy_line_recovers_slope_within_ci() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let xs: Vec<f64> = (0..400).map(|k| k as f64 / 40.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + noise.sample(&mut rng)).collect();
        let slope = zero_intercept_regress(&xs, &ys).unwrap();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let se = 0.5 / sxx.sqrt();
        assert!((slope - 3.0).abs() < 4.0 * se, "{slope}");
    }

    #[test]
    fn multivariate_exact_recovery() {
        let mut design = Vec::new();
        let mut ys = Vec::new();
        for k in 0..30 {
            let (a, b) = (k as f64 * 1e3, (k % 7) as f64 * 0.01);
            design.extend([a, b, 1.0]);
            ys.push(2.5e-3 * a + 40.0 * b + 100.0);
        }
        let r = least_squares(&design, 3, &ys).unwrap();
        assert_relative_eq!(r.coefficients[0], 2.5e-3, max_relative = 1e-12);
        assert_relative_eq!(r.coefficients[1], 40.0, max_relative = 1e-12);
        assert_relative_eq!(r.coefficients[2], 100.0, max_relative = 1e-12);
        assert!(r.undetermined.is_empty());
    }

    #[test]
    fn zero_column_is_flagged_not_fatal() {
        let design = [0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0];
        let r = least_squares(&design, 3, &[5.0, 7.0, 9.0]).unwrap();
        assert_eq!(r.undetermined, vec![0]);
        assert_relative_eq!(r.coefficients[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.coefficients[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_columns_are_rank_deficient() {
        let design = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let err = least_squares(&design, 2, &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("rank-deficient"));
    }

    proptest! {
        #[test]
        fn scaled_regressor_gives_exact_slope(alpha in -1e3f64..1e3, xs in prop::collection::vec(0.5f64..100.0, 1..50)) {
            let ys: Vec<f64> = xs.iter().map(|x| alpha * x).collect();
            let slope = zero_intercept_regress(&xs, &ys).unwrap();
            prop_assert!((slope - alpha).abs() <= 1e-12 * alpha.abs().max(1.0));
        }
    }
}

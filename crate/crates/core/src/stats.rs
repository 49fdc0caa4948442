//! Summary statistics for Monte-Carlo trial batches and line fits.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::domain("Wilson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::domain("more successes than trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Mean and standard error of the mean.
pub fn mean_and_sem(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::domain("mean of an empty sample"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, libm::sqrt(var / n)))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard errors from the residual scatter; infinite with only two points.
    pub slope_se: f64,
    pub intercept_se: f64,
    pub residuals: Vec<f64>,
}

/// Weighted least-squares line `y = intercept + slope * x`. Weights are
/// relative; the error scale is estimated from the weighted residuals.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() != ws.len() {
        return Err(Error::domain("line fit inputs differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::domain("line fit needs at least two points"));
    }
    if ws.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::domain("line fit weights must be positive"));
    }
    let w_sum: f64 = ws.iter().sum();
    let x_bar = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / w_sum;
    let y_bar = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / w_sum;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - x_bar) * (x - x_bar);
        sxy += w * (x - x_bar) * (y - y_bar);
    }
    if !(sxx > 0.0) {
        return Err(Error::domain("line fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let dof = xs.len() as f64 - 2.0;
    let (slope_se, intercept_se) = if dof > 0.0 {
        let s2 = residuals
            .iter()
            .zip(ws)
            .map(|(r, w)| w * r * r)
            .sum::<f64>()
            / dof;
        (
            libm::sqrt(s2 / sxx),
            libm::sqrt(s2 * (1.0 / w_sum + x_bar * x_bar / sxx)),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        residuals,
    })
}

/// Ordinary least squares.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let ws: Vec<f64> = xs.iter().map(|_| 1.0).collect();
    weighted_line_fit(xs, ys, &ws)
}

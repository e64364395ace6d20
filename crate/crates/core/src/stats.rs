//! Least-squares polynomial fits and a regression slope test.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// Coefficients, constant term first.
    pub coefficients: Vec<f64>,
    /// Sum of squared residuals.
    pub sse: f64,
    pub r_squared: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Ordinary least-squares polynomial of the given degree.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<PolyFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParameter("x and y lengths differ".into()));
    }
    if xs.len() <= degree {
        return Err(Error::InvalidParameter(format!(
            "a degree-{degree} fit needs at least {} points, got {}",
            degree + 1,
            xs.len()
        )));
    }
    // Scale x to keep the Vandermonde matrix well conditioned.
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let a = DMatrix::from_fn(xs.len(), degree + 1, |r, c| (xs[r] / scale).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let solution = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("least squares failed: {e}")))?;
    let coefficients: Vec<f64> =
        solution.iter().enumerate().map(|(k, c)| c / scale.powi(k as i32)).collect();
    let residuals = &a * &solution - &b;
    let sse = residuals.norm_squared();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { 0.0 };
    Ok(PolyFit { coefficients, sse, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeTest {
    pub slope: f64,
    pub std_error: f64,
    pub t: f64,
    /// Two-sided p-value for a zero slope.
    pub p_value: f64,
}

impl SlopeTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Student-t test of the slope of a simple linear regression of `ys` on `xs`.
pub fn slope_test(xs: &[f64], ys: &[f64]) -> Result<SlopeTest> {
    let k = xs.len();
    if k != ys.len() || k < 3 {
        return Err(Error::InvalidParameter(format!("slope test needs at least 3 paired points, got {k}")));
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope test needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = (k - 2) as f64;
    let std_error = (sse / dof / sxx).sqrt();
    if std_error == 0.0 {
        let p_value = if slope == 0.0 { 1.0 } else { 0.0 };
        return Ok(SlopeTest { slope, std_error, t: if slope == 0.0 { 0.0 } else { f64::INFINITY }, p_value });
    }
    let t = slope / std_error;
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(SlopeTest { slope, std_error, t, p_value })
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

//! Least squares with a small ridge term, solved on centered normal equations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    /// KPI units per driver unit, one per driver.
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(row)
            .fold(self.intercept, |acc, (c, x)| acc + c * x)
    }
}

/// Fits `y ≈ intercept + X·w` minimizing `‖y − intercept − Xw‖² + λ‖w‖²`.
///
/// The intercept is not penalized: the system is solved on centered columns,
/// so a constant driver gets a coefficient of exactly zero whenever `λ > 0`.
pub fn fit_ridge(rows: &[Vec<f64>], y: &[f64], ridge_lambda: f64) -> Result<LinearModel> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(Error::Invalid(format!(
            "linear fit needs matching nonempty inputs ({n} rows, {} targets)",
            y.len()
        )));
    }
    let d = rows[0].len();
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    if d == 0 {
        return Ok(LinearModel {
            intercept: y_mean,
            coefficients: Vec::new(),
        });
    }

    let xc = DMatrix::from_fn(n, d, |i, j| rows[i][j] - x_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    let max_diag = gram.diagonal().iter().copied().fold(0.0, f64::max);
    for j in 0..d {
        gram[(j, j)] += ridge_lambda;
    }
    let rhs = xc.transpose() * yc;

    let chol = gram.clone().cholesky().ok_or(Error::SingularDesign)?;
    if ridge_lambda == 0.0 {
        // Cholesky can succeed on a numerically rank-deficient matrix; reject tiny pivots
        let l = chol.l_dirty();
        let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        if (0..d).any(|j| l[(j, j)] * l[(j, j)] <= floor) {
            return Err(Error::SingularDesign);
        }
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign);
    }
    let coefficients: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
    })
}

/// Coefficient of determination. A constant target scores 1 when predicted
/// exactly and 0 otherwise.
pub fn r_squared(y: &[f64], predicted: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(predicted).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

//! Exact Gaussian-process regression with a fixed Matérn 5/2 kernel.
//!
//! Inputs live in the unit cube and targets are expected to be standardized,
//! so the prior mean is 0. Hyperparameters are fixed rather than fitted:
//! length scale 0.3, signal variance = sample variance of the targets,
//! noise variance = 1e-6 × signal variance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LENGTH_SCALE: f64 = 0.3;
pub const NOISE_RATIO: f64 = 1e-6;
const MAX_JITTER_STEPS: usize = 12;

/// Matérn 5/2 covariance at distance `r`.
pub fn matern52(r: f64, length_scale: f64, signal_variance: f64) -> f64 {
    let s = 5f64.sqrt() * r / length_scale;
    signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    inputs: Vec<Vec<f64>>,
    length_scale: f64,
    signal_variance: f64,
    noise_variance: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    /// True when extra diagonal jitter beyond the noise term was needed.
    pub jitter_escalated: bool,
}

impl Surrogate {
    /// GP with no observations.
    pub fn prior(signal_variance: f64) -> Self {
        Self {
            inputs: Vec::new(),
            length_scale: LENGTH_SCALE,
            signal_variance,
            noise_variance: NOISE_RATIO * signal_variance,
            chol: None,
            alpha: DVector::zeros(0),
            jitter_escalated: false,
        }
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let Some(chol) = &self.chol else {
            return (0.0, self.signal_variance.sqrt());
        };
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| matern52(distance(xi, x), self.length_scale, self.signal_variance)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .unwrap_or_else(|| DVector::zeros(self.inputs.len()));
        let var = (self.signal_variance - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }
}

fn sample_variance(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Fits the surrogate. A zero target variance falls back to unit signal variance.
pub fn gp_fit(inputs: &[Vec<f64>], y: &[f64]) -> Result<Surrogate> {
    if inputs.len() != y.len() {
        return Err(Error::Invalid("GP inputs and targets differ in length".into()));
    }
    if inputs.is_empty() {
        return Ok(Surrogate::prior(1.0));
    }
    let var = sample_variance(y);
    let signal_variance = if var > 0.0 && var.is_finite() { var } else { 1.0 };
    let noise_variance = NOISE_RATIO * signal_variance;
    let n = inputs.len();
    let base = DMatrix::from_fn(n, n, |i, j| {
        matern52(distance(&inputs[i], &inputs[j]), LENGTH_SCALE, signal_variance)
    });

    let mut jitter = noise_variance;
    let mut escalated = false;
    for _ in 0..MAX_JITTER_STEPS {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(&DVector::from_column_slice(y));
            if alpha.iter().all(|a| a.is_finite()) {
                return Ok(Surrogate {
                    inputs: inputs.to_vec(),
                    length_scale: LENGTH_SCALE,
                    signal_variance,
                    noise_variance,
                    chol: Some(chol),
                    alpha,
                    jitter_escalated: escalated,
                });
            }
        }
        jitter *= 10.0;
        escalated = true;
    }
    Err(Error::Numerical("GP covariance is not positive definite".into()))
}

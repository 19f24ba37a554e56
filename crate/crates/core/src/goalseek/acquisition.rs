//! Standard normal density/CDF and the expected-improvement acquisition.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(z).
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF Φ(z), via `erfc` to keep precision in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement of a maximization candidate over `best_so_far`.
///
/// `EI = (μ − best)·Φ(z) + σ·φ(z)` with `z = (μ − best)/σ`; when `σ = 0` the
/// improvement is deterministic, `max(μ − best, 0)`.
pub fn expected_improvement(mean: f64, std: f64, best_so_far: f64) -> f64 {
    let gap = mean - best_so_far;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    (gap * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

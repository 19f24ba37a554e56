//! Latin hypercube sampling in the unit cube.

use rand::seq::SliceRandom;
use rand::Rng;

/// `n` points in `[0, 1)^d`; each axis has exactly one point per stratum `[k/n, (k+1)/n)`.
#[allow(clippy::needless_range_loop)]
pub fn latin_hypercube<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            points[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

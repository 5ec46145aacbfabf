//! Synthetic regression fixtures used by tests, benchmarks and the
//! documentation examples.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Matrix;
use crate::seed;

/// Friedman-1 benchmark: ten U(0,1) features, five of which carry signal.
pub fn friedman1(n: usize, noise_sd: f64, seed_value: u64) -> (Matrix, Vec<f64>) {
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, noise_sd.max(1e-12)).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..10).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            10.0 * (std::f64::consts::PI * r[0] * r[1]).sin()
                + 20.0 * (r[2] - 0.5).powi(2)
                + 10.0 * r[3]
                + 5.0 * r[4]
                + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Planted-signal problem: y = 2*x0 - 3*x1 + N(0, noise_sd^2) with
/// `p - 2` pure-noise features appended.
pub fn planted_signal(n: usize, p: usize, noise_sd: f64, seed_value: u64) -> (Matrix, Vec<f64>) {
    assert!(p >= 2);
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, noise_sd.max(1e-12)).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 2.0 * r[0] - 3.0 * r[1] + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 })
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

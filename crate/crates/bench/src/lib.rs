//! Shared fixtures for the benchmarks.

use r2p_core::datasets::{
    gen_synthetic_a, gen_synthetic_a_regression, NoiseConvention, SyntheticSpec,
};
use r2p_core::{HteDataset, RegressionDataset};

pub fn effect_data(n: usize, seed: u64) -> HteDataset {
    gen_synthetic_a(&SyntheticSpec::new(n, 2, seed), NoiseConvention::Variance)
        .expect("valid sizes")
        .train
}

pub fn regression_data(n: usize, seed: u64) -> RegressionDataset {
    gen_synthetic_a_regression(n, seed, NoiseConvention::Variance).expect("valid sizes")
}

/// Nonnegative scores with ties and a heavy right tail.
pub fn residuals(n: usize, seed: u64) -> Vec<f64> {
    regression_data(n, seed)
        .outcomes
        .iter()
        .map(|y| (y * 4.0).round().abs() / 4.0)
        .collect()
}

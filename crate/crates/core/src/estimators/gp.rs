use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{
    check_fit_input, mean, population_variance, squared_distance, EstimatorConfig,
    OutcomeEstimator, Standardizer,
};
use crate::data::{seeded_rng, Matrix};
use crate::error::{Error, Result};

/// Variance floor keeping the kernel system positive definite on constant outcomes.
const MIN_VARIANCE: f64 = 1e-8;
/// Above this many rows the lengthscale heuristic samples pairs instead of
/// enumerating them.
const MAX_EXACT_PAIRS_ROWS: usize = 1500;
const SAMPLED_PAIRS: usize = 200_000;

/// Resolved kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub prior_mean: f64,
}

/// Posterior mean of GP regression with an RBF kernel
/// `signal_var * exp(-|a - b|^2 / (2 lengthscale^2))` on standardized covariates.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    params: GpParams,
    scaler: Standardizer,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl GpRegressor {
    pub fn fit(covariates: &Matrix, outcomes: &[f64], cfg: &EstimatorConfig) -> Result<Self> {
        check_fit_input(covariates, outcomes)?;
        let scaler = Standardizer::fit(covariates);
        let points = scaler.apply_all(covariates);
        let var_y = population_variance(outcomes).max(MIN_VARIANCE);
        let params = GpParams {
            lengthscale: cfg
                .gp_lengthscale
                .unwrap_or_else(|| median_pairwise_distance(&points, cfg.seed)),
            signal_var: cfg.gp_signal_var.unwrap_or(var_y),
            noise_var: cfg.gp_noise_var.unwrap_or(0.1 * var_y),
            prior_mean: if cfg.gp_center { mean(outcomes) } else { 0.0 },
        };
        if params.noise_var.is_nan() || params.noise_var <= 0.0 {
            return Err(Error::InvalidParameter(
                "gp noise variance must be > 0".into(),
            ));
        }

        let n = points.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            let k = kernel(&params, &points[i], &points[j]);
            if i == j {
                k + params.noise_var
            } else {
                k
            }
        });
        let chol = gram.cholesky().ok_or(Error::KernelNotPositiveDefinite)?;
        let centered = DVector::from_iterator(n, outcomes.iter().map(|y| y - params.prior_mean));
        let weights = chol.solve(&centered).iter().copied().collect();
        Ok(Self {
            params,
            scaler,
            points,
            weights,
        })
    }

    pub fn params(&self) -> GpParams {
        self.params
    }
}

impl OutcomeEstimator for GpRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        let z = self.scaler.apply(x);
        self.params.prior_mean
            + self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(p, w)| w * kernel(&self.params, &z, p))
                .sum::<f64>()
    }
}

fn kernel(params: &GpParams, a: &[f64], b: &[f64]) -> f64 {
    params.signal_var
        * (-squared_distance(a, b) / (2.0 * params.lengthscale * params.lengthscale)).exp()
}

/// Median heuristic; falls back to 1 when every point coincides.
fn median_pairwise_distance(points: &[Vec<f64>], seed: u64) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::new();
    if n <= MAX_EXACT_PAIRS_ROWS {
        for i in 0..n {
            for j in i + 1..n {
                dists.push(squared_distance(&points[i], &points[j]).sqrt());
            }
        }
    } else {
        let mut rng = seeded_rng(seed);
        while dists.len() < SAMPLED_PAIRS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                dists.push(squared_distance(&points[i], &points[j]).sqrt());
            }
        }
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

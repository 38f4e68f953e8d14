use nalgebra::{DMatrix, DVector};

use super::{check_fit_input, OutcomeEstimator};
use crate::data::Matrix;
use crate::error::{Error, Result};

/// `intercept + w . x` minimizing squared error plus `penalty * |w|^2`.
///
/// The intercept is unpenalized: the system is solved on centered data.
#[derive(Debug, Clone)]
pub struct RidgeRegressor {
    weights: Vec<f64>,
    intercept: f64,
}

impl RidgeRegressor {
    pub fn fit(covariates: &Matrix, outcomes: &[f64], penalty: f64) -> Result<Self> {
        check_fit_input(covariates, outcomes)?;
        if penalty.is_nan() || penalty < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ridge penalty must be >= 0, got {penalty}"
            )));
        }
        let n = covariates.n_rows();
        let d = covariates.n_cols();
        let x_mean: Vec<f64> = (0..d)
            .map(|k| covariates.rows().map(|r| r[k]).sum::<f64>() / n as f64)
            .collect();
        let y_mean = outcomes.iter().sum::<f64>() / n as f64;

        let centered = DMatrix::from_fn(n, d, |i, k| covariates.get(i, k) - x_mean[k]);
        let yc = DVector::from_iterator(n, outcomes.iter().map(|y| y - y_mean));
        let gram = centered.transpose() * &centered + DMatrix::identity(d, d) * penalty;
        let rhs = centered.transpose() * yc;

        let chol = gram.cholesky().ok_or(Error::SingularDesign)?;
        // cholesky() accepts tiny positive pivots on rank-deficient designs
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let max_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .copied()
            .fold(0.0, f64::max);
        if d > 0 && penalty == 0.0 && min_pivot <= max_pivot * 1e-6 {
            return Err(Error::SingularDesign);
        }
        let w = chol.solve(&rhs);
        let weights: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
        Ok(Self { weights, intercept })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}

impl OutcomeEstimator for RidgeRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

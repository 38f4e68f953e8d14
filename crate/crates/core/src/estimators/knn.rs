use super::{check_fit_input, squared_distance, OutcomeEstimator, Standardizer};
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Mean outcome of the `k` nearest training rows (Euclidean distance on
/// standardized covariates, ties to the lower row index).
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    k: usize,
    scaler: Standardizer,
    points: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
}

impl KnnRegressor {
    pub fn fit(covariates: &Matrix, outcomes: &[f64], k: usize) -> Result<Self> {
        check_fit_input(covariates, outcomes)?;
        if k == 0 || k > outcomes.len() {
            return Err(Error::InvalidParameter(format!(
                "knn k = {k} must lie in [1, {}]",
                outcomes.len()
            )));
        }
        let scaler = Standardizer::fit(covariates);
        Ok(Self {
            k,
            points: scaler.apply_all(covariates),
            scaler,
            outcomes: outcomes.to_vec(),
        })
    }
}

impl OutcomeEstimator for KnnRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        let z = self.scaler.apply(x);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(&z, p), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        dist[..self.k]
            .iter()
            .map(|&(_, i)| self.outcomes[i])
            .sum::<f64>()
            / self.k as f64
    }
}

//! Outcome models and the two-arm effect estimator.
//!
//! Every model is fitted once and then only queried, so fitted models are
//! `Send + Sync` and can serve predictions from many threads.

mod gp;
mod knn;
mod ridge;

use serde::{Deserialize, Serialize};

pub use gp::{GpParams, GpRegressor};
pub use knn::KnnRegressor;
pub use ridge::RidgeRegressor;

use crate::data::{HteDataset, Matrix};
use crate::error::{Error, Result};

/// A fitted regression model `x -> E[Y | X = x]`.
pub trait OutcomeEstimator: Send + Sync + std::fmt::Debug {
    fn predict(&self, x: &[f64]) -> f64;
}

/// A fitted pair of arm models. The effect estimate is always `mu1 - mu0`.
pub trait IteEstimator: Send + Sync + std::fmt::Debug {
    /// Returns `(mu0, mu1)`.
    fn predict_arms(&self, x: &[f64]) -> (f64, f64);

    fn predict_ite(&self, x: &[f64]) -> f64 {
        let (mu0, mu1) = self.predict_arms(x);
        mu1 - mu0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Knn,
    Ridge,
    Gp,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(Self::Knn),
            "ridge" => Ok(Self::Ridge),
            "gp" => Ok(Self::Gp),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator `{other}` (expected knn, ridge or gp)"
            ))),
        }
    }
}

/// Estimator selection and hyperparameters.
///
/// GP hyperparameters left as `None` are set from the training data:
/// lengthscale = median pairwise distance of the standardized covariates,
/// signal variance = `Var(y)`, noise variance = `0.1 * Var(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub knn_k: usize,
    pub ridge_penalty: f64,
    pub gp_lengthscale: Option<f64>,
    pub gp_signal_var: Option<f64>,
    pub gp_noise_var: Option<f64>,
    /// Use the training mean as the GP prior mean instead of zero.
    pub gp_center: bool,
    /// Seeds the pair subsample of the lengthscale heuristic on large inputs.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Gp,
            knn_k: 10,
            ridge_penalty: 1.0,
            gp_lengthscale: None,
            gp_signal_var: None,
            gp_noise_var: None,
            gp_center: true,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn knn(k: usize) -> Self {
        Self {
            kind: EstimatorKind::Knn,
            knn_k: k,
            ..Self::default()
        }
    }

    pub fn ridge(penalty: f64) -> Self {
        Self {
            kind: EstimatorKind::Ridge,
            ridge_penalty: penalty,
            ..Self::default()
        }
    }

    pub fn gp() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            ))),
            _ => Ok(()),
        };
        if self.knn_k == 0 {
            return Err(Error::InvalidParameter("knn_k must be at least 1".into()));
        }
        if self.ridge_penalty.is_nan() || self.ridge_penalty < 0.0 {
            return Err(Error::InvalidParameter("ridge_penalty must be >= 0".into()));
        }
        positive("gp_lengthscale", self.gp_lengthscale)?;
        positive("gp_signal_var", self.gp_signal_var)?;
        positive("gp_noise_var", self.gp_noise_var)
    }
}

/// Fits the configured outcome model.
pub fn fit_outcome(
    cfg: &EstimatorConfig,
    covariates: &Matrix,
    outcomes: &[f64],
) -> Result<Box<dyn OutcomeEstimator>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        EstimatorKind::Knn => Box::new(fit_knn(covariates, outcomes, cfg.knn_k)?),
        EstimatorKind::Ridge => Box::new(fit_ridge(covariates, outcomes, cfg.ridge_penalty)?),
        EstimatorKind::Gp => Box::new(fit_gp(covariates, outcomes, cfg)?),
    })
}

pub fn fit_knn(covariates: &Matrix, outcomes: &[f64], k: usize) -> Result<KnnRegressor> {
    KnnRegressor::fit(covariates, outcomes, k)
}

pub fn fit_ridge(covariates: &Matrix, outcomes: &[f64], penalty: f64) -> Result<RidgeRegressor> {
    RidgeRegressor::fit(covariates, outcomes, penalty)
}

pub fn fit_gp(covariates: &Matrix, outcomes: &[f64], cfg: &EstimatorConfig) -> Result<GpRegressor> {
    GpRegressor::fit(covariates, outcomes, cfg)
}

/// Two independently fitted arm models.
#[derive(Debug)]
pub struct TLearner {
    pub mu0: Box<dyn OutcomeEstimator>,
    pub mu1: Box<dyn OutcomeEstimator>,
}

impl IteEstimator for TLearner {
    fn predict_arms(&self, x: &[f64]) -> (f64, f64) {
        (self.mu0.predict(x), self.mu1.predict(x))
    }
}

/// Fits `mu1` on the treated rows of `train_idx` and `mu0` on its control rows.
pub fn fit_ite_t_learner(
    dataset: &HteDataset,
    cfg: &EstimatorConfig,
    train_idx: &[usize],
) -> Result<TLearner> {
    let (treated, control): (Vec<usize>, Vec<usize>) =
        train_idx.iter().partition(|&&i| dataset.treatments[i]);
    let fit_arm = |idx: &[usize], arm: &'static str| {
        if idx.is_empty() || (cfg.kind == EstimatorKind::Knn && idx.len() < cfg.knn_k) {
            return Err(Error::CannotFitArm(arm));
        }
        let x = dataset.covariates.select_rows(idx);
        let y: Vec<f64> = idx.iter().map(|&i| dataset.outcomes[i]).collect();
        fit_outcome(cfg, &x, &y)
    };
    Ok(TLearner {
        mu1: fit_arm(&treated, "treated")?,
        mu0: fit_arm(&control, "control")?,
    })
}

/// Per-feature z-scoring with statistics taken from the training rows.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(x: &Matrix) -> Self {
        let n = x.n_rows().max(1) as f64;
        let d = x.n_cols();
        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in x.rows() {
            for k in 0..d {
                var[k] += (row[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub(crate) fn apply_all(&self, x: &Matrix) -> Vec<Vec<f64>> {
        x.rows().map(|r| self.apply(r)).collect()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

fn check_fit_input(covariates: &Matrix, outcomes: &[f64]) -> Result<()> {
    if covariates.n_rows() != outcomes.len() {
        return Err(Error::InvalidData(format!(
            "{} covariate rows but {} outcomes",
            covariates.n_rows(),
            outcomes.len()
        )));
    }
    if outcomes.is_empty() {
        return Err(Error::InvalidData(
            "cannot fit on an empty training set".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_synthetic_a, NoiseConvention, SyntheticSpec};

    #[test]
    fn identical_arms_give_zero_effect() {
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) * 4.0 - 2.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| x * x).collect();
        // each arm sees the same grid of x values and outcomes
        let mut rows = Vec::new();
        let mut t = Vec::new();
        let mut ys = Vec::new();
        for (x, yy) in xs.iter().zip(&y) {
            for arm in [false, true] {
                rows.push(vec![*x]);
                t.push(arm);
                ys.push(*yy);
            }
        }
        let ds = HteDataset::new(Matrix::from_rows(&rows).unwrap(), t, ys, None).unwrap();
        let idx: Vec<usize> = (0..ds.len()).collect();
        for cfg in [
            EstimatorConfig::knn(5),
            EstimatorConfig::ridge(0.1),
            EstimatorConfig::gp(),
        ] {
            let model = fit_ite_t_learner(&ds, &cfg, &idx).unwrap();
            for x in [-1.0, 0.0, 0.7] {
                assert!(model.predict_ite(&[x]).abs() < 1e-9, "{cfg:?} at {x}");
            }
        }
    }

    #[test]
    fn synthetic_a_effect_recovered_by_gp() {
        let spec = SyntheticSpec::new(1000, 10, 7);
        let data = gen_synthetic_a(&spec, NoiseConvention::Variance).unwrap();
        let idx: Vec<usize> = (0..data.train.len()).collect();
        let model = fit_ite_t_learner(&data.train, &EstimatorConfig::gp(), &idx).unwrap();
        for x1 in [-1.0, 0.0, 1.0] {
            let tau = model.predict_ite(&[x1, 0.0]);
            assert!((tau - 0.5 * x1).abs() < 0.15, "tau({x1}) = {tau}");
        }
    }

    #[test]
    fn t_learner_rejects_single_arm() {
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
        let ds = HteDataset::new(x, vec![true, false, true], vec![1.0, 2.0, 3.0], None).unwrap();
        let err = fit_ite_t_learner(&ds, &EstimatorConfig::ridge(1.0), &[0, 2]).unwrap_err();
        assert!(err.to_string().contains("cannot fit arm"));
    }

    #[test]
    fn effect_is_arm_difference() {
        let spec = SyntheticSpec::new(200, 10, 3);
        let data = gen_synthetic_a(&spec, NoiseConvention::Variance).unwrap();
        let idx: Vec<usize> = (0..data.train.len()).collect();
        let model = fit_ite_t_learner(&data.train, &EstimatorConfig::knn(5), &idx).unwrap();
        for row in data.test.covariates.rows() {
            let (mu0, mu1) = model.predict_arms(row);
            assert!(mu0.is_finite() && mu1.is_finite());
            assert_eq!(model.predict_ite(row), mu1 - mu0);
        }
    }
}

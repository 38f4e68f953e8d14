//! Synthetic benchmark generators with exact ground truth, plus a CSV loader
//! for semi-synthetic data.
//!
//! Normal distributions are written `N(mean, v)`. By default `v` is read as
//! the variance; [`NoiseConvention::StdDev`] reads it as the standard
//! deviation instead. The convention applies to every normal draw of a
//! generator, covariates included.
//!
//! Treatment is an independent fair coin in every generator.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, GroundTruth, HteDataset, Matrix, RegressionDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseConvention {
    #[default]
    Variance,
    StdDev,
}

impl NoiseConvention {
    fn sd(self, v: f64) -> f64 {
        match self {
            Self::Variance => v.sqrt(),
            Self::StdDev => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticKind {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            n_train,
            n_test,
            seed,
        }
    }
}

/// Independent train and test draws from one generative model.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub train: HteDataset,
    pub test: HteDataset,
}

/// One row of potential outcomes before treatment assignment.
struct Draw {
    x: Vec<f64>,
    y0: f64,
    y1: f64,
    tau: f64,
}

fn assemble(draws: Vec<Draw>, rng: &mut ChaCha8Rng) -> Result<HteDataset> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a generated dataset needs at least 2 rows, got {n}"
        )));
    }
    let mut treatments: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    if treatments.iter().all(|&t| t) || treatments.iter().all(|&t| !t) {
        treatments[0] = !treatments[0];
    }
    let rows: Vec<Vec<f64>> = draws.iter().map(|d| d.x.clone()).collect();
    let outcomes = draws
        .iter()
        .zip(&treatments)
        .map(|(d, &t)| if t { d.y1 } else { d.y0 })
        .collect();
    let truth = GroundTruth {
        y0: Some(draws.iter().map(|d| d.y0).collect()),
        y1: Some(draws.iter().map(|d| d.y1).collect()),
        tau: draws.iter().map(|d| d.tau).collect(),
    };
    HteDataset::new(Matrix::from_rows(&rows)?, treatments, outcomes, Some(truth))
}

fn generate<F>(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, mut draw: F) -> Result<SyntheticSample>
where
    F: FnMut(&mut ChaCha8Rng) -> Draw,
{
    let mut part = |n: usize, rng: &mut ChaCha8Rng| {
        let draws = (0..n).map(|_| draw(rng)).collect();
        assemble(draws, rng)
    };
    let train = part(spec.n_train, rng)?;
    let test = part(spec.n_test, rng)?;
    Ok(SyntheticSample { train, test })
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("standard deviation is finite and nonnegative")
}

/// Mean outcome component of dataset A.
pub fn synthetic_a_eta(x: &[f64]) -> f64 {
    0.5 * x[0] + x[1]
}

/// Treatment effect of dataset A.
pub fn synthetic_a_kappa(x: &[f64]) -> f64 {
    0.5 * x[0]
}

const SYNTHETIC_A_NOISE: f64 = 0.01;

/// Two standard-normal covariates,
/// `y(t) = eta(x) + (2t - 1) kappa(x) / 2 + eps`, `eps ~ N(0, 0.01)`.
pub fn gen_synthetic_a(spec: &SyntheticSpec, noise: NoiseConvention) -> Result<SyntheticSample> {
    let mut rng = seeded_rng(spec.seed);
    let x_dist = normal(0.0, 1.0);
    let eps = normal(0.0, noise.sd(SYNTHETIC_A_NOISE));
    generate(spec, &mut rng, |rng| {
        let x = vec![x_dist.sample(rng), x_dist.sample(rng)];
        let (eta, kappa) = (synthetic_a_eta(&x), synthetic_a_kappa(&x));
        Draw {
            y0: eta - 0.5 * kappa + eps.sample(rng),
            y1: eta + 0.5 * kappa + eps.sample(rng),
            tau: kappa,
            x,
        }
    })
}

/// Regression-only variant of dataset A: `y = eta(x) + eps`.
pub fn gen_synthetic_a_regression(
    n: usize,
    seed: u64,
    noise: NoiseConvention,
) -> Result<RegressionDataset> {
    let mut rng = seeded_rng(seed);
    let x_dist = normal(0.0, 1.0);
    let eps = normal(0.0, noise.sd(SYNTHETIC_A_NOISE));
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x = vec![x_dist.sample(&mut rng), x_dist.sample(&mut rng)];
        y.push(synthetic_a_eta(&x) + eps.sample(&mut rng));
        rows.push(x);
    }
    RegressionDataset::new(Matrix::from_rows(&rows)?, y)
}

/// Column of the time-from-onset covariate in dataset B.
pub const SYNTHETIC_B_ONSET: usize = 0;

/// `(name, mean, second parameter)` of the normal covariates of dataset B, in
/// column order after the onset covariate. White-cell count repeats the age
/// distribution as published.
pub const SYNTHETIC_B_COVARIATES: [(&str, f64, f64); 9] = [
    ("age", 66.0, 4.0),
    ("white_blood_cell", 66.0, 4.0),
    ("lymphocyte", 0.8, 0.1),
    ("platelet", 183.0, 20.4),
    ("serum_creatinine", 68.0, 6.6),
    ("ast", 31.0, 5.1),
    ("alt", 26.0, 5.1),
    ("ldh", 339.0, 51.0),
    ("creatine_kinase", 76.0, 21.0),
];

const SYNTHETIC_B_BETA_VALUES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];
const SYNTHETIC_B_BETA_PROBS: [f64; 5] = [0.6, 0.1, 0.1, 0.1, 0.1];
const SYNTHETIC_B_NOISE: f64 = 0.1;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Control mean of dataset B given the linear part `x_std . beta`.
pub fn synthetic_b_mu0(linear: f64, onset: f64) -> f64 {
    linear + logistic(onset - 9.0) + 5.0
}

pub fn synthetic_b_mu1(linear: f64, onset: f64) -> f64 {
    linear + 5.0 * logistic(onset - 9.0)
}

/// Treatment effect of dataset B: `4 * logistic(onset - 9) - 5`.
pub fn synthetic_b_tau(onset: f64) -> f64 {
    synthetic_b_mu1(0.0, onset) - synthetic_b_mu0(0.0, onset)
}

/// Ten covariates (onset first), a logistic effect in the onset time, and a
/// sparse random linear response on the standardized remaining covariates.
///
/// `beta` is drawn once per call from the seed and shared by train and test.
/// Standardization uses the known population mean and deviation of each
/// covariate so the response surface is identical in both parts.
pub fn gen_synthetic_b(spec: &SyntheticSpec, noise: NoiseConvention) -> Result<SyntheticSample> {
    let mut rng = seeded_rng(spec.seed);
    let beta = draw_synthetic_b_beta(&mut rng);
    let covariates: Vec<(f64, f64, Normal<f64>)> = SYNTHETIC_B_COVARIATES
        .iter()
        .map(|&(_, m, v)| {
            let sd = noise.sd(v);
            (m, sd, normal(m, sd))
        })
        .collect();
    let onset_dist = Uniform::new(4.0, 14.0).expect("valid range");
    let eps = normal(0.0, noise.sd(SYNTHETIC_B_NOISE));
    generate(spec, &mut rng, |rng| {
        let onset = onset_dist.sample(rng);
        let mut x = Vec::with_capacity(10);
        x.push(onset);
        let mut linear = 0.0;
        for ((m, sd, dist), b) in covariates.iter().zip(&beta) {
            let v = dist.sample(rng);
            linear += b * (v - m) / sd;
            x.push(v);
        }
        Draw {
            y0: synthetic_b_mu0(linear, onset) + eps.sample(rng),
            y1: synthetic_b_mu1(linear, onset) + eps.sample(rng),
            tau: synthetic_b_tau(onset),
            x,
        }
    })
}

fn draw_synthetic_b_beta(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..SYNTHETIC_B_COVARIATES.len())
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, p) in SYNTHETIC_B_BETA_VALUES.iter().zip(SYNTHETIC_B_BETA_PROBS) {
                acc += p;
                if u < acc {
                    return *v;
                }
            }
            SYNTHETIC_B_BETA_VALUES[SYNTHETIC_B_BETA_VALUES.len() - 1]
        })
        .collect()
}

/// A treatment with no systematic effect.
///
/// One standard-normal covariate; `Y(0) ~ N(0, 0.1^2)` and
/// `Y(1) = Y(0) + tau` where `tau ~ N(0, tau_sd^2)` independently of `x`.
/// The recorded truth is the realized `tau`. With `tau_sd = 0` both potential
/// outcomes coincide.
pub fn gen_null_effect(spec: &SyntheticSpec, tau_sd: f64) -> Result<SyntheticSample> {
    if tau_sd.is_nan() || tau_sd < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau_sd must be >= 0, got {tau_sd}"
        )));
    }
    let mut rng = seeded_rng(spec.seed);
    let x_dist = normal(0.0, 1.0);
    let base = normal(0.0, 0.1);
    let effect = normal(0.0, tau_sd);
    generate(spec, &mut rng, |rng| {
        let x = vec![x_dist.sample(rng)];
        let y0 = base.sample(rng);
        let tau = effect.sample(rng);
        Draw {
            x,
            y0,
            y1: y0 + tau,
            tau,
        }
    })
}

/// Column names of a semi-synthetic CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Covariate columns; `None` takes every column not named below.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub tau: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            covariates: None,
            treatment: "t".into(),
            outcome: "y".into(),
            tau: None,
        }
    }
}

impl CsvSchema {
    fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = vec![&self.treatment, &self.outcome];
        names.extend(self.tau.as_deref());
        if let Some(cov) = &self.covariates {
            names.extend(cov.iter().map(String::as_str));
        }
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::InvalidParameter(
                "csv schema column names must be distinct".into(),
            ));
        }
        Ok(())
    }
}

/// Loads a header-first CSV file of numeric columns.
///
/// Row numbers in errors count data rows from 1.
pub fn load_semisynthetic_csv(path: &Path, schema: &CsvSchema) -> Result<HteDataset> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let position: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let col = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };

    let t_col = col(&schema.treatment)?;
    let y_col = col(&schema.outcome)?;
    let tau_col = schema.tau.as_deref().map(col).transpose()?;
    let cov_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != t_col && i != y_col && Some(i) != tau_col)
            .collect(),
    };

    let mut rows = Vec::new();
    let mut treatments = Vec::new();
    let mut outcomes = Vec::new();
    let mut tau = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: headers[c].clone(),
                value: raw.to_owned(),
            })
        };
        rows.push(
            cov_cols
                .iter()
                .map(|&c| cell(c))
                .collect::<Result<Vec<_>>>()?,
        );
        let t = cell(t_col)?;
        if t != 0.0 && t != 1.0 {
            return Err(Error::InvalidTreatment { row, value: t });
        }
        treatments.push(t == 1.0);
        outcomes.push(cell(y_col)?);
        if let Some(c) = tau_col {
            tau.push(cell(c)?);
        }
    }
    let covariates = Matrix::from_row_major(
        rows.len(),
        cov_cols.len(),
        rows.into_iter().flatten().collect(),
    )?;
    let truth = tau_col.map(|_| GroundTruth {
        y0: None,
        y1: None,
        tau,
    });
    HteDataset::new(covariates, treatments, outcomes, truth)
}

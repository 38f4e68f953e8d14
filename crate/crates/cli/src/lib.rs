//! Experiment runner: repeated seeded runs of R2P and the causal-tree
//! baselines on a dataset, with per-run metrics and mean/stderr summaries.

mod config;
mod report;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use r2p_core::baselines::{
    fit_cct, fit_ct_a, fit_ct_h, predict_baseline, BaselineConfig, CausalTree,
};
use r2p_core::data::split_dataset;
use r2p_core::datasets::{gen_synthetic_a, gen_synthetic_b, load_semisynthetic_csv, SyntheticSpec};
use r2p_core::dump::TreeDocument;
use r2p_core::metrics::{evaluate, RunMetrics, TestPredictions};
use r2p_core::partition::{hte_split, predict_group, r2p_hte_fit_with_split, PartitionTree};
use r2p_core::{GroupPrediction, HteDataset};

pub use config::{Args, DatasetKind, ExperimentConfig, Method, OutputFormat};
pub use report::{aggregate, emit_reports, Aggregate, ExperimentReport, RunRecord, METRIC_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: r2p_core::Error,
    },
    #[error(transparent)]
    Core(#[from] r2p_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// A fitted method, kept for tree dumps.
pub enum FittedMethod {
    R2p(PartitionTree),
    Baseline(CausalTree),
}

impl FittedMethod {
    pub fn predict(&self, x: &[f64]) -> GroupPrediction {
        match self {
            Self::R2p(t) => predict_group(t, x),
            Self::Baseline(t) => predict_baseline(t, x),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Self::R2p(t) => t.n_leaves(),
            Self::Baseline(t) => t.n_leaves(),
        }
    }

    pub fn document(&self, method: Method) -> TreeDocument {
        match self {
            Self::R2p(t) => t.to_document(method.name()),
            Self::Baseline(t) => t.to_document(method.name()),
        }
    }
}

/// Training and test data of one run.
pub struct RunData {
    pub train: HteDataset,
    pub test: HteDataset,
}

/// Share of a CSV dataset used for training in each run.
const CSV_TRAIN_SHARE: f64 = 0.8;

pub fn run_data(
    cfg: &ExperimentConfig,
    csv: Option<&HteDataset>,
    seed: u64,
) -> r2p_core::Result<RunData> {
    let spec = SyntheticSpec::new(cfg.n_train, cfg.n_test, seed);
    match &cfg.dataset {
        DatasetKind::SyntheticA => gen_synthetic_a(&spec, cfg.noise()).map(|s| RunData {
            train: s.train,
            test: s.test,
        }),
        DatasetKind::SyntheticB => gen_synthetic_b(&spec, cfg.noise()).map(|s| RunData {
            train: s.train,
            test: s.test,
        }),
        DatasetKind::Csv => {
            let full = csv.expect("csv dataset loaded before the runs");
            let split = split_dataset(full.len(), CSV_TRAIN_SHARE, seed)?;
            Ok(RunData {
                train: full.select(&split.train_idx)?,
                test: full.select(&split.calib_idx)?,
            })
        }
    }
}

/// Fits `method` on the run's training data; every method sees the same
/// `I1`/`I2` split.
pub fn fit_method(
    cfg: &ExperimentConfig,
    method: Method,
    train: &HteDataset,
    seed: u64,
) -> r2p_core::Result<FittedMethod> {
    let pcfg = cfg.partition_config(seed);
    let split = hte_split(train, &pcfg)?;
    let baseline = |base: BaselineConfig| BaselineConfig {
        alpha: cfg.alpha,
        max_depth: cfg.max_depth,
        ..base
    };
    Ok(match method {
        Method::R2p => FittedMethod::R2p(r2p_hte_fit_with_split(
            train,
            split,
            &cfg.estimator_config(seed),
            &pcfg,
        )?),
        Method::CtA => {
            let all: Vec<usize> = (0..train.len()).collect();
            FittedMethod::Baseline(fit_ct_a(
                train,
                &all,
                &baseline(BaselineConfig::adaptive()),
            )?)
        }
        Method::CtH => FittedMethod::Baseline(fit_ct_h(
            train,
            &split,
            &baseline(BaselineConfig::honest()),
        )?),
        Method::Cct => FittedMethod::Baseline(fit_cct(
            train,
            &split,
            &baseline(BaselineConfig::adaptive()),
        )?),
    })
}

pub fn predict_test(fitted: &FittedMethod, test: &HteDataset) -> TestPredictions {
    let preds: Vec<GroupPrediction> = test.covariates.rows().map(|x| fitted.predict(x)).collect();
    TestPredictions {
        leaf: preds.iter().map(|p| p.leaf_id).collect(),
        estimate: preds.iter().map(|p| p.estimate).collect(),
        interval: preds.iter().map(|p| p.interval).collect(),
    }
}

/// Metrics and the tree document of one method in one run.
#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub metrics: RunMetrics,
    pub tree: TreeDocument,
}

pub fn run_once(
    cfg: &ExperimentConfig,
    csv: Option<&HteDataset>,
    run: usize,
) -> r2p_core::Result<Vec<MethodOutcome>> {
    let seed = cfg.seed + run as u64;
    let data = run_data(cfg, csv, seed)?;
    let tau = &data
        .test
        .truth
        .as_ref()
        .ok_or_else(|| r2p_core::Error::InvalidData("test rows carry no true effects".into()))?
        .tau;
    cfg.methods
        .iter()
        .map(|&method| {
            let fitted = fit_method(cfg, method, &data.train, seed)?;
            let metrics = evaluate(&predict_test(&fitted, &data.test), tau)?;
            Ok(MethodOutcome {
                metrics,
                tree: fitted.document(method),
            })
        })
        .collect()
}

/// Runs every seed in parallel; records are ordered by run, then method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let csv = match cfg.dataset {
        DatasetKind::Csv => {
            let path = cfg
                .csv_path
                .as_ref()
                .ok_or_else(|| CliError::Config("--csv-path is required".into()))?;
            let ds = load_semisynthetic_csv(path, &cfg.csv_schema)?;
            if ds.truth.is_none() {
                return Err(CliError::Config(
                    "the csv schema needs a tau column for evaluation".into(),
                ));
            }
            Some(ds)
        }
        _ => None,
    };
    let per_run: Vec<Vec<MethodOutcome>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| run_once(cfg, csv.as_ref(), run).map_err(|source| CliError::Run { run, source }))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut trees = Vec::new();
    for (run, outcomes) in per_run.into_iter().enumerate() {
        for (&method, o) in cfg.methods.iter().zip(outcomes) {
            records.push(RunRecord {
                run,
                method,
                metrics: o.metrics,
            });
            trees.push(o.tree);
        }
    }
    Ok(ExperimentReport {
        aggregate: aggregate(&records, &cfg.methods),
        per_run: records,
        trees,
    })
}

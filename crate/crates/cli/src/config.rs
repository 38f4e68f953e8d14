use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use r2p_core::datasets::{CsvSchema, NoiseConvention};
use r2p_core::estimators::{EstimatorConfig, EstimatorKind};
use r2p_core::PartitionConfig;

use crate::{CliError, Result};

/// Command-line flags. A JSON config file may set any of them under the
/// same name with `_` for `-`; flags win over the file.
#[derive(Debug, Clone, Default, Parser, Deserialize)]
#[command(
    name = "r2p",
    version,
    about = "Robust recursive partitioning experiments"
)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// JSON file with default values for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// synthetic-a, synthetic-b, csv or csv:<path>.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub csv_path: Option<PathBuf>,
    /// Comma-separated subset of r2p, ct-a, ct-h, cct.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta_s: Option<f64>,
    /// knn, ridge or gp.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub ridge_penalty: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub dump_trees: bool,
    /// Split the pooled sample instead of each treatment arm.
    #[arg(long)]
    pub no_stratify: bool,
    /// Read the second parameter of the generators' normals as a standard deviation.
    #[arg(long)]
    pub noise_as_sd: bool,
    #[arg(long)]
    pub treatment_col: Option<String>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    #[arg(long)]
    pub tau_col: Option<String>,
    /// Comma-separated covariate columns; default is every other column.
    #[arg(long)]
    pub covariate_cols: Option<String>,
}

impl Args {
    /// Fills every flag left unset from `file`.
    pub fn merged_over(self, file: Args) -> Args {
        Args {
            config: self.config,
            dataset: self.dataset.or(file.dataset),
            csv_path: self.csv_path.or(file.csv_path),
            methods: self.methods.or(file.methods),
            runs: self.runs.or(file.runs),
            seed: self.seed.or(file.seed),
            alpha: self.alpha.or(file.alpha),
            lambda: self.lambda.or(file.lambda),
            gamma: self.gamma.or(file.gamma),
            beta_s: self.beta_s.or(file.beta_s),
            estimator: self.estimator.or(file.estimator),
            knn_k: self.knn_k.or(file.knn_k),
            ridge_penalty: self.ridge_penalty.or(file.ridge_penalty),
            n_train: self.n_train.or(file.n_train),
            n_test: self.n_test.or(file.n_test),
            max_depth: self.max_depth.or(file.max_depth),
            min_leaf: self.min_leaf.or(file.min_leaf),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            dump_trees: self.dump_trees || file.dump_trees,
            no_stratify: self.no_stratify || file.no_stratify,
            noise_as_sd: self.noise_as_sd || file.noise_as_sd,
            treatment_col: self.treatment_col.or(file.treatment_col),
            outcome_col: self.outcome_col.or(file.outcome_col),
            tau_col: self.tau_col.or(file.tau_col),
            covariate_cols: self.covariate_cols.or(file.covariate_cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    SyntheticA,
    SyntheticB,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    R2p,
    CtA,
    CtH,
    Cct,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::R2p => "r2p",
            Self::CtA => "ct-a",
            Self::CtH => "ct-h",
            Self::Cct => "cct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "r2p" => Ok(Self::R2p),
            "ct-a" => Ok(Self::CtA),
            "ct-h" => Ok(Self::CtH),
            "cct" => Ok(Self::Cct),
            other => Err(CliError::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub csv_path: Option<PathBuf>,
    pub csv_schema: CsvSchema,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub seed: u64,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub beta_s: f64,
    pub estimator: EstimatorKind,
    pub knn_k: usize,
    pub ridge_penalty: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub dump_trees: bool,
    pub stratify: bool,
    pub noise_as_sd: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = PartitionConfig::default();
        let e = EstimatorConfig::default();
        Self {
            dataset: DatasetKind::SyntheticA,
            csv_path: None,
            csv_schema: CsvSchema::default(),
            methods: vec![Method::R2p, Method::CtA, Method::CtH, Method::Cct],
            runs: 50,
            seed: 0,
            alpha: p.alpha,
            lambda: p.lambda,
            gamma: p.gamma,
            beta_s: p.beta_s,
            estimator: e.kind,
            knn_k: e.knn_k,
            ridge_penalty: e.ridge_penalty,
            n_train: 300,
            n_test: 1000,
            max_depth: None,
            min_leaf: p.min_leaf,
            out: PathBuf::from("results"),
            format: OutputFormat::Both,
            dump_trees: false,
            stratify: true,
            noise_as_sd: false,
        }
    }
}

fn load_file(path: &Path) -> Result<Args> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

impl ExperimentConfig {
    /// Resolves flags, then the config file, then defaults.
    pub fn from_args(args: Args) -> Result<Self> {
        let args = match &args.config {
            Some(path) => {
                let file = load_file(path)?;
                args.merged_over(file)
            }
            None => args,
        };
        let mut cfg = Self::default();
        if let Some(d) = &args.dataset {
            (cfg.dataset, cfg.csv_path) = match d.as_str() {
                "synthetic-a" => (DatasetKind::SyntheticA, None),
                "synthetic-b" => (DatasetKind::SyntheticB, None),
                "csv" => (DatasetKind::Csv, None),
                other => match other.strip_prefix("csv:") {
                    Some(path) => (DatasetKind::Csv, Some(PathBuf::from(path))),
                    None => return Err(CliError::Config(format!("unknown dataset `{other}`"))),
                },
            };
        }
        if args.csv_path.is_some() {
            cfg.csv_path = args.csv_path;
        }
        if let Some(m) = &args.methods {
            cfg.methods = list(m)
                .iter()
                .map(|s| Method::parse(s))
                .collect::<Result<_>>()?;
        }
        if let Some(e) = &args.estimator {
            cfg.estimator = e
                .parse()
                .map_err(|e: r2p_core::Error| CliError::Config(e.to_string()))?;
        }
        if let Some(f) = &args.format {
            cfg.format = match f.as_str() {
                "csv" => OutputFormat::Csv,
                "json" => OutputFormat::Json,
                "both" => OutputFormat::Both,
                other => return Err(CliError::Config(format!("unknown format `{other}`"))),
            };
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = args.$field { cfg.$field = v; } )* };
        }
        take!(
            runs,
            seed,
            alpha,
            lambda,
            gamma,
            beta_s,
            knn_k,
            ridge_penalty,
            n_train,
            n_test,
            min_leaf,
            out
        );
        cfg.max_depth = args.max_depth.or(cfg.max_depth);
        cfg.dump_trees = args.dump_trees;
        cfg.stratify = !args.no_stratify;
        cfg.noise_as_sd = args.noise_as_sd;
        if let Some(t) = args.treatment_col {
            cfg.csv_schema.treatment = t;
        }
        if let Some(o) = args.outcome_col {
            cfg.csv_schema.outcome = o;
        }
        cfg.csv_schema.tau = args.tau_col.or(cfg.csv_schema.tau);
        if let Some(c) = &args.covariate_cols {
            cfg.csv_schema.covariates = Some(list(c));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive".into());
        }
        if self.dataset == DatasetKind::Csv && self.csv_path.is_none() {
            return bad("the csv dataset needs --csv-path".into());
        }
        self.partition_config(self.seed)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.estimator_config(self.seed)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn noise(&self) -> NoiseConvention {
        if self.noise_as_sd {
            NoiseConvention::StdDev
        } else {
            NoiseConvention::Variance
        }
    }

    pub fn partition_config(&self, seed: u64) -> PartitionConfig {
        PartitionConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            gamma: self.gamma,
            beta_s: self.beta_s,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
            stratify: self.stratify,
            seed,
            ..PartitionConfig::default()
        }
    }

    pub fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            kind: self.estimator,
            knn_k: self.knn_k,
            ridge_penalty: self.ridge_penalty,
            seed,
            ..EstimatorConfig::default()
        }
    }
}

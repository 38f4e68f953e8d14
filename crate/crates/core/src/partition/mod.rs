//! Robust recursive partitioning.
//!
//! One estimator is fitted on the training half `I1` of the whole sample and
//! never refitted. Every subgroup is then scored on its share of the
//! calibration half `I2` by its confident-homogeneity impurity
//! `lambda * W + (1 - lambda) * S`, where `W` is the mean conformal interval
//! width and `S` the mean distance from the subgroup center to each row's
//! (narrower, `beta_s`-level) interval. A subgroup is split at the
//! impurity-minimizing axis-aligned threshold only when
//!
//! ```text
//! (1 - gamma) * impurity(parent) >= impurity(child+) + impurity(child-)
//! ```
//!
//! Subgroups are processed first-in first-out until none can be split. Each
//! final leaf reports `estimate(x) +/- Q`, with `Q` recalibrated on the
//! leaf's own calibration rows, which gives per-leaf coverage `1 - alpha`.

mod search;
mod stats;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use search::{candidate_thresholds, SearchContext, SplitCandidate, MIN_CALIB_PER_ARM};
pub use stats::{
    deviation, subgroup_stats, Arm, CalibrationScores, LeafCalibration, Mode, SubgroupStats,
};

use crate::conformal::Interval;
use crate::data::{
    split_dataset, stratified_split_hte, DataSplit, HteDataset, Matrix, RegressionDataset,
};
use crate::dump::{DumpLeaf, DumpNode, DumpRule, DumpSplit, TreeDocument};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_ite_t_learner, fit_outcome, EstimatorConfig, IteEstimator, OutcomeEstimator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSide {
    Geq,
    Lt,
}

/// `x[feature] >= threshold` or `x[feature] < threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
    pub side: SplitSide,
}

impl SplitRule {
    pub fn accepts(&self, x: &[f64]) -> bool {
        match self.side {
            SplitSide::Geq => x[self.feature] >= self.threshold,
            SplitSide::Lt => x[self.feature] < self.threshold,
        }
    }
}

impl From<&SplitRule> for DumpRule {
    fn from(r: &SplitRule) -> Self {
        DumpRule {
            feature: r.feature,
            threshold: r.threshold,
            side: match r.side {
                SplitSide::Geq => "geq",
                SplitSide::Lt => "lt",
            }
            .to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Miscoverage of the intervals used inside `S` during the search.
    pub beta_s: f64,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub max_thresholds_per_feature: usize,
    pub split_ratio: f64,
    /// Split each treatment arm separately (effect mode only).
    pub stratify: bool,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            lambda: 0.5,
            gamma: 0.05,
            beta_s: 0.8,
            min_leaf: 10,
            max_depth: None,
            max_thresholds_per_feature: 64,
            split_ratio: 0.5,
            stratify: true,
            seed: 0,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.beta_s > 0.0 && self.beta_s < 1.0) {
            return bad(format!("beta_s must lie in (0, 1), got {}", self.beta_s));
        }
        if self.min_leaf < 2 {
            return bad(format!(
                "min_leaf must be at least 2, got {}",
                self.min_leaf
            ));
        }
        if self.max_thresholds_per_feature == 0 {
            return bad("max_thresholds_per_feature must be positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!(
                "split ratio must lie in (0, 1), got {}",
                self.split_ratio
            ));
        }
        Ok(())
    }
}

/// A split is accepted when the children's summed impurity undercuts the
/// parent's by at least the fraction `gamma`.
pub fn confident_criterion(
    parent: &SubgroupStats,
    children_sum_w: f64,
    children_sum_s: f64,
    cfg: &PartitionConfig,
) -> bool {
    let lambda = cfg.lambda;
    (1.0 - cfg.gamma) * parent.impurity(lambda)
        >= lambda * children_sum_w + (1.0 - lambda) * children_sum_s
}

/// A leaf of the partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subgroup {
    /// Conjunction of the rules on the path from the root.
    pub rules: Vec<SplitRule>,
    pub train_idx: Vec<usize>,
    pub calib_idx: Vec<usize>,
    pub stats: SubgroupStats,
}

impl Subgroup {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.rules.iter().all(|r| r.accepts(x))
    }

    /// Interval half-width reported for rows of this leaf.
    pub fn halfwidth(&self) -> f64 {
        self.stats.calib.halfwidth()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        lt: usize,
        geq: usize,
    },
    Leaf(Subgroup),
}

/// An accepted split with the statistics that justified it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRecord {
    pub node: usize,
    pub feature: usize,
    pub threshold: f64,
    pub parent: SubgroupStats,
    pub children_sum_w: f64,
    pub children_sum_s: f64,
}

/// The global model shared by every subgroup.
#[derive(Debug)]
pub enum FittedModel {
    Regression(Box<dyn OutcomeEstimator>),
    Hte(Box<dyn IteEstimator>),
}

impl FittedModel {
    /// Prediction in regression mode, effect estimate in effect mode.
    pub fn estimate(&self, x: &[f64]) -> f64 {
        match self {
            Self::Regression(m) => m.predict(x),
            Self::Hte(m) => m.predict_ite(x),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Self::Regression(_) => Mode::Regression,
            Self::Hte(_) => Mode::Hte,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrediction {
    pub leaf_id: usize,
    pub estimate: f64,
    pub interval: Interval,
}

#[derive(Debug)]
pub struct PartitionTree {
    nodes: Vec<Node>,
    model: FittedModel,
    split_log: Vec<SplitRecord>,
    split: DataSplit,
    cfg: PartitionConfig,
}

impl PartitionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    pub fn split_log(&self) -> &[SplitRecord] {
        &self.split_log
    }

    pub fn data_split(&self) -> &DataSplit {
        &self.split
    }

    pub fn config(&self) -> &PartitionConfig {
        &self.cfg
    }

    /// Leaves with their node ids, in id order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Subgroup)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            Node::Leaf(s) => Some((id, s)),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Node id of the leaf containing `x`; `x[k] == threshold` routes to the
    /// `geq` child.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(_) => return id,
                Node::Split {
                    feature,
                    threshold,
                    lt,
                    geq,
                } => {
                    id = if x[*feature] >= *threshold { *geq } else { *lt };
                }
            }
        }
    }

    pub fn subgroup(&self, leaf_id: usize) -> Option<&Subgroup> {
        match self.nodes.get(leaf_id) {
            Some(Node::Leaf(s)) => Some(s),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        self.leaves().map(|(_, s)| s.rules.len()).max().unwrap_or(0)
    }

    pub fn to_document(&self, method: &str) -> TreeDocument {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| match node {
                Node::Split {
                    feature,
                    threshold,
                    lt,
                    geq,
                } => DumpNode {
                    id,
                    split: Some(DumpSplit {
                        feature: *feature,
                        threshold: *threshold,
                    }),
                    children: Some([*lt, *geq]),
                    leaf: None,
                },
                Node::Leaf(s) => DumpNode {
                    id,
                    split: None,
                    children: None,
                    leaf: Some(DumpLeaf {
                        n_train: s.train_idx.len(),
                        n_calib: s.calib_idx.len(),
                        center: s.stats.center,
                        halfwidth: s.halfwidth(),
                        rule_path: s.rules.iter().map(DumpRule::from).collect(),
                    }),
                },
            })
            .collect();
        TreeDocument {
            method: method.to_owned(),
            nodes,
        }
    }
}

/// Routes `x` to its leaf and returns the global estimate with that leaf's interval.
pub fn predict_group(tree: &PartitionTree, x: &[f64]) -> GroupPrediction {
    let leaf_id = tree.leaf_of(x);
    let estimate = tree.model.estimate(x);
    let halfwidth = tree
        .subgroup(leaf_id)
        .map_or(f64::INFINITY, Subgroup::halfwidth);
    GroupPrediction {
        leaf_id,
        estimate,
        interval: Interval::centered(estimate, halfwidth),
    }
}

fn regression_scores(
    model: &dyn OutcomeEstimator,
    x: &Matrix,
    y: &[f64],
    calib: &[usize],
) -> CalibrationScores {
    let n = y.len();
    let mut scores = CalibrationScores {
        mode: Mode::Regression,
        estimate: vec![0.0; n],
        residual: vec![0.0; n],
        arm: vec![Arm::Single; n],
    };
    for &i in calib {
        let p = model.predict(x.row(i));
        scores.estimate[i] = p;
        scores.residual[i] = (y[i] - p).abs();
    }
    scores
}

fn hte_scores(model: &dyn IteEstimator, ds: &HteDataset, calib: &[usize]) -> CalibrationScores {
    let n = ds.len();
    let mut scores = CalibrationScores {
        mode: Mode::Hte,
        estimate: vec![0.0; n],
        residual: vec![0.0; n],
        arm: vec![Arm::Control; n],
    };
    for &i in calib {
        let (mu0, mu1) = model.predict_arms(ds.covariates.row(i));
        scores.estimate[i] = mu1 - mu0;
        let (own, arm) = if ds.treatments[i] {
            (mu1, Arm::Treated)
        } else {
            (mu0, Arm::Control)
        };
        scores.residual[i] = (ds.outcomes[i] - own).abs();
        scores.arm[i] = arm;
    }
    scores
}

fn grow(
    covariates: &Matrix,
    scores: &CalibrationScores,
    split: DataSplit,
    model: FittedModel,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    let root_stats = subgroup_stats(scores, &split.calib_idx, cfg.alpha, cfg.beta_s);
    if !root_stats.w_hat.is_finite() {
        let n_calib = match scores.mode {
            Mode::Regression => split.calib_idx.len(),
            Mode::Hte => {
                let (c, t) = scores.arm_counts(&split.calib_idx);
                c.min(t)
            }
        };
        let coverage = match scores.mode {
            Mode::Regression => 1.0 - cfg.alpha,
            Mode::Hte => crate::conformal::coverage_level_per_arm(cfg.alpha),
        };
        return Err(Error::AlphaTooStrict { n_calib, coverage });
    }

    let ctx = SearchContext {
        covariates,
        scores,
        cfg,
    };
    let mut nodes = vec![Node::Leaf(Subgroup {
        rules: Vec::new(),
        train_idx: split.train_idx.clone(),
        calib_idx: split.calib_idx.clone(),
        stats: root_stats,
    })];
    let mut split_log = Vec::new();
    let mut frontier = VecDeque::from([0usize]);

    while let Some(id) = frontier.pop_front() {
        let Node::Leaf(group) = &nodes[id] else {
            unreachable!("frontier holds leaves only")
        };
        if cfg.max_depth.is_some_and(|d| group.rules.len() >= d) {
            continue;
        }
        let Some(cand) = ctx.best_split(&group.train_idx, &group.calib_idx) else {
            continue;
        };
        if !group.stats.is_finite()
            || !confident_criterion(&group.stats, cand.sum_w, cand.sum_s, cfg)
        {
            continue;
        }

        let (feature, threshold) = (cand.feature, cand.threshold);
        let side_of = |i: &usize| covariates.get(*i, feature) >= threshold;
        let (train_geq, train_lt): (Vec<usize>, Vec<usize>) =
            group.train_idx.iter().partition(|i| side_of(i));
        let (calib_geq, calib_lt): (Vec<usize>, Vec<usize>) =
            group.calib_idx.iter().partition(|i| side_of(i));
        let child = |side, train_idx, calib_idx, stats| {
            let mut rules = group.rules.clone();
            rules.push(SplitRule {
                feature,
                threshold,
                side,
            });
            Node::Leaf(Subgroup {
                rules,
                train_idx,
                calib_idx,
                stats,
            })
        };
        let lt_node = child(SplitSide::Lt, train_lt, calib_lt, cand.lt);
        let geq_node = child(SplitSide::Geq, train_geq, calib_geq, cand.geq);
        split_log.push(SplitRecord {
            node: id,
            feature,
            threshold,
            parent: group.stats,
            children_sum_w: cand.sum_w,
            children_sum_s: cand.sum_s,
        });

        let lt = nodes.len();
        let geq = lt + 1;
        nodes.push(lt_node);
        nodes.push(geq_node);
        nodes[id] = Node::Split {
            feature,
            threshold,
            lt,
            geq,
        };
        frontier.push_back(lt);
        frontier.push_back(geq);
    }

    Ok(PartitionTree {
        nodes,
        model,
        split_log,
        split,
        cfg: cfg.clone(),
    })
}

/// Partitions a regression dataset with a caller-supplied split and a model
/// already fitted on `split.train_idx`.
pub fn r2p_fit_with_model(
    dataset: &RegressionDataset,
    split: DataSplit,
    model: Box<dyn OutcomeEstimator>,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    cfg.validate()?;
    let scores = regression_scores(
        model.as_ref(),
        &dataset.covariates,
        &dataset.outcomes,
        &split.calib_idx,
    );
    grow(
        &dataset.covariates,
        &scores,
        split,
        FittedModel::Regression(model),
        cfg,
    )
}

/// Splits, fits the configured estimator on `I1` and partitions.
pub fn r2p_fit(
    dataset: &RegressionDataset,
    est: &EstimatorConfig,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    cfg.validate()?;
    let split = split_dataset(dataset.len(), cfg.split_ratio, cfg.seed)?;
    let x = dataset.covariates.select_rows(&split.train_idx);
    let y: Vec<f64> = split
        .train_idx
        .iter()
        .map(|&i| dataset.outcomes[i])
        .collect();
    let model = fit_outcome(est, &x, &y)?;
    r2p_fit_with_model(dataset, split, model, cfg)
}

/// Effect-mode partitioning with any fitted effect estimator.
pub fn r2p_hte_fit_with_model(
    dataset: &HteDataset,
    split: DataSplit,
    model: Box<dyn IteEstimator>,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    cfg.validate()?;
    let scores = hte_scores(model.as_ref(), dataset, &split.calib_idx);
    grow(
        &dataset.covariates,
        &scores,
        split,
        FittedModel::Hte(model),
        cfg,
    )
}

/// Fits a T-learner on `split.train_idx` and partitions.
pub fn r2p_hte_fit_with_split(
    dataset: &HteDataset,
    split: DataSplit,
    est: &EstimatorConfig,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    let model = fit_ite_t_learner(dataset, est, &split.train_idx)?;
    r2p_hte_fit_with_model(dataset, split, Box::new(model), cfg)
}

/// The seeded `I1`/`I2` split used by effect-mode fitting.
pub fn hte_split(dataset: &HteDataset, cfg: &PartitionConfig) -> Result<DataSplit> {
    if cfg.stratify {
        stratified_split_hte(dataset, cfg.split_ratio, cfg.seed)
    } else {
        split_dataset(dataset.len(), cfg.split_ratio, cfg.seed)
    }
}

pub fn r2p_hte_fit(
    dataset: &HteDataset,
    est: &EstimatorConfig,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    cfg.validate()?;
    let split = hte_split(dataset, cfg)?;
    r2p_hte_fit_with_split(dataset, split, est, cfg)
}

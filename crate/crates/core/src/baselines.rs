//! Causal-tree baselines.
//!
//! - CT-A (adaptive): structure and leaf estimates from the same rows.
//! - CT-H (honest): structure from one half, estimates from the other.
//! - CCT: CT-A structure with per-leaf, per-arm conformal intervals
//!   calibrated on held-out rows.
//!
//! Splits maximize `sum_c n_c * tau_c^2`, where `tau_c` is the difference of
//! the arm means in child `c`. Grown trees are pruned bottom-up: a split whose
//! two leaf children do not differ significantly under a two-sample z-test is
//! collapsed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::{coverage_level_per_arm, ArmCalibrations, ConformalCalibration, Interval};
use crate::data::{DataSplit, HteDataset};
use crate::dump::{DumpLeaf, DumpNode, DumpRule, DumpSplit, TreeDocument};
use crate::error::{Error, Result};
use crate::partition::{candidate_thresholds, GroupPrediction, SplitRule, SplitSide};

/// Rows of each arm a leaf needs for a variance estimate.
const MIN_ARM_ROWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub min_leaf: usize,
    pub sig_level: f64,
    /// Miscoverage of the reported intervals.
    pub alpha: f64,
    pub max_depth: Option<usize>,
    pub max_thresholds_per_feature: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self::adaptive()
    }
}

impl BaselineConfig {
    pub fn adaptive() -> Self {
        Self {
            min_leaf: 20,
            sig_level: 0.05,
            alpha: 0.05,
            max_depth: None,
            max_thresholds_per_feature: 64,
        }
    }

    pub fn honest() -> Self {
        Self {
            min_leaf: 10,
            ..Self::adaptive()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be positive".into()));
        }
        if !(self.sig_level > 0.0 && self.sig_level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sig_level must lie in (0, 1), got {}",
                self.sig_level
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSource {
    GaussianPlugin,
    SplitConformal,
}

/// Arm summaries of the rows in one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n1: usize,
    pub n0: usize,
    pub mean1: f64,
    pub mean0: f64,
    /// Unbiased sample variances.
    pub var1: f64,
    pub var0: f64,
}

impl ArmSummary {
    pub fn of(ds: &HteDataset, rows: &[usize]) -> Self {
        let (mut s1, mut s0, mut q1, mut q0) = (0.0, 0.0, 0.0, 0.0);
        let (mut n1, mut n0) = (0usize, 0usize);
        for &i in rows {
            let y = ds.outcomes[i];
            if ds.treatments[i] {
                n1 += 1;
                s1 += y;
                q1 += y * y;
            } else {
                n0 += 1;
                s0 += y;
                q0 += y * y;
            }
        }
        let moments = |n: usize, s: f64, q: f64| {
            if n == 0 {
                return (f64::NAN, f64::NAN);
            }
            let m = s / n as f64;
            let v = if n > 1 {
                ((q - n as f64 * m * m) / (n - 1) as f64).max(0.0)
            } else {
                0.0
            };
            (m, v)
        };
        let (mean1, var1) = moments(n1, s1, q1);
        let (mean0, var0) = moments(n0, s0, q0);
        Self {
            n1,
            n0,
            mean1,
            mean0,
            var1,
            var0,
        }
    }

    pub fn tau_hat(&self) -> f64 {
        self.mean1 - self.mean0
    }

    /// `s1^2 / n1 + s0^2 / n0`.
    pub fn var_hat(&self) -> f64 {
        self.var1 / self.n1 as f64 + self.var0 / self.n0 as f64
    }

    fn has_both_arms(&self, min: usize) -> bool {
        self.n1 >= min && self.n0 >= min
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalLeaf {
    pub rules: Vec<SplitRule>,
    /// Rows that chose the structure.
    pub n_structure: usize,
    /// Summary of the estimation rows.
    pub summary: ArmSummary,
    /// Conformal calibration on held-out rows, for [`IntervalSource::SplitConformal`].
    pub calibration: Option<ArmCalibrations>,
}

impl CausalLeaf {
    pub fn tau_hat(&self) -> f64 {
        self.summary.tau_hat()
    }

    pub fn var_hat(&self) -> f64 {
        self.summary.var_hat()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CausalNode {
    Split {
        feature: usize,
        threshold: f64,
        lt: usize,
        geq: usize,
    },
    Leaf(CausalLeaf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalTree {
    pub nodes: Vec<CausalNode>,
    pub source: IntervalSource,
    pub alpha: f64,
}

impl CausalTree {
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &CausalLeaf)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            CausalNode::Leaf(l) => Some((id, l)),
            CausalNode::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                CausalNode::Leaf(_) => return id,
                CausalNode::Split {
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

    fn leaf(&self, id: usize) -> &CausalLeaf {
        match &self.nodes[id] {
            CausalNode::Leaf(l) => l,
            CausalNode::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn leaf_interval(&self, leaf: &CausalLeaf) -> Interval {
        let tau = leaf.tau_hat();
        match self.source {
            IntervalSource::GaussianPlugin => {
                let z = Normal::new(0.0, 1.0)
                    .expect("standard normal")
                    .inverse_cdf(1.0 - self.alpha / 2.0);
                Interval::centered(tau, z * leaf.var_hat().sqrt())
            }
            IntervalSource::SplitConformal => {
                let hw = leaf.calibration.map_or(f64::INFINITY, |c| c.halfwidth());
                Interval::centered(tau, hw)
            }
        }
    }

    pub fn to_document(&self, method: &str) -> TreeDocument {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| match node {
                CausalNode::Split {
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
                CausalNode::Leaf(l) => DumpNode {
                    id,
                    split: None,
                    children: None,
                    leaf: Some(DumpLeaf {
                        n_train: l.n_structure,
                        n_calib: l.summary.n1 + l.summary.n0,
                        center: l.tau_hat(),
                        halfwidth: self.leaf_interval(l).width() / 2.0,
                        rule_path: l.rules.iter().map(DumpRule::from).collect(),
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

pub fn predict_baseline(tree: &CausalTree, x: &[f64]) -> GroupPrediction {
    let leaf_id = tree.leaf_of(x);
    let leaf = tree.leaf(leaf_id);
    GroupPrediction {
        leaf_id,
        estimate: leaf.tau_hat(),
        interval: tree.leaf_interval(leaf),
    }
}

/// Intermediate tree before pruning, holding structure and estimation rows.
enum Grown {
    Leaf {
        structure: Vec<usize>,
        estimation: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        lt: Box<Grown>,
        geq: Box<Grown>,
        structure: Vec<usize>,
        estimation: Vec<usize>,
    },
}

impl Grown {
    fn rows(&self) -> (&[usize], &[usize]) {
        match self {
            Self::Leaf {
                structure,
                estimation,
            }
            | Self::Split {
                structure,
                estimation,
                ..
            } => (structure, estimation),
        }
    }

    fn collapse(self) -> Self {
        match self {
            Self::Split {
                structure,
                estimation,
                ..
            } => Self::Leaf {
                structure,
                estimation,
            },
            leaf => leaf,
        }
    }
}

struct Grower<'a> {
    ds: &'a HteDataset,
    cfg: &'a BaselineConfig,
}

impl Grower<'_> {
    fn score(&self, rows: &[usize]) -> Option<f64> {
        let s = ArmSummary::of(self.ds, rows);
        s.has_both_arms(MIN_ARM_ROWS)
            .then(|| rows.len() as f64 * s.tau_hat().powi(2))
    }

    /// Best `(gain, feature, threshold)` over the structure rows.
    fn best_split(&self, rows: &[usize]) -> Option<(f64, usize, f64)> {
        if rows.len() < 2 * self.cfg.min_leaf {
            return None;
        }
        let parent = self.score(rows)?;
        let x = &self.ds.covariates;
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..x.n_cols() {
            let values = x.column_at(k, rows);
            for t in candidate_thresholds(&values, self.cfg.max_thresholds_per_feature) {
                let (geq, lt): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x.get(i, k) >= t);
                if geq.len() < self.cfg.min_leaf || lt.len() < self.cfg.min_leaf {
                    continue;
                }
                let (Some(a), Some(b)) = (self.score(&geq), self.score(&lt)) else {
                    continue;
                };
                let gain = a + b - parent;
                if gain > 1e-9 * parent.max(1.0) && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, k, t));
                }
            }
        }
        best
    }

    fn grow(&self, structure: Vec<usize>, estimation: Vec<usize>, depth: usize) -> Grown {
        let at_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        let Some((_, feature, threshold)) =
            (!at_limit).then(|| self.best_split(&structure)).flatten()
        else {
            return Grown::Leaf {
                structure,
                estimation,
            };
        };
        let x = &self.ds.covariates;
        let side = |i: &usize| x.get(*i, feature) >= threshold;
        let (s_geq, s_lt): (Vec<usize>, Vec<usize>) = structure.iter().partition(|i| side(i));
        let (e_geq, e_lt): (Vec<usize>, Vec<usize>) = estimation.iter().partition(|i| side(i));
        Grown::Split {
            feature,
            threshold,
            lt: Box::new(self.grow(s_lt, e_lt, depth + 1)),
            geq: Box::new(self.grow(s_geq, e_geq, depth + 1)),
            structure,
            estimation,
        }
    }

    fn leaf_ok(&self, node: &Grown) -> bool {
        ArmSummary::of(self.ds, node.rows().1).has_both_arms(MIN_ARM_ROWS)
    }

    /// Collapses splits with a child lacking an arm in its estimation rows,
    /// then splits whose leaf children are not significantly different.
    fn prune(&self, node: Grown) -> Grown {
        let Grown::Split {
            feature,
            threshold,
            lt,
            geq,
            structure,
            estimation,
        } = node
        else {
            return node;
        };
        let lt = self.prune(*lt);
        let geq = self.prune(*geq);
        let lt_leaf = matches!(lt, Grown::Leaf { .. });
        let geq_leaf = matches!(geq, Grown::Leaf { .. });
        let starved = (lt_leaf && !self.leaf_ok(&lt)) || (geq_leaf && !self.leaf_ok(&geq));
        let insignificant =
            lt_leaf && geq_leaf && !starved && !self.significant(lt.rows().1, geq.rows().1);
        let node = Grown::Split {
            feature,
            threshold,
            lt: Box::new(lt),
            geq: Box::new(geq),
            structure,
            estimation,
        };
        if starved || insignificant {
            node.collapse()
        } else {
            node
        }
    }

    fn significant(&self, a: &[usize], b: &[usize]) -> bool {
        let sa = ArmSummary::of(self.ds, a);
        let sb = ArmSummary::of(self.ds, b);
        let diff = (sa.tau_hat() - sb.tau_hat()).abs();
        let se = (sa.var_hat() + sb.var_hat()).sqrt();
        if se == 0.0 {
            return diff > 0.0;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let p = 2.0 * (1.0 - normal.cdf(diff / se));
        p <= self.cfg.sig_level
    }
}

/// Lays the pruned tree out breadth first; `calibrate` supplies optional
/// conformal calibrations per leaf.
fn flatten<F>(
    ds: &HteDataset,
    root: Grown,
    source: IntervalSource,
    alpha: f64,
    effects_from_structure: bool,
    calibrate: F,
) -> CausalTree
where
    F: Fn(&ArmSummary, &[usize]) -> Option<ArmCalibrations>,
{
    let mut nodes = Vec::new();
    let mut queue = VecDeque::from([(root, Vec::<SplitRule>::new())]);
    let mut next_id = 1;
    while let Some((node, rules)) = queue.pop_front() {
        match node {
            Grown::Leaf {
                structure,
                estimation,
            } => {
                let structure_summary = ArmSummary::of(ds, &structure);
                let summary = if effects_from_structure {
                    structure_summary
                } else {
                    ArmSummary::of(ds, &estimation)
                };
                nodes.push(CausalNode::Leaf(CausalLeaf {
                    calibration: calibrate(&structure_summary, &estimation),
                    rules,
                    n_structure: structure.len(),
                    summary,
                }));
            }
            Grown::Split {
                feature,
                threshold,
                lt,
                geq,
                ..
            } => {
                let (lt_id, geq_id) = (next_id, next_id + 1);
                next_id += 2;
                nodes.push(CausalNode::Split {
                    feature,
                    threshold,
                    lt: lt_id,
                    geq: geq_id,
                });
                let child_rules = |side| {
                    let mut r = rules.clone();
                    r.push(SplitRule {
                        feature,
                        threshold,
                        side,
                    });
                    r
                };
                queue.push_back((*lt, child_rules(SplitSide::Lt)));
                queue.push_back((*geq, child_rules(SplitSide::Geq)));
            }
        }
    }
    CausalTree {
        nodes,
        source,
        alpha,
    }
}

fn check_root(ds: &HteDataset, rows: &[usize], min: usize) -> Result<()> {
    let s = ArmSummary::of(ds, rows);
    for (arm, count) in [("treated", s.n1), ("control", s.n0)] {
        if count < min {
            return Err(Error::ArmTooSmall {
                arm,
                count,
                needed: min,
            });
        }
    }
    Ok(())
}

/// Adaptive causal tree on `rows`.
pub fn fit_ct_a(ds: &HteDataset, rows: &[usize], cfg: &BaselineConfig) -> Result<CausalTree> {
    cfg.validate()?;
    check_root(ds, rows, MIN_ARM_ROWS)?;
    let g = Grower { ds, cfg };
    let root = g.prune(g.grow(rows.to_vec(), rows.to_vec(), 0));
    Ok(flatten(
        ds,
        root,
        IntervalSource::GaussianPlugin,
        cfg.alpha,
        false,
        |_, _| None,
    ))
}

/// Honest causal tree: structure on `split.train_idx`, estimates on `split.calib_idx`.
pub fn fit_ct_h(ds: &HteDataset, split: &DataSplit, cfg: &BaselineConfig) -> Result<CausalTree> {
    cfg.validate()?;
    check_root(ds, &split.train_idx, MIN_ARM_ROWS)?;
    check_root(ds, &split.calib_idx, MIN_ARM_ROWS)?;
    let g = Grower { ds, cfg };
    let root = g.prune(g.grow(split.train_idx.clone(), split.calib_idx.clone(), 0));
    Ok(flatten(
        ds,
        root,
        IntervalSource::GaussianPlugin,
        cfg.alpha,
        false,
        |_, _| None,
    ))
}

/// Conformal causal tree: adaptive structure and leaf effects on
/// `split.train_idx`, per-arm conformal calibration on `split.calib_idx`.
pub fn fit_cct(ds: &HteDataset, split: &DataSplit, cfg: &BaselineConfig) -> Result<CausalTree> {
    cfg.validate()?;
    check_root(ds, &split.train_idx, MIN_ARM_ROWS)?;
    let g = Grower { ds, cfg };
    let rows = split.train_idx.clone();
    let grown = g.prune(g.grow(rows.clone(), rows, 0));
    let root = attach_calibration_rows(ds, grown, &split.calib_idx);
    let coverage = coverage_level_per_arm(cfg.alpha);
    let tree = flatten(
        ds,
        root,
        IntervalSource::SplitConformal,
        cfg.alpha,
        true,
        |fit, calib| {
            let (mut r1, mut r0) = (Vec::new(), Vec::new());
            for &i in calib {
                if ds.treatments[i] {
                    r1.push((ds.outcomes[i] - fit.mean1).abs());
                } else {
                    r0.push((ds.outcomes[i] - fit.mean0).abs());
                }
            }
            Some(ArmCalibrations {
                q0: ConformalCalibration::from_residuals(&r0, coverage),
                q1: ConformalCalibration::from_residuals(&r1, coverage),
            })
        },
    );
    Ok(tree)
}

/// Replaces the estimation rows of every node with the calibration rows it contains.
fn attach_calibration_rows(ds: &HteDataset, node: Grown, calib: &[usize]) -> Grown {
    match node {
        Grown::Leaf { structure, .. } => Grown::Leaf {
            structure,
            estimation: calib.to_vec(),
        },
        Grown::Split {
            feature,
            threshold,
            lt,
            geq,
            structure,
            ..
        } => {
            let (c_geq, c_lt): (Vec<usize>, Vec<usize>) = calib
                .iter()
                .partition(|&&i| ds.covariates.get(i, feature) >= threshold);
            Grown::Split {
                feature,
                threshold,
                lt: Box::new(attach_calibration_rows(ds, *lt, &c_lt)),
                geq: Box::new(attach_calibration_rows(ds, *geq, &c_geq)),
                structure,
                estimation: calib.to_vec(),
            }
        }
    }
}

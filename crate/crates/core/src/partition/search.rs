//! Greedy search for the best axis-aligned split of a subgroup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{subgroup_stats, CalibrationScores, Mode, SubgroupStats};
use super::PartitionConfig;
use crate::data::Matrix;

/// Minimum calibration rows of each arm in each child of an effect split.
pub const MIN_CALIB_PER_ARM: usize = 2;

/// Midpoints between consecutive distinct values, thinned to at most `cap`
/// evenly spaced (in rank) midpoints. Empty when every value is equal.
pub fn candidate_thresholds(values: &[f64], cap: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mids: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() <= cap {
        return mids;
    }
    if cap == 0 {
        return Vec::new();
    }
    if cap == 1 {
        return vec![mids[mids.len() / 2]];
    }
    let last = (mids.len() - 1) as f64;
    (0..cap)
        .map(|j| mids[(j as f64 * last / (cap - 1) as f64).round() as usize])
        .collect()
}

/// A scored candidate split of a subgroup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Child with `x[feature] >= threshold`.
    pub geq: SubgroupStats,
    /// Child with `x[feature] < threshold`.
    pub lt: SubgroupStats,
    pub sum_w: f64,
    pub sum_s: f64,
}

impl SplitCandidate {
    pub fn impurity(&self, lambda: f64) -> f64 {
        lambda * self.sum_w + (1.0 - lambda) * self.sum_s
    }
}

/// Rows of one subgroup, plus everything needed to score its splits.
pub struct SearchContext<'a> {
    pub covariates: &'a Matrix,
    pub scores: &'a CalibrationScores,
    pub cfg: &'a PartitionConfig,
}

impl SearchContext<'_> {
    fn child_ok(&self, n_train: usize, calib: &[usize]) -> bool {
        if n_train < self.cfg.min_leaf || calib.len() < self.cfg.min_leaf {
            return false;
        }
        if self.scores.mode == Mode::Hte {
            let (control, treated) = self.scores.arm_counts(calib);
            if control < MIN_CALIB_PER_ARM || treated < MIN_CALIB_PER_ARM {
                return false;
            }
        }
        true
    }

    fn best_for_feature(
        &self,
        feature: usize,
        train: &[usize],
        calib: &[usize],
    ) -> Option<SplitCandidate> {
        let mut train_values = self.covariates.column_at(feature, train);
        let thresholds = candidate_thresholds(&train_values, self.cfg.max_thresholds_per_feature);
        train_values.sort_by(f64::total_cmp);
        let lambda = self.cfg.lambda;

        let mut best: Option<(f64, SplitCandidate)> = None;
        for threshold in thresholds {
            let n_lt = train_values.partition_point(|&v| v < threshold);
            let n_geq = train.len() - n_lt;
            if n_lt < self.cfg.min_leaf || n_geq < self.cfg.min_leaf {
                continue;
            }
            let (geq_rows, lt_rows): (Vec<usize>, Vec<usize>) = calib
                .iter()
                .partition(|&&i| self.covariates.get(i, feature) >= threshold);
            if !self.child_ok(n_geq, &geq_rows) || !self.child_ok(n_lt, &lt_rows) {
                continue;
            }
            let geq = subgroup_stats(self.scores, &geq_rows, self.cfg.alpha, self.cfg.beta_s);
            let lt = subgroup_stats(self.scores, &lt_rows, self.cfg.alpha, self.cfg.beta_s);
            if !geq.is_finite() || !lt.is_finite() {
                continue;
            }
            let cand = SplitCandidate {
                feature,
                threshold,
                sum_w: geq.w_hat + lt.w_hat,
                sum_s: geq.s_hat + lt.s_hat,
                geq,
                lt,
            };
            let imp = cand.impurity(lambda);
            if best.as_ref().is_none_or(|(b, _)| imp < *b) {
                best = Some((imp, cand));
            }
        }
        best.map(|(_, c)| c)
    }

    /// Lowest-impurity valid split, ties to the lower feature then the lower
    /// threshold. `None` when no candidate passes the validity gates.
    pub fn best_split(&self, train: &[usize], calib: &[usize]) -> Option<SplitCandidate> {
        if train.len() < 2 * self.cfg.min_leaf {
            return None;
        }
        let per_feature: Vec<Option<SplitCandidate>> = (0..self.covariates.n_cols())
            .into_par_iter()
            .map(|k| self.best_for_feature(k, train, calib))
            .collect();
        let lambda = self.cfg.lambda;
        let mut best: Option<SplitCandidate> = None;
        for cand in per_feature.into_iter().flatten() {
            if best
                .as_ref()
                .is_none_or(|b| cand.impurity(lambda) < b.impurity(lambda))
            {
                best = Some(cand);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_midpoints() {
        assert_eq!(candidate_thresholds(&[4.0, 1.0, 2.0], 64), vec![1.5, 3.0]);
        assert!(candidate_thresholds(&[7.0, 7.0, 7.0], 64).is_empty());
        assert_eq!(candidate_thresholds(&[1.0, 1.0, 3.0, 3.0], 64), vec![2.0]);
    }

    #[test]
    fn thresholds_respect_cap() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let t = candidate_thresholds(&values, 64);
        assert_eq!(t.len(), 64);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t[0] > values[0] && *t.last().unwrap() < values[999]);
    }
}

//! Evaluation metrics on test rows with known effects.
//!
//! Variances use the population (divide by `n`) convention. Group-level
//! metrics take the true effects of the test rows grouped by leaf.

use serde::{Deserialize, Serialize};

use crate::conformal::Interval;
use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn nonempty(groups: &[Vec<f64>]) -> impl Iterator<Item = &Vec<f64>> {
    groups.iter().filter(|g| !g.is_empty())
}

/// Variance of the per-group means; empty groups are skipped.
pub fn v_across(groups: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = nonempty(groups).map(|g| mean(g)).collect();
    if means.len() < 2 {
        return 0.0;
    }
    population_variance(&means)
}

/// Unweighted average of the per-group variances.
pub fn v_in(groups: &[Vec<f64>]) -> f64 {
    let vars: Vec<f64> = nonempty(groups).map(|g| population_variance(g)).collect();
    if vars.is_empty() {
        return 0.0;
    }
    mean(&vars)
}

/// Variance of all values pooled.
pub fn v_pop(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    if all.is_empty() {
        return 0.0;
    }
    population_variance(&all)
}

/// Size-weighted within-group variance.
pub fn v_in_weighted(groups: &[Vec<f64>]) -> f64 {
    let n: usize = groups.iter().map(Vec::len).sum();
    nonempty(groups)
        .map(|g| g.len() as f64 * population_variance(g))
        .sum::<f64>()
        / n as f64
}

/// Size-weighted variance of the group means around the pooled mean.
pub fn v_across_weighted(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    nonempty(groups)
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum::<f64>()
        / all.len() as f64
}

pub fn coverage_rate(intervals: &[Interval], tau: &[f64]) -> Result<f64> {
    if intervals.len() != tau.len() {
        return Err(Error::InvalidData(format!(
            "{} intervals for {} effects",
            intervals.len(),
            tau.len()
        )));
    }
    if tau.is_empty() {
        return Err(Error::InvalidData("coverage of an empty set".into()));
    }
    let hits = intervals
        .iter()
        .zip(tau)
        .filter(|(iv, t)| iv.contains(**t))
        .count();
    Ok(hits as f64 / tau.len() as f64)
}

/// Mean width; `+inf` when any interval is unbounded.
pub fn mean_ci_width(intervals: &[Interval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::InvalidData("mean width of no intervals".into()));
    }
    Ok(intervals.iter().map(Interval::width).sum::<f64>() / intervals.len() as f64)
}

/// Percentile `p` in `[0, 100]` by linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean pairwise overlap of the groups' `[p, q]` percentile ranges.
pub fn overlap(groups: &[Vec<f64>], p: f64, q: f64) -> f64 {
    let ranges: Vec<(f64, f64)> = nonempty(groups)
        .map(|g| (percentile(g, p), percentile(g, q)))
        .collect();
    if ranges.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in ranges.iter().enumerate() {
        for b in &ranges[i + 1..] {
            total += (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Root mean squared error of the estimated effects.
pub fn pehe(mu1_hat: &[f64], mu0_hat: &[f64], tau: &[f64]) -> f64 {
    let mse = mu1_hat
        .iter()
        .zip(mu0_hat)
        .zip(tau)
        .map(|((m1, m0), t)| (m1 - m0 - t).powi(2))
        .sum::<f64>()
        / tau.len() as f64;
    mse.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub v_across: f64,
    pub v_in: f64,
    pub v_pop: f64,
    pub v_in_normalized: f64,
    pub n_subgroups: usize,
    /// Mean over test rows.
    pub ci_width: f64,
    /// Mean over leaves.
    pub ci_width_leaf: f64,
    pub coverage: f64,
    pub overlap: f64,
    pub pehe_root: f64,
}

/// Test-set predictions of one fitted method.
#[derive(Debug, Clone)]
pub struct TestPredictions {
    pub leaf: Vec<usize>,
    pub estimate: Vec<f64>,
    pub interval: Vec<Interval>,
}

/// Groups `values` by leaf id, in increasing id order.
pub fn group_by_leaf(leaf: &[usize], values: &[f64]) -> Vec<Vec<f64>> {
    let mut ids: Vec<usize> = leaf.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut groups = vec![Vec::new(); ids.len()];
    for (l, v) in leaf.iter().zip(values) {
        let g = ids.binary_search(l).expect("id collected above");
        groups[g].push(*v);
    }
    groups
}

pub fn evaluate(pred: &TestPredictions, tau: &[f64]) -> Result<RunMetrics> {
    let groups = group_by_leaf(&pred.leaf, tau);
    let vin = v_in(&groups);
    let vpop = v_pop(&groups);
    let widths = group_by_leaf(
        &pred.leaf,
        &pred
            .interval
            .iter()
            .map(Interval::width)
            .collect::<Vec<_>>(),
    );
    let ci_width_leaf = mean(&widths.iter().map(|w| w[0]).collect::<Vec<_>>());
    let sq: f64 = pred
        .estimate
        .iter()
        .zip(tau)
        .map(|(e, t)| (e - t).powi(2))
        .sum();
    Ok(RunMetrics {
        v_across: v_across(&groups),
        v_in: vin,
        v_pop: vpop,
        v_in_normalized: if vpop > 0.0 { vin / vpop } else { 0.0 },
        n_subgroups: groups.len(),
        ci_width: mean_ci_width(&pred.interval)?,
        ci_width_leaf,
        coverage: coverage_rate(&pred.interval, tau)?,
        overlap: overlap(&groups, 20.0, 80.0),
        pehe_root: (sq / tau.len() as f64).sqrt(),
    })
}

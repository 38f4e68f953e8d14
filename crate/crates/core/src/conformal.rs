//! Split conformal calibration.
//!
//! A calibration at coverage `c` over `n` absolute residuals is the
//! `ceil((n + 1) * c)`-th smallest residual, or `+inf` when that rank exceeds
//! `n`. Intervals are symmetric around the point prediction. For treatment
//! effects, each arm is calibrated at `sqrt(1 - alpha)` and the two
//! half-widths add, so joint coverage of both arms implies coverage of the
//! effect.

use serde::{Deserialize, Serialize};

/// Closed interval on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Self { lo, hi }
    }

    /// `[center - halfwidth, center + halfwidth]`; an infinite half-width
    /// yields the whole line.
    pub fn centered(center: f64, halfwidth: f64) -> Self {
        if halfwidth.is_infinite() {
            return Self::new(f64::NEG_INFINITY, f64::INFINITY);
        }
        Self::new(center - halfwidth, center + halfwidth)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Inclusive at both endpoints.
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    /// Residual quantile; `f64::INFINITY` when the rank overflows.
    pub quantile: f64,
    pub coverage: f64,
    pub n_calib: usize,
}

impl ConformalCalibration {
    pub fn from_residuals(residuals: &[f64], coverage: f64) -> Self {
        Self {
            quantile: residual_quantile(residuals, coverage),
            coverage,
            n_calib: residuals.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.quantile.is_finite()
    }
}

/// Per-arm calibrations for a treatment-effect interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmCalibrations {
    pub q0: ConformalCalibration,
    pub q1: ConformalCalibration,
}

impl ArmCalibrations {
    pub fn halfwidth(&self) -> f64 {
        self.q0.quantile + self.q1.quantile
    }
}

/// Rank of the order statistic used at `coverage` over `n` residuals.
pub fn quantile_rank(n: usize, coverage: f64) -> usize {
    ((n as f64 + 1.0) * coverage).ceil() as usize
}

/// Smallest number of calibration residuals that yields a finite quantile.
pub fn min_calibration_size(coverage: f64) -> usize {
    (1..)
        .find(|&n| quantile_rank(n, coverage) <= n)
        .expect("coverage < 1 always admits a finite rank")
}

/// Finite-sample conformal quantile of nonnegative residuals.
///
/// An empty input (or a rank past the end) returns `+inf`.
pub fn residual_quantile(residuals: &[f64], coverage: f64) -> f64 {
    let n = residuals.len();
    let rank = quantile_rank(n, coverage);
    if n == 0 || rank > n {
        return f64::INFINITY;
    }
    let mut sorted = residuals.to_vec();
    // rank >= 1 since coverage > 0
    let k = rank.max(1) - 1;
    let (_, kth, _) = sorted.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}

/// Calibrates `predict` on the rows in `calib_idx`.
pub fn calibrate<F>(
    predict: F,
    covariates: &crate::data::Matrix,
    outcomes: &[f64],
    calib_idx: &[usize],
    coverage: f64,
) -> ConformalCalibration
where
    F: Fn(&[f64]) -> f64,
{
    let residuals: Vec<f64> = calib_idx
        .iter()
        .map(|&i| (outcomes[i] - predict(covariates.row(i))).abs())
        .collect();
    ConformalCalibration::from_residuals(&residuals, coverage)
}

pub fn interval(prediction: f64, calib: &ConformalCalibration) -> Interval {
    Interval::centered(prediction, calib.quantile)
}

/// Effect interval `[tau - (Q1 + Q0), tau + (Q1 + Q0)]` with `tau = mu1 - mu0`.
pub fn ite_interval(mu1: f64, mu0: f64, arms: &ArmCalibrations) -> Interval {
    Interval::centered(mu1 - mu0, arms.halfwidth())
}

/// Per-arm coverage `sqrt(1 - alpha)` whose square is the target `1 - alpha`.
pub fn coverage_level_per_arm(alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    (1.0 - alpha).sqrt()
}

//! Confident-homogeneity statistics of a subgroup.

use serde::{Deserialize, Serialize};

use crate::conformal::{coverage_level_per_arm, ArmCalibrations, ConformalCalibration, Interval};

/// Regression rows use [`Arm::Single`]; effect rows carry their arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Single,
    Control,
    Treated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Regression,
    Hte,
}

/// Model output on every calibration row, computed once from the global
/// estimator and reused by every subgroup.
///
/// `estimate` is the prediction (regression) or the effect estimate `mu1 - mu0`;
/// `residual` is the absolute error of the model of the row's own arm.
#[derive(Debug, Clone)]
pub struct CalibrationScores {
    pub mode: Mode,
    pub estimate: Vec<f64>,
    pub residual: Vec<f64>,
    pub arm: Vec<Arm>,
}

impl CalibrationScores {
    fn residuals_by_arm(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut control = Vec::new();
        let mut treated = Vec::new();
        for &i in rows {
            match self.arm[i] {
                Arm::Treated => treated.push(self.residual[i]),
                Arm::Control | Arm::Single => control.push(self.residual[i]),
            }
        }
        (control, treated)
    }

    /// Calibration rows per arm, `(control, treated)`; regression rows count as control.
    pub fn arm_counts(&self, rows: &[usize]) -> (usize, usize) {
        let treated = rows
            .iter()
            .filter(|&&i| self.arm[i] == Arm::Treated)
            .count();
        (rows.len() - treated, treated)
    }

    /// Calibration of a subgroup at miscoverage `alpha`: one quantile at
    /// `1 - alpha`, or one per arm at `sqrt(1 - alpha)`.
    pub fn calibrate(&self, rows: &[usize], alpha: f64) -> LeafCalibration {
        match self.mode {
            Mode::Regression => {
                let residuals: Vec<f64> = rows.iter().map(|&i| self.residual[i]).collect();
                LeafCalibration::Single(ConformalCalibration::from_residuals(
                    &residuals,
                    1.0 - alpha,
                ))
            }
            Mode::Hte => {
                let coverage = coverage_level_per_arm(alpha);
                let (control, treated) = self.residuals_by_arm(rows);
                LeafCalibration::Arms(ArmCalibrations {
                    q0: ConformalCalibration::from_residuals(&control, coverage),
                    q1: ConformalCalibration::from_residuals(&treated, coverage),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeafCalibration {
    Single(ConformalCalibration),
    Arms(ArmCalibrations),
}

impl LeafCalibration {
    /// Interval half-width: the quantile, or the sum of the arm quantiles.
    pub fn halfwidth(&self) -> f64 {
        match self {
            Self::Single(c) => c.quantile,
            Self::Arms(a) => a.halfwidth(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStats {
    /// Mean interval width over the calibration rows.
    pub w_hat: f64,
    /// Mean deviation of the group center beyond each row's narrow interval.
    pub s_hat: f64,
    /// Mean model estimate over the calibration rows.
    pub center: f64,
    /// Calibration at the reporting level (`alpha`).
    pub calib: LeafCalibration,
    /// Calibration at the deviation level (`beta_s`).
    pub deviation_calib: LeafCalibration,
    pub n_calib: usize,
}

impl SubgroupStats {
    pub fn impurity(&self, lambda: f64) -> f64 {
        lambda * self.w_hat + (1.0 - lambda) * self.s_hat
    }

    pub fn is_finite(&self) -> bool {
        self.w_hat.is_finite() && self.s_hat.is_finite()
    }
}

/// Distance from `center` to the interval, zero when it lies inside.
pub fn deviation(center: f64, iv: Interval) -> f64 {
    if center > iv.hi {
        center - iv.hi
    } else if center < iv.lo {
        iv.lo - center
    } else {
        0.0
    }
}

/// Computes `(W, S, center)` for the calibration rows of a subgroup.
///
/// `W` uses intervals at miscoverage `alpha` and `S` the narrower intervals at
/// `beta_s`. An infinite quantile makes the statistic built on it `+inf`;
/// without calibration rows both are `+inf`.
pub fn subgroup_stats(
    scores: &CalibrationScores,
    rows: &[usize],
    alpha: f64,
    beta_s: f64,
) -> SubgroupStats {
    let calib = scores.calibrate(rows, alpha);
    let deviation_calib = scores.calibrate(rows, beta_s);
    let n = rows.len();
    let mut stats = SubgroupStats {
        w_hat: f64::INFINITY,
        s_hat: f64::INFINITY,
        center: 0.0,
        calib,
        deviation_calib,
        n_calib: n,
    };
    if n == 0 {
        return stats;
    }
    stats.center = rows.iter().map(|&i| scores.estimate[i]).sum::<f64>() / n as f64;
    let hw_w = calib.halfwidth();
    let hw_s = deviation_calib.halfwidth();
    stats.w_hat = 2.0 * hw_w;
    if hw_s.is_finite() {
        stats.s_hat = rows
            .iter()
            .map(|&i| deviation(stats.center, Interval::centered(scores.estimate[i], hw_s)))
            .sum::<f64>()
            / n as f64;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regression_scores(estimate: Vec<f64>, residual: Vec<f64>) -> CalibrationScores {
        let n = estimate.len();
        CalibrationScores {
            mode: Mode::Regression,
            estimate,
            residual,
            arm: vec![Arm::Single; n],
        }
    }

    #[test]
    fn deviation_branches() {
        let iv = Interval::new(1.0, 3.0);
        assert_eq!(deviation(5.0, iv), 2.0);
        assert_eq!(deviation(2.0, iv), 0.0);
        assert_eq!(deviation(0.0, iv), 1.0);
    }

    #[test]
    fn degenerate_calibration() {
        let scores = regression_scores(vec![4.0; 20], vec![0.0; 20]);
        let rows: Vec<usize> = (0..20).collect();
        let s = subgroup_stats(&scores, &rows, 0.05, 0.8);
        assert_eq!((s.w_hat, s.s_hat, s.center), (0.0, 0.0, 4.0));
    }

    #[test]
    fn two_row_deviation() {
        // residuals {1, 1}: at coverage 1 - 0.8 = 0.2 the rank is ceil(3 * 0.2) = 1, so Q_S = 1
        let scores = regression_scores(vec![0.0, 10.0], vec![1.0, 1.0]);
        let s = subgroup_stats(&scores, &[0, 1], 0.05, 0.8);
        assert!(s.w_hat.is_infinite());
        assert_eq!(s.deviation_calib.halfwidth(), 1.0);
        assert_eq!(s.center, 5.0);
        assert_eq!(s.s_hat, 4.0);
    }

    #[test]
    fn missing_arm_is_infinite() {
        let scores = CalibrationScores {
            mode: Mode::Hte,
            estimate: vec![0.0; 4],
            residual: vec![0.1; 4],
            arm: vec![Arm::Control; 4],
        };
        let s = subgroup_stats(&scores, &[0, 1, 2, 3], 0.05, 0.8);
        assert!(s.w_hat.is_infinite() && s.s_hat.is_infinite());
        let empty = subgroup_stats(&scores, &[], 0.05, 0.8);
        assert!(!empty.is_finite());
    }

    #[test]
    fn hte_halfwidth_adds_arms() {
        let n = 100;
        let scores = CalibrationScores {
            mode: Mode::Hte,
            estimate: vec![1.0; n],
            residual: (0..n).map(|i| if i % 2 == 0 { 0.2 } else { 0.3 }).collect(),
            arm: (0..n)
                .map(|i| {
                    if i % 2 == 0 {
                        Arm::Control
                    } else {
                        Arm::Treated
                    }
                })
                .collect(),
        };
        let rows: Vec<usize> = (0..n).collect();
        let s = subgroup_stats(&scores, &rows, 0.05, 0.8);
        assert!((s.calib.halfwidth() - 0.5).abs() < 1e-12);
        assert!((s.w_hat - 1.0).abs() < 1e-12);
        assert_eq!(s.s_hat, 0.0);
    }
}

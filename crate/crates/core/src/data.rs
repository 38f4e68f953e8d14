//! Dataset containers and seeded train/calibration splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic RNG used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidData(format!(
                "matrix buffer has {} entries, expected {n_rows} x {n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidData("ragged covariate rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), n_cols, data)
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            n_rows: values.len(),
            n_cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n_cols + k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// Values of feature `k` at the given rows, in index order.
    pub fn column_at(&self, k: usize, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.get(i, k)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("{name}[{pos}] is not finite")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub covariates: Matrix,
    pub outcomes: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(covariates: Matrix, outcomes: Vec<f64>) -> Result<Self> {
        if covariates.n_rows() != outcomes.len() {
            return Err(Error::InvalidData(format!(
                "{} covariate rows but {} outcomes",
                covariates.n_rows(),
                outcomes.len()
            )));
        }
        if !covariates.all_finite() {
            return Err(Error::InvalidData("non-finite covariate".into()));
        }
        check_finite("outcomes", &outcomes)?;
        Ok(Self {
            covariates,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Potential outcomes and effects, known only for generated data.
///
/// `y0`/`y1` are absent when the truth comes from a CSV `tau` column.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub y0: Option<Vec<f64>>,
    pub y1: Option<Vec<f64>>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HteDataset {
    pub covariates: Matrix,
    pub treatments: Vec<bool>,
    pub outcomes: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

impl HteDataset {
    pub fn new(
        covariates: Matrix,
        treatments: Vec<bool>,
        outcomes: Vec<f64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let n = outcomes.len();
        if covariates.n_rows() != n || treatments.len() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: {} covariate rows, {} treatments, {n} outcomes",
                covariates.n_rows(),
                treatments.len()
            )));
        }
        if !covariates.all_finite() {
            return Err(Error::InvalidData("non-finite covariate".into()));
        }
        check_finite("outcomes", &outcomes)?;
        if !treatments.iter().any(|&t| t) || treatments.iter().all(|&t| t) {
            return Err(Error::InvalidData(
                "need at least one treated and one control sample".into(),
            ));
        }
        if let Some(truth) = &truth {
            let lens_ok = truth.tau.len() == n
                && truth.y0.as_ref().is_none_or(|v| v.len() == n)
                && truth.y1.as_ref().is_none_or(|v| v.len() == n);
            if !lens_ok {
                return Err(Error::InvalidData("ground truth length mismatch".into()));
            }
        }
        Ok(Self {
            covariates,
            treatments,
            outcomes,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.covariates.n_cols()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.treatments[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.treatments[i]).collect()
    }

    /// Copy of the given rows, ground truth included.
    ///
    /// Fails if the selection loses an arm.
    pub fn select(&self, idx: &[usize]) -> Result<HteDataset> {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let truth = self.truth.as_ref().map(|t| GroundTruth {
            y0: t.y0.as_deref().map(pick),
            y1: t.y1.as_deref().map(pick),
            tau: pick(&t.tau),
        });
        HteDataset::new(
            self.covariates.select_rows(idx),
            idx.iter().map(|&i| self.treatments[i]).collect(),
            pick(&self.outcomes),
            truth,
        )
    }
}

/// Training (`I1`) and calibration (`I2`) index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_idx: Vec<usize>,
    pub calib_idx: Vec<usize>,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    Ok(())
}

fn permute_and_cut(
    mut idx: Vec<usize>,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    idx.shuffle(rng);
    let cut = (ratio * idx.len() as f64).floor() as usize;
    let mut calib = idx.split_off(cut);
    idx.sort_unstable();
    calib.sort_unstable();
    (idx, calib)
}

/// Uniformly random split of `0..n`: the first `floor(ratio * n)` entries of a
/// seeded permutation form `I1`, the rest `I2`.
pub fn split_dataset(n: usize, ratio: f64, seed: u64) -> Result<DataSplit> {
    if n < 2 {
        return Err(Error::TooSmallToSplit(n));
    }
    check_ratio(ratio)?;
    let mut rng = seeded_rng(seed);
    let (train_idx, calib_idx) = permute_and_cut((0..n).collect(), ratio, &mut rng);
    Ok(DataSplit {
        train_idx,
        calib_idx,
    })
}

/// Splits the treated and control rows independently, then unions the halves,
/// so both arms reach both `I1` and `I2`.
pub fn stratified_split_hte(dataset: &HteDataset, ratio: f64, seed: u64) -> Result<DataSplit> {
    check_ratio(ratio)?;
    let treated = dataset.treated_indices();
    let control = dataset.control_indices();
    for (arm, idx) in [("treated", &treated), ("control", &control)] {
        if idx.len() < 2 {
            return Err(Error::ArmTooSmall {
                arm,
                count: idx.len(),
                needed: 2,
            });
        }
    }
    let mut rng = seeded_rng(seed);
    let (mut train_idx, mut calib_idx) = permute_and_cut(treated, ratio, &mut rng);
    let (train_c, calib_c) = permute_and_cut(control, ratio, &mut rng);
    train_idx.extend(train_c);
    calib_idx.extend(calib_c);
    train_idx.sort_unstable();
    calib_idx.sort_unstable();
    Ok(DataSplit {
        train_idx,
        calib_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_hte(n_treated: usize, n_control: usize) -> HteDataset {
        let n = n_treated + n_control;
        let x = Matrix::column_vector(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        let t = (0..n).map(|i| i < n_treated).collect();
        HteDataset::new(x, t, vec![0.0; n], None).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(4, 0.5, 3).unwrap();
        assert_eq!((s.train_idx.len(), s.calib_idx.len()), (2, 2));
        let s = split_dataset(747, 0.5, 3).unwrap();
        assert_eq!((s.train_idx.len(), s.calib_idx.len()), (373, 374));
    }

    #[test]
    fn split_is_deterministic() {
        assert_eq!(
            split_dataset(100, 0.5, 9).unwrap(),
            split_dataset(100, 0.5, 9).unwrap()
        );
        assert_ne!(
            split_dataset(100, 0.5, 9).unwrap(),
            split_dataset(100, 0.5, 10).unwrap()
        );
    }

    #[test]
    fn split_rejects_tiny_input() {
        let err = split_dataset(1, 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("dataset too small to split"));
        assert!(split_dataset(10, 1.0, 0).is_err());
    }

    #[test]
    fn stratified_balances_arms() {
        let ds = toy_hte(10, 10);
        let s = stratified_split_hte(&ds, 0.5, 1).unwrap();
        for half in [&s.train_idx, &s.calib_idx] {
            let treated = half.iter().filter(|&&i| ds.treatments[i]).count();
            assert_eq!(treated, 5);
            assert_eq!(half.len() - treated, 5);
        }
    }

    #[test]
    fn stratified_ihdp_sizes() {
        let ds = toy_hte(139, 608);
        let s = stratified_split_hte(&ds, 0.5, 4).unwrap();
        for half in [&s.train_idx, &s.calib_idx] {
            assert!(half.iter().filter(|&&i| ds.treatments[i]).count() >= 69);
        }
    }

    #[test]
    fn stratified_rejects_starved_arm() {
        let ds = toy_hte(1, 10);
        let err = stratified_split_hte(&ds, 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("arm too small"));
    }

    #[test]
    fn hte_dataset_requires_both_arms() {
        let x = Matrix::column_vector(&[0.0, 1.0]);
        assert!(HteDataset::new(x, vec![true, true], vec![0.0, 0.0], None).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_indices(n in 2usize..400, seed in any::<u64>(), ratio in 0.05f64..0.95) {
            let s = split_dataset(n, ratio, seed).unwrap();
            let mut all: Vec<usize> = s.train_idx.iter().chain(&s.calib_idx).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s.train_idx.len(), (ratio * n as f64).floor() as usize);
        }

        #[test]
        fn stratified_preserves_proportions(nt in 2usize..80, nc in 2usize..80, seed in any::<u64>()) {
            let ds = toy_hte(nt, nc);
            let s = stratified_split_hte(&ds, 0.5, seed).unwrap();
            let t_train = s.train_idx.iter().filter(|&&i| ds.treatments[i]).count();
            let t_calib = s.calib_idx.iter().filter(|&&i| ds.treatments[i]).count();
            prop_assert!(t_train.abs_diff(t_calib) <= 1);
            prop_assert_eq!(s.train_idx.len() + s.calib_idx.len(), nt + nc);
        }
    }
}

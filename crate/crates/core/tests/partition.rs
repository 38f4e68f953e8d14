use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use r2p_core::data::{seeded_rng, split_dataset};
use r2p_core::datasets::{
    gen_null_effect, gen_synthetic_a_regression, NoiseConvention, SyntheticSpec,
};
use r2p_core::estimators::{EstimatorConfig, OutcomeEstimator};
use r2p_core::partition::{
    confident_criterion, predict_group, r2p_fit, r2p_fit_with_model, r2p_hte_fit, Node,
    SearchContext,
};
use r2p_core::{Error, HteDataset, Matrix, PartitionConfig, RegressionDataset};

#[derive(Debug)]
struct Step;

impl OutcomeEstimator for Step {
    fn predict(&self, x: &[f64]) -> f64 {
        if x[0] >= 0.0 {
            10.0
        } else {
            0.0
        }
    }
}

fn step_dataset(n: usize, seed: u64) -> RegressionDataset {
    let mut rng = seeded_rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let y = rows
        .iter()
        .map(|r| Step.predict(r) + rng.random_range(-0.01..0.01))
        .collect();
    RegressionDataset::new(Matrix::from_rows(&rows).unwrap(), y).unwrap()
}

fn noise_dataset(n: usize, seed: u64) -> RegressionDataset {
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| normal.sample(&mut rng)).collect();
    RegressionDataset::new(Matrix::column_vector(&x), y).unwrap()
}

fn exact_grid() -> PartitionConfig {
    PartitionConfig {
        max_thresholds_per_feature: usize::MAX,
        ..PartitionConfig::default()
    }
}

/// Impurity of the two children of a split, recomputed from sorted residuals.
fn oracle_children_impurity(
    ds: &RegressionDataset,
    calib: &[usize],
    feature: usize,
    threshold: f64,
    cfg: &PartitionConfig,
) -> Option<f64> {
    let quantile = |r: &mut Vec<f64>, c: f64| {
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((r.len() as f64 + 1.0) * c).ceil() as usize;
        if k > r.len() {
            f64::INFINITY
        } else {
            r[k - 1]
        }
    };
    let mut total = 0.0;
    for geq in [true, false] {
        let rows: Vec<usize> = calib
            .iter()
            .copied()
            .filter(|&i| (ds.covariates.get(i, feature) >= threshold) == geq)
            .collect();
        if rows.len() < cfg.min_leaf {
            return None;
        }
        let preds: Vec<f64> = rows
            .iter()
            .map(|&i| Step.predict(ds.covariates.row(i)))
            .collect();
        let mut res: Vec<f64> = rows
            .iter()
            .zip(&preds)
            .map(|(&i, p)| (ds.outcomes[i] - p).abs())
            .collect();
        let w = 2.0 * quantile(&mut res.clone(), 1.0 - cfg.alpha);
        let hs = quantile(&mut res, 1.0 - cfg.beta_s);
        if !w.is_finite() {
            return None;
        }
        let center = preds.iter().sum::<f64>() / preds.len() as f64;
        let s = preds
            .iter()
            .map(|p| {
                ((center - (p + hs)).max(0.0))
                    .max((p - hs) - center)
                    .max(0.0)
            })
            .sum::<f64>()
            / preds.len() as f64;
        total += cfg.lambda * w + (1.0 - cfg.lambda) * s;
    }
    Some(total)
}

#[test]
fn step_function_splits_once_at_the_step() {
    let cfg = exact_grid();
    let mut two_leaves = 0;
    for seed in 0..50 {
        let ds = step_dataset(200, seed);
        let split = split_dataset(ds.len(), 0.5, seed).unwrap();
        let tree = r2p_fit_with_model(&ds, split.clone(), Box::new(Step), &cfg).unwrap();
        let Node::Split {
            feature, threshold, ..
        } = tree.nodes()[0]
        else {
            panic!("seed {seed}: root not split")
        };
        assert_eq!(feature, 0);

        // brute-force the root split over every training midpoint of both features
        let mut best = (f64::INFINITY, 0, 0.0);
        for k in 0..2 {
            let mut v = ds.covariates.column_at(k, &split.train_idx);
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            for w in v.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let n_geq = split
                    .train_idx
                    .iter()
                    .filter(|&&i| ds.covariates.get(i, k) >= t)
                    .count();
                if n_geq < cfg.min_leaf || split.train_idx.len() - n_geq < cfg.min_leaf {
                    continue;
                }
                if let Some(imp) = oracle_children_impurity(&ds, &split.calib_idx, k, t, &cfg) {
                    if imp < best.0 - 1e-12 {
                        best = (imp, k, t);
                    }
                }
            }
        }
        let chosen =
            oracle_children_impurity(&ds, &split.calib_idx, feature, threshold, &cfg).unwrap();
        assert!(
            (chosen - best.0).abs() < 1e-9,
            "seed {seed}: {chosen} vs oracle {}",
            best.0
        );
        assert!(
            threshold.abs() < 0.1,
            "seed {seed}: threshold {threshold} off the step"
        );
        if tree.n_leaves() == 2 {
            two_leaves += 1;
        }
    }
    assert!(
        two_leaves >= 45,
        "{two_leaves}/50 runs had exactly two leaves"
    );
}

#[test]
fn pure_noise_stays_whole() {
    let cfg = PartitionConfig::default();
    let single = (0..50)
        .filter(|&seed| {
            let ds = noise_dataset(300, seed);
            let c = PartitionConfig {
                seed,
                ..cfg.clone()
            };
            r2p_fit(&ds, &EstimatorConfig::knn(10), &c)
                .unwrap()
                .n_leaves()
                == 1
        })
        .count();
    assert!(single >= 45, "{single}/50 single-leaf trees");
}

#[test]
fn zero_effect_world_stays_whole() {
    let single = (0..50)
        .filter(|&seed| {
            let s = gen_null_effect(&SyntheticSpec::new(300, 10, seed), 0.0).unwrap();
            let cfg = PartitionConfig {
                seed,
                ..PartitionConfig::default()
            };
            r2p_hte_fit(&s.train, &EstimatorConfig::knn(10), &cfg)
                .unwrap()
                .n_leaves()
                == 1
        })
        .count();
    assert!(single >= 45, "{single}/50 single-leaf trees");
}

#[test]
fn same_seed_same_tree() {
    let ds = step_dataset(300, 9);
    let cfg = PartitionConfig {
        seed: 4,
        ..PartitionConfig::default()
    };
    let a = r2p_fit(&ds, &EstimatorConfig::knn(5), &cfg).unwrap();
    let b = r2p_fit(&ds, &EstimatorConfig::knn(5), &cfg).unwrap();
    assert_eq!(
        a.to_document("r2p").to_json(),
        b.to_document("r2p").to_json()
    );
}

#[test]
fn logged_splits_satisfy_the_criterion() {
    for seed in 0..10 {
        let ds = step_dataset(400, seed);
        let cfg = PartitionConfig {
            seed,
            gamma: 0.0,
            ..PartitionConfig::default()
        };
        let tree = r2p_fit(&ds, &EstimatorConfig::knn(5), &cfg).unwrap();
        for rec in tree.split_log() {
            assert!(confident_criterion(
                &rec.parent,
                rec.children_sum_w,
                rec.children_sum_s,
                &cfg
            ));
        }
        assert_eq!(tree.split_log().len(), tree.n_leaves() - 1);
    }
}

#[test]
fn leaves_shrink_as_gamma_grows() {
    // a staircase in x0 gives several worthwhile splits
    let mut rng = seeded_rng(11);
    let rows: Vec<Vec<f64>> = (0..1200)
        .map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(0.0..1.0)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 5.0 * r[0].floor() + rng.random_range(-0.05..0.05))
        .collect();
    let ds = RegressionDataset::new(Matrix::from_rows(&rows).unwrap(), y).unwrap();
    let counts: Vec<usize> = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9]
        .iter()
        .map(|&gamma| {
            let cfg = PartitionConfig {
                gamma,
                seed: 1,
                ..PartitionConfig::default()
            };
            r2p_fit(&ds, &EstimatorConfig::knn(5), &cfg)
                .unwrap()
                .n_leaves()
        })
        .collect();
    assert!(counts[0] > 1, "{counts:?}");
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
}

#[test]
fn max_depth_caps_the_tree() {
    let mut rng = seeded_rng(12);
    let rows: Vec<Vec<f64>> = (0..1200)
        .map(|_| vec![rng.random_range(0.0..8.0)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 5.0 * r[0].floor() + rng.random_range(-0.05..0.05))
        .collect();
    let ds = RegressionDataset::new(Matrix::from_rows(&rows).unwrap(), y).unwrap();
    let free = r2p_fit(&ds, &EstimatorConfig::knn(5), &PartitionConfig::default()).unwrap();
    let capped = PartitionConfig {
        max_depth: Some(2),
        ..PartitionConfig::default()
    };
    let tree = r2p_fit(&ds, &EstimatorConfig::knn(5), &capped).unwrap();
    assert!(free.n_leaves() > 4, "{}", free.n_leaves());
    assert!(tree.n_leaves() <= 4 && tree.depth() <= 2);
}

#[test]
fn best_split_needs_twice_min_leaf() {
    let ds = step_dataset(100, 2);
    let tree = r2p_fit_with_model(
        &ds,
        split_dataset(100, 0.5, 2).unwrap(),
        Box::new(Step),
        &PartitionConfig::default(),
    )
    .unwrap();
    let leaf = tree.subgroup(tree.leaf_of(&[0.5, 0.0])).unwrap();
    let cfg = PartitionConfig {
        min_leaf: leaf.train_idx.len() / 2 + 1,
        ..PartitionConfig::default()
    };
    let scores = r2p_core::partition::CalibrationScores {
        mode: r2p_core::partition::Mode::Regression,
        estimate: vec![0.0; ds.len()],
        residual: vec![0.0; ds.len()],
        arm: vec![r2p_core::partition::Arm::Single; ds.len()],
    };
    let ctx = SearchContext {
        covariates: &ds.covariates,
        scores: &scores,
        cfg: &cfg,
    };
    assert!(ctx.best_split(&leaf.train_idx, &leaf.calib_idx).is_none());
}

#[test]
fn routing() {
    let ds = noise_dataset(300, 3);
    let tree = r2p_fit(&ds, &EstimatorConfig::knn(10), &PartitionConfig::default()).unwrap();
    if tree.n_leaves() == 1 {
        for x in [-5.0, 0.0, 7.0] {
            assert_eq!(predict_group(&tree, &[x]).leaf_id, 0);
        }
    }

    let ds = step_dataset(200, 1);
    let tree = r2p_fit_with_model(
        &ds,
        split_dataset(200, 0.5, 1).unwrap(),
        Box::new(Step),
        &exact_grid(),
    )
    .unwrap();
    let Node::Split {
        threshold, lt, geq, ..
    } = tree.nodes()[0]
    else {
        panic!("root not split")
    };
    assert_eq!(tree.leaf_of(&[threshold, 0.0]), geq);
    assert_eq!(tree.leaf_of(&[-1.0, 0.0]), lt);
    let p = predict_group(&tree, &[0.9, 0.0]);
    assert_eq!(p.estimate, 10.0);
    assert!(p.interval.contains(p.estimate));
    let half = tree.subgroup(p.leaf_id).unwrap().halfwidth();
    assert!((p.interval.width() - 2.0 * half).abs() < 1e-12);
}

#[test]
fn tiny_calibration_is_too_strict() {
    let ds = noise_dataset(30, 1);
    let err = r2p_fit(&ds, &EstimatorConfig::knn(3), &PartitionConfig::default()).unwrap_err();
    assert!(
        matches!(err, Error::AlphaTooStrict { n_calib: 15, .. }),
        "{err}"
    );
}

#[test]
fn hte_root_needs_both_arms_calibrated() {
    // 60 rows: about 15 calibration rows per arm, far below the 39 needed at sqrt(0.95)
    let s = gen_null_effect(&SyntheticSpec::new(60, 10, 0), 0.1).unwrap();
    let err = r2p_hte_fit(
        &s.train,
        &EstimatorConfig::knn(3),
        &PartitionConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::AlphaTooStrict { .. }), "{err}");
}

/// Per-leaf coverage of fresh regression draws, averaged over repetitions.
#[test]
fn per_leaf_regression_coverage() {
    let reps = 60;
    let mut total = 0.0;
    let mut leaves = 0usize;
    for rep in 0..reps {
        let train = gen_synthetic_a_regression(300, rep, NoiseConvention::Variance).unwrap();
        let test =
            gen_synthetic_a_regression(2000, 10_000 + rep, NoiseConvention::Variance).unwrap();
        let cfg = PartitionConfig {
            seed: rep,
            ..PartitionConfig::default()
        };
        let tree = r2p_fit(&train, &EstimatorConfig::knn(10), &cfg).unwrap();
        let mut hits = vec![(0usize, 0usize); tree.nodes().len()];
        for (x, &y) in test.covariates.rows().zip(&test.outcomes) {
            let p = predict_group(&tree, x);
            hits[p.leaf_id].1 += 1;
            hits[p.leaf_id].0 += usize::from(p.interval.contains(y));
        }
        for (h, n) in hits.into_iter().filter(|(_, n)| *n > 0) {
            total += h as f64 / n as f64;
            leaves += 1;
        }
    }
    let mean = total / leaves as f64;
    assert!(mean >= 0.93, "mean per-leaf coverage {mean}");
}

fn arbitrary_tree_data(seed: u64) -> HteDataset {
    let s = r2p_core::datasets::gen_synthetic_b(
        &SyntheticSpec::new(1200, 10, seed),
        NoiseConvention::StdDev,
    )
    .unwrap();
    s.train
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exactly_one_leaf_accepts(seed in 0u64..4, x in prop::collection::vec(-200.0f64..400.0, 10)) {
        let ds = arbitrary_tree_data(seed);
        let cfg = PartitionConfig { seed, ..PartitionConfig::default() };
        let tree = r2p_hte_fit(&ds, &EstimatorConfig::knn(10), &cfg).unwrap();
        let accepting: Vec<usize> = tree.leaves().filter(|(_, s)| s.contains(&x)).map(|(id, _)| id).collect();
        prop_assert_eq!(accepting, vec![tree.leaf_of(&x)]);
    }
}

use rand::Rng;
use rand_distr::{Distribution, Normal};

use r2p_core::data::{seeded_rng, GroundTruth};
use r2p_core::datasets::{gen_synthetic_a, NoiseConvention, SyntheticSample, SyntheticSpec};
use r2p_core::estimators::{EstimatorConfig, IteEstimator};
use r2p_core::partition::{hte_split, predict_group, r2p_hte_fit, r2p_hte_fit_with_model};
use r2p_core::{HteDataset, Matrix, PartitionConfig};

/// Mean over leaves of the share of test effects inside the leaf interval.
fn mean_leaf_coverage(
    reps: u64,
    sample: impl Fn(u64) -> SyntheticSample,
    est: EstimatorConfig,
) -> f64 {
    let mut total = 0.0;
    let mut leaves = 0usize;
    for seed in 0..reps {
        let s = sample(seed);
        let cfg = PartitionConfig {
            seed,
            ..PartitionConfig::default()
        };
        let tree = r2p_hte_fit(
            &s.train,
            &EstimatorConfig {
                seed,
                ..est.clone()
            },
            &cfg,
        )
        .unwrap();
        let tau = &s.test.truth.as_ref().unwrap().tau;
        let mut hits = vec![(0usize, 0usize); tree.nodes().len()];
        for (x, t) in s.test.covariates.rows().zip(tau) {
            let p = predict_group(&tree, x);
            hits[p.leaf_id].0 += usize::from(p.interval.contains(*t));
            hits[p.leaf_id].1 += 1;
        }
        for (h, n) in hits.into_iter().filter(|(_, n)| *n > 0) {
            total += h as f64 / n as f64;
            leaves += 1;
        }
    }
    total / leaves as f64
}

#[test]
fn per_leaf_effect_coverage_synthetic_a() {
    let cov = mean_leaf_coverage(
        20,
        |seed| {
            gen_synthetic_a(
                &SyntheticSpec::new(300, 1000, seed),
                NoiseConvention::Variance,
            )
            .unwrap()
        },
        EstimatorConfig::gp(),
    );
    assert!(cov >= 0.95, "{cov}");
}

#[derive(Debug)]
struct StepArms;

impl IteEstimator for StepArms {
    fn predict_arms(&self, x: &[f64]) -> (f64, f64) {
        (0.0, if x[0] >= 0.0 { 5.0 } else { -5.0 })
    }
}

fn step_effect(n: usize, seed: u64) -> HteDataset {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let tau: Vec<f64> = rows.iter().map(|r| StepArms.predict_ite(r)).collect();
    let y = rows
        .iter()
        .zip(&t)
        .map(|(r, &ti)| {
            let (m0, m1) = StepArms.predict_arms(r);
            (if ti { m1 } else { m0 }) + noise.sample(&mut rng)
        })
        .collect();
    let truth = GroundTruth {
        y0: None,
        y1: None,
        tau,
    };
    HteDataset::new(Matrix::from_rows(&rows).unwrap(), t, y, Some(truth)).unwrap()
}

#[test]
fn per_leaf_effect_coverage_with_splits() {
    let mut total = 0.0;
    let mut leaves = 0usize;
    for seed in 0..30 {
        let train = step_effect(1200, seed);
        let test = step_effect(1000, seed + 1000);
        let cfg = PartitionConfig {
            seed,
            ..PartitionConfig::default()
        };
        let split = hte_split(&train, &cfg).unwrap();
        let tree = r2p_hte_fit_with_model(&train, split, Box::new(StepArms), &cfg).unwrap();
        assert!(tree.n_leaves() > 1, "seed {seed} did not split");
        let mut hits = vec![(0usize, 0usize); tree.nodes().len()];
        for (x, t) in test
            .covariates
            .rows()
            .zip(&test.truth.as_ref().unwrap().tau)
        {
            let p = predict_group(&tree, x);
            hits[p.leaf_id].0 += usize::from(p.interval.contains(*t));
            hits[p.leaf_id].1 += 1;
        }
        for (h, n) in hits.into_iter().filter(|(_, n)| *n > 0) {
            total += h as f64 / n as f64;
            leaves += 1;
        }
    }
    let cov = total / leaves as f64;
    assert!(cov >= 0.95, "{cov}");
}

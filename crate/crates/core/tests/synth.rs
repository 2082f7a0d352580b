//! Sampling distribution checks.

use postensor_core::synth::{noise_draws, sample_observations, sample_trial, ExperimentSpec};
use postensor_core::{DenseTensor, NoiseModel, TensorShape};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn constant(dims: Vec<usize>, value: f64) -> DenseTensor {
    let shape = TensorShape::new(dims).unwrap();
    let total = shape.total_entries();
    DenseTensor::new(shape, vec![value; total]).unwrap()
}

#[test]
fn noise_factor_has_unit_mean() {
    for (k, theta) in [(1.0, 1.0), (0.2, 5.0)] {
        let draws = noise_draws(NoiseModel::gamma(k, theta).unwrap(), 1_000_000, 0).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() <= 0.003, "k={} theta={}: mean {}", k, theta, mean);
    }
}

#[test]
fn constant_tensor_sample_mean() {
    let spec = ExperimentSpec {
        truth: constant(vec![3, 3], 2.0),
        n: 100_000,
        noise: NoiseModel::gamma(1.0, 1.0).unwrap(),
        seed: 1,
        trials: 1,
    };
    let obs = sample_observations(&spec).unwrap();
    let mean = obs.records().iter().map(|r| r.y).sum::<f64>() / obs.len() as f64;
    assert!((1.98..=2.02).contains(&mean), "mean {}", mean);
}

#[test]
fn indices_are_uniform() {
    let spec = ExperimentSpec {
        truth: constant(vec![3; 5], 1.0),
        n: 100_000,
        noise: NoiseModel::None,
        seed: 2,
        trials: 1,
    };
    let obs = sample_observations(&spec).unwrap();
    let shape = spec.truth.shape();
    let mut counts = vec![0usize; shape.total_entries()];
    for r in obs.records() {
        counts[shape.offset(&r.x).unwrap()] += 1;
    }
    let expected = obs.len() as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {} >= {}", stat, critical);
}

#[test]
fn noiseless_samples_equal_the_truth() {
    let truth = DenseTensor::from_fn(TensorShape::new(vec![2, 3]).unwrap(), |x| {
        (x.coord(1) * x.coord(2)) as f64
    });
    let spec = ExperimentSpec {
        truth: truth.clone(),
        n: 200,
        noise: NoiseModel::None,
        seed: 4,
        trials: 1,
    };
    for r in sample_observations(&spec).unwrap().records() {
        assert_eq!(r.y, truth.get(&r.x).unwrap());
    }
}

#[test]
fn trials_are_seeded() {
    let spec = ExperimentSpec {
        truth: constant(vec![4, 4], 1.5),
        n: 300,
        noise: NoiseModel::gamma(0.2, 5.0).unwrap(),
        seed: 10,
        trials: 3,
    };
    assert_eq!(sample_trial(&spec, 1).unwrap(), sample_trial(&spec, 1).unwrap());
    assert_ne!(sample_trial(&spec, 1).unwrap(), sample_trial(&spec, 2).unwrap());
    let shifted = ExperimentSpec {
        seed: 11,
        ..spec.clone()
    };
    assert_eq!(sample_trial(&spec, 1).unwrap(), sample_observations(&shifted).unwrap());
}

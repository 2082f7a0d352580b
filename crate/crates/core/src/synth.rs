//! Seeded synthetic data: ground-truth tensors, uniform sampling and
//! multiplicative gamma noise.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed + trial`, so a
//! given `ExperimentSpec` produces the same observations on every platform.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::complex::PartitionComplex;
use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::risk::{NoiseModel, Observation, ObservationSet};
use crate::shape::{DenseTensor, MultiIndex, TensorShape};

/// Sampling protocol for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Ground truth.
    pub truth: DenseTensor,
    /// Observations per trial.
    pub n: usize,
    /// Noise model.
    pub noise: NoiseModel,
    /// Base seed; trial `i` uses `seed + i`.
    pub seed: u64,
    /// Number of trials.
    pub trials: usize,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if let NoiseModel::Gamma { shape, scale } = self.noise {
            NoiseModel::gamma(shape, scale)?;
        }
        Ok(())
    }
}

/// Observations of trial 0.
pub fn sample_observations(spec: &ExperimentSpec) -> Result<ObservationSet> {
    sample_trial(spec, 0)
}

/// Observations of trial `trial`: `n` uniform indices with
/// `y = (1 + z) ψ_x`.
pub fn sample_trial(spec: &ExperimentSpec, trial: usize) -> Result<ObservationSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(trial as u64));
    let shape = spec.truth.shape();
    let gamma = noise_distribution(spec.noise)?;
    let mut records = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = uniform_index(&mut rng, shape);
        let psi = spec.truth.entries()[shape.offset_unchecked(&x)];
        let factor = match &gamma {
            Some(g) => g.sample(&mut rng),
            None => 1.0,
        };
        records.push(Observation { x, y: factor * psi });
    }
    if spec.truth.entries().contains(&0.0) {
        ObservationSet::with_zero_values(shape.clone(), records)
    } else {
        ObservationSet::new(shape.clone(), records)
    }
}

fn noise_distribution(noise: NoiseModel) -> Result<Option<Gamma<f64>>> {
    match noise {
        NoiseModel::None => Ok(None),
        NoiseModel::Gamma { shape, scale } => Gamma::new(shape, scale)
            .map(Some)
            .map_err(|e| Error::Config(alloc::format!("invalid gamma parameters: {}", e))),
    }
}

/// Index drawn uniformly from all entries of `shape`.
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, shape: &TensorShape) -> MultiIndex {
    let coords = shape.dims().iter().map(|&r| rng.random_range(1..=r)).collect();
    MultiIndex::new(coords).expect("coordinates are at least 1")
}

/// Draws of the multiplicative factor `1 + z`.
pub fn noise_draws(noise: NoiseModel, count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match noise_distribution(noise)? {
        Some(g) => (0..count).map(|_| g.sample(&mut rng)).collect(),
        None => vec![1.0; count],
    })
}

/// Empirical `q`-quantile of `1 + z` from `draws` seeded samples; a
/// diagnostic stand-in for the noise range bound.
pub fn noise_quantile(noise: NoiseModel, q: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || draws == 0 {
        return Err(Error::Config(alloc::format!(
            "bad quantile request q={} draws={}",
            q,
            draws
        )));
    }
    let mut v = noise_draws(noise, draws, seed)?;
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * draws as f64) as usize).min(draws - 1);
    Ok(v[idx])
}

/// `A ⊗ v ⊗ 1 ⊗ 1` with `A = [[2,1,1],[1,2,1],[1,1,2]]` and `v = (1,2,3)`,
/// over facets `{1,2}, {3}, {4}, {5}`. Entries span `[1, 6]`.
pub fn benchmark_tensor() -> FactorSet {
    let shape = TensorShape::new(vec![3; 5]).expect("static shape");
    let complex =
        PartitionComplex::partition(vec![vec![1, 2], vec![3], vec![4], vec![5]], 5).expect("static partition");
    let a = vec![2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0];
    let factors = vec![a, vec![1.0, 2.0, 3.0], vec![1.0; 3], vec![1.0; 3]];
    FactorSet::new(shape, complex, factors, 9.0).expect("static factors")
}

/// The 2×2×2 tensor equal to 2 where `x_1 + x_2 + x_3` is odd and 0
/// elsewhere. Every position pair is coupled, yet averaging over the third
/// position gives a constant, so all pairwise risk gaps vanish. Contains
/// zeros on purpose.
pub fn counterexample_tensor() -> DenseTensor {
    let shape = TensorShape::new(vec![2, 2, 2]).expect("static shape");
    DenseTensor::from_fn(shape, |x| {
        if (x.coord(1) + x.coord(2) + x.coord(3)) % 2 == 1 {
            2.0
        } else {
            0.0
        }
    })
}

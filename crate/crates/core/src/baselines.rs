//! Alternating least squares for CP completion.
//!
//! Each sweep visits the modes in order and refits every row of the mode's
//! factor matrix by ridge-regularized least squares on the observations
//! sharing that row's index value.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::cp::{cp_eval, CpModel};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::math;
use crate::risk::ObservationSet;

/// Ridge added to every least squares subproblem.
pub const RIDGE: f64 = 1e-8;

/// Default candidate ranks for [`als_select_rank`].
pub const DEFAULT_RANKS: [usize; 4] = [1, 2, 3, 4];

/// Result of [`als_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlsFit {
    /// Fitted model.
    pub model: CpModel,
    /// Training squared loss `(1/n) Σ (y − ψ̂)²` after each sweep.
    pub loss_trace: Vec<f64>,
}

/// Fits a rank-`rank` CP model by `sweeps` ALS sweeps from a seeded start
/// with factors uniform in `[0.5, 1.5]`.
pub fn als_fit(obs: &ObservationSet, rank: usize, sweeps: usize, seed: u64) -> Result<AlsFit> {
    if rank == 0 {
        return Err(Error::Config("ALS rank must be at least 1".into()));
    }
    if sweeps == 0 {
        return Err(Error::Config("ALS needs at least one sweep".into()));
    }
    let shape = obs.shape().clone();
    let p = shape.order();
    let q = rank;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<Vec<f64>> = shape
        .dims()
        .iter()
        .map(|&r| (0..r * q).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let mut model = CpModel::new(shape.clone(), q, factors)?;

    // rows[i][v] lists the observations whose mode-i index is v + 1.
    let rows: Vec<Vec<Vec<usize>>> = (0..p)
        .map(|i| {
            let mut by = vec![Vec::new(); shape.dims()[i]];
            for (o, r) in obs.records().iter().enumerate() {
                by[r.x.coords()[i] - 1].push(o);
            }
            by
        })
        .collect();

    let mut loss_trace = Vec::with_capacity(sweeps);
    let mut z = vec![0.0; q];
    for _ in 0..sweeps {
        for i in 0..p {
            for (v, members) in rows[i].iter().enumerate() {
                let mut gram = vec![0.0; q * q];
                let mut rhs = vec![0.0; q];
                for &o in members {
                    let rec = &obs.records()[o];
                    z.iter_mut().for_each(|e| *e = 1.0);
                    for (l, f) in model.factors().iter().enumerate() {
                        if l == i {
                            continue;
                        }
                        let row = (rec.x.coords()[l] - 1) * q;
                        for j in 0..q {
                            z[j] *= f[row + j];
                        }
                    }
                    for a in 0..q {
                        rhs[a] += z[a] * rec.y;
                        for b in 0..q {
                            gram[a * q + b] += z[a] * z[b];
                        }
                    }
                }
                for a in 0..q {
                    gram[a * q + a] += RIDGE;
                }
                let w = Cholesky::new_shifted(&gram, q)?.solve(&rhs);
                model.factors_mut()[i][v * q..(v + 1) * q].copy_from_slice(&w);
            }
        }
        loss_trace.push(training_loss(&model, obs));
    }
    Ok(AlsFit { model, loss_trace })
}

fn training_loss(model: &CpModel, obs: &ObservationSet) -> f64 {
    let terms: Vec<f64> = obs
        .records()
        .iter()
        .map(|r| {
            let d = r.y - model.eval_unchecked(&r.x);
            d * d
        })
        .collect();
    math::pairwise_sum(&terms) / obs.len() as f64
}

/// Result of [`als_select_rank`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlsSelection {
    /// Selected rank.
    pub rank: usize,
    /// Refit on all observations at the selected rank.
    pub fit: AlsFit,
    /// Validation squared loss per candidate rank.
    pub validation: Vec<(usize, f64)>,
}

/// Picks the rank by split-half validation (fit on `⌊n/2⌋..n`, score squared
/// loss on `0..⌊n/2⌋`, ties to the smaller rank) and refits on all data.
pub fn als_select_rank(obs: &ObservationSet, ranks: &[usize], sweeps: usize, seed: u64) -> Result<AlsSelection> {
    if ranks.is_empty() {
        return Err(Error::Config("rank grid is empty".into()));
    }
    let n = obs.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let validation_set = obs.slice(0..n / 2)?;
    let training = obs.slice(n / 2..n)?;
    let mut validation = Vec::with_capacity(ranks.len());
    let mut best: Option<(f64, usize)> = None;
    for &q in ranks {
        let fit = als_fit(&training, q, sweeps, seed)?;
        let v = training_loss(&fit.model, &validation_set);
        validation.push((q, v));
        if v.is_finite() && best.is_none_or(|(bv, bq)| v < bv || (v == bv && q < bq)) {
            best = Some((v, q));
        }
    }
    let (_, rank) = best.ok_or_else(|| Error::AllFitsFailed("every ALS rank diverged".into()))?;
    Ok(AlsSelection {
        rank,
        fit: als_fit(obs, rank, sweeps, seed)?,
        validation,
    })
}

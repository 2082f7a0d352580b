//! Partition estimation from risk gaps, threshold selection by
//! cross-validation, and the completion pipeline built on them.
//!
//! The risk gap of positions `j`, `q` compares the best fit of the data
//! flattened to `(x_j, x_q)` with a coupled matrix factor against the best
//! fit with two independent vector factors. Positions in different facets
//! of a product structure have gap zero; strongly coupled positions have a
//! positive gap.

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::complex::PartitionComplex;
use crate::error::{Error, Result};
use crate::factors::{FactorSet, Layout};
use crate::math;
use crate::risk::{self, Observation, ObservationSet};
use crate::shape::{MultiIndex, TensorShape};
use crate::solver::{self, SolveOptions, SolveReport};
use crate::synth;

/// Default cross-validation threshold grid.
pub const DEFAULT_THRESHOLD_GRID: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5];

/// Default ℓ1 budget grid for the sparse variant.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// Empirical risk gap of two positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskGapEstimate {
    /// First position.
    pub j: usize,
    /// Second position.
    pub q: usize,
    /// `decoupled_risk − coupled_risk`.
    pub gap: f64,
    /// Minimum risk with a matrix factor over `(x_j, x_q)`.
    pub coupled_risk: f64,
    /// Minimum risk with vector factors over `x_j` and `x_q`.
    pub decoupled_risk: f64,
    /// Fewer than two distinct values were observed at `j` or `q`.
    pub degenerate: bool,
    /// Both subproblem solves met the ε contract.
    pub converged: bool,
}

/// Computes the risk gap of positions `j ≠ q` using the bound `M` that
/// `opts` resolves on the full data.
pub fn risk_gap(obs: &ObservationSet, j: usize, q: usize, opts: &SolveOptions) -> Result<RiskGapEstimate> {
    let pair = obs.project_pair(j, q)?;
    let opts = SolveOptions {
        bound: Some(opts.resolve_bound(obs)),
        lambda: None,
        ..opts.clone()
    };
    let coupled = solver::solve_convex(&pair, &PartitionComplex::full(2), &opts)?;
    let decoupled = solver::solve_convex(&pair, &PartitionComplex::singletons(2), &opts)?;
    Ok(RiskGapEstimate {
        j,
        q,
        gap: decoupled.objective - coupled.objective,
        coupled_risk: coupled.objective,
        decoupled_risk: decoupled.objective,
        degenerate: pair.distinct_values(1) < 2 || pair.distinct_values(2) < 2,
        converged: coupled.converged && decoupled.converged,
    })
}

/// Risk gaps already computed on one data set, keyed by `(j, q)`.
#[derive(Debug, Clone, Default)]
pub struct GapCache {
    gaps: BTreeMap<(usize, usize), RiskGapEstimate>,
}

impl GapCache {
    /// Empty cache.
    pub fn new() -> Self {
        Self::default()
    }

    /// Cached estimate or a fresh computation.
    pub fn get_or_compute(
        &mut self,
        obs: &ObservationSet,
        j: usize,
        q: usize,
        opts: &SolveOptions,
    ) -> Result<&RiskGapEstimate> {
        Ok(match self.gaps.entry((j, q)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(risk_gap(obs, j, q, opts)?),
        })
    }

    /// All estimates computed so far, in `(j, q)` order.
    pub fn estimates(&self) -> impl Iterator<Item = &RiskGapEstimate> {
        self.gaps.values()
    }
}

/// Rule producing the gap threshold `t_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// `t_n = α / 2` for a known separation `α`.
    FixedAlpha(f64),
    /// `t_n = c / √(log n)`.
    Decaying(f64),
    /// A given threshold.
    Explicit(f64),
}

impl ThresholdPolicy {
    /// Threshold for `n` observations.
    pub fn threshold(&self, n: usize) -> Result<f64> {
        let t = match *self {
            ThresholdPolicy::FixedAlpha(alpha) => {
                if !(alpha > 0.0) {
                    return Err(Error::Config(format!("alpha must be positive, got {}", alpha)));
                }
                alpha / 2.0
            }
            ThresholdPolicy::Decaying(c) => {
                if !(c > 0.0) {
                    return Err(Error::Config(format!("c4 must be positive, got {}", c)));
                }
                let l = math::ln(n as f64);
                if l > 0.0 {
                    c / math::sqrt(l)
                } else {
                    f64::INFINITY
                }
            }
            ThresholdPolicy::Explicit(t) => {
                if t.is_nan() {
                    return Err(Error::Config("threshold is NaN".into()));
                }
                t
            }
        };
        Ok(t)
    }
}

/// Greedy partition estimate at the threshold given by `policy`.
pub fn estimate_partition(
    obs: &ObservationSet,
    policy: ThresholdPolicy,
    opts: &SolveOptions,
) -> Result<PartitionComplex> {
    let t = policy.threshold(obs.len())?;
    estimate_partition_cached(obs, t, opts, &mut GapCache::new())
}

/// Greedy partition estimate at threshold `t`, reusing gaps from `cache`.
///
/// Position `j = 2, …, p` joins the first facet whose smallest position `q`
/// has a gap with `j` above `t`; otherwise it opens a new facet.
pub fn estimate_partition_cached(
    obs: &ObservationSet,
    t: f64,
    opts: &SolveOptions,
    cache: &mut GapCache,
) -> Result<PartitionComplex> {
    let p = obs.shape().order();
    let mut facets: Vec<Vec<usize>> = vec![vec![1]];
    for j in 2..=p {
        let mut joined = false;
        if t < f64::INFINITY {
            for facet in facets.iter_mut() {
                let q = facet[0];
                if cache.get_or_compute(obs, j, q, opts)?.gap > t {
                    facet.push(j);
                    joined = true;
                    break;
                }
            }
        }
        if !joined {
            facets.push(vec![j]);
        }
    }
    PartitionComplex::partition(facets, p)
}

/// How the completion pipeline picks its partition.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// One threshold policy.
    Threshold(ThresholdPolicy),
    /// Cross-validation over thresholds, and over ℓ1 budgets when given.
    CrossValidation {
        /// Threshold grid.
        thresholds: Vec<f64>,
        /// ℓ1 budget grid for the sparse variant.
        lambdas: Option<Vec<f64>>,
    },
}

/// Configuration of [`complete_tensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionConfig {
    /// Partition selection.
    pub selection: Selection,
    /// Solver options; `lambda` makes the final fit sparse when selecting by
    /// a single threshold.
    pub solve: SolveOptions,
}

/// Output of the completion pipeline.
#[derive(Debug, Clone)]
pub struct Completion {
    /// Estimated partition.
    pub partition: PartitionComplex,
    /// Fitted factors.
    pub factors: FactorSet,
    /// Report of the final solve.
    pub report: SolveReport,
    /// Cross-validation details when selection was by cross-validation.
    pub cv: Option<CrossValidation>,
    /// Threshold used for the final partition.
    pub threshold: f64,
}

/// Estimates a partition and fits it on all observations.
pub fn complete_tensor(obs: &ObservationSet, config: &CompletionConfig) -> Result<Completion> {
    config.solve.validate()?;
    match &config.selection {
        Selection::Threshold(policy) => {
            let t = policy.threshold(obs.len())?;
            let opts = SolveOptions {
                bound: Some(config.solve.resolve_bound(obs)),
                ..config.solve.clone()
            };
            let partition = estimate_partition_cached(obs, t, &opts, &mut GapCache::new())?;
            let report = fit(obs, &partition, &opts, opts.lambda)?;
            Ok(Completion {
                factors: report.factors()?,
                partition,
                report,
                cv: None,
                threshold: t,
            })
        }
        Selection::CrossValidation { thresholds, lambdas } => {
            let cv = cross_validate_with(obs, thresholds, lambdas.as_deref(), &config.solve)?;
            Ok(Completion {
                partition: cv.partition.clone(),
                factors: cv.factors.clone(),
                report: cv.report.clone(),
                threshold: cv.threshold,
                cv: Some(cv),
            })
        }
    }
}

fn fit(
    obs: &ObservationSet,
    partition: &PartitionComplex,
    opts: &SolveOptions,
    lambda: Option<f64>,
) -> Result<SolveReport> {
    match lambda {
        Some(l) => solver::solve_sparse(
            obs,
            partition,
            &SolveOptions {
                lambda: Some(l),
                ..opts.clone()
            },
        ),
        None => solver::solve_convex(obs, partition, opts),
    }
}

/// One grid point of a cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    /// Threshold.
    pub threshold: f64,
    /// ℓ1 budget, for the sparse variant.
    pub lambda: Option<f64>,
    /// Partition estimated on all observations at this threshold.
    pub partition: PartitionComplex,
    /// I-divergence risk on the validation half; `None` if the fit failed.
    pub validation_risk: Option<f64>,
}

/// Result of [`cross_validate`].
#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// Selected threshold.
    pub threshold: f64,
    /// Selected ℓ1 budget.
    pub lambda: Option<f64>,
    /// Partition at the selected threshold.
    pub partition: PartitionComplex,
    /// Refit on all observations.
    pub factors: FactorSet,
    /// Report of the refit.
    pub report: SolveReport,
    /// Every grid point in grid order.
    pub entries: Vec<CvEntry>,
    /// Threshold pairs `(t₁, t₂)` with `t₁ ≥ t₂` whose partitions are not
    /// nested as expected (`Γ(t₁)` should refine `Γ(t₂)`).
    pub nesting_violations: Vec<(f64, f64)>,
    /// Risk gaps computed on all observations.
    pub gaps: Vec<RiskGapEstimate>,
}

/// Threshold selection by split-half cross-validation.
///
/// Partitions are estimated on all observations. Each is fit on the second
/// half (`⌊n/2⌋..n`) and scored by I-divergence risk on the first half. The
/// smallest threshold among the minimizers wins and is refit on everything.
pub fn cross_validate(obs: &ObservationSet, grid: &[f64], opts: &SolveOptions) -> Result<CrossValidation> {
    cross_validate_with(obs, grid, None, opts)
}

/// [`cross_validate`] over a joint grid of thresholds and ℓ1 budgets.
pub fn cross_validate_sparse(
    obs: &ObservationSet,
    grid: &[f64],
    lambdas: &[f64],
    opts: &SolveOptions,
) -> Result<CrossValidation> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    cross_validate_with(obs, grid, Some(lambdas), opts)
}

fn cross_validate_with(
    obs: &ObservationSet,
    grid: &[f64],
    lambdas: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<CrossValidation> {
    opts.validate()?;
    let n = obs.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    if grid.is_empty() || grid.iter().any(|t| t.is_nan()) {
        return Err(Error::Config("threshold grid must be nonempty and free of NaN".into()));
    }
    let opts = SolveOptions {
        bound: Some(opts.resolve_bound(obs)),
        ..opts.clone()
    };
    let half = n / 2;
    let validation = obs.slice(0..half)?;
    let training = obs.slice(half..n)?;

    let mut cache = GapCache::new();
    let mut partitions = Vec::with_capacity(grid.len());
    for &t in grid {
        partitions.push(estimate_partition_cached(obs, t, &opts, &mut cache)?);
    }

    let budgets: Vec<Option<f64>> = match lambdas {
        Some(ls) => ls.iter().map(|&l| Some(l)).collect(),
        None => vec![None],
    };
    let mut entries = Vec::new();
    let mut best: Option<(f64, f64, Option<f64>, usize)> = None;
    for (gi, (&t, partition)) in grid.iter().zip(&partitions).enumerate() {
        for &lambda in &budgets {
            let score = fit(&training, partition, &opts, lambda)
                .and_then(|r| r.factors())
                .and_then(|f| risk::empirical_risk_theta(&f, &validation))
                .ok()
                .filter(|v| v.is_finite());
            if let Some(v) = score {
                let better = match best {
                    None => true,
                    Some((bv, bt, bl, _)) => {
                        v < bv || (v == bv && (t < bt || (t == bt && lambda.unwrap_or(0.0) < bl.unwrap_or(0.0))))
                    }
                };
                if better {
                    best = Some((v, t, lambda, gi));
                }
            }
            entries.push(CvEntry {
                threshold: t,
                lambda,
                partition: partition.clone(),
                validation_risk: score,
            });
        }
    }
    let (_, threshold, lambda, gi) =
        best.ok_or_else(|| Error::AllFitsFailed(format!("{} candidate fits", entries.len())))?;
    let partition = partitions[gi].clone();
    let report = fit(obs, &partition, &opts, lambda)?;

    let mut nesting_violations = Vec::new();
    for (a, &t1) in grid.iter().enumerate() {
        for (b, &t2) in grid.iter().enumerate() {
            if a != b && t1 >= t2 && !partitions[a].refines(&partitions[b]) {
                nesting_violations.push((t1, t2));
            }
        }
    }

    Ok(CrossValidation {
        threshold,
        lambda,
        factors: report.factors()?,
        partition,
        report,
        entries,
        nesting_violations,
        gaps: cache.estimates().cloned().collect(),
    })
}

/// Result of [`randomized_decompose`].
#[derive(Debug, Clone)]
pub struct RandomizedFit {
    /// Fitted factors.
    pub factors: FactorSet,
    /// Solver report.
    pub report: SolveReport,
    /// Number of entries sampled, `⌈ρ/δ⌉`.
    pub samples: usize,
}

/// Fits a decomposition over `complex` from `⌈ρ/δ⌉` uniformly sampled
/// entries, read through `sampler`.
pub fn randomized_decompose(
    shape: &TensorShape,
    mut sampler: impl FnMut(&MultiIndex) -> f64,
    complex: &PartitionComplex,
    delta: f64,
    opts: &SolveOptions,
) -> Result<RandomizedFit> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {}", delta)));
    }
    let rho = Layout::new(shape.clone(), complex.clone())?.rho();
    let samples = math::ceil(rho as f64 / delta) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let records = (0..samples)
        .map(|_| {
            let x = synth::uniform_index(&mut rng, shape);
            let y = sampler(&x);
            Observation { x, y }
        })
        .collect();
    let obs = ObservationSet::new(shape.clone(), records)?;
    let report = match opts.lambda {
        Some(_) => solver::solve_sparse(&obs, complex, opts)?,
        None => solver::solve_convex(&obs, complex, opts)?,
    };
    Ok(RandomizedFit {
        factors: report.factors()?,
        report,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::DenseTensor;

    #[test]
    fn threshold_policies() {
        assert_eq!(ThresholdPolicy::FixedAlpha(0.2).threshold(10).unwrap(), 0.1);
        let t = ThresholdPolicy::Decaying(1.0).threshold(100).unwrap();
        assert!((t - 1.0 / math::sqrt(math::ln(100.0))).abs() < 1e-15);
        assert_eq!(ThresholdPolicy::Decaying(1.0).threshold(1).unwrap(), f64::INFINITY);
        assert!(ThresholdPolicy::FixedAlpha(0.0).threshold(10).is_err());
    }

    #[test]
    fn constant_data_has_no_gap() {
        let t = DenseTensor::new(TensorShape::new(vec![2, 3]).unwrap(), vec![2.0; 6]).unwrap();
        let obs = ObservationSet::exhaustive(&t).unwrap();
        let g = risk_gap(&obs, 1, 2, &SolveOptions::default()).unwrap();
        assert!(g.gap.abs() < 2e-6, "{:?}", g);
        assert!(!g.degenerate);
    }

    #[test]
    fn infinite_threshold_gives_singletons() {
        let t = DenseTensor::new(
            TensorShape::new(vec![2, 2, 2]).unwrap(),
            vec![1.0, 2.0, 3.0, 1.0, 2.0, 1.0, 1.0, 4.0],
        )
        .unwrap();
        let obs = ObservationSet::exhaustive(&t).unwrap();
        let p = estimate_partition(&obs, ThresholdPolicy::Explicit(f64::INFINITY), &SolveOptions::default()).unwrap();
        assert_eq!(p, PartitionComplex::singletons(3));
    }

    #[test]
    fn cross_validation_needs_four_observations() {
        let t = DenseTensor::new(TensorShape::new(vec![3]).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
        let obs = ObservationSet::exhaustive(&t).unwrap();
        assert!(matches!(
            cross_validate(&obs, &[0.01], &SolveOptions::default()),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }
}

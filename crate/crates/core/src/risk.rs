//! Observations, loss functions and their derivatives.
//!
//! The generalized I-divergence risk in log parameters is
//! `R̂(U) = (1/n) Σ_i [−y_i s_i + exp(s_i)]` with `s_i = Σ_k u_{x⟨i⟩_{F_k}}`.
//! It is convex in `U`; its gradient and Hessian only touch the `m` cells
//! each observation hits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::factors::{FactorSet, Layout, LogFactorSet};
use crate::math;
use crate::shape::{DenseTensor, MultiIndex, TensorShape};

/// Largest `ρ` for which [`risk_hessian`] builds an explicit matrix.
pub const EXPLICIT_HESSIAN_LIMIT: usize = 2000;

/// One sampled entry: index `x` and noisy value `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Sampled index.
    pub x: MultiIndex,
    /// Measured value.
    pub y: f64,
}

/// `n ≥ 1` observations over a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    shape: TensorShape,
    records: Vec<Observation>,
    allow_zero: bool,
}

impl ObservationSet {
    /// Validates indices against `shape` and requires every `y > 0`.
    pub fn new(shape: TensorShape, records: Vec<Observation>) -> Result<Self> {
        Self::build(shape, records, false)
    }

    /// Like [`ObservationSet::new`] but admits `y = 0`, for fixtures that
    /// deliberately contain zero entries.
    pub fn with_zero_values(shape: TensorShape, records: Vec<Observation>) -> Result<Self> {
        Self::build(shape, records, true)
    }

    fn build(shape: TensorShape, records: Vec<Observation>, allow_zero: bool) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        for (i, r) in records.iter().enumerate() {
            shape.check(&r.x)?;
            let ok = if allow_zero { r.y >= 0.0 } else { r.y > 0.0 };
            if !ok || !r.y.is_finite() {
                return Err(Error::Domain(format!(
                    "observation {} has value {}; values must be {}",
                    i + 1,
                    r.y,
                    if allow_zero { "nonnegative" } else { "positive" }
                )));
            }
        }
        Ok(Self {
            shape,
            records,
            allow_zero,
        })
    }

    /// Every entry of `tensor` observed once, in row-major order.
    pub fn exhaustive(tensor: &DenseTensor) -> Result<Self> {
        let records = tensor
            .shape()
            .indices()
            .zip(tensor.entries())
            .map(|(x, &y)| Observation { x, y })
            .collect();
        let allow_zero = tensor.entries().contains(&0.0);
        Self::build(tensor.shape().clone(), records, allow_zero)
    }

    /// Shape the indices refer to.
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    /// Records in input order.
    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    /// Number of observations `n`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; an observation set holds at least one record.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether zero values were admitted.
    pub fn allows_zero(&self) -> bool {
        self.allow_zero
    }

    /// Largest observed value.
    pub fn max_y(&self) -> f64 {
        self.records.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Records `range` as a new set over the same shape.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Result<Self> {
        Self::build(self.shape.clone(), self.records[range].to_vec(), self.allow_zero)
    }

    /// Restricts every index to positions `j` and `q` (1-based, distinct).
    pub fn project_pair(&self, j: usize, q: usize) -> Result<Self> {
        let p = self.shape.order();
        if j == q || j == 0 || q == 0 || j > p || q > p {
            return Err(Error::Dimension(format!(
                "positions ({}, {}) must be distinct and within 1..={}",
                j, q, p
            )));
        }
        let shape = TensorShape::new(vec![self.shape.dim(j), self.shape.dim(q)])?;
        let records = self
            .records
            .iter()
            .map(|r| Observation {
                x: MultiIndex::from([r.x.coord(j), r.x.coord(q)]),
                y: r.y,
            })
            .collect();
        Self::build(shape, records, self.allow_zero)
    }

    /// Number of distinct values observed at position `pos`.
    pub fn distinct_values(&self, pos: usize) -> usize {
        let mut seen = vec![false; self.shape.dim(pos)];
        for r in &self.records {
            seen[r.x.coord(pos) - 1] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Multiplicative noise `y = (1 + z) ψ_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `y = ψ_x`.
    None,
    /// `1 + z ~ Gamma(shape, scale)` with `shape · scale = 1`.
    Gamma {
        /// Shape `k`.
        shape: f64,
        /// Scale `θ_g`.
        scale: f64,
    },
}

impl NoiseModel {
    /// Gamma noise; requires positive parameters with unit mean.
    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0) {
            return Err(Error::Config(format!(
                "gamma parameters must be positive, got k={}, theta={}",
                shape, scale
            )));
        }
        if math::abs(shape * scale - 1.0) > 1e-9 {
            return Err(Error::Config(format!(
                "gamma noise must have unit mean, got k*theta = {}",
                shape * scale
            )));
        }
        Ok(NoiseModel::Gamma { shape, scale })
    }
}

/// Cell ids touched by each observation, `m` per observation.
#[derive(Debug, Clone)]
pub(crate) struct Incidence {
    pub m: usize,
    pub cells: Vec<usize>,
}

impl Incidence {
    pub fn new(layout: &Layout, obs: &ObservationSet) -> Result<Self> {
        if layout.shape() != obs.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("observations over {:?}", layout.shape().dims()),
                got: format!("{:?}", obs.shape().dims()),
            });
        }
        let mut cells = Vec::with_capacity(obs.len() * layout.num_facets());
        for r in obs.records() {
            layout.cells_into(&r.x, &mut cells);
        }
        Ok(Self {
            m: layout.num_facets(),
            cells,
        })
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.cells[i * self.m..(i + 1) * self.m]
    }

    pub fn log_values(&self, u: &[f64], n: usize) -> Vec<f64> {
        (0..n).map(|i| self.of(i).iter().map(|&c| u[c]).sum()).collect()
    }
}

fn incidence(u: &LogFactorSet, obs: &ObservationSet) -> Result<(Incidence, Vec<f64>)> {
    let inc = Incidence::new(u.layout(), obs)?;
    let s = inc.log_values(&u.flat(), obs.len());
    Ok((inc, s))
}

/// `(1/n) Σ_i [−y_i s_i + exp(s_i)]`.
pub fn empirical_risk(logparams: &LogFactorSet, obs: &ObservationSet) -> Result<f64> {
    let (_, s) = incidence(logparams, obs)?;
    let terms: Vec<f64> = obs
        .records()
        .iter()
        .zip(&s)
        .map(|(r, &si)| -r.y * si + math::exp(si))
        .collect();
    Ok(math::pairwise_sum(&terms) / obs.len() as f64)
}

/// `(1/n) Σ_i [−y_i log ∏_k θ + ∏_k θ]`.
pub fn empirical_risk_theta(params: &FactorSet, obs: &ObservationSet) -> Result<f64> {
    empirical_risk(&params.log_reparam()?, obs)
}

/// Gradient of [`empirical_risk`], one array per facet.
pub fn risk_gradient(logparams: &LogFactorSet, obs: &ObservationSet) -> Result<Vec<Vec<f64>>> {
    let (inc, s) = incidence(logparams, obs)?;
    let n = obs.len() as f64;
    let mut g = vec![0.0; logparams.layout().rho()];
    for (i, r) in obs.records().iter().enumerate() {
        let w = (-r.y + math::exp(s[i])) / n;
        for &c in inc.of(i) {
            g[c] += w;
        }
    }
    Ok(logparams.layout().unflatten(&g))
}

/// Hessian of [`empirical_risk`] applied to `v` (per-facet arrays).
pub fn hessian_vector_product(logparams: &LogFactorSet, obs: &ObservationSet, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let layout = logparams.layout();
    if v.len() != layout.num_facets() || (0..v.len()).any(|k| v[k].len() != layout.facet_size(k)) {
        return Err(Error::ShapeMismatch {
            expected: "direction with the layout of the parameters".into(),
            got: format!("{} arrays", v.len()),
        });
    }
    let (inc, s) = incidence(logparams, obs)?;
    let vf = layout.flatten(v);
    let n = obs.len() as f64;
    let mut out = vec![0.0; layout.rho()];
    for i in 0..obs.len() {
        let cells = inc.of(i);
        let dv: f64 = cells.iter().map(|&c| vf[c]).sum();
        let w = math::exp(s[i]) * dv / n;
        for &c in cells {
            out[c] += w;
        }
    }
    Ok(layout.unflatten(&out))
}

/// Explicit `ρ × ρ` Hessian (row-major, cell-indexed); `ρ` must not exceed
/// [`EXPLICIT_HESSIAN_LIMIT`].
pub fn risk_hessian(logparams: &LogFactorSet, obs: &ObservationSet) -> Result<Vec<f64>> {
    let rho = logparams.layout().rho();
    if rho > EXPLICIT_HESSIAN_LIMIT {
        return Err(Error::Config(format!(
            "explicit Hessian requested for rho = {} > {}; use hessian_vector_product",
            rho, EXPLICIT_HESSIAN_LIMIT
        )));
    }
    let (inc, s) = incidence(logparams, obs)?;
    let n = obs.len() as f64;
    let mut h = vec![0.0; rho * rho];
    for i in 0..obs.len() {
        let w = math::exp(s[i]) / n;
        for &a in inc.of(i) {
            for &b in inc.of(i) {
                h[a * rho + b] += w;
            }
        }
    }
    Ok(h)
}

/// `(1/n) Σ_i (y_i − ∏_k θ)²`.
pub fn squared_loss(params: &FactorSet, obs: &ObservationSet) -> Result<f64> {
    if params.shape() != obs.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("observations over {:?}", params.shape().dims()),
            got: format!("{:?}", obs.shape().dims()),
        });
    }
    let terms: Vec<f64> = obs
        .records()
        .iter()
        .map(|r| {
            let d = r.y - params.eval_unchecked(&r.x);
            d * d
        })
        .collect();
    Ok(math::pairwise_sum(&terms) / obs.len() as f64)
}

/// `(1/∏r_i) Σ_x (ψ_x − ψ̂_x)²` for a fitted decomposition.
pub fn prediction_error(truth: &DenseTensor, fitted: &FactorSet) -> Result<f64> {
    if truth.shape() != fitted.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", truth.shape().dims()),
            got: format!("{:?}", fitted.shape().dims()),
        });
    }
    Ok(prediction_error_with(truth, |x| fitted.eval_unchecked(x)))
}

/// Mean squared entry error of an arbitrary predictor over every index.
pub fn prediction_error_with(truth: &DenseTensor, mut predict: impl FnMut(&MultiIndex) -> f64) -> f64 {
    let terms: Vec<f64> = truth
        .shape()
        .indices()
        .zip(truth.entries())
        .map(|(x, &v)| {
            let d = v - predict(&x);
            d * d
        })
        .collect();
    math::pairwise_sum(&terms) / truth.entries().len() as f64
}

/// Affine bounds `a_l L̂ + b_l ≤ R̂ ≤ a_u L̂ + b_u` relating the squared and
/// I-divergence losses when data and predictions lie in `[(μM)⁻¹, μM]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationConstants {
    /// Slope of the lower bound.
    pub a_l: f64,
    /// Intercept of the lower bound.
    pub b_l: f64,
    /// Slope of the upper bound.
    pub a_u: f64,
    /// Intercept of the upper bound.
    pub b_u: f64,
}

impl MajorizationConstants {
    /// Constants for the range bound `μM > 1`.
    pub fn new(mu_m: f64) -> Self {
        let l = math::ln(mu_m);
        Self {
            a_l: 1.0 / (2.0 * mu_m * mu_m * mu_m),
            b_l: -mu_m * l + 1.0 / mu_m,
            a_u: mu_m * mu_m * mu_m / 2.0,
            b_u: l / mu_m + mu_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::PartitionComplex;

    fn single(y: f64, dims: Vec<usize>, x: Vec<usize>) -> ObservationSet {
        ObservationSet::new(
            TensorShape::new(dims).unwrap(),
            vec![Observation {
                x: MultiIndex::new(x).unwrap(),
                y,
            }],
        )
        .unwrap()
    }

    #[test]
    fn risk_examples() {
        let obs = single(1.0, vec![2, 2], vec![2, 1]);
        let layout = Layout::new(obs.shape().clone(), PartitionComplex::singletons(2)).unwrap();
        let u = LogFactorSet::zeros(layout.clone());
        assert_eq!(empirical_risk(&u, &obs).unwrap(), 1.0);
        let g = risk_gradient(&u, &obs).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
        let theta = u.exp_reparam(10.0).unwrap();
        assert_eq!(empirical_risk_theta(&theta, &obs).unwrap(), 1.0);

        let obs = single(2.0, vec![3], vec![2]);
        let layout = Layout::new(obs.shape().clone(), PartitionComplex::singletons(1)).unwrap();
        let u = LogFactorSet::with_tight_bounds(layout, vec![vec![0.0, math::ln(2.0), 0.0]]);
        let r = empirical_risk(&u, &obs).unwrap();
        assert!((r - (-2.0 * math::ln(2.0) + 2.0)).abs() < 1e-15);
        assert!((r - 0.6137056388801094).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_observations() {
        let s = TensorShape::new(vec![2]).unwrap();
        let rec = |y| {
            vec![Observation {
                x: MultiIndex::from([1]),
                y,
            }]
        };
        assert!(matches!(
            ObservationSet::new(s.clone(), rec(0.0)),
            Err(Error::Domain(_))
        ));
        assert!(ObservationSet::with_zero_values(s.clone(), rec(0.0)).is_ok());
        assert!(ObservationSet::new(s.clone(), vec![]).is_err());
        let out = vec![Observation {
            x: MultiIndex::from([3]),
            y: 1.0,
        }];
        assert!(matches!(ObservationSet::new(s, out), Err(Error::Dimension(_))));
    }

    #[test]
    fn squared_loss_and_prediction_error() {
        let shape = TensorShape::new(vec![1]).unwrap();
        let f = FactorSet::new(shape.clone(), PartitionComplex::singletons(1), vec![vec![1.0]], 10.0).unwrap();
        let obs = ObservationSet::new(
            shape.clone(),
            vec![Observation {
                x: MultiIndex::from([1]),
                y: 3.0,
            }],
        )
        .unwrap();
        assert_eq!(squared_loss(&f, &obs).unwrap(), 4.0);
        let truth = DenseTensor::new(shape, vec![2.0]).unwrap();
        assert_eq!(prediction_error(&truth, &f).unwrap(), 1.0);
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::gamma(1.0, 1.0).is_ok());
        assert!(NoiseModel::gamma(0.2, 5.0).is_ok());
        assert!(NoiseModel::gamma(1.0, 2.0).is_err());
        assert!(NoiseModel::gamma(-1.0, -1.0).is_err());
    }

    #[test]
    fn projection_to_pairs() {
        let obs = single(2.0, vec![2, 3, 4], vec![2, 3, 4]);
        let p = obs.project_pair(3, 1).unwrap();
        assert_eq!(p.shape().dims(), &[4, 2]);
        assert_eq!(p.records()[0].x.coords(), &[4, 2]);
        assert!(obs.project_pair(2, 2).is_err());
    }
}

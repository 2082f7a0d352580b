//! CP models `Σ_j v_1^j ⊗ … ⊗ v_p^j` and the expansion of a partition
//! decomposition into that form.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::complex::ComplexKind;
use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::linalg::Svd;
use crate::shape::{MultiIndex, TensorShape};

/// Relative singular value cutoff used to decide matrix ranks.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Sum of `rank` outer products. Factor `i` is an `r_i × rank` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    shape: TensorShape,
    rank: usize,
    factors: Vec<Vec<f64>>,
}

impl CpModel {
    /// Wraps mode matrices; `factors[i]` must have `r_i · rank` entries.
    pub fn new(shape: TensorShape, rank: usize, factors: Vec<Vec<f64>>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("CP rank must be at least 1".into()));
        }
        if factors.len() != shape.order() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} factor matrices", shape.order()),
                got: format!("{}", factors.len()),
            });
        }
        for (i, f) in factors.iter().enumerate() {
            if f.len() != shape.dims()[i] * rank {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{} factor for mode {}", shape.dims()[i], rank, i + 1),
                    got: format!("{} entries", f.len()),
                });
            }
        }
        Ok(Self { shape, rank, factors })
    }

    /// Builds a model from rank-1 components, each a list of `p` mode vectors.
    pub fn from_components(shape: TensorShape, components: &[Vec<Vec<f64>>]) -> Result<Self> {
        let rank = components.len();
        let mut factors: Vec<Vec<f64>> = shape.dims().iter().map(|&r| vec![0.0; r * rank]).collect();
        for (j, comp) in components.iter().enumerate() {
            if comp.len() != shape.order() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} mode vectors", shape.order()),
                    got: format!("{}", comp.len()),
                });
            }
            for (i, vecs) in comp.iter().enumerate() {
                if vecs.len() != shape.dims()[i] {
                    return Err(Error::ShapeMismatch {
                        expected: format!("mode {} vector of length {}", i + 1, shape.dims()[i]),
                        got: format!("{}", vecs.len()),
                    });
                }
                for (x, &v) in vecs.iter().enumerate() {
                    factors[i][x * rank + j] = v;
                }
            }
        }
        Self::new(shape, rank, factors)
    }

    /// Tensor shape.
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    /// Number of components `q`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Mode matrices.
    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.factors
    }

    /// `Σ_j ∏_i v_i^j[x_i]`.
    pub fn eval(&self, x: &MultiIndex) -> Result<f64> {
        self.shape.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &MultiIndex) -> f64 {
        let q = self.rank;
        let mut total = 0.0;
        for j in 0..q {
            let mut prod = 1.0;
            for (i, f) in self.factors.iter().enumerate() {
                prod *= f[(x.coords()[i] - 1) * q + j];
            }
            total += prod;
        }
        total
    }
}

/// Evaluates a CP model at `x`.
pub fn cp_eval(model: &CpModel, x: &MultiIndex) -> Result<f64> {
    model.eval(x)
}

/// One alternative for a facet: the vectors it contributes, by position.
type Placement = Vec<(usize, Vec<f64>)>;

/// Expands a partition decomposition with vector and matrix facets into
/// rank-1 components.
///
/// Each matrix facet is split by its SVD into `rank` outer products and the
/// components are all combinations across facets, so their count is the
/// product of the matrix ranks. Each component lists one vector per tensor
/// position.
pub fn partition_to_cp(params: &FactorSet) -> Result<Vec<Vec<Vec<f64>>>> {
    if params.complex().kind() != ComplexKind::Partition {
        return Err(Error::InvalidComplex("CP expansion needs a partition".into()));
    }
    let layout = params.layout();
    let p = params.shape().order();
    // per facet: list of alternatives, each a list of (position, vector)
    let mut options: Vec<Vec<Placement>> = Vec::new();
    for (k, facet) in params.complex().facets().iter().enumerate() {
        let f = &params.factors()[k];
        match facet.len() {
            1 => options.push(vec![vec![(facet[0], f.clone())]]),
            2 => {
                let dims = layout.facet_dims(k);
                let svd = Svd::new(f, dims[0], dims[1]);
                let rank = svd.rank(RANK_TOLERANCE);
                let alts = (0..rank)
                    .map(|g| {
                        let left = svd.left(g).into_iter().map(|v| v * svd.sigma[g]).collect();
                        vec![(facet[0], left), (facet[1], svd.right(g))]
                    })
                    .collect();
                options.push(alts);
            }
            size => return Err(Error::UnsupportedFacet { size }),
        }
    }

    let mut components: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); p]];
    for alts in &options {
        let mut next = Vec::with_capacity(components.len() * alts.len());
        for comp in &components {
            for alt in alts {
                let mut c = comp.clone();
                for (pos, v) in alt {
                    c[pos - 1] = v.clone();
                }
                next.push(c);
            }
        }
        components = next;
    }
    Ok(components)
}

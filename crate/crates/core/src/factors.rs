//! Decomposition parameters `Θ` and their log image `U = log Θ`.
//!
//! Coefficients of facet `k` are stored in a dense array indexed by the
//! restriction `x_{F_k}`, row-major over the facet's sorted positions. A
//! [`Layout`] also assigns every coefficient a global *cell* id in
//! `0..ρ`, which is how the risk and solver modules address them.

use alloc::format;
use alloc::vec::Vec;

use crate::complex::{ComplexKind, PartitionComplex};
use crate::error::{Error, Result};
use crate::math;
use crate::shape::{DenseTensor, MultiIndex, TensorShape};

/// Coefficient addressing for a shape and complex.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    shape: TensorShape,
    complex: PartitionComplex,
    facet_dims: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    rho: usize,
}

impl Layout {
    /// Builds the layout; the complex must be over the shape's order.
    pub fn new(shape: TensorShape, complex: PartitionComplex) -> Result<Self> {
        complex.check_shape(&shape)?;
        let facet_dims: Vec<Vec<usize>> = complex
            .facets()
            .iter()
            .map(|f| f.iter().map(|&j| shape.dim(j)).collect())
            .collect();
        let mut offsets = Vec::with_capacity(facet_dims.len());
        let mut rho = 0;
        for d in &facet_dims {
            offsets.push(rho);
            rho += d.iter().product::<usize>();
        }
        Ok(Self {
            shape,
            complex,
            facet_dims,
            offsets,
            rho,
        })
    }

    /// Tensor shape.
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    /// The complex.
    pub fn complex(&self) -> &PartitionComplex {
        &self.complex
    }

    /// Number of facets `m`.
    pub fn num_facets(&self) -> usize {
        self.facet_dims.len()
    }

    /// Effective dimension `ρ = Σ_k ∏_{j∈F_k} r_j`.
    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Dimensions of facet `k`'s coefficient array.
    pub fn facet_dims(&self, k: usize) -> &[usize] {
        &self.facet_dims[k]
    }

    /// Number of coefficients of facet `k`.
    pub fn facet_size(&self, k: usize) -> usize {
        self.facet_dims[k].iter().product()
    }

    /// Global cell id of the first coefficient of facet `k`.
    pub fn facet_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Facet owning global cell `cell`.
    pub fn facet_of_cell(&self, cell: usize) -> usize {
        match self.offsets.binary_search(&cell) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    /// Row-major offset of `x_{F_k}` inside facet `k`. `x` must be valid.
    pub fn local(&self, k: usize, x: &MultiIndex) -> usize {
        let mut off = 0;
        for (&j, &r) in self.complex.facet(k).iter().zip(&self.facet_dims[k]) {
            off = off * r + (x.coord(j) - 1);
        }
        off
    }

    /// Global cell id of `x_{F_k}`.
    pub fn cell(&self, k: usize, x: &MultiIndex) -> usize {
        self.offsets[k] + self.local(k, x)
    }

    /// Appends the `m` global cell ids touched by `x`.
    pub fn cells_into(&self, x: &MultiIndex, out: &mut Vec<usize>) {
        for k in 0..self.num_facets() {
            out.push(self.cell(k, x));
        }
    }

    /// 1-based coordinates (over the facet's positions) of a local offset.
    pub fn facet_coords(&self, k: usize, mut local: usize) -> Vec<usize> {
        let dims = &self.facet_dims[k];
        let mut out = alloc::vec![0; dims.len()];
        for (slot, &r) in out.iter_mut().zip(dims).rev() {
            *slot = local % r + 1;
            local /= r;
        }
        out
    }

    fn zeros(&self) -> Vec<Vec<f64>> {
        (0..self.num_facets())
            .map(|k| alloc::vec![0.0; self.facet_size(k)])
            .collect()
    }

    fn check_arrays(&self, arrays: &[Vec<f64>]) -> Result<()> {
        if arrays.len() != self.num_facets() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} factor arrays", self.num_facets()),
                got: format!("{}", arrays.len()),
            });
        }
        for (k, a) in arrays.iter().enumerate() {
            if a.len() != self.facet_size(k) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} coefficients in facet {}", self.facet_size(k), k + 1),
                    got: format!("{}", a.len()),
                });
            }
        }
        Ok(())
    }

    /// Flattens per-facet arrays into one vector indexed by cell id.
    pub fn flatten(&self, arrays: &[Vec<f64>]) -> Vec<f64> {
        arrays.iter().flatten().copied().collect()
    }

    /// Splits a cell-indexed vector back into per-facet arrays.
    pub fn unflatten(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        (0..self.num_facets())
            .map(|k| flat[self.offsets[k]..self.offsets[k] + self.facet_size(k)].to_vec())
            .collect()
    }
}

/// Effective dimension `ρ(Γ)` of a complex over `shape`.
pub fn effective_dimension(complex: &PartitionComplex, shape: &TensorShape) -> Result<usize> {
    Ok(Layout::new(shape.clone(), complex.clone())?.rho())
}

/// Hierarchical decomposition `ψ_x = ∏_k θ^(k)_{x_{F_k}}` with bound `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    layout: Layout,
    factors: Vec<Vec<f64>>,
    bound: f64,
}

impl FactorSet {
    /// Wraps per-facet coefficient arrays.
    pub fn new(shape: TensorShape, complex: PartitionComplex, factors: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        Self::from_layout(Layout::new(shape, complex)?, factors, bound)
    }

    /// Same as [`FactorSet::new`] with a prebuilt layout.
    pub fn from_layout(layout: Layout, factors: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        layout.check_arrays(&factors)?;
        if !(bound > 1.0) {
            return Err(Error::Config(format!("bound M must exceed 1, got {}", bound)));
        }
        Ok(Self { layout, factors, bound })
    }

    /// All coefficients equal to one (`U ≡ 0`).
    pub fn ones(layout: Layout, bound: f64) -> Result<Self> {
        let factors = layout
            .zeros()
            .into_iter()
            .map(|f| f.into_iter().map(|_| 1.0).collect())
            .collect();
        Self::from_layout(layout, factors, bound)
    }

    /// Coefficient layout.
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Tensor shape.
    pub fn shape(&self) -> &TensorShape {
        self.layout.shape()
    }

    /// The complex.
    pub fn complex(&self) -> &PartitionComplex {
        self.layout.complex()
    }

    /// Per-facet coefficient arrays.
    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    /// The bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `∏_k θ^(k)_{x_{F_k}}`.
    pub fn eval(&self, x: &MultiIndex) -> Result<f64> {
        self.shape().check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &MultiIndex) -> f64 {
        let mut v = 1.0;
        for (k, f) in self.factors.iter().enumerate() {
            v *= f[self.layout.local(k, x)];
        }
        v
    }

    /// The full tensor described by the decomposition.
    pub fn to_dense(&self) -> DenseTensor {
        DenseTensor::from_fn(self.shape().clone(), |x| self.eval_unchecked(x))
    }

    /// Checks membership in `Ω`: coefficients in `[M⁻², M²]` and every
    /// product in `[M⁻¹, M]`, with absolute slack `tol`.
    pub fn check_omega(&self, tol: f64) -> Result<()> {
        let m = self.bound;
        let (lo2, hi2) = (1.0 / (m * m), m * m);
        for f in &self.factors {
            for &v in f {
                if v < lo2 - tol || v > hi2 + tol {
                    return Err(Error::BoundViolation {
                        what: "factor entry",
                        value: v,
                        lower: lo2,
                        upper: hi2,
                    });
                }
            }
        }
        let (lo, hi) = self.product_range();
        for v in [lo, hi] {
            if v < 1.0 / m - tol || v > m + tol {
                return Err(Error::BoundViolation {
                    what: "factor product",
                    value: v,
                    lower: 1.0 / m,
                    upper: m,
                });
            }
        }
        Ok(())
    }

    /// Smallest and largest value of the product over all indices.
    pub fn product_range(&self) -> (f64, f64) {
        match self.complex().kind() {
            // Facets are disjoint, so extremes factorize.
            ComplexKind::Partition => self.factors.iter().fold((1.0, 1.0), |(lo, hi), f| {
                let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
                let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo * fmin, hi * fmax)
            }),
            ComplexKind::General => {
                let t = self.to_dense();
                (t.min(), t.max())
            }
        }
    }

    /// `u = log θ`, with `η_k`/`ν_k` set to each facet's min/max of `u`.
    pub fn log_reparam(&self) -> Result<LogFactorSet> {
        let mut values = Vec::with_capacity(self.factors.len());
        for (k, f) in self.factors.iter().enumerate() {
            let mut u = Vec::with_capacity(f.len());
            for &v in f {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "factor {} has nonpositive or non-finite entry {}",
                        k + 1,
                        v
                    )));
                }
                u.push(math::ln(v));
            }
            values.push(u);
        }
        Ok(LogFactorSet::with_tight_bounds(self.layout.clone(), values))
    }
}

/// Evaluates a decomposition at `x`.
pub fn eval_decomposition(params: &FactorSet, x: &MultiIndex) -> Result<f64> {
    params.eval(x)
}

/// Log-parametrized decomposition `U` with per-facet auxiliaries `η_k ≤ u ≤ ν_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFactorSet {
    layout: Layout,
    values: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LogFactorSet {
    /// Wraps explicit values and auxiliaries.
    pub fn new(layout: Layout, values: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        layout.check_arrays(&values)?;
        let m = layout.num_facets();
        if lower.len() != m || upper.len() != m {
            return Err(Error::ShapeMismatch {
                expected: format!("{} auxiliaries", m),
                got: format!("{}/{}", lower.len(), upper.len()),
            });
        }
        Ok(Self {
            layout,
            values,
            lower,
            upper,
        })
    }

    /// Wraps values, setting `η_k`/`ν_k` to each facet's min/max.
    pub fn with_tight_bounds(layout: Layout, values: Vec<Vec<f64>>) -> Self {
        let lower = values
            .iter()
            .map(|u| u.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let upper = values
            .iter()
            .map(|u| u.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Self {
            layout,
            values,
            lower,
            upper,
        }
    }

    /// `U ≡ 0`.
    pub fn zeros(layout: Layout) -> Self {
        let values = layout.zeros();
        Self::with_tight_bounds(layout, values)
    }

    /// Builds from a cell-indexed vector.
    pub fn from_flat(layout: Layout, flat: &[f64], lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if flat.len() != layout.rho() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} cells", layout.rho()),
                got: format!("{}", flat.len()),
            });
        }
        let values = layout.unflatten(flat);
        Self::new(layout, values, lower, upper)
    }

    /// Coefficient layout.
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Per-facet values `u^(k)`.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Cell-indexed copy of the values.
    pub fn flat(&self) -> Vec<f64> {
        self.layout.flatten(&self.values)
    }

    /// Lower auxiliaries `η_k`.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Upper auxiliaries `ν_k`.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `Σ_k u_{x_{F_k}}`.
    pub fn log_eval(&self, x: &MultiIndex) -> Result<f64> {
        self.layout.shape().check(x)?;
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(k, u)| u[self.layout.local(k, x)])
            .sum())
    }

    /// `θ = exp(u)`.
    pub fn exp_reparam(&self, bound: f64) -> Result<FactorSet> {
        let factors = self
            .values
            .iter()
            .map(|u| u.iter().map(|&v| math::exp(v)).collect())
            .collect();
        FactorSet::from_layout(self.layout.clone(), factors, bound)
    }

    /// Largest violation of the constraints defining `Φ` (0 when inside).
    pub fn phi_violation(&self, bound: f64) -> f64 {
        let lm = math::ln(bound);
        let mut worst: f64 = 0.0;
        for (k, u) in self.values.iter().enumerate() {
            let (eta, nu) = (self.lower[k], self.upper[k]);
            for &v in u {
                worst = worst.max(eta - v).max(v - nu);
            }
            worst = worst.max(-2.0 * lm - eta).max(nu - 2.0 * lm);
        }
        let se: f64 = self.lower.iter().sum();
        let sn: f64 = self.upper.iter().sum();
        worst.max(-lm - se).max(sn - lm)
    }

    /// Checks membership in `Φ` with slack `tol`.
    pub fn check_phi(&self, bound: f64, tol: f64) -> Result<()> {
        let v = self.phi_violation(bound);
        if v > tol {
            return Err(Error::BoundViolation {
                what: "constraint violation of the log-parameter set",
                value: v,
                lower: 0.0,
                upper: tol,
            });
        }
        Ok(())
    }
}

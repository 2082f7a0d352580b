//! Exact hierarchical decomposition of a fully known tensor.

use alloc::vec;
use alloc::vec::Vec;

use crate::complex::PartitionComplex;
use crate::error::{Error, Result};
use crate::factors::{FactorSet, Layout};
use crate::math;
use crate::shape::DenseTensor;

pub use crate::factors::effective_dimension;

/// Relative reconstruction error above which a complex is reported as incorrect.
pub const CORRECTNESS_TOLERANCE: f64 = 1e-9;

/// Builds factors reproducing `tensor` exactly over `complex`.
///
/// Coefficients are assigned by peeling: for facet `j` in order, the
/// lexicographically smallest index whose `F_j` restriction is still
/// unassigned fixes that coefficient as `ψ_x` divided by the coefficients
/// already known at `x` (unknown ones of later facets are set to 1 first).
/// Every index whose restrictions to the later facets agree with it is then
/// retired. Coefficients that are never reached stay at 1.
///
/// For a partition this anchors every factor at the all-ones index, so
/// factor 1 lies in `[M⁻¹, M]` and the rest are ratios in `[M⁻², M²]`.
///
/// Errors with [`Error::BoundViolation`] if the tensor leaves `[M⁻¹, M]` or
/// a coefficient leaves `[M⁻², M²]`, and with [`Error::IncorrectComplex`] if
/// the result does not reproduce the tensor to [`CORRECTNESS_TOLERANCE`].
pub fn construct_exact_decomposition(
    tensor: &DenseTensor,
    complex: &PartitionComplex,
    bound: f64,
) -> Result<FactorSet> {
    if !(bound > 1.0) {
        return Err(Error::Config(alloc::format!("bound M must exceed 1, got {}", bound)));
    }
    tensor.check_bounded(bound)?;
    let shape = tensor.shape().clone();
    let layout = Layout::new(shape.clone(), complex.clone())?;
    let m = layout.num_facets();
    let total = shape.total_entries();

    let mut theta: Vec<Vec<Option<f64>>> = (0..m).map(|k| vec![None; layout.facet_size(k)]).collect();
    let mut remaining = vec![true; total];
    // locals[o * m + k] = offset of x_{F_k} for the index at row-major offset o
    let mut locals = Vec::with_capacity(total * m);
    for x in shape.indices() {
        for k in 0..m {
            locals.push(layout.local(k, &x));
        }
    }
    let psi = tensor.entries();

    for j in 0..m {
        let mut cursor = 0;
        loop {
            let start = (cursor..total).find(|&o| remaining[o] && theta[j][locals[o * m + j]].is_none());
            let Some(u) = start else { break };
            cursor = u;
            let uk = &locals[u * m..(u + 1) * m];
            for k in j + 1..m {
                theta[k][uk[k]].get_or_insert(1.0);
            }
            for o in 0..total {
                if !remaining[o] {
                    continue;
                }
                let xk = &locals[o * m..(o + 1) * m];
                if (j + 1..m).any(|k| xk[k] != uk[k]) {
                    continue;
                }
                remaining[o] = false;
                if theta[j][xk[j]].is_some() {
                    continue;
                }
                let mut denom = 1.0;
                for k in (0..m).filter(|&k| k != j) {
                    denom *= *theta[k][xk[k]].get_or_insert(1.0);
                }
                theta[j][xk[j]] = Some(psi[o] / denom);
            }
        }
    }

    let factors: Vec<Vec<f64>> = theta
        .into_iter()
        .map(|f| f.into_iter().map(|v| v.unwrap_or(1.0)).collect())
        .collect();
    let params = FactorSet::from_layout(layout, factors, bound)?;

    let mut worst: f64 = 0.0;
    for (o, x) in shape.indices().enumerate() {
        let rel = math::abs(params.eval_unchecked(&x) - psi[o]) / math::abs(psi[o]);
        worst = worst.max(rel);
    }
    if !(worst <= CORRECTNESS_TOLERANCE) {
        return Err(Error::IncorrectComplex {
            max_rel_error: worst,
            tolerance: CORRECTNESS_TOLERANCE,
        });
    }

    let (lo, hi) = (1.0 / (bound * bound), bound * bound);
    for f in params.factors() {
        for &v in f {
            if !(lo..=hi).contains(&v) {
                return Err(Error::BoundViolation {
                    what: "constructed factor entry",
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::TensorShape;

    fn tensor(dims: Vec<usize>, entries: Vec<f64>) -> DenseTensor {
        DenseTensor::new(TensorShape::new(dims).unwrap(), entries).unwrap()
    }

    fn max_rel_error(t: &DenseTensor, f: &FactorSet) -> f64 {
        t.shape()
            .indices()
            .map(|x| {
                let v = t.get(&x).unwrap();
                math::abs(f.eval(&x).unwrap() - v) / v
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_facet_copies_tensor() {
        let t = tensor(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = construct_exact_decomposition(&t, &PartitionComplex::full(2), 10.0).unwrap();
        assert_eq!(f.factors()[0], t.entries());
    }

    #[test]
    fn rank_one_matrix() {
        let t = tensor(vec![2, 2], vec![1.0, 3.0, 2.0, 6.0]);
        let f = construct_exact_decomposition(&t, &PartitionComplex::singletons(2), 10.0).unwrap();
        assert_eq!(max_rel_error(&t, &f), 0.0);
        assert_eq!(f.factors()[0], vec![1.0, 2.0]);
        assert_eq!(f.factors()[1], vec![1.0, 3.0]);
    }

    #[test]
    fn rank_one_three_way_needs_later_facets() {
        // every factor differs from 1 away from the first coordinate
        let a = [1.0, 2.0];
        let b = [1.5, 0.5];
        let c = [0.8, 3.0];
        let shape = TensorShape::new(vec![2, 2, 2]).unwrap();
        let t = DenseTensor::from_fn(shape, |x| a[x.coord(1) - 1] * b[x.coord(2) - 1] * c[x.coord(3) - 1]);
        let f = construct_exact_decomposition(&t, &PartitionComplex::singletons(3), 10.0).unwrap();
        assert!(max_rel_error(&t, &f) < 1e-15);
    }

    #[test]
    fn coupled_tensor_rejects_singletons() {
        let t = tensor(vec![2, 2], vec![2.0, 1.0, 1.0, 2.0]);
        assert!(matches!(
            construct_exact_decomposition(&t, &PartitionComplex::singletons(2), 10.0),
            Err(Error::IncorrectComplex { .. })
        ));
    }

    #[test]
    fn out_of_bound_tensor_rejected() {
        let t = tensor(vec![2], vec![0.01, 1.0]);
        assert!(matches!(
            construct_exact_decomposition(&t, &PartitionComplex::full(1), 10.0),
            Err(Error::BoundViolation { .. })
        ));
    }

    #[test]
    fn general_complex_on_a_product_of_pairs() {
        // ψ = f(x1,x2) g(x2,x3) h(x1,x3) is exactly decomposable over the 3-cycle
        let shape = TensorShape::new(vec![2, 2, 2]).unwrap();
        let t = DenseTensor::from_fn(shape, |x| {
            let (i, j, k) = (x.coord(1) as f64, x.coord(2) as f64, x.coord(3) as f64);
            (1.0 + 0.3 * i * j) * (0.5 + 0.2 * j * k) * (1.0 + 0.1 * i + 0.4 * k)
        });
        let c = PartitionComplex::general(vec![vec![1, 2], vec![2, 3], vec![1, 3]], 3).unwrap();
        let f = construct_exact_decomposition(&t, &c, 20.0).unwrap();
        assert!(max_rel_error(&t, &f) < 1e-12);
    }
}

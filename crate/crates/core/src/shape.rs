//! Tensor shapes, 1-based multi-indices and dense row-major tensors.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dimensions `r_1, …, r_p` of an order-`p` tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    /// Builds a shape, rejecting an empty dimension list or a zero dimension.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("tensor order must be at least 1".into()));
        }
        if let Some(pos) = dims.iter().position(|&r| r == 0) {
            return Err(Error::Dimension(format!("dimension {} is zero", pos + 1)));
        }
        Ok(Self { dims })
    }

    /// Dimensions in position order.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Tensor order `p`.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Dimension of the 1-based position `pos`.
    pub fn dim(&self, pos: usize) -> usize {
        self.dims[pos - 1]
    }

    /// `∏ r_i`.
    pub fn total_entries(&self) -> usize {
        self.dims.iter().product()
    }

    /// Largest dimension `r`.
    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }

    /// Checks that `x` addresses an entry of this shape.
    pub fn check(&self, x: &MultiIndex) -> Result<()> {
        if x.order() != self.order() {
            return Err(Error::Dimension(format!(
                "index of order {} used with tensor of order {}",
                x.order(),
                self.order()
            )));
        }
        for (i, (&c, &r)) in x.coords().iter().zip(&self.dims).enumerate() {
            if c > r {
                return Err(Error::Dimension(format!(
                    "coordinate {} = {} exceeds dimension {}",
                    i + 1,
                    c,
                    r
                )));
            }
        }
        Ok(())
    }

    /// Row-major (last index fastest) offset of `x`, which must be valid.
    pub fn offset_unchecked(&self, x: &MultiIndex) -> usize {
        let mut off = 0;
        for (&c, &r) in x.coords().iter().zip(&self.dims) {
            off = off * r + (c - 1);
        }
        off
    }

    /// Row-major offset of `x`.
    pub fn offset(&self, x: &MultiIndex) -> Result<usize> {
        self.check(x)?;
        Ok(self.offset_unchecked(x))
    }

    /// Multi-index at row-major `offset`.
    pub fn index_at(&self, mut offset: usize) -> MultiIndex {
        let mut coords = alloc::vec![0; self.order()];
        for (slot, &r) in coords.iter_mut().zip(&self.dims).rev() {
            *slot = offset % r + 1;
            offset /= r;
        }
        MultiIndex { coords }
    }

    /// All indices in row-major (lexicographic) order.
    pub fn indices(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.total_entries()).map(move |o| self.index_at(o))
    }
}

/// A 1-based index tuple `x = (x_1, …, x_p)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    coords: Vec<usize>,
}

impl MultiIndex {
    /// Builds an index from 1-based coordinates.
    pub fn new(coords: Vec<usize>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Dimension("empty index".into()));
        }
        if coords.contains(&0) {
            return Err(Error::Dimension("indices are 1-based; got 0".into()));
        }
        Ok(Self { coords })
    }

    /// Coordinates in position order.
    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    /// Coordinate at 1-based position `pos`.
    pub fn coord(&self, pos: usize) -> usize {
        self.coords[pos - 1]
    }

    /// Number of coordinates.
    pub fn order(&self) -> usize {
        self.coords.len()
    }
}

impl From<&[usize]> for MultiIndex {
    /// Panics on a zero coordinate; use [`MultiIndex::new`] for untrusted input.
    fn from(coords: &[usize]) -> Self {
        Self::new(coords.to_vec()).expect("valid 1-based index")
    }
}

impl<const N: usize> From<[usize; N]> for MultiIndex {
    fn from(coords: [usize; N]) -> Self {
        Self::new(coords.to_vec()).expect("valid 1-based index")
    }
}

/// Dense tensor with row-major entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: TensorShape,
    entries: Vec<f64>,
}

impl DenseTensor {
    /// Wraps `entries`, which must have exactly `∏ r_i` elements.
    pub fn new(shape: TensorShape, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != shape.total_entries() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", shape.total_entries()),
                got: format!("{} entries", entries.len()),
            });
        }
        Ok(Self { shape, entries })
    }

    /// Evaluates `f` at every index.
    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(&MultiIndex) -> f64) -> Self {
        let entries = shape.indices().map(|x| f(&x)).collect();
        Self { shape, entries }
    }

    /// Shape of the tensor.
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Entry `ψ_x`.
    pub fn get(&self, x: &MultiIndex) -> Result<f64> {
        Ok(self.entries[self.shape.offset(x)?])
    }

    /// Smallest entry.
    pub fn min(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest entry.
    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks `M⁻¹ ≤ ψ_x ≤ M` for every entry.
    pub fn check_bounded(&self, bound: f64) -> Result<()> {
        let (lo, hi) = (1.0 / bound, bound);
        for &v in &self.entries {
            if !(lo..=hi).contains(&v) {
                return Err(Error::BoundViolation {
                    what: "tensor entry",
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn offsets_are_row_major() {
        let s = TensorShape::new(vec![2, 3, 4]).unwrap();
        assert_eq!(s.total_entries(), 24);
        assert_eq!(s.offset(&MultiIndex::from([1, 1, 2])).unwrap(), 1);
        assert_eq!(s.offset(&MultiIndex::from([1, 2, 1])).unwrap(), 4);
        assert_eq!(s.offset(&MultiIndex::from([2, 1, 1])).unwrap(), 12);
        for o in 0..24 {
            assert_eq!(s.offset(&s.index_at(o)).unwrap(), o);
        }
    }

    #[test]
    fn rejects_bad_shapes_and_indices() {
        assert!(TensorShape::new(vec![]).is_err());
        assert!(TensorShape::new(vec![2, 0]).is_err());
        assert!(MultiIndex::new(vec![0, 1]).is_err());
        let s = TensorShape::new(vec![2, 2]).unwrap();
        assert!(matches!(s.offset(&MultiIndex::from([3, 1])), Err(Error::Dimension(_))));
        assert!(s.offset(&MultiIndex::from([1, 1, 1])).is_err());
    }

    #[test]
    fn bounded_check() {
        let s = TensorShape::new(vec![2]).unwrap();
        let t = DenseTensor::new(s, vec![0.5, 2.0]).unwrap();
        assert!(t.check_bounded(2.0).is_ok());
        assert!(t.check_bounded(1.5).is_err());
    }
}

//! Simplicial complexes described by their facets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::shape::TensorShape;

/// Whether the facets partition the index positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComplexKind {
    /// Facets are pairwise disjoint and cover `[p]`.
    Partition,
    /// Any antichain of nonempty position sets.
    General,
}

/// Ordered facets `F_1, …, F_m` over 1-based positions `1..=p`.
///
/// Positions inside each facet are kept sorted, so `facet(k)[0]` is the
/// facet's smallest position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionComplex {
    order: usize,
    facets: Vec<Vec<usize>>,
    kind: ComplexKind,
}

impl PartitionComplex {
    /// Builds a partition of `[order]`.
    pub fn partition(facets: Vec<Vec<usize>>, order: usize) -> Result<Self> {
        let facets = normalize(facets, order)?;
        let mut seen = alloc::vec![false; order];
        for f in &facets {
            for &j in f {
                if seen[j - 1] {
                    return Err(Error::InvalidComplex(format!(
                        "position {} appears in more than one facet",
                        j
                    )));
                }
                seen[j - 1] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidComplex(format!(
                "position {} is not covered by any facet",
                j + 1
            )));
        }
        Ok(Self {
            order,
            facets,
            kind: ComplexKind::Partition,
        })
    }

    /// Builds a general complex from its facets, which must be inclusion-maximal.
    pub fn general(facets: Vec<Vec<usize>>, order: usize) -> Result<Self> {
        let facets = normalize(facets, order)?;
        for (a, fa) in facets.iter().enumerate() {
            for (b, fb) in facets.iter().enumerate() {
                if a != b && fa.iter().all(|j| fb.binary_search(j).is_ok()) {
                    return Err(Error::InvalidComplex(format!(
                        "facet {:?} is contained in facet {:?}",
                        fa, fb
                    )));
                }
            }
        }
        Ok(Self {
            order,
            facets,
            kind: ComplexKind::General,
        })
    }

    /// `{{1}, …, {p}}`: the rank-1 structure.
    pub fn singletons(order: usize) -> Self {
        Self {
            order,
            facets: (1..=order).map(|j| alloc::vec![j]).collect(),
            kind: ComplexKind::Partition,
        }
    }

    /// `{{1, …, p}}`: a single facet holding the whole tensor.
    pub fn full(order: usize) -> Self {
        Self {
            order,
            facets: alloc::vec![(1..=order).collect()],
            kind: ComplexKind::Partition,
        }
    }

    /// Tensor order `p` the complex is defined over.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Facets in order.
    pub fn facets(&self) -> &[Vec<usize>] {
        &self.facets
    }

    /// Facet `k` (0-based).
    pub fn facet(&self, k: usize) -> &[usize] {
        &self.facets[k]
    }

    /// Number of facets `m`.
    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    /// Partition or general.
    pub fn kind(&self) -> ComplexKind {
        self.kind
    }

    /// Checks that the complex is defined over the order of `shape`.
    pub fn check_shape(&self, shape: &TensorShape) -> Result<()> {
        if self.order != shape.order() {
            return Err(Error::Dimension(format!(
                "complex over {} positions used with tensor of order {}",
                self.order,
                shape.order()
            )));
        }
        Ok(())
    }

    /// Index of the facet holding `pos` (first one, for general complexes).
    pub fn facet_of(&self, pos: usize) -> Option<usize> {
        self.facets.iter().position(|f| f.binary_search(&pos).is_ok())
    }

    /// True when every facet of `self` lies inside some facet of `coarser`.
    pub fn refines(&self, coarser: &PartitionComplex) -> bool {
        self.facets.iter().all(|f| {
            coarser
                .facets
                .iter()
                .any(|g| f.iter().all(|j| g.binary_search(j).is_ok()))
        })
    }
}

fn normalize(facets: Vec<Vec<usize>>, order: usize) -> Result<Vec<Vec<usize>>> {
    if order == 0 {
        return Err(Error::InvalidComplex("order must be at least 1".into()));
    }
    if facets.is_empty() {
        return Err(Error::InvalidComplex("no facets".into()));
    }
    let mut out = Vec::with_capacity(facets.len());
    for mut f in facets {
        if f.is_empty() {
            return Err(Error::InvalidComplex("empty facet".into()));
        }
        f.sort_unstable();
        if f.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidComplex(format!("repeated position in facet {:?}", f)));
        }
        if f[0] == 0 || *f.last().unwrap() > order {
            return Err(Error::Dimension(format!(
                "facet {:?} references a position outside 1..={}",
                f, order
            )));
        }
        out.push(f);
    }
    Ok(out)
}

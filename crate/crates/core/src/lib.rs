//! Decomposition, low-rank approximation and completion of positive tensors.
//!
//! A positive tensor `ψ` is represented through a *hierarchical decomposition*
//! `ψ_x = ∏_k θ^(k)_{x_{F_k}}`, one coefficient array per facet `F_k` of a
//! simplicial complex over the tensor's index positions. Fitting such a
//! decomposition under the generalized I-divergence loss becomes a convex
//! program after the change of variables `u = log θ`, which this crate solves
//! with a path-following interior-point method ([`solver`]).
//!
//! On top of the solver sit the completion pipeline ([`completion`]), which
//! estimates the partition from noisy samples by thresholding risk gaps, an
//! alternating least squares CP baseline ([`baselines`]) and seeded synthetic
//! data generation ([`synth`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `postensor` crate.
#![no_std]
#![warn(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod baselines;
pub mod completion;
pub mod complex;
pub mod cp;
pub mod decompose;
mod error;
pub mod factors;
pub mod linalg;
mod math;
pub mod risk;
pub mod shape;
pub mod solver;
pub mod synth;

pub use complex::{ComplexKind, PartitionComplex};
pub use error::{Error, Result};
pub use factors::{FactorSet, Layout, LogFactorSet};
pub use risk::{NoiseModel, Observation, ObservationSet};
pub use shape::{DenseTensor, MultiIndex, TensorShape};
pub use solver::{SolveOptions, SolveReport};

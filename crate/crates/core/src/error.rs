use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A shape, index or facet did not fit the dimensions it was used with.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Two objects that must share a shape did not.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch {
        /// Description of the expected shape.
        expected: String,
        /// Description of the shape that was supplied.
        got: String,
    },

    /// The facet list does not describe a valid complex or partition.
    #[error("invalid complex: {0}")]
    InvalidComplex(String),

    /// The complex does not reproduce the tensor.
    #[error("incorrect complex: reconstruction relative error {max_rel_error:e} exceeds {tolerance:e}")]
    IncorrectComplex {
        /// Largest relative reconstruction error over all entries.
        max_rel_error: f64,
        /// Threshold that was exceeded.
        tolerance: f64,
    },

    /// A value fell outside the bounds implied by `M`.
    #[error("bound violation: {what} = {value} outside [{lower}, {upper}]")]
    BoundViolation {
        /// What was being checked.
        what: &'static str,
        /// The offending value.
        value: f64,
        /// Lower bound.
        lower: f64,
        /// Upper bound.
        upper: f64,
    },

    /// A nonpositive value where a strictly positive one is required.
    #[error("domain error: {0}")]
    Domain(String),

    /// Only vector and matrix facets can be expanded into CP form.
    #[error("unsupported facet of size {size}; only facets of size 1 or 2 are supported")]
    UnsupportedFacet {
        /// Size of the offending facet.
        size: usize,
    },

    /// Inconsistent or infeasible options.
    #[error("configuration error: {0}")]
    Config(String),

    /// Not enough observations for the requested procedure.
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData {
        /// Minimum number required.
        needed: usize,
        /// Number supplied.
        got: usize,
    },

    /// Every candidate fit in a model-selection loop failed.
    #[error("all fits failed: {0}")]
    AllFitsFailed(String),

    /// The linear system in a Newton step could not be solved.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

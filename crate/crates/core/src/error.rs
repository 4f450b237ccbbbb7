use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChaosError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contraction index r = {r} out of range for orders {p} and {q}")]
    ContractionOutOfRange { r: usize, p: usize, q: usize },

    #[error("not symmetric: entry {index:?} differs from its permutation {partner:?} by {violation:e}")]
    NotSymmetric {
        index: Vec<usize>,
        partner: Vec<usize>,
        violation: f64,
    },

    #[error("components must be pure chaos of one common order")]
    MixedOrders,

    #[error("multi-index must have |m| >= 1")]
    EmptyMultiIndex,

    #[error("component {component} is not a pure second-chaos element")]
    NotSecondChaos { component: usize },

    #[error("argument outside the recursion domain: {0}")]
    Domain(String),

    #[error("covariance is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("insufficient samples: need at least {needed}, have {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("representation mismatch: {0}")]
    RepresentationMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tensor of order {order} over dimension {dim} is too large")]
    TooLarge { order: usize, dim: usize },

    #[error("kernel at {path} is not symmetric: entry {index:?} differs from {partner:?} by {violation:e}")]
    AsymmetricKernel {
        path: String,
        index: Vec<usize>,
        partner: Vec<usize>,
        violation: f64,
    },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ChaosError {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            ChaosError::DimensionMismatch { .. } => "dimension_mismatch",
            ChaosError::ContractionOutOfRange { .. } => "contraction_out_of_range",
            ChaosError::NotSymmetric { .. } => "not_symmetric",
            ChaosError::MixedOrders => "mixed_orders",
            ChaosError::EmptyMultiIndex => "empty_multi_index",
            ChaosError::NotSecondChaos { .. } => "not_second_chaos",
            ChaosError::Domain(_) => "domain",
            ChaosError::SingularCovariance { .. } => "singular_covariance",
            ChaosError::NotPositiveSemidefinite { .. } => "not_positive_semidefinite",
            ChaosError::InsufficientSamples { .. } => "insufficient_samples",
            ChaosError::DegenerateGrid(_) => "degenerate_grid",
            ChaosError::RepresentationMismatch(_) => "representation_mismatch",
            ChaosError::Unsupported(_) => "unsupported",
            ChaosError::InvalidParameter(_) => "invalid_parameter",
            ChaosError::TooLarge { .. } => "too_large",
            ChaosError::AsymmetricKernel { .. } => "not_symmetric",
            ChaosError::Schema { .. } => "schema",
        }
    }
}

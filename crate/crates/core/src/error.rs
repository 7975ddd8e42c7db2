use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("gram matrix is not positive semidefinite: updated diagonal {value:e} at index {index}")]
    NotSpsd { index: usize, value: f64 },

    #[error("pivoted Cholesky reached max rank {rank} with trace error {achieved:e}")]
    RankExhausted { rank: usize, achieved: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular factorization: {0}")]
    Singular(String),

    #[error("saddle-point matrix is singular: {0}")]
    SaddleSingular(String),

    #[error("perturbed cluster lost track of the reference cluster: {0}")]
    ClusterLost(String),

    #[error("subspace rotated too far from reference (min singular value {min_singular:.3e})")]
    AlignmentRejected { min_singular: f64 },

    #[error("coefficient field not strictly positive (min {min:e})")]
    NonPositiveCoefficient { min: f64 },

    #[error("amplitude too large: {rejected} of {total} samples rejected")]
    AmplitudeTooLarge { rejected: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

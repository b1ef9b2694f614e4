use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters supplied by the caller.
    Usage,
    /// Input data that violates a structural precondition.
    Data,
    /// A factorization or solve that failed numerically.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({u}, {v}) has non-positive or non-finite weight {w}")]
    InvalidWeight { u: usize, v: usize, w: f64 },
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    InvalidVertex { vertex: usize, n: usize },
    #[error("symmetric eigendecomposition failed")]
    EigensolveFailure,

    #[error("spectral response increases at index {index}: {prev} -> {next}")]
    NonMonotoneSpectrum { index: usize, prev: f64, next: f64 },
    #[error("spectral response is negative at index {index}: {value}")]
    NegativeSpectrum { index: usize, value: f64 },
    #[error("graph spectrum is degenerate (lambda_min == lambda_max)")]
    DegenerateSpectrum,
    #[error("time {0} outside kernel domain [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),
    #[error("basis is not orthonormal under the quadrature (deviation {0:e})")]
    NonOrthonormalBasis(f64),
    #[error("zero spectral weight at graph index {n}, time index {i}")]
    ZeroSpectralWeight { n: usize, i: usize },
    #[error("time kernel is not shift-invariant; random Fourier features unavailable")]
    UnsupportedKernel,

    #[error("linear solve failed after jitter escalation")]
    SolveFailure,
    #[error("graph kernel has no polynomial form; localized evaluation unavailable")]
    NoPolyDegree,
    #[error("step size too large: theta1 = {0} must be positive")]
    StepTooLarge(f64),
    #[error("Cholesky factorization of the grid covariance failed")]
    FactorizationFailure,
    #[error("posterior variance {0:e} is negative beyond the clamping slack")]
    NegativeVariance(f64),

    #[error("vertex {0} has an empty neighborhood at the requested hop distance")]
    EmptyNeighborhood(usize),
    #[error("neighborhood kernel submatrix is singular")]
    SingularSubmatrix,
    #[error("GTRSS system matrix is singular")]
    SingularSystem,
    #[error("truth signal has zero energy")]
    ZeroSignal,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            EigensolveFailure | SolveFailure | FactorizationFailure | NegativeVariance(_)
            | SingularSubmatrix | SingularSystem => ErrorKind::Numerical,
            InvalidParameter(_) | StepTooLarge(_) | UnsupportedKernel | NoPolyDegree => {
                ErrorKind::Usage
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

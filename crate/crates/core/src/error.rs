use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("generator x{index} at position {position} exceeds the number of generators ({num_generators})")]
    GeneratorOutOfRange {
        index: usize,
        num_generators: usize,
        position: usize,
    },

    #[error("invalid exponent `{text}` at position {position}: exponents must be nonnegative integers")]
    InvalidExponent { position: usize, text: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("polynomial is not self-adjoint (max coefficient defect {defect:e})")]
    NotSelfAdjoint { defect: f64 },

    #[error("polynomial has degree 0; constants are not linearized")]
    ConstantPolynomial,

    #[error("invalid pencil: {0}")]
    InvalidPencil(String),

    #[error("invalid spectral parameter: {0}")]
    InvalidSpectralParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("singular linearized system at this spectral parameter")]
    SingularLinearization,

    #[error("spectral parameter out of the supported range: ||Im(lambda)^-1|| = {im_inv_norm} exceeds {limit}")]
    OutOfRange { im_inv_norm: f64, limit: f64 },

    #[error("density estimate invalid: {0}")]
    Density(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("unknown distribution `{0}` (expected gaussian, uniform or exp_power:<alpha>)")]
    UnknownDistribution(String),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// The recurrent support kept changing between the two probe times.
    #[error("asymptotic state did not converge: support rank {first} at t*, {second} at 2t*")]
    NotConverged { first: usize, second: usize },

    /// A structural assumption of the decomposition failed numerically.
    #[error("structural diagnostic: {0}")]
    Structural(String),

    #[error("too few integration steps: ‖L̃‖·T/steps = {ratio:.3} > 0.5, need at least {required}")]
    StepsTooFew { ratio: f64, required: usize },

    #[error("block form violated: max residual {violation:.3e}")]
    BlockForm { violation: f64 },

    /// Kernel dimension inside B₂ differs from m² at some sample point.
    #[error("kernel dimension changed at s = {s}: expected {expected}, found {found}")]
    DimensionChange { s: f64, expected: usize, found: usize },

    #[error("loop does not close: ‖U(1) − I‖ = {0:.3e}")]
    OpenLoop(f64),

    #[error("rank deficiency: {0}")]
    Rank(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl Error {
    /// Whether the failure is a numerical diagnostic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Dimension(_) | Error::InvalidArgument(_) | Error::StepsTooFew { .. }
        )
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("field length {got} does not match grid with {expected} cells")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("field must be strictly positive, found {value} in cell {cell}")]
    NonPositive { cell: usize, value: f64 },

    #[error("field must be nonnegative, found {value} in cell {cell}")]
    Negative { cell: usize, value: f64 },

    #[error("field is identically zero")]
    ZeroField,

    #[error("non-finite value in cell {cell} at t = {t}")]
    NonFinite { cell: usize, t: f64 },

    #[error("linear solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("Fisher information undefined: u = 0 with |grad u|^2 = {grad_sq:e} in cell {cell}")]
    DegenerateFisher { cell: usize, grad_sq: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("ODE integration failed for {params}: {reason}")]
    Integrator { params: String, reason: String },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

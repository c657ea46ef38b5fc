use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("radius {r} exceeds the validity range r_max = {r_max}")]
    OutOfRange { r: f64, r_max: f64 },

    #[error("degenerate state at r = 0: {0}")]
    DegenerateState(String),

    #[error("state ({u}, {v}) lies on a coordinate axis")]
    AxisState { u: f64, v: f64 },

    #[error(
        "quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimated error {estimate:e})"
    )]
    QuadratureFailure {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("entropy is not Lipschitz at the origin: r*eta'(r) grows to {0:e}")]
    NonLipschitz(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("CFL violation: courant number {courant} exceeds {limit}")]
    CflViolation { courant: f64, limit: f64 },

    #[error("diffusion stability violation: dt = {dt:e} exceeds {limit:e}")]
    StabilityViolation { dt: f64, limit: f64 },

    #[error("non-finite value in cell {cell} at t = {t}")]
    NonFinite { cell: usize, t: f64 },

    #[error("characteristics cross before t = {t} near xi = {xi}")]
    ShockFormed { t: f64, xi: f64 },

    #[error("root bracketing failed: {0}")]
    RootBracketFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("test function support not interior: {0}")]
    TestFunctionSupport(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

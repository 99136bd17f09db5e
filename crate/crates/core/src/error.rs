use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level {level} out of range (hierarchy has {available} levels)")]
    LevelOutOfRange { level: usize, available: usize },

    #[error("level mismatch: expected level {expected}, got {found}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("exponent constraint violated: {0}")]
    Exponent(String),

    #[error("reaction returned non-finite value {value} at x = ({x:.6}, {y:.6}) (element {element}, quadrature point {point})")]
    NonFiniteReaction {
        value: f64,
        x: f64,
        y: f64,
        element: usize,
        point: usize,
    },

    #[error("non-finite finite-difference probe of reaction at argument {argument}")]
    NonFiniteProbe { argument: &'static str },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("nonlinear solver stagnated: best residual {best_residual:.3e} after {iterations} iterations")]
    Stagnation {
        best: Vec<f64>,
        best_residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("eigenvalue iteration did not converge after {iterations} iterations (last relative change {last_change:.3e}, lambda {lambda:.6})")]
    EigenNotConverged {
        best: Vec<f64>,
        lambda: f64,
        iterations: usize,
        last_change: f64,
    },

    #[error("coercivity hypothesis violated: margin {margin:.6} is not positive")]
    CoercivityViolated { margin: f64 },

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

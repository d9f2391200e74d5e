use thiserror::Error;

/// Crate-wide error type. Numerical failure modes carry enough context
/// (offending value, node, interval) to be actionable from the CLI.
#[derive(Debug, Error)]
pub enum KgError {
    #[error("magnitude exceeds model range at u = {u:e}")]
    ModelRange { u: f64 },

    #[error("quadrature did not converge on [{a:e}, {b:e}]")]
    Quadrature { a: f64, b: f64 },

    #[error("newton divergence at node {node} (residual {residual:e}, t = {t})")]
    NewtonDivergence { node: usize, residual: f64, t: f64 },

    #[error("blowup detected at t = {t} (max|u| = {max_u:e})")]
    Blowup { t: f64, max_u: f64 },

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("bisection bracket not found: {0}")]
    NoBracket(String),

    #[error("no decay within domain (outer radius too small): |Q| = {q_end:e} at r = {r_end}")]
    NoDecay { q_end: f64, r_end: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KgError>;

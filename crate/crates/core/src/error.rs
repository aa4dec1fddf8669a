//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected shape/length {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} does not sum to 1 (sum = {sum})")]
    NotNormalized { what: String, sum: f64 },

    #[error("{what} has a negative entry ({value})")]
    NegativeProbability { what: String, value: f64 },

    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("KL divergence undefined: q[{index}] = 0 while p[{index}] = {p_val} > 0")]
    KlSupport { index: usize, p_val: f64 },

    #[error("output {y} has zero probability under the current belief/action")]
    ZeroProbabilityOutput { y: usize },

    #[error("{what} is reducible (multiple closed classes)")]
    Reducible { what: &'static str },

    #[error("{what} is periodic (period {period})")]
    Periodic { what: &'static str, period: usize },

    #[error("multichain policy with unequal class gains: {gains:?}")]
    MultichainUnequalGains { gains: Vec<f64> },

    #[error("test distribution support violation at (y={y}, x={x}, s={s}, q={q}): T(y|q) = 0 while P(y|x,s) > 0")]
    TestSupportViolation { y: usize, x: usize, s: usize, q: usize },

    #[error("lower bound inapplicable: BCJR-invariance residual {residual} exceeds tolerance {tol}")]
    LowerBoundInapplicable { residual: f64, tol: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear system is singular beyond gauge freedom")]
    SingularSystem,

    #[error("golden-section bracket failure: objective not unimodal on the given range")]
    BracketFailure,

    #[error("{what} size {size} exceeds guard {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("invalid configuration: {msg}")]
    InvalidConfig { msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

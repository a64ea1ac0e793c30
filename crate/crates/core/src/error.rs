use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which of the three coefficients failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    Alpha,
    Beta,
    Gamma,
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parameter::Alpha => "alpha",
            Parameter::Beta => "beta",
            Parameter::Gamma => "gamma",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter {0} must be strictly positive")]
    NonPositiveParameter(Parameter),
    #[error("parameter {0} must be finite")]
    NonFiniteParameter(Parameter),
    #[error("normalized coefficient c must be finite and strictly positive, got {0}")]
    InvalidCoefficient(f64),
    #[error("order k must be at least 1, got {0}")]
    InvalidOrder(i64),
    #[error("state window must hold {expected} values, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("state window entry {index} is not finite")]
    NonFiniteWindow { index: usize },
    #[error("denominator vanished at step {step}: the window lies in the forbidden set")]
    ForbiddenBlowup { step: usize },
    #[error("iterate overflowed to a non-finite value at step {step}")]
    Overflow { step: usize },
    #[error("Riccati map denominator 1 + t vanished (t = {t})")]
    RiccatiBlowup { t: f64 },
    #[error(
        "window product {product} is within {band} of the accumulation point {accumulation}; \
         membership cannot be resolved in floating point"
    )]
    AmbiguousNearAccumulation {
        product: f64,
        accumulation: f64,
        band: f64,
    },
    #[error("no positive equilibrium exists for c = {c} (requires c > 1)")]
    NoPositiveEquilibrium { c: f64 },
    #[error("polynomial must be monic with degree >= 1")]
    InvalidPolynomial,
    #[error("root finding did not converge: worst residual {residual:e} exceeds bound {bound:e}")]
    ConvergenceFailure { residual: f64, bound: f64 },
    #[error("{x} is not a fixed point: |f(x) - x| = {residual:e}")]
    NotAFixedPoint { x: f64, residual: f64 },
    #[error("trajectory too short: need {needed} steps, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

//! Simulation and analysis of the (k+1)-order rational difference equation
//!
//! ```text
//! x[n+1] = alpha * x[n-k] / (beta + gamma * x[n] * x[n-1] * ... * x[n-k])
//! ```
//!
//! After the substitution `x = scale * y` with `scale = (beta/gamma)^(1/(k+1))`
//! every instance reduces to the one-parameter normal form
//!
//! ```text
//! y[n+1] = c * y[n-k] / (1 + y[n] * ... * y[n-k]),    c = alpha / beta
//! ```
//!
//! which is what the analysis modules operate on:
//!
//! - [`equation`]: parameter validation, normalization, stepping and iteration.
//! - [`forbidden`]: closed-form membership in the forbidden set of initial
//!   windows, and the Riccati product recurrence that backs it.
//! - [`stability`]: equilibria, characteristic polynomials, root finding and
//!   linearized / one-sided stability classification.
//! - [`semiconjugacy`]: the product link map, the Riccati factor map, cycle
//!   verification and convergence-regime classification.
//!
//! State windows are always stored oldest-first: index 0 holds `x[n-k]` and
//! index `k` holds `x[n]`.

pub mod equation;
pub mod error;
pub mod forbidden;
pub mod semiconjugacy;
pub mod stability;

pub use num_complex;

pub use equation::{
    iterate, normalize, step, validate_params, window_product, NormalizedEquation, ParamSet,
    StateWindow, StepOutcome, Termination, Trajectory, DEFAULT_BLOWUP_TOL,
};
pub use error::{Error, Parameter, Result};
pub use forbidden::{
    forbidden_threshold, geometric_sum, is_forbidden, riccati_closed_form, riccati_step,
    ForbiddenVerdict, DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL,
};
pub use semiconjugacy::{
    analyze_convergence, classify_regime, detect_cycle, exponential_bound_check, factor_phi,
    link_h, semiconjugacy_residual, verify_kp1_cycle, BoundCheck, CycleReport, FiberLevel,
    LimitKind, Regime, RegimeReport,
};
pub use stability::{
    char_poly_origin, char_poly_positive, classify_linearization, equilibria, poly_roots,
    positive_eq_roots_factored, semistability_1d, CharPoly, Equilibrium, EquilibriumKind,
    PolyRoots, RootAnalysis, ScalarMap, Semistability, Verdict,
};

//! Parameters, normalization, single steps and trajectories.

use std::ops::Deref;

use serde::Serialize;

use crate::error::{Error, Parameter, Result};

/// Default threshold on `|1 + product(window)|` below which a step is
/// reported as a forbidden blow-up.
pub const DEFAULT_BLOWUP_TOL: f64 = 1e-12;

/// Raw coefficients `(alpha, beta, gamma, k)` of the unnormalized equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSet {
    alpha: f64,
    beta: f64,
    gamma: f64,
    k: usize,
}

impl ParamSet {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

pub fn validate_params(alpha: f64, beta: f64, gamma: f64, k: i64) -> Result<ParamSet> {
    for (value, which) in [
        (alpha, Parameter::Alpha),
        (beta, Parameter::Beta),
        (gamma, Parameter::Gamma),
    ] {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::NonPositiveParameter(which));
        }
        if value.is_infinite() {
            return Err(Error::NonFiniteParameter(which));
        }
    }
    if k < 1 {
        return Err(Error::InvalidOrder(k));
    }
    Ok(ParamSet {
        alpha,
        beta,
        gamma,
        k: k as usize,
    })
}

/// The normal form `y[n+1] = c*y[n-k] / (1 + y[n]...y[n-k])` together with
/// the factor relating its states to the raw equation (`x = scale * y`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedEquation {
    c: f64,
    k: usize,
    scale: f64,
}

impl NormalizedEquation {
    /// Builds the normal form directly from `c` and `k`, with unit scale.
    pub fn new(c: f64, k: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidCoefficient(c));
        }
        if k < 1 {
            return Err(Error::InvalidOrder(k as i64));
        }
        Ok(Self { c, k, scale: 1.0 })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Window length `k + 1`.
    pub fn order(&self) -> usize {
        self.k + 1
    }

    /// Maps a raw-coordinate value `x` to normal-form coordinates.
    pub fn to_normal(&self, x: f64) -> f64 {
        x / self.scale
    }

    /// Maps a normal-form value back to raw coordinates.
    pub fn to_raw(&self, y: f64) -> f64 {
        y * self.scale
    }

    /// Checks that `values` has the right length for this equation and wraps it.
    pub fn window(&self, values: Vec<f64>) -> Result<StateWindow> {
        let w = StateWindow::new(values)?;
        self.check_window(&w)?;
        Ok(w)
    }

    fn check_window(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.order() {
            return Err(Error::WindowLength {
                expected: self.order(),
                got: w.len(),
            });
        }
        Ok(())
    }
}

/// Substituting `x = s*y` with `s^(k+1) = beta/gamma` and dividing through by
/// beta leaves `c = alpha/beta` as the only coefficient.
pub fn normalize(p: &ParamSet) -> NormalizedEquation {
    let scale = (p.beta / p.gamma).powf(1.0 / (p.k + 1) as f64);
    NormalizedEquation {
        c: p.alpha / p.beta,
        k: p.k,
        scale,
    }
}

/// Ordered `(x[n-k], ..., x[n])`, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StateWindow(Vec<f64>);

impl StateWindow {
    /// Wraps `values` after checking that every entry is finite and that
    /// there are at least two of them (the smallest order is k = 1).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::WindowLength {
                expected: 2,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteWindow { index });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn product(&self) -> f64 {
        window_product(&self.0)
    }

    /// Sup-norm distance to another window of the same length.
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        sup_distance(&self.0, other)
    }
}

impl Deref for StateWindow {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for StateWindow {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Product of all entries, multiplied left to right.
pub fn window_product(w: &[f64]) -> f64 {
    w.iter().product()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    NextValue(f64),
    ForbiddenBlowup,
}

pub(crate) fn step_unchecked(c: f64, w: &[f64], blowup_tol: f64) -> StepOutcome {
    let denom = 1.0 + window_product(w);
    if denom.abs() <= blowup_tol {
        StepOutcome::ForbiddenBlowup
    } else {
        StepOutcome::NextValue(c * w[0] / denom)
    }
}

/// One application of the normal-form right-hand side to an oldest-first
/// window. Fails only when the window length does not match the equation.
pub fn step(eq: &NormalizedEquation, w: &[f64], blowup_tol: f64) -> Result<StepOutcome> {
    eq.check_window(w)?;
    Ok(step_unchecked(eq.c, w, blowup_tol))
}

/// Why an iteration stopped before the requested number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    /// `|1 + product|` fell below the blow-up tolerance while computing `x[step]`.
    ForbiddenBlowup { step: usize },
    /// `x[step]` overflowed to a non-finite value.
    NonFinite { step: usize },
}

impl Termination {
    pub fn step(&self) -> usize {
        match *self {
            Termination::ForbiddenBlowup { step } | Termination::NonFinite { step } => step,
        }
    }
}

/// A finite orbit segment `x[-k], ..., x[N]` of the normal form.
///
/// Windows are not stored separately: window `n` is the slice of `k + 1`
/// consecutive values ending at `x[n]`, so consecutive windows overlap in `k`
/// entries by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    eq: NormalizedEquation,
    values: Vec<f64>,
    terminated_early: Option<Termination>,
}

impl Trajectory {
    pub fn equation(&self) -> &NormalizedEquation {
        &self.eq
    }

    /// All values, starting with the initial window.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values computed by iteration, `x[1], x[2], ...`.
    pub fn computed(&self) -> &[f64] {
        &self.values[self.eq.order()..]
    }

    pub fn terminated_early(&self) -> Option<Termination> {
        self.terminated_early
    }

    /// Number of steps that completed.
    pub fn steps(&self) -> usize {
        self.values.len() - self.eq.order()
    }

    /// `x[n]` for `-k <= n <= steps()`.
    pub fn x(&self, n: i64) -> Option<f64> {
        let idx = n + self.eq.k as i64;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }

    /// Window after `n` steps, `(x[n-k], ..., x[n])`.
    pub fn window(&self, n: usize) -> Option<&[f64]> {
        self.values.get(n..n + self.eq.order())
    }

    pub fn windows(&self) -> std::slice::Windows<'_, f64> {
        self.values.windows(self.eq.order())
    }

    pub fn initial_window(&self) -> &[f64] {
        &self.values[..self.eq.order()]
    }

    pub fn final_window(&self) -> &[f64] {
        &self.values[self.values.len() - self.eq.order()..]
    }

    /// `product(window n)` for every stored window.
    pub fn products(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows().map(window_product)
    }
}

/// Applies [`step`] `n_steps` times, shifting the window each time. Stops at
/// the first forbidden blow-up or overflow and records where.
pub fn iterate(
    eq: &NormalizedEquation,
    w0: &[f64],
    n_steps: usize,
    blowup_tol: f64,
) -> Result<Trajectory> {
    eq.check_window(w0)?;
    if let Some(index) = w0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteWindow { index });
    }
    let order = eq.order();
    let mut values = Vec::with_capacity(order + n_steps);
    values.extend_from_slice(w0);
    let mut terminated_early = None;
    for n in 1..=n_steps {
        let w = &values[values.len() - order..];
        match step_unchecked(eq.c, w, blowup_tol) {
            StepOutcome::NextValue(x) if x.is_finite() => values.push(x),
            StepOutcome::NextValue(_) => {
                terminated_early = Some(Termination::NonFinite { step: n });
                break;
            }
            StepOutcome::ForbiddenBlowup => {
                terminated_early = Some(Termination::ForbiddenBlowup { step: n });
                break;
            }
        }
    }
    Ok(Trajectory {
        eq: *eq,
        values,
        terminated_early,
    })
}

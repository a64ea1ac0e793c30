//! Order reduction through the product link map.
//!
//! With `H(w) = product(w)` and `phi(t) = c*t / (1 + t)`, every window obeys
//! `H(V(w)) = phi(H(w))` where `V` is the one-step window shift. The scalar
//! Riccati map therefore controls the product along every orbit:
//!
//! - `c < 1`: positive orbits decay exponentially to the origin.
//! - `c > 1`: `H` converges to `c - 1`, and every window on that level set is
//!   fixed by `V^(k+1)`, so orbits approach `(k+1)`-cycles.
//! - `c = 1`: `H` decays like `1/n`; windows with a zero entry are fixed by
//!   `V^(k+1)`.
//!
//! Only positive initial windows are covered by these statements. The
//! analyzers still run on other windows but flag the result.

use serde::Serialize;

use crate::equation::{
    iterate, sup_distance, window_product, NormalizedEquation, StepOutcome, Termination,
    Trajectory, DEFAULT_BLOWUP_TOL,
};
use crate::error::{Error, Result};
use crate::forbidden::riccati_step;
use crate::stability::ScalarMap;

/// `|c - 1|` at or below this is treated as the critical case `c = 1`.
pub const DEFAULT_REGIME_TOL: f64 = 1e-12;

/// Default sup-norm tolerance for accepting a window as a `(k+1)`-cycle.
pub const DEFAULT_CYCLE_TOL: f64 = 1e-9;

/// The link map `H`: product of the window entries.
pub fn link_h(w: &[f64]) -> f64 {
    window_product(w)
}

/// The factor map `phi(t) = c*t / (1 + t)`.
pub fn factor_phi(c: f64, t: f64) -> Result<f64> {
    riccati_step(c, t)
}

/// `phi` as a [`ScalarMap`] with closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiMap {
    pub c: f64,
}

impl ScalarMap for RiccatiMap {
    fn eval(&self, t: f64) -> f64 {
        self.c * t / (1.0 + t)
    }

    fn derivative(&self, t: f64) -> f64 {
        self.c / ((1.0 + t) * (1.0 + t))
    }

    fn second_derivative(&self, t: f64) -> f64 {
        -2.0 * self.c / (1.0 + t).powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberLevel {
    pub t: f64,
    /// Limit of the factor orbit for positive windows, `max(c - 1, 0)`.
    pub regime_target: f64,
}

impl FiberLevel {
    pub fn of(eq: &NormalizedEquation, w: &[f64]) -> Self {
        Self {
            t: link_h(w),
            regime_target: (eq.c() - 1.0).max(0.0),
        }
    }

    pub fn gap(&self) -> f64 {
        (self.t - self.regime_target).abs()
    }
}

/// `|H(V(w)) - phi(H(w))|`. Zero in exact arithmetic.
pub fn semiconjugacy_residual(eq: &NormalizedEquation, w: &[f64]) -> Result<f64> {
    let next = match crate::equation::step(eq, w, DEFAULT_BLOWUP_TOL)? {
        StepOutcome::NextValue(x) => x,
        StepOutcome::ForbiddenBlowup => return Err(Error::ForbiddenBlowup { step: 1 }),
    };
    let shifted = window_product(&w[1..]) * next;
    let reduced = factor_phi(eq.c(), link_h(w))?;
    Ok((shifted - reduced).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub is_cycle: bool,
    pub period: usize,
    pub cycle_window: Vec<f64>,
    pub fiber_value: f64,
    /// Sup-norm distance between `V^(k+1)(w)` and `w`.
    pub max_deviation: f64,
}

fn blowup_error(t: Termination) -> Error {
    match t {
        Termination::ForbiddenBlowup { step } => Error::ForbiddenBlowup { step },
        Termination::NonFinite { step } => Error::Overflow { step },
    }
}

/// Applies `k + 1` steps to `w` and measures how far the result is from `w`.
pub fn verify_kp1_cycle(eq: &NormalizedEquation, w: &[f64], tol: f64) -> Result<CycleReport> {
    let period = eq.order();
    let traj = iterate(eq, w, period, DEFAULT_BLOWUP_TOL)?;
    if let Some(t) = traj.terminated_early() {
        return Err(blowup_error(t));
    }
    let max_deviation = sup_distance(traj.final_window(), w);
    Ok(CycleReport {
        is_cycle: max_deviation <= tol,
        period,
        cycle_window: w.to_vec(),
        fiber_value: link_h(w),
        max_deviation,
    })
}

/// Tests the last window of `traj` for `(k+1)`-periodicity. No other period
/// is tested: for this equation every cycle has period dividing `k + 1`.
pub fn detect_cycle(traj: &Trajectory, tol: f64) -> Result<CycleReport> {
    let eq = traj.equation();
    let needed = 2 * eq.order();
    if traj.steps() < needed {
        return Err(Error::InsufficientData {
            needed,
            have: traj.steps(),
        });
    }
    verify_kp1_cycle(eq, traj.final_window(), tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Smallest `bound - x` seen.
    pub worst_margin: f64,
    /// Largest `x / bound` over steps with a nonzero bound.
    pub tightest_ratio: Option<f64>,
}

/// Checks `0 <= x[j] <= c^floor((j+1)/(k+1)) * max(initial window)` for
/// every stored `x[j]`, `j > -k`. Requires `c < 1` and a nonnegative initial window.
///
/// A relative allowance of a few ulps per elapsed period absorbs rounding
/// in the iteration and in `c^e`.
pub fn exponential_bound_check(eq: &NormalizedEquation, traj: &Trajectory) -> Result<BoundCheck> {
    let c = eq.c();
    if c >= 1.0 {
        return Err(Error::PreconditionViolated(format!(
            "exponential bound needs c < 1, got {c}"
        )));
    }
    let init = traj.initial_window();
    if init.iter().any(|&x| x < 0.0) {
        return Err(Error::PreconditionViolated(
            "exponential bound needs a nonnegative initial window".into(),
        ));
    }
    let max_init = init.iter().copied().fold(0.0, f64::max);
    let order = eq.order() as i64;
    let k = eq.k() as i64;

    let mut holds = true;
    let mut worst_margin = f64::INFINITY;
    let mut tightest_ratio: Option<f64> = None;
    for (i, &x) in traj.values().iter().enumerate().skip(1) {
        let j = i as i64 - k;
        let exponent = (j + 1).div_euclid(order).max(0);
        let bound = c.powi(exponent as i32) * max_init;
        let allowance = 4.0 * (exponent + 2) as f64 * f64::EPSILON;
        if x < 0.0 || x > bound * (1.0 + allowance) {
            holds = false;
        }
        worst_margin = worst_margin.min(bound - x);
        if bound > 0.0 {
            let ratio = x / bound;
            tightest_ratio = Some(tightest_ratio.map_or(ratio, |r: f64| r.max(ratio)));
        }
    }
    Ok(BoundCheck {
        holds,
        worst_margin,
        tightest_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `c < 1`
    CaseI,
    /// `c > 1`
    CaseII,
    /// `c = 1`
    CaseIII,
}

pub fn classify_regime(c: f64, tol: f64) -> Regime {
    if (c - 1.0).abs() <= tol {
        Regime::CaseIII
    } else if c < 1.0 {
        Regime::CaseI
    } else {
        Regime::CaseII
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Origin,
    Cycle,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub limit_kind: LimitKind,
    pub limit_window: Option<Vec<f64>>,
    /// `|H(final window) - max(c - 1, 0)|`.
    pub fiber_gap: f64,
    /// Least-squares slope per step of `ln|x|` (case I) or `ln|H - (c-1)|`
    /// (case II) over the last third of the usable samples.
    pub rate_estimate: Option<f64>,
    /// Set when the initial window is not strictly positive, in which case
    /// none of the regime guarantees apply.
    pub out_of_hypothesis: bool,
    pub steps: usize,
    pub bound_check: Option<BoundCheck>,
    pub cycle: Option<CycleReport>,
}

/// Iterates `n_steps` from `w0` and classifies where the orbit ends up.
///
/// `tol` is absolute for the fiber gap and for closeness to the origin, and
/// is scaled by `1 + sup|window|` when testing cycle closure.
pub fn analyze_convergence(
    eq: &NormalizedEquation,
    w0: &[f64],
    n_steps: usize,
    tol: f64,
) -> Result<RegimeReport> {
    let traj = iterate(eq, w0, n_steps, DEFAULT_BLOWUP_TOL)?;
    if let Some(t) = traj.terminated_early() {
        return Err(blowup_error(t));
    }
    let c = eq.c();
    let regime = classify_regime(c, DEFAULT_REGIME_TOL);
    let out_of_hypothesis = w0.iter().any(|&x| !(x > 0.0));
    let last = traj.final_window();
    let level = FiberLevel::of(eq, last);
    let fiber_gap = match regime {
        Regime::CaseII => (level.t - (c - 1.0)).abs(),
        Regime::CaseI | Regime::CaseIII => level.t.abs(),
    };
    let sup = last.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cycle_tol = tol * (1.0 + sup);

    let mut report = RegimeReport {
        regime,
        limit_kind: LimitKind::Undetermined,
        limit_window: None,
        fiber_gap,
        rate_estimate: None,
        out_of_hypothesis,
        steps: traj.steps(),
        bound_check: None,
        cycle: None,
    };

    match regime {
        Regime::CaseI => {
            if w0.iter().all(|&x| x >= 0.0) {
                report.bound_check = Some(exponential_bound_check(eq, &traj)?);
            }
            let bound_ok = report.bound_check.is_none_or(|b| b.holds);
            if sup <= tol && bound_ok {
                report.limit_kind = LimitKind::Origin;
                report.limit_window = Some(vec![0.0; eq.order()]);
            }
            report.rate_estimate = log_slope(
                traj.computed()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| ((i + 1) as f64, x.abs()))
                    .filter(|&(_, y)| y.is_normal()),
            );
        }
        Regime::CaseII => {
            let cycle = verify_kp1_cycle(eq, last, cycle_tol)?;
            if fiber_gap <= tol && cycle.is_cycle {
                report.limit_kind = LimitKind::Cycle;
                report.limit_window = Some(last.to_vec());
            }
            report.cycle = Some(cycle);
            let target = c - 1.0;
            let noise = 64.0 * f64::EPSILON * target.max(1.0);
            report.rate_estimate = log_slope(
                traj.products()
                    .enumerate()
                    .map(|(n, h)| (n as f64, (h - target).abs()))
                    .filter(|&(_, gap)| gap > noise),
            );
        }
        Regime::CaseIII => {
            if fiber_gap <= tol {
                if sup <= tol {
                    report.limit_kind = LimitKind::Origin;
                    report.limit_window = Some(vec![0.0; eq.order()]);
                } else {
                    let cycle = verify_kp1_cycle(eq, last, cycle_tol)?;
                    if cycle.is_cycle {
                        report.limit_kind = LimitKind::Cycle;
                        report.limit_window = Some(last.to_vec());
                    }
                    report.cycle = Some(cycle);
                }
            }
        }
    }
    Ok(report)
}

/// Least-squares slope of `ln y` against `x` over the last third of the
/// samples (at least two).
fn log_slope(samples: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let points: Vec<(f64, f64)> = samples.map(|(x, y)| (x, y.ln())).collect();
    let tail = &points[points.len() - (points.len() / 3).max(2.min(points.len()))..];
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mean_x = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = tail.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        let dx = x - mean_x;
        (sxy + dx * (y - mean_y), sxx + dx * dx)
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

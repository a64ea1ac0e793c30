//! Forbidden initial windows and the Riccati product recurrence.
//!
//! Along any orbit the window product `t[n] = x[n-k]...x[n]` obeys
//! `t[n+1] = c*t[n] / (1 + t[n])`. A window is forbidden exactly when this
//! scalar orbit reaches `-1`, which happens after `m` steps iff
//!
//! ```text
//! t[0] = -1 / (1 + c + ... + c^m)
//! ```
//!
//! For `c < 1` these thresholds accumulate at `-(1 - c)`, the repelling fixed
//! point of the product map. Close to it the thresholds are too ill-conditioned
//! to tell apart in double precision, and [`is_forbidden`] refuses to answer.

use serde::Serialize;

use crate::equation::{window_product, NormalizedEquation, DEFAULT_BLOWUP_TOL};
use crate::error::{Error, Result};

/// Default number of thresholds tested by [`is_forbidden`].
pub const DEFAULT_HORIZON: usize = 100;

/// Default tolerance on the predicted denominator `1 + t[m]`.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-10;

/// Rounding in the initial product is amplified by roughly `c / d` on the way
/// to the threshold at distance `d` from the accumulation point. This factor
/// keeps the amplified error two orders of magnitude under the tolerance.
const ACCUMULATION_SLACK: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForbiddenVerdict {
    pub member: bool,
    /// Smallest `m` whose threshold matches the product.
    pub witness_m: Option<usize>,
    pub threshold_value: Option<f64>,
    pub product: f64,
    /// Gap between the product and the nearest threshold tested.
    pub distance: f64,
}

impl ForbiddenVerdict {
    /// Step index at which direct iteration is expected to blow up.
    pub fn predicted_blowup_step(&self) -> Option<usize> {
        self.witness_m.map(|m| m + 1)
    }
}

/// `1 + c + ... + c^m` in closed form.
pub fn geometric_sum(c: f64, m: usize) -> f64 {
    let terms = (m + 1) as f64;
    let x = c - 1.0;
    if x.abs() <= f64::EPSILON {
        return terms;
    }
    // expm1/ln_1p keep full precision when c is close to 1.
    (terms * x.ln_1p()).exp_m1() / x
}

/// `-1 / (1 + c + ... + c^m)`. Negative, and strictly increasing in `m`.
pub fn forbidden_threshold(c: f64, m: usize) -> f64 {
    -1.0 / geometric_sum(c, m)
}

/// Width of the band around `-(1 - c)` inside which membership is not decided.
pub fn accumulation_band(c: f64, tol: f64) -> f64 {
    tol.max(ACCUMULATION_SLACK * f64::EPSILON * c / tol)
}

/// Decides whether `w` is a forbidden initial window by comparing its product
/// against the first `horizon + 1` thresholds.
///
/// The product matches threshold `m` when the denominator that step `m + 1`
/// divides by, `1 + t[m] = (1 + t0 S[m]) / (1 + t0 S[m-1])`, is at most `tol`
/// in magnitude. This is the test [`iterate`](crate::iterate) applies with
/// the same tolerance. Near `t0 = -1/S[m]` it reads
/// `|t0 - threshold| <= tol * |1 + t0 S[m-1]| / S[m]`, so for small `m` and
/// moderate `c` it is an absolute gap of order `tol`, and for `c > 1` it
/// shrinks with the thresholds instead of lumping all of them near zero
/// together.
///
/// Returns [`Error::AmbiguousNearAccumulation`] when `c < 1` and the product
/// lies inside [`accumulation_band`]; there neighbouring thresholds are closer
/// together than the round-off that iteration would accumulate reaching them.
pub fn is_forbidden(
    eq: &NormalizedEquation,
    w: &[f64],
    horizon: usize,
    tol: f64,
) -> Result<ForbiddenVerdict> {
    if w.len() != eq.order() {
        return Err(Error::WindowLength {
            expected: eq.order(),
            got: w.len(),
        });
    }
    let c = eq.c();
    let product = window_product(w);

    if c < 1.0 {
        let accumulation = c - 1.0;
        let band = accumulation_band(c, tol);
        if (product - accumulation).abs() <= band {
            return Err(Error::AmbiguousNearAccumulation {
                product,
                accumulation,
                band,
            });
        }
    }

    let mut distance = f64::INFINITY;
    let mut prev_denom = 1.0;
    for m in 0..=horizon {
        let sum = geometric_sum(c, m);
        let threshold = -1.0 / sum;
        let gap = (product - threshold).abs();
        let denom = 1.0 + product * sum;
        if (denom / prev_denom).abs() <= tol {
            return Ok(ForbiddenVerdict {
                member: true,
                witness_m: Some(m),
                threshold_value: Some(threshold),
                product,
                distance: gap,
            });
        }
        distance = distance.min(gap);
        prev_denom = denom;
        // thresholds only increase from here on
        if threshold > product {
            break;
        }
    }
    Ok(ForbiddenVerdict {
        member: false,
        witness_m: None,
        threshold_value: None,
        product,
        distance,
    })
}

/// `c*t / (1 + t)`.
pub fn riccati_step(c: f64, t: f64) -> Result<f64> {
    let denom = 1.0 + t;
    if denom.abs() <= DEFAULT_BLOWUP_TOL {
        return Err(Error::RiccatiBlowup { t });
    }
    Ok(c * t / denom)
}

/// The `n`-th iterate of [`riccati_step`] from `t0`, in closed form:
///
/// ```text
/// t[n] = c^n t0 / (1 + t0 (1 + c + ... + c^(n-1)))
/// ```
///
/// Fails with [`Error::RiccatiBlowup`] if the orbit passes through `t = -1`
/// before step `n`, i.e. if `1 + t0 (1 + ... + c^j)` vanishes for some `j < n`.
pub fn riccati_closed_form(c: f64, t0: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(t0);
    }
    // 1 + t[j] = D[j] / D[j-1] with D[j] = 1 + t0 * S[j]
    let (mut partial, mut prev_denom, mut pow) = (1.0, 1.0, 1.0);
    for _ in 0..n {
        let denom = 1.0 + t0 * partial;
        if denom.abs() <= DEFAULT_BLOWUP_TOL {
            return Err(Error::RiccatiBlowup {
                t: pow * t0 / prev_denom,
            });
        }
        partial = 1.0 + c * partial;
        prev_denom = denom;
        pow *= c;
    }

    let steps = n as f64;
    if c > 1.0 {
        // Divide through by c^n so nothing overflows for long orbits.
        let log_c = (c - 1.0).ln_1p();
        let inv_pow = (-steps * log_c).exp();
        let tail = -(-steps * log_c).exp_m1() / (c - 1.0);
        Ok(t0 / (inv_pow + t0 * tail))
    } else {
        let pow = c.powf(steps);
        Ok(pow * t0 / (1.0 + t0 * geometric_sum(c, n - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::{iterate, Termination};
    use approx::assert_relative_eq;

    fn direct_sum(c: f64, m: usize) -> f64 {
        (0..=m).map(|i| c.powi(i as i32)).sum()
    }

    #[test]
    fn geometric_sum_examples() {
        assert_eq!(geometric_sum(1.0, 1), 2.0);
        assert_relative_eq!(geometric_sum(2.0, 2), 7.0, max_relative = 1e-15);
        // direct summation: 2 - 2^-10
        assert_eq!(direct_sum(0.5, 10), 1.9990234375);
        assert_relative_eq!(geometric_sum(0.5, 10), 1.9990234375, max_relative = 1e-15);
    }

    #[test]
    fn geometric_sum_matches_direct_summation() {
        for &c in &[0.01, 0.3, 0.999_999, 1.0 + 1e-9, 1.5, 4.0] {
            for m in [0, 1, 5, 40] {
                assert_relative_eq!(geometric_sum(c, m), direct_sum(c, m), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(forbidden_threshold(1.0, 0), -1.0);
        assert_relative_eq!(
            forbidden_threshold(2.0, 1),
            -1.0 / 3.0,
            max_relative = 1e-15
        );
        // accumulation point for c = 0.5 is -(1 - c) = -0.5
        assert!((forbidden_threshold(0.5, 200) + 0.5).abs() < 1e-15);
        assert!(forbidden_threshold(0.5, 30) < -0.5);
    }

    #[test]
    fn thresholds_increase_towards_zero() {
        for &c in &[0.2, 0.9, 1.0, 1.1, 3.0] {
            for m in 0..15 {
                let a = forbidden_threshold(c, m);
                let b = forbidden_threshold(c, m + 1);
                assert!(a < b && b < 0.0, "c={c} m={m}");
            }
        }
    }

    #[test]
    fn membership_examples() {
        let eq = NormalizedEquation::new(1.0, 1).unwrap();
        let v = is_forbidden(&eq, &[1.0, -0.5], DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert!(v.member);
        assert_eq!(v.witness_m, Some(1));
        assert_eq!(v.predicted_blowup_step(), Some(2));
        let t = iterate(&eq, &[1.0, -0.5], 10, DEFAULT_BLOWUP_TOL).unwrap();
        assert_eq!(
            t.terminated_early(),
            Some(Termination::ForbiddenBlowup { step: 2 })
        );

        let eq = NormalizedEquation::new(2.0, 2).unwrap();
        let v = is_forbidden(
            &eq,
            &[1.0, 1.0, -1.0 / 3.0],
            DEFAULT_HORIZON,
            DEFAULT_MEMBERSHIP_TOL,
        )
        .unwrap();
        assert!(v.member);
        assert_eq!(v.witness_m, Some(1));

        for c in [0.3, 1.0, 4.0] {
            let eq = NormalizedEquation::new(c, 2).unwrap();
            let v = is_forbidden(
                &eq,
                &[0.1, 3.0, 2.0],
                DEFAULT_HORIZON,
                DEFAULT_MEMBERSHIP_TOL,
            )
            .unwrap();
            assert!(!v.member);
            assert!(v.witness_m.is_none() && v.threshold_value.is_none());
        }
    }

    #[test]
    fn clustered_thresholds_for_large_c() {
        // thresholds 15..20 for c = 5 all lie within 1e-10 of zero
        let c = 5.0;
        assert!(forbidden_threshold(c, 15).abs() < DEFAULT_MEMBERSHIP_TOL);
        let eq = NormalizedEquation::new(c, 1).unwrap();
        for m in [15, 17, 20] {
            let w = [2.0, forbidden_threshold(c, m) / 2.0];
            let v = is_forbidden(&eq, &w, DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL).unwrap();
            assert_eq!(v.witness_m, Some(m));
            let t = iterate(&eq, &w, DEFAULT_HORIZON + 1, DEFAULT_MEMBERSHIP_TOL).unwrap();
            assert_eq!(
                t.terminated_early(),
                Some(Termination::ForbiddenBlowup { step: m + 1 })
            );
        }
        let v = is_forbidden(&eq, &[1.0, -1e-12], DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert!(!v.member);
    }

    #[test]
    fn ambiguous_near_accumulation() {
        let eq = NormalizedEquation::new(0.5, 1).unwrap();
        let deep = forbidden_threshold(0.5, 60);
        let err = is_forbidden(&eq, &[1.0, deep], DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL);
        assert!(matches!(err, Err(Error::AmbiguousNearAccumulation { .. })));
        // c >= 1 has no accumulation point below zero
        let eq = NormalizedEquation::new(1.5, 1).unwrap();
        assert!(is_forbidden(&eq, &[1.0, -0.5], DEFAULT_HORIZON, DEFAULT_MEMBERSHIP_TOL).is_ok());
    }

    #[test]
    fn riccati_examples() {
        assert_eq!(riccati_step(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(riccati_step(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(riccati_step(1.0, -0.5).unwrap(), -1.0);
        assert!(matches!(
            riccati_step(1.0, -1.0),
            Err(Error::RiccatiBlowup { .. })
        ));

        assert_eq!(riccati_closed_form(2.7, 0.4, 0).unwrap(), 0.4);
        assert_relative_eq!(
            riccati_closed_form(1.0, 1.0, 3).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        let mut t = 3.0;
        for _ in 0..5 {
            t = riccati_step(2.0, t).unwrap();
        }
        assert_relative_eq!(t, 96.0 / 94.0, max_relative = 1e-14);
        assert_relative_eq!(
            riccati_closed_form(2.0, 3.0, 5).unwrap(),
            96.0 / 94.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn closed_form_detects_intermediate_pole() {
        // t0 = -1/2 reaches -1 after one step for c = 1
        assert!(riccati_closed_form(1.0, -0.5, 1).is_ok());
        assert!(matches!(
            riccati_closed_form(1.0, -0.5, 2),
            Err(Error::RiccatiBlowup { .. })
        ));
        assert!(riccati_closed_form(1.0, -0.5, 7).is_err());
    }

    #[test]
    fn closed_form_long_orbits_do_not_overflow() {
        let t = riccati_closed_form(5.0, 2.0, 10_000).unwrap();
        assert_relative_eq!(t, 4.0, max_relative = 1e-14);
        let t = riccati_closed_form(0.5, 2.0, 10_000).unwrap();
        assert_eq!(t, 0.0);
    }
}

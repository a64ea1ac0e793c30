//! Equilibria, characteristic polynomials and stability classification.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::equation::NormalizedEquation;
use crate::error::{Error, Result};

/// Default half-width of the band around the unit circle treated as "on" it.
pub const DEFAULT_UNIT_MARGIN: f64 = 1e-9;

/// Default relative residual bound accepted from [`poly_roots`].
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

const ABERTH_MAX_ITER: usize = 500;
const NEWTON_POLISH_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Origin,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub value: f64,
    pub kind: EquilibriumKind,
}

/// The origin always; the positive equilibrium `(c-1)^(1/(k+1))` when `c > 1`.
pub fn equilibria(eq: &NormalizedEquation) -> Vec<Equilibrium> {
    let mut out = vec![Equilibrium {
        value: 0.0,
        kind: EquilibriumKind::Origin,
    }];
    if eq.c() > 1.0 {
        out.push(Equilibrium {
            value: (eq.c() - 1.0).powf(1.0 / eq.order() as f64),
            kind: EquilibriumKind::Positive,
        });
    }
    out
}

/// Monic real polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharPoly {
    coefficients: Vec<f64>,
}

impl CharPoly {
    pub fn monic(coefficients: Vec<f64>) -> Result<Self> {
        match coefficients.last() {
            Some(&lead) if lead == 1.0 && coefficients.len() >= 2 => Ok(Self { coefficients }),
            _ => Err(Error::InvalidPolynomial),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
    }

    fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        self.coefficients
            .iter()
            .rev()
            .fold((zero, zero), |(p, dp), &a| (p * z + a, dp * z + p))
    }
}

/// `lambda^(k+1) - c`, the linearization at the origin.
pub fn char_poly_origin(eq: &NormalizedEquation) -> CharPoly {
    let mut coefficients = vec![0.0; eq.order() + 1];
    coefficients[0] = -eq.c();
    coefficients[eq.order()] = 1.0;
    CharPoly { coefficients }
}

/// `lambda^(k+1) + ((c-1)/c)(lambda^k + ... + lambda) - 1/c`, the
/// linearization at the positive equilibrium.
pub fn char_poly_positive(eq: &NormalizedEquation) -> Result<CharPoly> {
    let c = eq.c();
    if c <= 1.0 {
        return Err(Error::NoPositiveEquilibrium { c });
    }
    let mut coefficients = vec![(c - 1.0) / c; eq.order() + 1];
    coefficients[0] = -1.0 / c;
    coefficients[eq.order()] = 1.0;
    Ok(CharPoly { coefficients })
}

/// Roots of [`char_poly_positive`] from its factorization
/// `(lambda^(k+1) - 1)(lambda - 1/c) / (lambda - 1)`: the real root `1/c`
/// followed by the `k` nontrivial `(k+1)`-th roots of unity.
pub fn positive_eq_roots_factored(eq: &NormalizedEquation) -> Result<Vec<Complex64>> {
    let c = eq.c();
    if c <= 1.0 {
        return Err(Error::NoPositiveEquilibrium { c });
    }
    let order = eq.order() as f64;
    let mut roots = Vec::with_capacity(eq.order());
    roots.push(Complex64::new(1.0 / c, 0.0));
    roots.extend((1..eq.order()).map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / order)));
    Ok(roots)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyRoots {
    pub roots: Vec<Complex64>,
    /// `|p(root)|` for each root.
    pub residuals: Vec<f64>,
}

/// All complex roots of a monic polynomial by Aberth-Ehrlich simultaneous
/// iteration, each polished by a few Newton steps.
///
/// Every root must satisfy `|p(z)| <= tol * (1 + |z|)^degree`, otherwise
/// [`Error::ConvergenceFailure`] is returned.
pub fn poly_roots(p: &CharPoly, tol: f64) -> Result<PolyRoots> {
    let degree = p.degree();
    let mut roots = aberth(p);
    let mut residuals = Vec::with_capacity(degree);
    for z in roots.iter_mut() {
        let (polished, residual) = polish(p, *z);
        let bound = tol * (1.0 + polished.norm()).powi(degree as i32);
        if !(residual <= bound) {
            return Err(Error::ConvergenceFailure { residual, bound });
        }
        *z = polished;
        residuals.push(residual);
    }
    Ok(PolyRoots { roots, residuals })
}

fn aberth(p: &CharPoly) -> Vec<Complex64> {
    let n = p.degree();
    let coeffs = p.coefficients();
    // every root has modulus below twice the largest |a_i|^(1/(n-i))
    let radius = coeffs[..n]
        .iter()
        .enumerate()
        .map(|(i, a)| a.abs().powf(1.0 / (n - i) as f64))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    // off-axis starting angles so symmetric root sets are not hit exactly
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(radius, 2.0 * PI * (j as f64 + 0.25) / n as f64 + 0.4))
        .collect();

    for _ in 0..ABERTH_MAX_ITER {
        let mut largest_step = 0.0f64;
        for i in 0..n {
            let (value, slope) = p.eval_with_derivative(z[i]);
            if value.norm() == 0.0 {
                continue;
            }
            let ratio = value / slope;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let correction = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !correction.is_finite() {
                continue;
            }
            z[i] -= correction;
            largest_step = largest_step.max(correction.norm() / (1.0 + z[i].norm()));
        }
        if largest_step <= 4.0 * f64::EPSILON {
            break;
        }
    }
    z
}

fn polish(p: &CharPoly, mut z: Complex64) -> (Complex64, f64) {
    let mut residual = p.eval(z).norm();
    for _ in 0..NEWTON_POLISH_STEPS {
        let (value, slope) = p.eval_with_derivative(z);
        if residual == 0.0 || slope.norm() == 0.0 {
            break;
        }
        let candidate = z - value / slope;
        let r = p.eval(candidate).norm();
        if !(r < residual) {
            break;
        }
        z = candidate;
        residual = r;
    }
    (z, residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AsymptoticallyStable,
    Unstable,
    /// Some root lies within the margin of the unit circle and none is
    /// clearly outside it.
    Inconclusive,
}

/// Linearized stability from root moduli.
pub fn classify_linearization(roots: &[Complex64], margin: f64) -> Verdict {
    let max_modulus = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_modulus > 1.0 + margin {
        Verdict::Unstable
    } else if !roots.is_empty() && max_modulus < 1.0 - margin {
        Verdict::AsymptoticallyStable
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootAnalysis {
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub max_modulus: f64,
    pub verdict: Verdict,
}

impl RootAnalysis {
    pub fn new(found: PolyRoots, margin: f64) -> Self {
        let max_modulus = found.roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let verdict = classify_linearization(&found.roots, margin);
        Self {
            roots: found.roots,
            residuals: found.residuals,
            max_modulus,
            verdict,
        }
    }

    /// Finds the roots of `p` and classifies them in one go.
    pub fn of(p: &CharPoly, root_tol: f64, margin: f64) -> Result<Self> {
        Ok(Self::new(poly_roots(p, root_tol)?, margin))
    }
}

/// A scalar map with first and second derivatives.
///
/// The default derivative methods use central differences; implementors with
/// closed forms should override them.
pub trait ScalarMap {
    fn eval(&self, x: f64) -> f64;

    fn derivative(&self, x: f64) -> f64 {
        let h = f64::EPSILON.cbrt() * (1.0 + x.abs());
        (self.eval(x + h) - self.eval(x - h)) / (2.0 * h)
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let h = f64::EPSILON.powf(0.25) * (1.0 + x.abs());
        (self.eval(x + h) - 2.0 * self.eval(x) + self.eval(x - h)) / (h * h)
    }
}

impl<F: Fn(f64) -> f64> ScalarMap for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Semistability {
    SemiasymptoticallyStableFromRight,
    SemiasymptoticallyStableFromLeft,
    NotApplicable,
}

/// One-sided stability of a fixed point with unit derivative, decided by the
/// sign of the second derivative: negative attracts from the right, positive
/// from the left.
pub fn semistability_1d<M: ScalarMap + ?Sized>(f: &M, x: f64, tol: f64) -> Result<Semistability> {
    let residual = (f.eval(x) - x).abs();
    if !(residual <= tol) {
        return Err(Error::NotAFixedPoint { x, residual });
    }
    if (f.derivative(x) - 1.0).abs() > tol {
        return Ok(Semistability::NotApplicable);
    }
    let curvature = f.second_derivative(x);
    Ok(if curvature < -tol {
        Semistability::SemiasymptoticallyStableFromRight
    } else if curvature > tol {
        Semistability::SemiasymptoticallyStableFromLeft
    } else {
        Semistability::NotApplicable
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eq(c: f64, k: usize) -> NormalizedEquation {
        NormalizedEquation::new(c, k).unwrap()
    }

    fn sorted(mut roots: Vec<Complex64>) -> Vec<Complex64> {
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        roots
    }

    #[test]
    fn equilibria_examples() {
        assert_eq!(
            equilibria(&eq(0.5, 3)),
            vec![Equilibrium {
                value: 0.0,
                kind: EquilibriumKind::Origin
            }]
        );
        assert_eq!(equilibria(&eq(1.0, 2)).len(), 1);
        let e = equilibria(&eq(2.0, 1));
        assert_eq!(e[1].value, 1.0);
        let e = equilibria(&eq(5.0, 1));
        let x = e[1].value;
        assert_eq!(x, 2.0);
        assert!((x - 5.0 * x / (1.0 + x * x)).abs() < 1e-14);
    }

    #[test]
    fn origin_polynomials() {
        assert_eq!(
            char_poly_origin(&eq(2.0, 1)).coefficients(),
            &[-2.0, 0.0, 1.0]
        );
        assert_eq!(
            char_poly_origin(&eq(1.0, 2)).coefficients(),
            &[-1.0, 0.0, 0.0, 1.0]
        );
        let r = poly_roots(&char_poly_origin(&eq(0.5, 1)), DEFAULT_ROOT_TOL).unwrap();
        for z in r.roots {
            assert_relative_eq!(z.norm(), 0.5f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn positive_polynomials() {
        assert_eq!(
            char_poly_positive(&eq(2.0, 1)).unwrap().coefficients(),
            &[-0.5, 0.5, 1.0]
        );
        assert_eq!(
            char_poly_positive(&eq(2.0, 2)).unwrap().coefficients(),
            &[-0.5, 0.5, 0.5, 1.0]
        );
        assert_eq!(
            char_poly_positive(&eq(1.0, 2)),
            Err(Error::NoPositiveEquilibrium { c: 1.0 })
        );
        assert!(positive_eq_roots_factored(&eq(0.7, 2)).is_err());
    }

    #[test]
    fn factored_roots_examples() {
        let r = positive_eq_roots_factored(&eq(2.0, 1)).unwrap();
        assert_eq!(r[0], Complex64::new(0.5, 0.0));
        assert_relative_eq!(r[1].re, -1.0, epsilon = 1e-15);
        assert!(r[1].im.abs() < 1e-15);

        let p = char_poly_positive(&eq(2.0, 2)).unwrap();
        let r = positive_eq_roots_factored(&eq(2.0, 2)).unwrap();
        assert_eq!(r.len(), 3);
        for z in &r {
            assert!(p.eval(*z).norm() < 1e-14);
        }
        assert_relative_eq!(r[1].re, -0.5, epsilon = 1e-15);
        assert_relative_eq!(r[1].im, 3f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn root_finding_examples() {
        let found = |coeffs: Vec<f64>| {
            sorted(
                poly_roots(&CharPoly::monic(coeffs).unwrap(), DEFAULT_ROOT_TOL)
                    .unwrap()
                    .roots,
            )
        };
        let r = found(vec![-1.0, 0.0, 1.0]);
        assert_relative_eq!(r[0].re, -1.0, epsilon = 1e-14);
        assert_relative_eq!(r[1].re, 1.0, epsilon = 1e-14);

        let r = found(vec![-0.5, 0.5, 1.0]);
        assert_relative_eq!(r[0].re, -1.0, epsilon = 1e-14);
        assert_relative_eq!(r[1].re, 0.5, epsilon = 1e-14);

        let r = found(vec![-8.0, 0.0, 0.0, 1.0]);
        let expected = sorted(
            (0..3)
                .map(|m| Complex64::from_polar(2.0, 2.0 * PI * m as f64 / 3.0))
                .collect(),
        );
        for (a, b) in r.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }

        // repeated root
        let r = found(vec![1.0, -2.0, 1.0]);
        for z in r {
            assert!((z - 1.0).norm() < 1e-7);
        }
        // degree one
        let r = found(vec![3.0, 1.0]);
        assert_eq!(r, vec![Complex64::new(-3.0, 0.0)]);
    }

    #[test]
    fn rejects_non_monic() {
        assert_eq!(
            CharPoly::monic(vec![1.0, 2.0]),
            Err(Error::InvalidPolynomial)
        );
        assert!(CharPoly::monic(vec![1.0]).is_err());
        assert!(CharPoly::monic(vec![]).is_err());
    }

    #[test]
    fn linearization_verdicts() {
        let verdict = |p: CharPoly| {
            RootAnalysis::of(&p, DEFAULT_ROOT_TOL, DEFAULT_UNIT_MARGIN)
                .unwrap()
                .verdict
        };
        assert_eq!(
            verdict(char_poly_origin(&eq(0.5, 1))),
            Verdict::AsymptoticallyStable
        );
        assert_eq!(verdict(char_poly_origin(&eq(2.0, 1))), Verdict::Unstable);
        assert_eq!(
            verdict(char_poly_origin(&eq(1.0, 1))),
            Verdict::Inconclusive
        );
        for k in 1..5 {
            assert_eq!(
                verdict(char_poly_positive(&eq(2.0, k)).unwrap()),
                Verdict::Inconclusive
            );
        }
        assert_eq!(classify_linearization(&[], 1e-9), Verdict::Inconclusive);
    }

    #[test]
    fn semistability_examples() {
        let phi = |t: f64| t / (1.0 + t);
        assert_eq!(
            semistability_1d(&phi, 0.0, 1e-6).unwrap(),
            Semistability::SemiasymptoticallyStableFromRight
        );
        let g = |x: f64| x + x * x;
        assert_eq!(
            semistability_1d(&g, 0.0, 1e-6).unwrap(),
            Semistability::SemiasymptoticallyStableFromLeft
        );
        let h = |x: f64| 0.5 * x;
        assert_eq!(
            semistability_1d(&h, 0.0, 1e-6).unwrap(),
            Semistability::NotApplicable
        );
        // f'(0) = 1 but f''(0) = 0: third-order contact
        let cubic = |x: f64| x + x * x * x;
        assert_eq!(
            semistability_1d(&cubic, 0.0, 1e-6).unwrap(),
            Semistability::NotApplicable
        );
        assert!(matches!(
            semistability_1d(&g, 1.0, 1e-6),
            Err(Error::NotAFixedPoint { .. })
        ));
    }
}

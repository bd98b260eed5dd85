//! Laplace exponents of the two subordinators involved and the characteristic
//! exponent of the subordinate Brownian motion.
//!
//! * `ell(λ) = ln(1 + λ)`: the gamma subordinator.
//! * `phi(λ) = λ / ln(1 + λ) − 1`: its (shifted) conjugate, the subordinator
//!   driving the process studied here.
//! * `Φ(ξ) = phi(|ξ|²)`.
//!
//! Real and complex evaluations are provided; the complex ones feed the
//! contour inversion in [`crate::inversion`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Below this argument `phi` is evaluated from its Taylor series.
pub const SERIES_SWITCH: f64 = 1e-4;

// Taylor coefficients of λ/ln(1+λ) − 1 at 0 (Gregory coefficients with
// alternating sign): λ/2 − λ²/12 + λ³/24 − 19λ⁴/720 + 3λ⁵/160 − …
const PHI_SERIES: [f64; 4] = [0.5, -1.0 / 12.0, 1.0 / 24.0, -19.0 / 720.0];

fn check_positive(what: &'static str, lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: lambda,
            expected: "finite and > 0",
        })
    }
}

/// `phi(λ) = λ/ln(1+λ) − 1` for `λ > 0`.
pub fn phi(lambda: f64) -> Result<f64> {
    check_positive("phi", lambda)?;
    Ok(phi_unchecked(lambda))
}

#[inline]
pub(crate) fn phi_unchecked(lambda: f64) -> f64 {
    if lambda < SERIES_SWITCH {
        lambda * horner(&PHI_SERIES, lambda)
    } else {
        lambda / lambda.ln_1p() - 1.0
    }
}

/// `ell(λ) = ln(1+λ)` for `λ > 0`.
pub fn ell(lambda: f64) -> Result<f64> {
    check_positive("ell", lambda)?;
    Ok(lambda.ln_1p())
}

/// Characteristic exponent `Φ(ξ) = phi(|ξ|²)`, taking `|ξ|²` directly.
pub fn char_exponent(xi_norm_sq: f64) -> Result<f64> {
    if !(xi_norm_sq.is_finite() && xi_norm_sq >= 0.0) {
        return Err(Error::Domain {
            what: "char_exponent",
            value: xi_norm_sq,
            expected: "finite and >= 0",
        });
    }
    if xi_norm_sq == 0.0 {
        return Ok(0.0);
    }
    Ok(phi_unchecked(xi_norm_sq))
}

/// `(phi'(0+), −phi''(0+)) = (1/2, 1/6)`: mean and variance rate of the
/// subordinator, `E S_t = t/2`, `Var S_t = t/6`.
pub fn phi_moments() -> (f64, f64) {
    (PHI_SERIES[0], -2.0 * PHI_SERIES[1])
}

/// `phi'(λ) = 1/ln(1+λ) − λ/((1+λ) ln²(1+λ))`.
pub fn phi_derivative(lambda: f64) -> Result<f64> {
    check_positive("phi_derivative", lambda)?;
    if lambda < SERIES_SWITCH {
        let l = lambda;
        return Ok(0.5 - l / 6.0 + l * l / 8.0 - 19.0 * l * l * l / 180.0);
    }
    let lg = lambda.ln_1p();
    Ok(1.0 / lg - lambda / ((1.0 + lambda) * lg * lg))
}

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[inline]
fn horner_c(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Principal branch of `ln(1+z)`, accurate for small `|z|`.
#[inline]
pub fn ln_1p_complex(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    if y == 0.0 && x > -1.0 {
        return Complex64::new(x.ln_1p(), 0.0);
    }
    let w = 1.0 + x;
    let re = if z.norm() < 0.5 {
        0.5 * (x * (2.0 + x) + y * y).ln_1p()
    } else {
        w.hypot(y).ln()
    };
    Complex64::new(re, y.atan2(w))
}

/// `phi` continued to the plane cut along `(−∞, −1]`.
#[inline]
pub fn phi_complex(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_SWITCH {
        z * horner_c(&PHI_SERIES, z)
    } else {
        z / ln_1p_complex(z) - 1.0
    }
}

/// `phi'` continued to the cut plane.
#[inline]
pub fn phi_derivative_complex(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_SWITCH {
        return horner_c(&[0.5, -1.0 / 6.0, 1.0 / 8.0, -19.0 / 180.0], z);
    }
    let lg = ln_1p_complex(z);
    lg.inv() - z / ((1.0 + z) * lg * lg)
}

/// Which Laplace exponent a [`LaplaceExponent`] evaluates.
#[derive(Clone)]
pub enum ExponentKind {
    Phi,
    Ell,
    /// An evaluable supplied by the caller. No Bernstein-representation
    /// checks are performed on it.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ExponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentKind::Phi => f.write_str("Phi"),
            ExponentKind::Ell => f.write_str("Ell"),
            ExponentKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// An evaluable Bernstein function with its metadata.
#[derive(Debug, Clone)]
pub struct LaplaceExponent {
    pub kind: ExponentKind,
    /// Linear drift coefficient; zero for both built-in exponents.
    pub drift: f64,
}

impl LaplaceExponent {
    pub fn phi() -> Self {
        LaplaceExponent {
            kind: ExponentKind::Phi,
            drift: 0.0,
        }
    }

    pub fn ell() -> Self {
        LaplaceExponent {
            kind: ExponentKind::Ell,
            drift: 0.0,
        }
    }

    pub fn custom(drift: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        LaplaceExponent {
            kind: ExponentKind::Custom(Arc::new(f)),
            drift,
        }
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        match &self.kind {
            ExponentKind::Phi => phi(lambda),
            ExponentKind::Ell => ell(lambda),
            ExponentKind::Custom(f) => {
                check_positive("custom exponent", lambda)?;
                Ok(f(lambda))
            }
        }
    }

    /// Limit of `f(λ)` as `λ → 0+`.
    pub fn value_at_zero(&self) -> f64 {
        match self.kind {
            ExponentKind::Phi | ExponentKind::Ell => 0.0,
            ExponentKind::Custom(ref f) => f(1e-300),
        }
    }

    /// Growth of `f(λ)` as `λ → ∞`, as a human-readable note.
    pub fn behavior_at_infinity(&self) -> &'static str {
        match self.kind {
            ExponentKind::Phi => "λ/ln λ",
            ExponentKind::Ell => "ln λ",
            ExponentKind::Custom(_) => "unknown",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn phi_closed_form_values() {
        assert!((phi(E - 1.0).unwrap() - (E - 2.0)).abs() < 1e-15);
        let expected = 1.0 / std::f64::consts::LN_2 - 1.0;
        assert!((phi(1.0).unwrap() - expected).abs() < 1e-15);
        assert!((phi(1.0).unwrap() - 0.442695).abs() < 1e-6);
    }

    #[test]
    fn phi_small_argument_matches_series() {
        let l = 1e-6;
        let series = 0.5e-6 - 1e-12 / 12.0;
        assert!((phi(l).unwrap() - series).abs() < 1e-16);
        for l in [1e-3, 1e-5, 1e-8, 1e-12] {
            assert!((phi(l).unwrap() / l - 0.5).abs() < l);
        }
    }

    #[test]
    fn series_branch_is_continuous_at_switch() {
        let below = phi_unchecked(SERIES_SWITCH * (1.0 - 1e-12));
        let above = phi_unchecked(SERIES_SWITCH * (1.0 + 1e-12));
        assert!((below - above).abs() / above < 1e-10);
    }

    #[test]
    fn ell_values() {
        assert!((ell(E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(ell(1e-300).unwrap() < 1e-299);
        assert!((ell(1e6).unwrap() - 13.815511557963774).abs() < 1e-9);
    }

    #[test]
    fn char_exponent_values() {
        assert_eq!(char_exponent(0.0).unwrap(), 0.0);
        assert!((char_exponent(E - 1.0).unwrap() - (E - 2.0)).abs() < 1e-15);
        assert!((char_exponent(1.0).unwrap() - 0.442695).abs() < 1e-6);
        assert!(char_exponent(-1.0).is_err());
    }

    #[test]
    fn domain_errors() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(phi(bad).is_err());
            assert!(ell(bad).is_err());
        }
    }

    #[test]
    fn moments_rates() {
        assert_eq!(phi_moments(), (0.5, 1.0 / 6.0));
    }

    #[test]
    fn asymptote_at_infinity() {
        let l: f64 = 1e12;
        let ratio = phi(l).unwrap() * l.ln() / l;
        assert!((ratio - 1.0).abs() < 0.05);
        assert!((ratio - 1.0).abs() < 5.0 / l.ln());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for l in [1e-3, 0.5, 3.0, 1e3] {
            let h = l * 1e-5;
            let fd = (phi(l + h).unwrap() - phi(l - h).unwrap()) / (2.0 * h);
            let d = phi_derivative(l).unwrap();
            assert!((fd - d).abs() / d < 1e-7, "{l}: {fd} vs {d}");
        }
        assert!((phi_derivative(1e-9).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn complex_matches_real_on_axis() {
        for l in [1e-7, 1e-4, 0.3, 1.0, 50.0, 1e9] {
            let c = phi_complex(Complex64::new(l, 0.0));
            assert!((c.re - phi(l).unwrap()).abs() <= 1e-14 * phi(l).unwrap());
            assert_eq!(c.im, 0.0);
            let dc = phi_derivative_complex(Complex64::new(l, 0.0));
            // both branches cancel ~1e4-sized terms just above the series switch
            assert!((dc.re - phi_derivative(l).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn complex_log1p_small_argument() {
        let z = Complex64::new(1e-10, 2e-10);
        let w = ln_1p_complex(z);
        // ln(1+z) = z − z²/2 + …
        let expected = z - z * z / 2.0;
        assert!((w - expected).norm() < 1e-25);
    }

    #[test]
    fn exponent_objects() {
        let p = LaplaceExponent::phi();
        assert_eq!(p.drift, 0.0);
        assert_eq!(p.value_at_zero(), 0.0);
        assert!((p.eval(1.0).unwrap() - phi(1.0).unwrap()).abs() == 0.0);
        let c = LaplaceExponent::custom(0.0, |l| l.sqrt());
        assert!((c.eval(4.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(c.eval(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn phi_strictly_increasing(a in -12.0f64..12.0, step in 1e-3f64..2.0) {
            let l1 = 10f64.powf(a);
            let l2 = l1 * 10f64.powf(step);
            prop_assert!(phi(l1).unwrap() < phi(l2).unwrap());
        }

        #[test]
        fn phi_concave_on_geometric_triples(a in -10.0f64..10.0, q in 1.01f64..3.0) {
            let l = 10f64.powf(a);
            let (x0, x1, x2) = (l, l * q, l * q * q);
            // concavity: f(x1) >= interpolation of f(x0), f(x2) at x1
            let w = (x2 - x1) / (x2 - x0);
            let chord = w * phi(x0).unwrap() + (1.0 - w) * phi(x2).unwrap();
            prop_assert!(phi(x1).unwrap() >= chord * (1.0 - 1e-12));
        }

        #[test]
        fn conjugacy(a in -10.0f64..12.0) {
            let l = 10f64.powf(a);
            let lhs = ell(l).unwrap() * (phi(l).unwrap() + 1.0);
            prop_assert!((lhs - l).abs() <= 1e-12 * l);
        }
    }
}

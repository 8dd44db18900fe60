//! Principal-branch complex arithmetic and the zero-input clamp.
//!
//! Product units evaluate `exp(w * log x)`, so the logarithm's branch and
//! the handling of near-zero inputs fix the meaning of every power in the
//! model. The branch is the principal one, `arg(z) ∈ (-π, π]`, which is the
//! unique choice that keeps integer powers of negative reals real-valued.
//! Inputs of magnitude zero are invalid for `log`; callers push them away
//! from the origin with [`clamp_nonzero`] first.

use num_complex::Complex64;
use thiserror::Error;

/// The universal numeric carrier: a complex number with `f64` components.
pub type ComplexScalar = Complex64;

/// Default magnitude floor applied to product-unit inputs.
///
/// Small enough not to perturb trajectory data (state magnitudes are
/// O(1)–O(40)), large enough that `ln` of a clamped value stays far from
/// the edge of the `f64` range.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("logarithm of a zero-magnitude complex number")]
    LogOfZero,
    #[error("complex exponential overflowed (log-domain real part {0})")]
    Overflow(f64),
}

/// Principal-branch complex logarithm: `ln|z| + i·arg(z)`, `arg ∈ (-π, π]`.
///
/// Negative reals map to `ln|z| + iπ` regardless of the sign of a zero
/// imaginary part, so `-1 - 0.0i` does not fall onto the `-π` side of the
/// branch cut.
pub fn principal_log(z: ComplexScalar) -> Result<ComplexScalar, ComplexError> {
    let r = z.norm();
    if r == 0.0 {
        return Err(ComplexError::LogOfZero);
    }
    let arg = if z.im == 0.0 {
        // atan2(-0.0, negative) would give -π; pin the cut to +π.
        if z.re < 0.0 {
            std::f64::consts::PI
        } else {
            0.0
        }
    } else {
        z.im.atan2(z.re)
    };
    Ok(ComplexScalar::new(r.ln(), arg))
}

/// Complex power through the principal branch: `x^w = exp(w · log x)`.
pub fn complex_pow(x: ComplexScalar, w: ComplexScalar) -> Result<ComplexScalar, ComplexError> {
    let s = w * principal_log(x)?;
    let out = s.exp();
    if !out.re.is_finite() || !out.im.is_finite() {
        return Err(ComplexError::Overflow(s.re));
    }
    Ok(out)
}

/// Push `z` away from the origin so its logarithm stays finite.
///
/// Values with `|z| >= eps` pass through untouched. Smaller nonzero values
/// are scaled up to magnitude `eps` with their phase preserved. An exact
/// zero has no phase and becomes `eps + 0i`.
///
/// Idempotent: once a value has been clamped it is never changed again.
pub fn clamp_nonzero(z: ComplexScalar, eps: f64) -> ComplexScalar {
    debug_assert!(eps > 0.0);
    let r = z.norm();
    if r >= eps {
        return z;
    }
    if r == 0.0 {
        return ComplexScalar::new(eps, 0.0);
    }
    let mut out = z * (eps / r);
    // The scale can round a hair short of eps; nudge until the magnitude
    // clears the threshold so a second clamp is a no-op.
    while out.norm() < eps {
        out *= 1.0 + f64::EPSILON;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: ComplexScalar, b: ComplexScalar, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn log_of_unity_is_zero() {
        let z = principal_log(ComplexScalar::new(1.0, 0.0)).unwrap();
        assert_eq!(z, ComplexScalar::new(0.0, 0.0));
    }

    #[test]
    fn log_of_minus_one_is_i_pi() {
        let z = principal_log(ComplexScalar::new(-1.0, 0.0)).unwrap();
        assert_eq!(z.re, 0.0);
        assert_eq!(z.im, PI);
        // Same on the other side of a signed zero.
        let z = principal_log(ComplexScalar::new(-1.0, -0.0)).unwrap();
        assert_eq!(z.im, PI);
    }

    #[test]
    fn log_of_two_i() {
        let z = principal_log(ComplexScalar::new(0.0, 2.0)).unwrap();
        assert!((z.re - 2.0f64.ln()).abs() < 1e-15);
        assert!((z.im - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn log_of_zero_is_an_error() {
        assert_eq!(
            principal_log(ComplexScalar::new(0.0, 0.0)),
            Err(ComplexError::LogOfZero)
        );
    }

    #[test]
    fn pow_reproduces_integer_powers_of_negative_reals() {
        let out = complex_pow(ComplexScalar::new(-2.0, 0.0), ComplexScalar::new(2.0, 0.0)).unwrap();
        assert!(close(out, ComplexScalar::new(4.0, 0.0), 1e-12));
    }

    #[test]
    fn principal_square_root_of_minus_one_is_i() {
        let out =
            complex_pow(ComplexScalar::new(-1.0, 0.0), ComplexScalar::new(0.5, 0.0)).unwrap();
        assert!(close(out, ComplexScalar::new(0.0, 1.0), 1e-12));
    }

    #[test]
    fn pow_with_complex_exponent() {
        // exp((1+i) ln 2) = 2 (cos ln2 + i sin ln2), evaluated once with
        // 50-digit arithmetic and frozen here.
        let out = complex_pow(ComplexScalar::new(2.0, 0.0), ComplexScalar::new(1.0, 1.0)).unwrap();
        let expect = ComplexScalar::new(
            1.5384778027279442, // 2 cos(ln 2)
            1.2779225526272696, // 2 sin(ln 2)
        );
        assert!(close(out, expect, 1e-14));
    }

    #[test]
    fn pow_overflow_is_an_error() {
        let big = ComplexScalar::new(1e300, 0.0);
        let err = complex_pow(big, ComplexScalar::new(3.0, 0.0)).unwrap_err();
        assert!(matches!(err, ComplexError::Overflow(_)));
    }

    #[test]
    fn clamp_keeps_large_values() {
        let z = ComplexScalar::new(3.0, 4.0);
        assert_eq!(clamp_nonzero(z, DEFAULT_CLAMP_EPS), z);
    }

    #[test]
    fn clamp_replaces_exact_zero() {
        assert_eq!(
            clamp_nonzero(ComplexScalar::new(0.0, 0.0), DEFAULT_CLAMP_EPS),
            ComplexScalar::new(DEFAULT_CLAMP_EPS, 0.0)
        );
    }

    #[test]
    fn clamp_preserves_phase_on_negative_axis() {
        let out = clamp_nonzero(ComplexScalar::new(-1e-15, 0.0), DEFAULT_CLAMP_EPS);
        assert!(out.re < 0.0);
        assert_eq!(out.im, 0.0);
        assert!((out.re + DEFAULT_CLAMP_EPS).abs() < 1e-15 * DEFAULT_CLAMP_EPS.abs() + 1e-27);
        assert!(out.norm() >= DEFAULT_CLAMP_EPS);
    }

    proptest! {
        #[test]
        fn exp_inverts_log(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let z = ComplexScalar::new(re, im);
            prop_assume!(z.norm() >= 1e-300);
            let back = principal_log(z).unwrap().exp();
            prop_assert!((back - z).norm() <= 1e-12 * z.norm());
        }

        #[test]
        fn real_positive_base_matches_real_power(x in 1e-3f64..1e3, w in -6.0f64..6.0) {
            let out = complex_pow(ComplexScalar::new(x, 0.0), ComplexScalar::new(w, 0.0)).unwrap();
            let expect = x.powf(w);
            prop_assert!(out.im.abs() <= 1e-12);
            prop_assert!((out.re - expect).abs() <= 1e-12 * expect.abs());
        }

        #[test]
        fn real_negative_base_matches_integer_power(x in -1e2f64..-1e-2, w in -6i32..=6) {
            let out = complex_pow(ComplexScalar::new(x, 0.0), ComplexScalar::new(w as f64, 0.0)).unwrap();
            let expect = x.powi(w);
            prop_assert!((out.re - expect).abs() <= 1e-9 * expect.abs());
            prop_assert!(out.im.abs() <= 1e-9 * expect.abs());
        }

        #[test]
        fn clamp_is_idempotent(re in -1.0f64..1.0, im in -1.0f64..1.0, scale in -300.0f64..1.0) {
            let z = ComplexScalar::new(re, im) * 10f64.powf(scale);
            let once = clamp_nonzero(z, DEFAULT_CLAMP_EPS);
            let twice = clamp_nonzero(once, DEFAULT_CLAMP_EPS);
            prop_assert_eq!(once, twice);
        }
    }
}

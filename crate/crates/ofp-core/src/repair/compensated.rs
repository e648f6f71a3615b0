//! Compensated (double-double) evaluation of parameter-free expressions,
//! with a running first-order error bound.
//!
//! Taylor coefficient expressions produced by repeated symbolic
//! differentiation are often catastrophically ill-conditioned to evaluate
//! directly: quotient-rule expansions of f/g near a small expansion point
//! contain huge mutually-cancelling terms, so plain binary64 evaluation
//! loses every digit. Evaluating in double-double arithmetic (two binary64
//! words, roughly 32 significant digits) recovers the digits the final
//! binary64 coefficient needs, while staying within working-precision
//! hardware arithmetic: no arbitrary-precision library is involved.
//!
//! Each value carries an absolute error bound `err` propagated to first
//! order through every operation. The per-operation constants below are
//! empirical envelopes of the backend implementation, established by the
//! `compensated_backend` accuracy tests against high-precision references;
//! patch synthesis uses the bound to decide which coefficients carry
//! signal and which are noise.
//!
//! Three kernels of the backend library are replaced here because their
//! published versions lose accuracy:
//!
//! * division and reciprocal (their reconstruction step needs a fused
//!   multiply-add it does not use, leaving them no better than plain
//!   binary64): replaced by explicit three-step long division built on
//!   the library's correct add, subtract, and scalar-multiply kernels;
//! * exp of negative arguments (their range reduction truncates instead
//!   of rounding for negative inputs, evaluating the core polynomial up
//!   to twice outside its fitted interval): replaced by exp of the
//!   magnitude followed by the long-division reciprocal;
//! * ln (its Newton iteration calls exp of a negative value, inheriting
//!   the reduction defect for every argument above 1): replaced by the
//!   same iteration built on the corrected exp.
//!
//! Bounds assume values stay clear of the subnormal range; exp results
//! below 1e-270, where the low word degrades, carry a widened bound.

use crate::expr::{BinaryOp, Expr, UnaryOp};
use std::f64::consts::LN_2;
use thiserror::Error;
use twofloat::TwoFloat;

/// Roundoff grade of double-double add/sub/mul/sqrt and of the long
/// division implemented here.
pub const DD_EPS: f64 = 4.93e-32; // 2^-104
/// Accuracy floors of the double-double sin/cos implementations.
pub const TRIG_ABS: f64 = 2e-20;
pub const TRIG_REL: f64 = 2e-20;
/// Accuracy floors of tan (the relative term covers the reciprocal used
/// in the outer quadrants).
pub const TAN_ABS: f64 = 1e-15;
pub const TAN_REL: f64 = 1e-15;
/// Absolute floor of asin/acos, which are the backend's weakest kernels.
pub const ASIN_ABS: f64 = 2e-14;
/// Accuracy floors of atan.
pub const ATAN_ABS: f64 = 1e-16;
pub const ATAN_REL: f64 = 1e-16;
/// Relative error envelope of exp, quadratic in the range-reduced
/// argument: the core polynomial's reconstruction loses roughly
/// 2^-54 * r^2 / 2, so tiny arguments are far more accurate than the
/// worst case at |r| = ln(2)/2.
pub const EXP_QUAD: f64 = 2e-16;
/// Error envelope of ln: absolute error equals the exp envelope at the
/// range-reduced result, plus a flat floor for the Newton residual.
pub const LOG_QUAD: f64 = 2e-16;
pub const LOG_ABS: f64 = 1e-22;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CompensatedError {
    #[error("expression references a parameter; compensated evaluation is constant-only")]
    ParamPresent,
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("operation outside its real domain (log/sqrt/pow of a negative argument)")]
    DomainViolation,
}

/// A double-double value with an absolute error bound.
#[derive(Debug, Clone, Copy)]
pub struct Compensated {
    pub value: TwoFloat,
    /// First-order absolute error bound covering both inherited error and
    /// this backend's own roundoff.
    pub err: f64,
}

impl Compensated {
    fn exact(v: TwoFloat) -> Self {
        Compensated { value: v, err: 0.0 }
    }

    /// Nearest binary64 to the double-double value.
    pub fn to_f64(&self) -> f64 {
        f64::from(self.value)
    }

    /// Error bound relative to the value's magnitude (+inf at zero with
    /// nonzero error).
    pub fn rel_err(&self) -> f64 {
        let v = self.to_f64().abs();
        if self.err == 0.0 {
            0.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            self.err / v
        }
    }
}

/// Correct double-double division by three-step long division. Each step
/// uses an exact scalar multiply (fused multiply-add kernel) and the
/// error-free accurate sum, so the quotient is good to roughly 2^-104
/// relative, unlike the backend library's own division.
pub fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r1 = a - b * q1;
    let q2 = r1.hi() / b.hi();
    let r2 = r1 - b * q2;
    let q3 = r2.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

/// Correct double-double reciprocal (see `dd_div`).
pub fn dd_recip(b: TwoFloat) -> TwoFloat {
    dd_div(TwoFloat::from(1.0), b)
}

/// Exponential with correct range reduction on both sides of zero. The
/// library reduces with a truncating rounding that is only valid for
/// positive arguments; negative arguments are therefore computed as the
/// reciprocal of exp(|x|).
pub fn dd_exp(x: TwoFloat) -> TwoFloat {
    if x.hi() < 0.0 {
        let e = (-x).exp();
        if e.hi().is_infinite() {
            // exp(|x|) overflowed, so the true result underflows.
            TwoFloat::from(0.0)
        } else {
            dd_recip(e)
        }
    } else {
        x.exp()
    }
}

/// Natural logarithm by Newton iteration on the corrected exp, seeded
/// from the platform binary64 log. Returns the value and whether the
/// refinement ran; for results beyond |ln x| = 600 the correction factor
/// exp(-x0) sits too close to the subnormal range to help, so the seed
/// is returned unrefined and the caller widens the bound.
pub fn dd_ln(x: TwoFloat) -> (TwoFloat, bool) {
    let seed = x.hi().ln();
    if seed.abs() > 600.0 {
        return (TwoFloat::from(seed), false);
    }
    let mut r = TwoFloat::from(seed);
    r += x * dd_exp(-r) - 1.0;
    r += x * dd_exp(-r) - 1.0;
    (r, true)
}

/// Magnitude of the range-reduced exp argument: |u| mod ln(2), folded to
/// at most ln(2)/2. Error envelopes for exp and ln are quadratic in this.
fn exp_reduced_mag(ua: f64) -> f64 {
    if ua <= 0.5 * LN_2 {
        ua
    } else {
        (ua - (ua / LN_2).round() * LN_2).abs().min(0.5 * LN_2)
    }
}

fn abs_tf(v: TwoFloat) -> f64 {
    f64::from(v).abs()
}

fn check(v: TwoFloat) -> Result<TwoFloat, CompensatedError> {
    if v.is_valid() && f64::from(v).is_finite() {
        Ok(v)
    } else {
        Err(CompensatedError::NonFinite)
    }
}

/// Evaluates a parameter-free expression in double-double arithmetic with
/// error tracking. Literals are exact (they are binary64 values by
/// construction).
pub fn eval_compensated(e: &Expr) -> Result<Compensated, CompensatedError> {
    match e {
        Expr::Const { value, .. } => {
            if !value.is_finite() {
                return Err(CompensatedError::NonFinite);
            }
            Ok(Compensated::exact(TwoFloat::from(*value)))
        }
        Expr::Param(_) => Err(CompensatedError::ParamPresent),
        Expr::Unary(op, child) => {
            let c = eval_compensated(child)?;
            apply_unary(*op, c)
        }
        Expr::Binary(op, l, r) => {
            let a = eval_compensated(l)?;
            let b = eval_compensated(r)?;
            apply_binary(*op, a, b)
        }
    }
}

fn apply_unary(op: UnaryOp, c: Compensated) -> Result<Compensated, CompensatedError> {
    let u = c.value;
    let ua = abs_tf(u);
    match op {
        UnaryOp::Neg => Ok(Compensated {
            value: -u,
            err: c.err,
        }),
        UnaryOp::Sin => {
            let r = check(u.sin())?;
            // |d sin/du| <= 1; the last term covers argument reduction of
            // large inputs.
            Ok(Compensated {
                value: r,
                err: c.err + TRIG_ABS + abs_tf(r) * TRIG_REL + ua * 2.0 * DD_EPS,
            })
        }
        UnaryOp::Cos => {
            let r = check(u.cos())?;
            Ok(Compensated {
                value: r,
                err: c.err + TRIG_ABS + abs_tf(r) * TRIG_REL + ua * 2.0 * DD_EPS,
            })
        }
        UnaryOp::Tan => {
            let r = check(u.tan())?;
            let t = abs_tf(r);
            let deriv = 1.0 + t * t;
            Ok(Compensated {
                value: r,
                err: c.err * deriv + TAN_ABS + t * TAN_REL + ua * 2.0 * DD_EPS,
            })
        }
        UnaryOp::Asin => {
            if ua > 1.0 {
                return Err(CompensatedError::DomainViolation);
            }
            let r = check(u.asin())?;
            let denom = (1.0 - ua * ua).sqrt();
            let deriv = if denom == 0.0 {
                f64::INFINITY
            } else {
                1.0 / denom
            };
            Ok(Compensated {
                value: r,
                err: c.err * deriv + ASIN_ABS,
            })
        }
        UnaryOp::Acos => {
            if ua > 1.0 {
                return Err(CompensatedError::DomainViolation);
            }
            let r = check(u.acos())?;
            let denom = (1.0 - ua * ua).sqrt();
            let deriv = if denom == 0.0 {
                f64::INFINITY
            } else {
                1.0 / denom
            };
            Ok(Compensated {
                value: r,
                err: c.err * deriv + ASIN_ABS,
            })
        }
        UnaryOp::Atan => {
            let r = check(u.atan())?;
            Ok(Compensated {
                value: r,
                err: c.err + ATAN_ABS + abs_tf(r) * ATAN_REL,
            })
        }
        UnaryOp::Exp => {
            let r = check(dd_exp(u))?;
            let ra = abs_tf(r);
            let r_hat = exp_reduced_mag(ua);
            let mut err = ra * (c.err + EXP_QUAD * r_hat * r_hat + 10.0 * DD_EPS);
            if ra == 0.0 {
                // Underflowed to zero; the true value is below the least
                // subnormal.
                err = f64::MIN_POSITIVE;
            } else if ra < 1e-270 {
                // The low word is at or near subnormal scale and loses
                // precision, so only binary64 accuracy remains.
                err += ra * 2.3e-16;
            }
            Ok(Compensated { value: r, err })
        }
        UnaryOp::Log => {
            if f64::from(u) <= 0.0 {
                return Err(CompensatedError::DomainViolation);
            }
            let (r, refined) = dd_ln(u);
            let r = check(r)?;
            let ra = abs_tf(r);
            let r_hat = exp_reduced_mag(ra);
            let mut err =
                c.err / ua + LOG_ABS + LOG_QUAD * r_hat * r_hat + ra * 4.0 * DD_EPS;
            if !refined {
                // Seed-only result: good to binary64, not double-double.
                err += ra * 5e-16;
            }
            Ok(Compensated { value: r, err })
        }
        UnaryOp::Sqrt => {
            if f64::from(u) < 0.0 {
                return Err(CompensatedError::DomainViolation);
            }
            let r = check(u.sqrt())?;
            let ra = abs_tf(r);
            let propagated = if ra == 0.0 {
                c.err.sqrt()
            } else {
                c.err / (2.0 * ra)
            };
            Ok(Compensated {
                value: r,
                err: propagated + ra * 2.0 * DD_EPS,
            })
        }
    }
}

fn apply_binary(
    op: BinaryOp,
    a: Compensated,
    b: Compensated,
) -> Result<Compensated, CompensatedError> {
    let (u, v) = (a.value, b.value);
    let (ua, va) = (abs_tf(u), abs_tf(v));
    match op {
        BinaryOp::Add => {
            let r = check(u + v)?;
            Ok(Compensated {
                value: r,
                err: a.err + b.err + abs_tf(r) * DD_EPS,
            })
        }
        BinaryOp::Sub => {
            let r = check(u - v)?;
            Ok(Compensated {
                value: r,
                err: a.err + b.err + abs_tf(r) * DD_EPS,
            })
        }
        BinaryOp::Mul => {
            let r = check(u * v)?;
            Ok(Compensated {
                value: r,
                err: a.err * va + b.err * ua + abs_tf(r) * DD_EPS,
            })
        }
        BinaryOp::Div => {
            if va == 0.0 {
                return Err(CompensatedError::NonFinite);
            }
            let r = check(dd_div(u, v))?;
            let ra = abs_tf(r);
            Ok(Compensated {
                value: r,
                err: (a.err + b.err * ra) / va + ra * 4.0 * DD_EPS,
            })
        }
        BinaryOp::Pow => pow(a, b),
    }
}

/// pow with exact-arithmetic fast paths for integer and half-integer
/// exponents (powering by squaring, square root, and the long-division
/// reciprocal) and an exp(v*ln(u)) general path for positive bases. The
/// composition is explicit so the tracked error model matches the actual
/// computation.
fn pow(a: Compensated, b: Compensated) -> Result<Compensated, CompensatedError> {
    let v = f64::from(b.value);
    let u = f64::from(a.value);
    let two_v = 2.0 * v;
    let integral = b.err == 0.0 && v.fract() == 0.0 && v.abs() <= i32::MAX as f64;
    let half_integral =
        b.err == 0.0 && !integral && two_v.fract() == 0.0 && two_v.abs() <= i32::MAX as f64;
    if integral || half_integral {
        if u == 0.0 {
            let value = if v == 0.0 {
                TwoFloat::from(1.0)
            } else if v > 0.0 {
                TwoFloat::from(0.0)
            } else {
                return Err(CompensatedError::NonFinite);
            };
            return Ok(Compensated { value, err: 0.0 });
        }
        let (base, n) = if integral {
            (a.value, v.abs() as i32)
        } else {
            if u < 0.0 {
                return Err(CompensatedError::DomainViolation);
            }
            (a.value.sqrt(), two_v.abs() as i32)
        };
        let p = check(base.powi(n))?;
        let r = if v >= 0.0 { p } else { check(dd_recip(p))? };
        let ra = abs_tf(r);
        // d(u^v)/du = v*u^(v-1) = v*r/u.
        let propagated = a.err * v.abs() * ra / ua_nonzero(u);
        // Covers the sqrt, the multiplication chain, and the reciprocal.
        let op_count = 8.0 + n as f64;
        return Ok(Compensated {
            value: r,
            err: propagated + ra * op_count * DD_EPS,
        });
    }
    if u <= 0.0 {
        return Err(CompensatedError::DomainViolation);
    }
    let ln_u = apply_unary(UnaryOp::Log, a)?;
    let w = apply_binary(BinaryOp::Mul, b, ln_u)?;
    apply_unary(UnaryOp::Exp, w)
}

fn ua_nonzero(u: f64) -> f64 {
    debug_assert!(u != 0.0);
    u.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(hi: f64, lo: f64) -> TwoFloat {
        TwoFloat::new_add(hi, lo)
    }

    fn err_against(v: TwoFloat, hi: f64, lo: f64) -> f64 {
        ((v.hi() - hi) + (v.lo() - lo)).abs()
    }

    #[test]
    fn long_division_recovers_the_residual() {
        // 1/3 in double-double; the library's own division returns lo == 0.
        let q = dd_div(TwoFloat::from(1.0), TwoFloat::from(3.0));
        let diff = err_against(q, 0.3333333333333333, 1.850371707708594e-17);
        assert!(diff < 1e-32, "1/3 off by {diff:e}");

        let broken = TwoFloat::from(1.0) / TwoFloat::from(3.0);
        assert_eq!(
            broken.lo(),
            0.0,
            "library division got fixed upstream; revisit dd_div"
        );
    }

    #[test]
    fn long_division_handles_double_double_operands() {
        // (1 - cos 0.02) / 0.02^2 against a 250-bit reference.
        let s = TwoFloat::from(1.0) - TwoFloat::from(0.02).cos();
        let d = TwoFloat::from(0.02) * TwoFloat::from(0.02);
        let q = dd_div(s, d);
        let diff = err_against(q, 0.49998333355555397, 2.305841341390501e-18);
        assert!(diff < 1e-21, "versine ratio off by {diff:e}");
    }

    #[test]
    fn reciprocal_and_negative_powers() {
        let r = dd_recip(TwoFloat::from(7.0));
        let diff = err_against(r, 0.14285714285714285, 7.93016446160826e-18);
        assert!(diff < 1e-33, "1/7 off by {diff:e}");

        // x^-2 through the fast path must match 1/(x*x) done by hand.
        let x = Compensated::exact(TwoFloat::from(3.0));
        let e = Compensated::exact(TwoFloat::from(-2.0));
        let got = pow(x, e).unwrap();
        let manual = dd_recip(TwoFloat::from(3.0) * TwoFloat::from(3.0));
        assert_eq!(f64::from(got.value), f64::from(manual));
        let diff = ((got.value.hi() - manual.hi()) + (got.value.lo() - manual.lo())).abs();
        assert!(diff < 1e-34);
    }

    #[test]
    fn half_integer_powers_use_sqrt() {
        // 5^1.5 = 5*sqrt(5); reference from 250-bit arithmetic.
        let x = Compensated::exact(TwoFloat::from(5.0));
        let e = Compensated::exact(TwoFloat::from(1.5));
        let got = pow(x, e).unwrap();
        let diff = err_against(got.value, 11.180339887498949, -5.432115203682506e-16);
        assert!(diff < 1e-30, "5^1.5 off by {diff:e}");
        // Error model stays at arithmetic grade, far below the
        // transcendental floors the general path would charge.
        assert!(got.err < 1e-29, "err {:e}", got.err);
    }

    #[test]
    fn exp_of_negative_arguments_is_rescued() {
        // The library's own exp reduces negative arguments with a
        // truncating rounding and evaluates its polynomial outside the
        // fitted range; exp(-1) comes out wrong in the 18th digit.
        let lib = TwoFloat::from(-1.0).exp();
        let lib_err = err_against(lib, 0.36787944117144233, -1.2428753672788363e-17);
        assert!(
            lib_err > 1e-20,
            "library exp(-1) got fixed upstream ({lib_err:e}); revisit dd_exp"
        );

        let ours = dd_exp(TwoFloat::from(-1.0));
        let our_err = err_against(ours, 0.36787944117144233, -1.2428753672788363e-17);
        assert!(our_err < 1e-18, "dd_exp(-1) off by {our_err:e}");
    }

    #[test]
    fn ln_above_one_is_rescued() {
        // ln calls exp of a negative value internally, inheriting the
        // reduction defect: the library's ln(2) is wrong in the 13th
        // digit and ln(10) in the 12th.
        let lib = TwoFloat::from(2.0).ln();
        let lib_err = err_against(lib, 0.6931471805599453, 2.3190468138462996e-17);
        assert!(
            lib_err > 1e-16,
            "library ln(2) got fixed upstream ({lib_err:e}); revisit dd_ln"
        );

        let (two, refined) = dd_ln(TwoFloat::from(2.0));
        assert!(refined);
        let e2 = err_against(two, 0.6931471805599453, 2.3190468138462996e-17);
        assert!(e2 < 1e-18, "dd_ln(2) off by {e2:e}");

        let (ten, refined) = dd_ln(TwoFloat::from(10.0));
        assert!(refined);
        let e10 = err_against(ten, 2.302585092994046, -2.1707562233822494e-16);
        assert!(e10 < 1e-18, "dd_ln(10) off by {e10:e}");
    }
}

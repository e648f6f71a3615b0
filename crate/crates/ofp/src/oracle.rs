//! Extended-precision evaluation and relative-error measurement.
//!
//! This module is the measurement side of the toolkit: it computes ground
//! truth at a few hundred bits and grades binary64 results against it. It
//! is deliberately quarantined — detection and repair live in `ofp-core`,
//! which does not depend on this crate or on any extended-precision
//! arithmetic, so a patch can never owe its accuracy to the oracle.
//!
//! Every arithmetic step is correctly rounded at the configured precision
//! (round to nearest, ties to even), so results are deterministic across
//! runs and threads.

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};
use ofp_core::expr::{format_f64_shortest, BinaryOp, Expr, FunctionDef, UnaryOp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default significand precision in bits.
pub const DEFAULT_PRECISION_BITS: usize = 256;

/// Smallest accepted significand precision in bits.
pub const MIN_PRECISION_BITS: usize = 128;

const RM: RoundingMode = RoundingMode::ToEven;

/// How input coordinates (and literal constants) are lifted to extended
/// precision.
///
/// The two readings answer different questions. `Binary64Exact` treats
/// inputs as the exact binary64 values a program actually holds, which is
/// what error measurement of a binary64 computation needs. `DecimalLiteral`
/// treats each value as the shortest decimal string that rounds to it, the
/// reading under which entering `3.14159265358973` means that decimal
/// number exactly; the gap between the two readings is itself a rounding
/// error story worth measuring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputInterpretation {
    /// Inputs and constants are the exact binary64 values.
    Binary64Exact,
    /// Inputs and constants are re-read as decimal literals at extended
    /// precision: a constant uses its original source text when the parser
    /// kept one, otherwise (and for point coordinates) the shortest decimal
    /// form that round-trips the binary64 value.
    DecimalLiteral,
}

/// Precision and input-interpretation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub precision_bits: usize,
    pub interpretation: InputInterpretation,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            precision_bits: DEFAULT_PRECISION_BITS,
            interpretation: InputInterpretation::Binary64Exact,
        }
    }
}

impl OracleConfig {
    /// Default interpretation at the given precision.
    pub fn with_bits(precision_bits: usize) -> Self {
        OracleConfig {
            precision_bits,
            ..OracleConfig::default()
        }
    }

    /// Decimal-literal interpretation at the default precision.
    pub fn decimal_literal() -> Self {
        OracleConfig {
            interpretation: InputInterpretation::DecimalLiteral,
            ..OracleConfig::default()
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("precision {bits} bits is below the minimum of {MIN_PRECISION_BITS}")]
    PrecisionTooLow { bits: usize },
    #[error("point arity {got} does not match function arity {want}")]
    ArityMismatch { got: usize, want: usize },
    #[error("non-finite value at `{op}` during extended evaluation")]
    NonFinite { op: String },
    #[error("constant text {text:?} is not a valid decimal literal")]
    BadLiteral { text: String },
}

/// Error of an approximation against an extended-precision truth.
///
/// Relative error is the primary measure; when the truth is exactly zero
/// the quotient is undefined, so the absolute error is reported instead,
/// tagged so callers can keep it out of relative-error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ErrorMeasure {
    /// |approx - truth| / |truth|.
    Relative(f64),
    /// |approx - truth|, reported because truth == 0.
    AbsoluteOnly(f64),
}

impl ErrorMeasure {
    pub fn value(self) -> f64 {
        match self {
            ErrorMeasure::Relative(v) | ErrorMeasure::AbsoluteOnly(v) => v,
        }
    }

    pub fn is_absolute_only(self) -> bool {
        matches!(self, ErrorMeasure::AbsoluteOnly(_))
    }
}

/// A reusable extended-precision evaluator.
///
/// Holds the constants cache (π and friends at working precision), which
/// is expensive to rebuild; reuse one `Oracle` per thread for sweeps.
pub struct Oracle {
    cfg: OracleConfig,
    cc: Consts,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Result<Self, OracleError> {
        if cfg.precision_bits < MIN_PRECISION_BITS {
            return Err(OracleError::PrecisionTooLow {
                bits: cfg.precision_bits,
            });
        }
        let cc = Consts::new().expect("constants cache allocates");
        Ok(Oracle { cfg, cc })
    }

    pub fn config(&self) -> OracleConfig {
        self.cfg
    }

    /// Evaluates `f` at `point` with every intermediate at the configured
    /// precision, correctly rounded.
    pub fn eval(&mut self, f: &FunctionDef, point: &[f64]) -> Result<BigFloat, OracleError> {
        if point.len() != f.arity() {
            return Err(OracleError::ArityMismatch {
                got: point.len(),
                want: f.arity(),
            });
        }
        let args: Vec<BigFloat> = point
            .iter()
            .map(|&x| self.lift(x, None))
            .collect::<Result<_, _>>()?;
        self.eval_expr(&f.body, &args)
    }

    /// `eval` rounded to the nearest binary64.
    pub fn eval_f64(&mut self, f: &FunctionDef, point: &[f64]) -> Result<f64, OracleError> {
        let v = self.eval(f, point)?;
        Ok(self.to_f64(&v))
    }

    /// Rounds an extended value to the nearest binary64 (ties to even),
    /// via the full-precision decimal form and the standard correctly
    /// rounded decimal parser.
    pub fn to_f64(&mut self, v: &BigFloat) -> f64 {
        big_to_f64(v, &mut self.cc)
    }

    /// |approx - truth| / |truth| in extended precision, rounded to
    /// binary64; absolute error (tagged) when truth is zero.
    pub fn relative_error(&mut self, approx: f64, truth: &BigFloat) -> ErrorMeasure {
        let p = self.cfg.precision_bits;
        let a = BigFloat::from_f64(approx, p);
        let diff = abs(&a.sub(truth, p, RM));
        if truth.is_zero() {
            return ErrorMeasure::AbsoluteOnly(big_to_f64(&diff, &mut self.cc));
        }
        let rel = diff.div(&abs(truth), p, RM);
        ErrorMeasure::Relative(big_to_f64(&rel, &mut self.cc))
    }

    fn lift(&mut self, x: f64, text: Option<&str>) -> Result<BigFloat, OracleError> {
        let p = self.cfg.precision_bits;
        match self.cfg.interpretation {
            InputInterpretation::Binary64Exact => Ok(BigFloat::from_f64(x, p)),
            InputInterpretation::DecimalLiteral => {
                let owned;
                let s = match text {
                    Some(t) => t,
                    None => {
                        owned = format_f64_shortest(x);
                        &owned
                    }
                };
                let v = BigFloat::parse(s, Radix::Dec, p, RM, &mut self.cc);
                if v.is_nan() {
                    return Err(OracleError::BadLiteral { text: s.to_string() });
                }
                Ok(v)
            }
        }
    }

    fn eval_expr(&mut self, e: &Expr, args: &[BigFloat]) -> Result<BigFloat, OracleError> {
        let p = self.cfg.precision_bits;
        let v = match e {
            Expr::Const { text, value } => self.lift(*value, text.as_deref())?,
            Expr::Param(i) => args[*i].clone(),
            Expr::Unary(op, child) => {
                let u = self.eval_expr(child, args)?;
                let cc = &mut self.cc;
                match op {
                    UnaryOp::Neg => u.neg(),
                    UnaryOp::Sin => u.sin(p, RM, cc),
                    UnaryOp::Cos => u.cos(p, RM, cc),
                    UnaryOp::Tan => u.tan(p, RM, cc),
                    UnaryOp::Exp => u.exp(p, RM, cc),
                    UnaryOp::Log => u.ln(p, RM, cc),
                    UnaryOp::Sqrt => u.sqrt(p, RM),
                    UnaryOp::Asin => u.asin(p, RM, cc),
                    UnaryOp::Acos => u.acos(p, RM, cc),
                    UnaryOp::Atan => u.atan(p, RM, cc),
                }
            }
            Expr::Binary(op, l, r) => {
                let u = self.eval_expr(l, args)?;
                let w = self.eval_expr(r, args)?;
                match op {
                    BinaryOp::Add => u.add(&w, p, RM),
                    BinaryOp::Sub => u.sub(&w, p, RM),
                    BinaryOp::Mul => u.mul(&w, p, RM),
                    BinaryOp::Div => u.div(&w, p, RM),
                    BinaryOp::Pow => self.pow(&u, &w),
                }
            }
        };
        if v.is_nan() || v.is_inf() {
            return Err(OracleError::NonFinite {
                op: op_name(e).to_string(),
            });
        }
        Ok(v)
    }

    /// Power with the binary64 `powf` conventions the working evaluator
    /// uses: a negative base with an integral exponent is legal and takes
    /// its sign from the exponent's parity; anything**0 is 1.
    fn pow(&mut self, base: &BigFloat, exponent: &BigFloat) -> BigFloat {
        let p = self.cfg.precision_bits;
        if exponent.is_zero() {
            return BigFloat::from_f64(1.0, p);
        }
        if base.is_negative() && exponent.is_int() {
            let mag = abs(base).pow(exponent, p, RM, &mut self.cc);
            let two = BigFloat::from_f64(2.0, p);
            let odd = !exponent.rem(&two).is_zero();
            return if odd { mag.neg() } else { mag };
        }
        base.pow(exponent, p, RM, &mut self.cc)
    }
}

fn abs(v: &BigFloat) -> BigFloat {
    let mut a = v.clone();
    a.set_sign(Sign::Pos);
    a
}

fn big_to_f64(v: &BigFloat, cc: &mut Consts) -> f64 {
    if v.is_nan() {
        return f64::NAN;
    }
    if v.is_inf_pos() {
        return f64::INFINITY;
    }
    if v.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    if v.is_zero() {
        return 0.0;
    }
    // The full-precision decimal form carries far more digits than the
    // 17 binary64 needs, and the standard parser rounds it correctly, so
    // the composition is the nearest binary64 except when the extended
    // value sits within its own last-digit slack of a rounding boundary —
    // immaterial at >= 128 bits against binary64's 53.
    let s = v
        .format(Radix::Dec, RM, cc)
        .expect("finite value formats");
    s.parse::<f64>().expect("decimal form parses")
}

fn op_name(e: &Expr) -> &'static str {
    match e {
        Expr::Const { .. } => "const",
        Expr::Param(_) => "param",
        Expr::Unary(op, _) => op.name(),
        Expr::Binary(op, _, _) => op.symbol(),
    }
}

/// One-shot evaluation with a fresh constants cache. Prefer a reused
/// [`Oracle`] in loops.
pub fn eval_extended(
    f: &FunctionDef,
    point: &[f64],
    cfg: OracleConfig,
) -> Result<BigFloat, OracleError> {
    Oracle::new(cfg)?.eval(f, point)
}

/// One-shot `eval_extended` rounded to binary64.
pub fn eval_extended_f64(
    f: &FunctionDef,
    point: &[f64],
    cfg: OracleConfig,
) -> Result<f64, OracleError> {
    Oracle::new(cfg)?.eval_f64(f, point)
}

/// One-shot relative error of `approx` against the extended evaluation of
/// `f` at `point`.
pub fn relative_error_at(
    f: &FunctionDef,
    point: &[f64],
    approx: f64,
    cfg: OracleConfig,
) -> Result<ErrorMeasure, OracleError> {
    let mut o = Oracle::new(cfg)?;
    let truth = o.eval(f, point)?;
    Ok(o.relative_error(approx, &truth))
}

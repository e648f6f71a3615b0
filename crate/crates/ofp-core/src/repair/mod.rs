//! Taylor-series patch synthesis in working precision.
//!
//! A patch replaces an ill-conditioned function over a small validity
//! region with a polynomial in the offset from an expansion point. The
//! polynomial's terms differ sharply in magnitude, so its Horner
//! evaluation is free of the catastrophic cancellation that ruined the
//! original expression. Synthesis never consults an extended-precision
//! oracle: coefficients come from symbolic derivatives evaluated either in
//! plain binary64 (when they depend on non-expanded parameters) or in
//! compensated double-double arithmetic (see [`compensated`]).

pub mod compensated;

use crate::autodiff::{differentiate, simplify};
use crate::detect::{atomic_conditions, DEFAULT_THETA_ATOMIC};
use crate::expr::{
    eval_working, format_f64_shortest, pretty_print, BinaryOp, Expr, FunctionDef, ParamDecl,
    TraceOp,
};
use compensated::{eval_compensated, CompensatedError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on retained Taylor terms.
pub const MAX_TERMS: usize = 10;

/// Binary64 relative roundoff, used as the error grade of coefficients
/// evaluated through plain binary64 (parameter-dependent ones).
const F64_EPS: f64 = 2.220_446_049_250_313e-16;

#[derive(Debug, Clone, Error)]
pub enum RepairError {
    #[error("Taylor expansion inapplicable at expansion point: derivative order {order} non-finite")]
    ExpansionDiverges { order: usize },
    #[error("constant term irreducible in working precision")]
    IrreducibleConstant,
    #[error("coefficient evaluation noise exceeds the accuracy budget")]
    CoefficientNoise,
    #[error("patch domain exceeded: |offset| {delta:e} > validity radius {radius:e}")]
    OutsideValidity { delta: f64, radius: f64 },
    #[error("point moves a coordinate the patch holds fixed")]
    FixedCoordMismatch,
    #[error("no viable expansion point for the region")]
    NoViableExpansion,
}

/// How the order-0 term was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantTermMode {
    /// c0 kept as an ordinary coefficient.
    Kept,
    /// c0 proven structurally zero after substituting the expansion point;
    /// the patch omits order 0 entirely, sidestepping its cancellation.
    AnalyticallyCancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchFlag {
    /// Term magnitudes failed the non-increasing check at the validity
    /// boundary.
    MagnitudeCheckFailed,
    /// The derivative node cap stopped synthesis early; the patch carries
    /// fewer terms than the radius alone would allow.
    Degraded,
    /// Trailing coefficients were dropped because their evaluation error
    /// bound swamped their value (noise, not signal).
    NoiseTruncated,
}

/// One retained Taylor term.
#[derive(Debug, Clone)]
pub struct PatchCoefficient {
    pub order: usize,
    /// Symbolic f^(k)(a)/k! with the expansion variable already fixed at
    /// the expansion point; non-expanded parameters stay symbolic.
    pub expr: Expr,
    /// Working-precision value at the patch's fixed coordinates.
    pub value: f64,
    /// True when `expr` still references parameters; such coefficients are
    /// emitted symbolically and `value` binds them at the fixed point.
    pub symbolic: bool,
    /// Absolute error bound of `value` from the evaluating backend.
    pub err: f64,
}

/// A working-precision Taylor patch: f(a + delta) ~= sum c_k delta^k for
/// |delta| <= radius, evaluated by Horner's rule highest order first.
#[derive(Debug, Clone)]
pub struct TaylorPatch {
    pub source_name: String,
    /// Expansion parameter index.
    pub var: usize,
    /// Full expansion point; coordinates other than `var` are the patch's
    /// fixed values.
    pub expansion_point: Vec<f64>,
    /// Retained terms in ascending order; order 0 is absent in
    /// analytically-cancelled mode.
    pub coefficients: Vec<PatchCoefficient>,
    /// Validity radius around the expansion point.
    pub radius: f64,
    pub constant_mode: ConstantTermMode,
    pub flags: Vec<PatchFlag>,
    /// Parameter declarations of the source function, for emission.
    pub params: Vec<ParamDecl>,
}

impl TaylorPatch {
    /// Number of retained terms.
    pub fn n_terms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn has_flag(&self, flag: PatchFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn coefficient(&self, order: usize) -> Option<&PatchCoefficient> {
        self.coefficients.iter().find(|c| c.order == order)
    }
}

/// Knobs for `synthesize_patch_with`.
#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Cancellation flag threshold for the constant term (add/sub atomic
    /// conditions of f at the expansion point).
    pub theta_atomic: f64,
    /// Node budget for repeated symbolic differentiation.
    pub node_cap: usize,
    /// A coefficient is treated as signal only when its magnitude exceeds
    /// `noise_safety` times its error bound (exact zeros are structural
    /// and always kept).
    pub noise_safety: f64,
    /// Accumulated coefficient error over the validity region must stay
    /// below `health_tol` times the dominant term's magnitude.
    pub health_tol: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            theta_atomic: DEFAULT_THETA_ATOMIC,
            node_cap: crate::autodiff::DEFAULT_NODE_CAP,
            noise_safety: 4.0,
            health_tol: 1e-13,
        }
    }
}

/// Smallest term count n >= 1 such that radius + radius^n == radius in
/// binary64 (the n-th power falls below the radius's rounding
/// granularity), clamped to [1, 10].
pub fn term_cap(radius: f64) -> usize {
    assert!(radius > 0.0 && radius.is_finite(), "radius must be positive");
    for n in 1..=MAX_TERMS as i32 {
        if radius + radius.powi(n) == radius {
            return n as usize;
        }
    }
    MAX_TERMS
}

fn factorial(k: usize) -> f64 {
    (1..=k as u64).product::<u64>().max(1) as f64
}

/// Synthesizes a Taylor patch of `f` in parameter `var` around `point`
/// (the expansion coordinate is `point[var]`; other coordinates are held
/// fixed), valid for offsets up to `radius`.
///
/// The term count is `term_cap(radius)` (orders 0..cap-1), reduced when
/// the derivative node cap halts differentiation (flag `Degraded`) or when
/// trailing coefficients are evaluation noise (flag `NoiseTruncated`).
/// The constant term is dropped only when its cancellation is flagged and
/// simplification proves it structurally zero; a flagged constant term
/// without a structural proof must survive compensated evaluation with a
/// healthy error bound, else synthesis fails rather than emit a silently
/// inaccurate patch.
pub fn synthesize_patch(
    f: &FunctionDef,
    point: &[f64],
    var: usize,
    radius: f64,
) -> Result<TaylorPatch, RepairError> {
    synthesize_patch_with(f, point, var, radius, &SynthesisConfig::default())
}

/// `synthesize_patch` with every knob exposed.
pub fn synthesize_patch_with(
    f: &FunctionDef,
    point: &[f64],
    var: usize,
    radius: f64,
    cfg: &SynthesisConfig,
) -> Result<TaylorPatch, RepairError> {
    assert_eq!(point.len(), f.arity(), "point arity mismatch");
    assert!(var < f.arity(), "var index out of range");
    assert!(radius > 0.0, "radius must be positive");

    let cap = term_cap(radius);
    let a = point[var];
    let mut flags = Vec::new();

    // Constant-term cancellation signal: add/sub atomic conditions of the
    // original expression at the expansion point. (Other formulas can blow
    // up for exact reasons, e.g. pow(0, k); cancellation lives in add/sub.)
    let (_, trace) = eval_working(f, point);
    let c0_flagged = !trace.nonfinite
        && atomic_conditions(&trace)
            .iter()
            .filter(|r| matches!(r.op, TraceOp::Binary(BinaryOp::Add | BinaryOp::Sub)))
            .map(|r| r.max_condition())
            .fold(0.0, f64::max)
            >= cfg.theta_atomic;

    let mut constant_mode = ConstantTermMode::Kept;
    let mut coefficients: Vec<PatchCoefficient> = Vec::new();
    let mut deriv = f.clone();
    for k in 0..cap {
        if k > 0 {
            deriv = differentiate(&deriv, var);
            if deriv.body.node_count() > cfg.node_cap {
                flags.push(PatchFlag::Degraded);
                break;
            }
        }
        let substituted = deriv.body.substitute(var, &Expr::constant(a));
        let scaled = if k >= 2 {
            Expr::div(substituted, Expr::constant(factorial(k)))
        } else {
            substituted
        };
        let expr = simplify(&scaled);

        if k == 0 && c0_flagged && expr.is_const_bits(0.0) {
            constant_mode = ConstantTermMode::AnalyticallyCancelled;
            continue;
        }

        let symbolic = expr.min_arity() > 0;
        let (value, err) = if symbolic {
            let bound = FunctionDef {
                name: format!("{}_c{k}", f.name),
                params: f.params.clone(),
                body: expr.clone(),
            };
            let v = eval_working(&bound, point).0;
            if !v.is_finite() {
                return Err(RepairError::ExpansionDiverges { order: k });
            }
            (v, v.abs() * F64_EPS)
        } else {
            match eval_compensated(&expr) {
                Ok(c) => {
                    let v = c.to_f64();
                    if !v.is_finite() {
                        return Err(RepairError::ExpansionDiverges { order: k });
                    }
                    (v, c.err)
                }
                Err(CompensatedError::NonFinite | CompensatedError::DomainViolation) => {
                    return Err(RepairError::ExpansionDiverges { order: k });
                }
                Err(CompensatedError::ParamPresent) => unreachable!("checked param-free"),
            }
        };

        if k == 0 && c0_flagged {
            // Cancellation without a structural proof: the compensated
            // value must be trustworthy or the patch would be silently bad.
            if !symbolic && value != 0.0 && err > cfg.health_tol * value.abs() {
                return Err(RepairError::IrreducibleConstant);
            }
            if symbolic {
                return Err(RepairError::IrreducibleConstant);
            }
        }

        coefficients.push(PatchCoefficient {
            order: k,
            expr,
            value,
            symbolic,
            err,
        });
    }

    // Noise truncation: from the first non-constant coefficient whose
    // value is indistinguishable from its own error bound, everything
    // after is evaluation noise. Exact zeros are structural and kept.
    if let Some(cut) = coefficients
        .iter()
        .position(|c| c.order > 0 && c.value != 0.0 && c.value.abs() < cfg.noise_safety * c.err)
    {
        coefficients.truncate(cut);
        flags.push(PatchFlag::NoiseTruncated);
    }

    if coefficients.is_empty() {
        return Err(RepairError::CoefficientNoise);
    }

    // Health gate: total coefficient-error contribution at the validity
    // boundary must be negligible against the dominant term.
    let dominant = coefficients
        .iter()
        .map(|c| c.value.abs() * radius.powi(c.order as i32))
        .fold(0.0, f64::max);
    let total_err: f64 = coefficients
        .iter()
        .map(|c| c.err * radius.powi(c.order as i32))
        .sum();
    if dominant > 0.0 && total_err > cfg.health_tol * dominant {
        return Err(RepairError::CoefficientNoise);
    }

    // Magnitude separation at the boundary: term magnitudes must be
    // non-increasing across consecutive nonzero orders, else flag.
    let nonzero: Vec<(usize, f64)> = coefficients
        .iter()
        .filter(|c| c.value != 0.0)
        .map(|c| (c.order, c.value.abs()))
        .collect();
    let monotone = nonzero.windows(2).all(|w| {
        let (i, ci) = w[0];
        let (j, cj) = w[1];
        cj * radius.powi((j - i) as i32) <= ci
    });
    if !monotone {
        flags.push(PatchFlag::MagnitudeCheckFailed);
    }

    Ok(TaylorPatch {
        source_name: f.name.clone(),
        var,
        expansion_point: point.to_vec(),
        coefficients,
        radius,
        constant_mode,
        flags,
        params: f.params.clone(),
    })
}

/// Evaluates the patch at `point`. Coordinates other than the expansion
/// variable must equal the patch's fixed values, and the offset must lie
/// within the validity radius.
///
/// Sparse Horner, highest order first; zero-valued structural
/// coefficients contribute no operation, exactly as in the emitted
/// source, so this routine and re-parsed emitted source agree bit for
/// bit.
pub fn eval_patch(p: &TaylorPatch, point: &[f64]) -> Result<f64, RepairError> {
    assert_eq!(point.len(), p.expansion_point.len(), "point arity mismatch");
    for (i, (x, fixed)) in point.iter().zip(&p.expansion_point).enumerate() {
        if i != p.var && x != fixed {
            return Err(RepairError::FixedCoordMismatch);
        }
    }
    let delta = point[p.var] - p.expansion_point[p.var];
    if !(delta.abs() <= p.radius) {
        return Err(RepairError::OutsideValidity {
            delta: delta.abs(),
            radius: p.radius,
        });
    }
    Ok(horner(p, delta))
}

fn horner(p: &TaylorPatch, delta: f64) -> f64 {
    let nz: Vec<(usize, f64)> = p
        .coefficients
        .iter()
        .filter(|c| c.value != 0.0)
        .map(|c| (c.order, c.value))
        .collect();
    let Some(&(_, top)) = nz.last() else {
        return 0.0;
    };
    let mut acc = top;
    for w in nz.windows(2).rev() {
        let (lo_order, lo_value) = w[0];
        let (hi_order, _) = w[1];
        for _ in 0..hi_order - lo_order {
            acc *= delta;
        }
        acc += lo_value;
    }
    for _ in 0..nz[0].0 {
        acc *= delta;
    }
    acc
}

/// Splits a leading sign off a coefficient expression so Horner steps emit
/// `acc*d - |c|` instead of `acc*d + -|c|`; negation is exact, so the
/// evaluated bits are unchanged.
fn split_sign(e: &Expr) -> (bool, Expr) {
    match e {
        Expr::Unary(crate::expr::UnaryOp::Neg, inner) => (true, (**inner).clone()),
        Expr::Const { value, .. } if value.is_sign_negative() => (true, Expr::constant(-value)),
        _ => (false, e.clone()),
    }
}

/// The patch as a standalone function definition named
/// `<source>_patched`, body in the exact sparse-Horner shape `eval_patch`
/// uses. Numeric coefficients appear as shortest-round-trip decimal
/// literals; parameter-dependent ones appear symbolically.
pub fn patch_function(p: &TaylorPatch) -> FunctionDef {
    let a = p.expansion_point[p.var];
    let delta = if a == 0.0 {
        Expr::Param(p.var)
    } else {
        Expr::sub(Expr::Param(p.var), literal(a))
    };
    let nz: Vec<&PatchCoefficient> = p.coefficients.iter().filter(|c| c.value != 0.0).collect();
    let body = if nz.is_empty() {
        Expr::constant(0.0)
    } else {
        let term = |c: &PatchCoefficient| -> Expr {
            if c.symbolic {
                c.expr.clone()
            } else {
                literal(c.value)
            }
        };
        let mut acc = term(nz.last().unwrap());
        for idx in (0..nz.len() - 1).rev() {
            for _ in 0..nz[idx + 1].order - nz[idx].order {
                acc = Expr::mul(acc, delta.clone());
            }
            let (neg, magnitude) = split_sign(&term(nz[idx]));
            acc = if neg {
                Expr::sub(acc, magnitude)
            } else {
                Expr::add(acc, magnitude)
            };
        }
        for _ in 0..nz[0].order {
            acc = Expr::mul(acc, delta.clone());
        }
        acc
    };
    FunctionDef {
        name: format!("{}_patched", p.source_name),
        params: p.params.clone(),
        body,
    }
}

/// Emits the patch as DSL source. Re-parsing and evaluating the emitted
/// function reproduces `eval_patch` bit for bit at every in-radius point.
pub fn emit_patch_source(p: &TaylorPatch) -> String {
    pretty_print(&patch_function(p))
}

fn literal(v: f64) -> Expr {
    Expr::Const {
        text: Some(format_f64_shortest(v).into_boxed_str()),
        value: v,
    }
}

/// Expansion-point selection for a region: tries the region midpoint
/// first, then slides outward by whole multiples of the radius (2, -2, 4,
/// -4), growing the validity radius to keep covering the region, until
/// synthesis succeeds. Taylor expansion is inapplicable exactly at
/// removable singularities (0/0 at the midpoint); a short slide lands on a
/// regular point whose enlarged disk still contains the region.
pub fn choose_expansion(
    f: &FunctionDef,
    fixed_point: &[f64],
    var: usize,
    radius: f64,
) -> Result<(TaylorPatch, f64), RepairError> {
    choose_expansion_with(f, fixed_point, var, radius, &SynthesisConfig::default())
}

/// `choose_expansion` with synthesis knobs exposed. Returns the patch and
/// the slide multiple actually used.
pub fn choose_expansion_with(
    f: &FunctionDef,
    fixed_point: &[f64],
    var: usize,
    radius: f64,
    cfg: &SynthesisConfig,
) -> Result<(TaylorPatch, f64), RepairError> {
    let mid = fixed_point[var];
    let mut last = RepairError::NoViableExpansion;
    for s in [0.0, 2.0, -2.0, 4.0, -4.0] {
        let a = mid + s * radius;
        // Widen the validity radius so that, after rounding, every
        // representable x in [mid - radius, mid + radius] satisfies
        // |x - a| <= r_p. Subtraction is monotone, so checking the two
        // interval endpoints suffices.
        let r_p = (radius * (1.0 + s.abs()))
            .max((mid - radius - a).abs())
            .max((mid + radius - a).abs());
        let dom = &f.params[var].domain;
        if !dom.contains(a - r_p) || !dom.contains(a + r_p) {
            continue;
        }
        let mut point = fixed_point.to_vec();
        point[var] = a;
        match synthesize_patch_with(f, &point, var, r_p, cfg) {
            Ok(patch) => return Ok((patch, s)),
            Err(e @ (RepairError::ExpansionDiverges { .. } | RepairError::IrreducibleConstant))
            | Err(e @ RepairError::CoefficientNoise) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

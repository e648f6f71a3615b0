//! Symbolic differentiation for Taylor coefficients, conservative
//! simplification, and forward finite differences.
//!
//! Derivatives are emitted in power form (`v^-2` rather than nested
//! quotients) so repeated differentiation keeps expressions flat instead of
//! compounding denominators. Simplification applies a fixed terminating
//! rewrite set bottom-up to a local fixpoint; constant folding is performed
//! only when the binary64 operation is exact, so a tree that simplifies to
//! the literal 0 is a genuine real-arithmetic zero (given its constants),
//! never a rounding artifact.

use crate::expr::{
    eval_working, BinaryOp, Expr, FunctionDef, UnaryOp,
};
use thiserror::Error;

/// Default node budget for repeated differentiation.
pub const DEFAULT_NODE_CAP: usize = 50_000;

#[derive(Debug, Clone, Error)]
pub enum AutodiffError {
    #[error("expression grew past {cap} nodes after derivative order {order} ({nodes} nodes)")]
    NodeCapExceeded {
        order: usize,
        nodes: usize,
        cap: usize,
    },
    #[error("derivative unavailable at point: non-finite function evaluation")]
    DerivativeUnavailable,
}

/// Exact symbolic derivative of `f` with respect to the parameter at
/// `var`, simplified.
pub fn differentiate(f: &FunctionDef, var: usize) -> FunctionDef {
    assert!(var < f.arity(), "var index out of range");
    let body = simplify(&d(&f.body, var));
    FunctionDef {
        name: format!("{}_d{}", f.name, f.params[var].name),
        params: f.params.clone(),
        body,
    }
}

/// n-fold `differentiate` with simplification between applications and a
/// node cap; exceeding the cap fails cleanly so patch synthesis can degrade
/// to fewer terms.
pub fn nth_derivative(
    f: &FunctionDef,
    var: usize,
    n: usize,
    node_cap: usize,
) -> Result<FunctionDef, AutodiffError> {
    assert!(n >= 1, "derivative order must be >= 1");
    assert!(var < f.arity(), "var index out of range");
    let mut body = f.body.clone();
    for order in 1..=n {
        body = simplify(&d(&body, var));
        let nodes = body.node_count();
        if nodes > node_cap {
            return Err(AutodiffError::NodeCapExceeded {
                order,
                nodes,
                cap: node_cap,
            });
        }
    }
    Ok(FunctionDef {
        name: format!("{}_d{}_{n}", f.name, f.params[var].name),
        params: f.params.clone(),
        body,
    })
}

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

/// Core derivative rules. Chain factors are emitted as `outer'(u) * du`;
/// the product rule as `du*v + u*dv`. These orders make linearity
/// (`d(a*f + b*g) = a*df + b*dg`) hold structurally after simplification.
fn d(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Const { .. } => c(0.0),
        Expr::Param(i) => c(if *i == var { 1.0 } else { 0.0 }),
        Expr::Unary(op, u) => {
            let du = d(u, var);
            let u = (**u).clone();
            match op {
                UnaryOp::Neg => Expr::neg(du),
                UnaryOp::Sin => Expr::mul(Expr::unary(UnaryOp::Cos, u), du),
                UnaryOp::Cos => Expr::mul(Expr::neg(Expr::unary(UnaryOp::Sin, u)), du),
                // 1/cos^2
                UnaryOp::Tan => Expr::mul(Expr::pow(Expr::unary(UnaryOp::Cos, u), c(-2.0)), du),
                // (1 - u^2)^-1/2
                UnaryOp::Asin => Expr::mul(
                    Expr::pow(Expr::sub(c(1.0), Expr::pow(u, c(2.0))), c(-0.5)),
                    du,
                ),
                UnaryOp::Acos => Expr::neg(Expr::mul(
                    Expr::pow(Expr::sub(c(1.0), Expr::pow(u, c(2.0))), c(-0.5)),
                    du,
                )),
                // (1 + u^2)^-1
                UnaryOp::Atan => Expr::mul(
                    Expr::pow(Expr::add(c(1.0), Expr::pow(u, c(2.0))), c(-1.0)),
                    du,
                ),
                UnaryOp::Exp => Expr::mul(Expr::unary(UnaryOp::Exp, u), du),
                UnaryOp::Log => Expr::mul(Expr::pow(u, c(-1.0)), du),
                UnaryOp::Sqrt => Expr::mul(Expr::mul(c(0.5), Expr::pow(u, c(-0.5))), du),
            }
        }
        Expr::Binary(op, l, r) => {
            match op {
                BinaryOp::Add => Expr::add(d(l, var), d(r, var)),
                BinaryOp::Sub => Expr::sub(d(l, var), d(r, var)),
                BinaryOp::Mul => Expr::add(
                    Expr::mul(d(l, var), (**r).clone()),
                    Expr::mul((**l).clone(), d(r, var)),
                ),
                BinaryOp::Div => {
                    let du = d(l, var);
                    if !r.references_param(var) {
                        // d(u/k) = du/k keeps constant denominators flat.
                        Expr::div(du, (**r).clone())
                    } else {
                        // du/v - u*dv*v^-2
                        let dv = d(r, var);
                        Expr::sub(
                            Expr::div(du, (**r).clone()),
                            Expr::mul(
                                Expr::mul((**l).clone(), dv),
                                Expr::pow((**r).clone(), c(-2.0)),
                            ),
                        )
                    }
                }
                BinaryOp::Pow => {
                    let du = d(l, var);
                    match r.as_const() {
                        Some(k) if !r.references_param(var) => {
                            // Power rule: k * u^(k-1) * du.
                            Expr::mul(
                                Expr::mul(c(k), Expr::pow((**l).clone(), c(k - 1.0))),
                                du,
                            )
                        }
                        _ if !r.references_param(var) => {
                            // Constant (but non-literal) exponent: same rule
                            // with the exponent expression inline.
                            Expr::mul(
                                Expr::mul(
                                    (**r).clone(),
                                    Expr::pow(
                                        (**l).clone(),
                                        Expr::sub((**r).clone(), c(1.0)),
                                    ),
                                ),
                                du,
                            )
                        }
                        _ => {
                            // Variable exponent: u^v * (dv*log(u) + v*du/u).
                            let dv = d(r, var);
                            Expr::mul(
                                Expr::pow((**l).clone(), (**r).clone()),
                                Expr::add(
                                    Expr::mul(dv, Expr::unary(UnaryOp::Log, (**l).clone())),
                                    Expr::mul(
                                        (**r).clone(),
                                        Expr::div(du, (**l).clone()),
                                    ),
                                ),
                            )
                        }
                    }
                }
            }
        }
    }
}

/// Two-sum residual: exact error of the rounded sum `a + b`.
fn two_sum_err(a: f64, b: f64) -> f64 {
    let s = a + b;
    let bp = s - a;
    (a - (s - bp)) + (b - bp)
}

fn add_is_exact(a: f64, b: f64) -> bool {
    let s = a + b;
    s.is_finite() && two_sum_err(a, b) == 0.0
}

fn mul_is_exact(a: f64, b: f64) -> bool {
    let p = a * b;
    p.is_finite() && a.mul_add(b, -p) == 0.0
}

fn div_is_exact(a: f64, b: f64) -> bool {
    if b == 0.0 {
        return false;
    }
    let q = a / b;
    q.is_finite() && q.mul_add(b, -a) == 0.0
}

/// Unary constant folds that are exact identities of real arithmetic and of
/// binary64: safe in every context.
fn fold_unary_exact(op: UnaryOp, v: f64) -> Option<f64> {
    match op {
        UnaryOp::Neg => Some(-v),
        UnaryOp::Sin | UnaryOp::Tan | UnaryOp::Asin | UnaryOp::Atan if v == 0.0 => Some(v),
        UnaryOp::Cos | UnaryOp::Exp if v == 0.0 => Some(1.0),
        UnaryOp::Log if v == 1.0 => Some(0.0),
        UnaryOp::Acos if v == 1.0 => Some(0.0),
        UnaryOp::Sqrt if v == 0.0 || v == 1.0 => Some(v),
        _ => None,
    }
}

/// Conservative, terminating simplification. Bottom-up; per node the rule
/// set is applied to a local fixpoint. Idempotent:
/// `simplify(simplify(e))` is structurally `simplify(e)`.
///
/// Rules: exact-only constant folding; x+0, 0+x, x-0, x*1, 1*x, x*0, 0*x,
/// 0/x (x a nonzero literal), x^1, x^0 -> 1, neg(neg(x)) -> x, and
/// x - x -> 0 when both subtrees are structurally identical.
/// Semantics-preserving over the reals; not required to preserve the
/// original's binary64 rounding.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const { .. } | Expr::Param(_) => e.clone(),
        Expr::Unary(op, child) => rewrite_unary(*op, simplify(child)),
        Expr::Binary(op, l, r) => rewrite_binary(*op, simplify(l), simplify(r)),
    }
}

/// Folded constants normalize -0.0 to +0.0 so algebraically equal
/// rewrite routes land on one canonical node; simplification does not
/// preserve the sign of zero.
fn folded(v: f64) -> Expr {
    Expr::constant(if v == 0.0 { 0.0 } else { v })
}

fn rewrite_unary(op: UnaryOp, child: Expr) -> Expr {
    if let Some(v) = child.as_const() {
        if let Some(f) = fold_unary_exact(op, v) {
            return folded(f);
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = &child {
            return (**inner).clone();
        }
    }
    Expr::unary(op, child)
}

fn rewrite_binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    let lc = l.as_const();
    let rc = r.as_const();
    match op {
        BinaryOp::Add => {
            if let (Some(a), Some(b)) = (lc, rc) {
                if add_is_exact(a, b) {
                    return folded(a + b);
                }
            }
            if r.is_const_bits(0.0) {
                return l;
            }
            if l.is_const_bits(0.0) {
                return r;
            }
            Expr::binary(op, l, r)
        }
        BinaryOp::Sub => {
            if l.structurally_eq(&r) {
                return Expr::constant(0.0);
            }
            if let (Some(a), Some(b)) = (lc, rc) {
                if add_is_exact(a, -b) {
                    return folded(a - b);
                }
            }
            if r.is_const_bits(0.0) {
                return l;
            }
            Expr::binary(op, l, r)
        }
        BinaryOp::Mul => {
            if let (Some(a), Some(b)) = (lc, rc) {
                if mul_is_exact(a, b) {
                    return folded(a * b);
                }
            }
            if l.is_const_bits(0.0) || r.is_const_bits(0.0) {
                return Expr::constant(0.0);
            }
            if rc == Some(1.0) {
                return l;
            }
            if lc == Some(1.0) {
                return r;
            }
            Expr::binary(op, l, r)
        }
        BinaryOp::Div => {
            if let (Some(a), Some(b)) = (lc, rc) {
                if div_is_exact(a, b) {
                    return folded(a / b);
                }
            }
            if l.is_const_bits(0.0) {
                if let Some(b) = rc {
                    if b != 0.0 && b.is_finite() {
                        return Expr::constant(0.0);
                    }
                }
            }
            Expr::binary(op, l, r)
        }
        BinaryOp::Pow => {
            if rc == Some(1.0) {
                return l;
            }
            // IEEE pow(x, 0) is 1 for every x, so this is value-preserving.
            if r.is_const_bits(0.0) {
                return Expr::constant(1.0);
            }
            Expr::binary(op, l, r)
        }
    }
}

/// Default forward-difference step: max(|x|, 1) * 2^-26.
pub fn default_step(x: f64) -> f64 {
    x.abs().max(1.0) * 2f64.powi(-26)
}

/// Forward-difference derivative of `f` w.r.t. `var` at `point`, in
/// binary64 via `eval_working`. The quotient divides by the exactly
/// realized step `(x+h) - x`.
pub fn finite_diff(
    f: &FunctionDef,
    point: &[f64],
    var: usize,
    h: f64,
) -> Result<f64, AutodiffError> {
    finite_diff_with(f, point, var, h, |f, p| eval_working(f, p).0)
}

/// Forward difference over an arbitrary binary64-valued evaluator. The
/// measurement layer passes an oracle-backed evaluator here when finite
/// differences of correctly rounded values are needed; detection always
/// uses the working evaluator.
pub fn finite_diff_with<E>(
    f: &FunctionDef,
    point: &[f64],
    var: usize,
    h: f64,
    eval: E,
) -> Result<f64, AutodiffError>
where
    E: Fn(&FunctionDef, &[f64]) -> f64,
{
    assert!(h != 0.0, "step must be nonzero");
    let x = point[var];
    let x_h = x + h;
    let realized = x_h - x;
    if realized == 0.0 || !x_h.is_finite() {
        return Err(AutodiffError::DerivativeUnavailable);
    }
    let f0 = eval(f, point);
    let mut shifted = point.to_vec();
    shifted[var] = x_h;
    let f1 = eval(f, &shifted);
    if !f0.is_finite() || !f1.is_finite() {
        return Err(AutodiffError::DerivativeUnavailable);
    }
    Ok((f1 - f0) / realized)
}

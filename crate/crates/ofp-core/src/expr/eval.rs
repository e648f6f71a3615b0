//! Bit-exact binary64 evaluation with per-operation tracing.
//!
//! Evaluation order is strict post-order (left, right, node), every
//! intermediate is a rounded binary64, and no fused operations are used,
//! so results are reproducible bit-for-bit across runs and threads.

use super::{BinaryOp, Expr, FunctionDef, UnaryOp};
use serde::{Deserialize, Serialize};

/// Operation kind of one trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "op")]
pub enum TraceOp {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// One operation record: node id (post-order index within the tree),
/// operand values as evaluated, and the rounded binary64 result.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub node_id: usize,
    pub op: TraceOp,
    pub operands: Vec<f64>,
    pub result: f64,
}

/// Ordered record of one working-precision evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalTrace {
    pub records: Vec<TraceRecord>,
    pub value: f64,
    /// Set when any operation produced a non-finite value.
    pub nonfinite: bool,
}

impl EvalTrace {
    /// Recompute every record from its stored operands and compare
    /// bit-for-bit; returns true when the whole trace (and the final value)
    /// reproduces exactly.
    pub fn replays_bit_exact(&self) -> bool {
        for rec in &self.records {
            let recomputed = apply_op(rec.op, &rec.operands);
            if recomputed.to_bits() != rec.result.to_bits() {
                return false;
            }
        }
        match self.records.last() {
            Some(last) => last.result.to_bits() == self.value.to_bits(),
            None => true,
        }
    }
}

/// Apply one operation in binary64, exactly as the evaluator does.
pub fn apply_op(op: TraceOp, operands: &[f64]) -> f64 {
    match op {
        TraceOp::Unary(u) => apply_unary(u, operands[0]),
        TraceOp::Binary(b) => apply_binary(b, operands[0], operands[1]),
    }
}

#[inline]
pub(crate) fn apply_unary(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Asin => x.asin(),
        UnaryOp::Acos => x.acos(),
        UnaryOp::Atan => x.atan(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Sqrt => x.sqrt(),
    }
}

#[inline]
pub(crate) fn apply_binary(op: BinaryOp, l: f64, r: f64) -> f64 {
    match op {
        BinaryOp::Add => l + r,
        BinaryOp::Sub => l - r,
        BinaryOp::Mul => l * r,
        BinaryOp::Div => l / r,
        // Always the library powf: keeps `^` semantics uniform regardless of
        // exponent value. Documented as potentially 1-ulp platform-variant.
        BinaryOp::Pow => l.powf(r),
    }
}

/// Evaluate a function at a point, recording every operation.
///
/// The point must have one finite coordinate per declared parameter.
pub fn eval_working(f: &FunctionDef, point: &[f64]) -> (f64, EvalTrace) {
    assert_eq!(
        point.len(),
        f.arity(),
        "point arity {} != function arity {}",
        point.len(),
        f.arity()
    );
    debug_assert!(point.iter().all(|x| x.is_finite()));
    eval_expr_working(&f.body, point)
}

/// Evaluate a bare expression at a point (params resolved by index).
pub fn eval_expr_working(expr: &Expr, point: &[f64]) -> (f64, EvalTrace) {
    let mut trace = EvalTrace {
        records: Vec::with_capacity(expr.op_count()),
        value: f64::NAN,
        nonfinite: false,
    };
    let mut next_id = 0usize;
    let value = eval_rec(expr, point, &mut trace, &mut next_id);
    trace.value = value;
    (value, trace)
}

fn eval_rec(expr: &Expr, point: &[f64], trace: &mut EvalTrace, next_id: &mut usize) -> f64 {
    match expr {
        Expr::Const { value, .. } => {
            *next_id += 1;
            *value
        }
        Expr::Param(i) => {
            *next_id += 1;
            point[*i]
        }
        Expr::Unary(op, child) => {
            let x = eval_rec(child, point, trace, next_id);
            let id = *next_id;
            *next_id += 1;
            let result = apply_unary(*op, x);
            if !result.is_finite() {
                trace.nonfinite = true;
            }
            trace.records.push(TraceRecord {
                node_id: id,
                op: TraceOp::Unary(*op),
                operands: vec![x],
                result,
            });
            result
        }
        Expr::Binary(op, left, right) => {
            let l = eval_rec(left, point, trace, next_id);
            let r = eval_rec(right, point, trace, next_id);
            let id = *next_id;
            *next_id += 1;
            let result = apply_binary(*op, l, r);
            if !result.is_finite() {
                trace.nonfinite = true;
            }
            trace.records.push(TraceRecord {
                node_id: id,
                op: TraceOp::Binary(*op),
                operands: vec![l, r],
                result,
            });
            result
        }
    }
}

/// Evaluate without tracing; returns `None` when the result is non-finite.
/// Convenience for search and sampling loops.
pub fn finite_value_or_flag(f: &FunctionDef, point: &[f64]) -> Option<f64> {
    let v = eval_untr(&f.body, point);
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

/// Untraced evaluation; identical arithmetic to the traced path.
pub(crate) fn eval_untr(expr: &Expr, point: &[f64]) -> f64 {
    match expr {
        Expr::Const { value, .. } => *value,
        Expr::Param(i) => point[*i],
        Expr::Unary(op, c) => apply_unary(*op, eval_untr(c, point)),
        Expr::Binary(op, l, r) => {
            let lv = eval_untr(l, point);
            let rv = eval_untr(r, point);
            apply_binary(*op, lv, rv)
        }
    }
}

//! Expression AST, `.fpdsl` parser, pretty-printer, and the traced
//! bit-exact binary64 evaluator.
//!
//! An expression tree is immutable after construction. Node identity is
//! positional: a node's id is its post-order visit index within the tree,
//! so identical structure always yields identical ids and traces can
//! address operations without storing ids in the nodes themselves.

mod eval;
mod parse;
mod print;

pub use eval::{
    apply_op, eval_expr_working, eval_working, finite_value_or_flag, EvalTrace, TraceOp,
    TraceRecord,
};
pub use parse::{parse, parse_file, ParseError};
pub use print::{format_f64_shortest, pretty_print, pretty_print_expr};

use serde::{Deserialize, Serialize};

/// Unary operations supported by the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    /// Name used in function-call syntax; `neg` has no call form.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Asin => "asin",
            UnaryOp::Acos => "acos",
            UnaryOp::Atan => "atan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "asin" => UnaryOp::Asin,
            "acos" => UnaryOp::Acos,
            "atan" => UnaryOp::Atan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }
}

/// Binary operations supported by the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Expression tree node.
///
/// Constants keep the source text they were parsed from (when any) so that
/// printing preserves the author's literal and so the oracle can interpret
/// a literal as its exact decimal value rather than its binary64 rounding.
#[derive(Debug, Clone)]
pub enum Expr {
    Const { text: Option<Box<str>>, value: f64 },
    Param(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const { text: None, value }
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Expr {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, l, r)
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, l, r)
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, l, r)
    }

    pub fn div(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, l, r)
    }

    pub fn pow(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Pow, l, r)
    }

    pub fn neg(child: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, child)
    }

    /// Constant value if this node is a constant.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    /// True when this node is a constant bit-identical to `v`
    /// (distinguishes 0.0 from -0.0).
    pub fn is_const_bits(&self, v: f64) -> bool {
        matches!(self, Expr::Const { value, .. } if value.to_bits() == v.to_bits())
    }

    /// Structural equality: same shape, ops, param indices, and bitwise
    /// constant values. Constant source text is ignored.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        match (self, other) {
            (Expr::Const { value: a, .. }, Expr::Const { value: b, .. }) => {
                a.to_bits() == b.to_bits()
            }
            (Expr::Param(a), Expr::Param(b)) => a == b,
            (Expr::Unary(op_a, a), Expr::Unary(op_b, b)) => op_a == op_b && a.structurally_eq(b),
            (Expr::Binary(op_a, al, ar), Expr::Binary(op_b, bl, br)) => {
                op_a == op_b && al.structurally_eq(bl) && ar.structurally_eq(br)
            }
            _ => false,
        }
    }

    /// Total node count (all kinds).
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const { .. } | Expr::Param(_) => 1,
            Expr::Unary(_, c) => 1 + c.node_count(),
            Expr::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Number of operation (unary + binary) nodes; equals the record count
    /// of a trace produced by evaluating this expression.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Const { .. } | Expr::Param(_) => 0,
            Expr::Unary(_, c) => 1 + c.op_count(),
            Expr::Binary(_, l, r) => 1 + l.op_count() + r.op_count(),
        }
    }

    /// True when the parameter with the given index occurs in the tree.
    pub fn references_param(&self, index: usize) -> bool {
        match self {
            Expr::Const { .. } => false,
            Expr::Param(i) => *i == index,
            Expr::Unary(_, c) => c.references_param(index),
            Expr::Binary(_, l, r) => l.references_param(index) || r.references_param(index),
        }
    }

    /// Largest referenced param index plus one, or 0 when no params occur.
    pub fn min_arity(&self) -> usize {
        match self {
            Expr::Const { .. } => 0,
            Expr::Param(i) => i + 1,
            Expr::Unary(_, c) => c.min_arity(),
            Expr::Binary(_, l, r) => l.min_arity().max(r.min_arity()),
        }
    }

    /// Replace every occurrence of the given param with an expression.
    pub fn substitute(&self, index: usize, replacement: &Expr) -> Expr {
        match self {
            Expr::Const { .. } => self.clone(),
            Expr::Param(i) => {
                if *i == index {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Unary(op, c) => Expr::unary(*op, c.substitute(index, replacement)),
            Expr::Binary(op, l, r) => Expr::binary(
                *op,
                l.substitute(index, replacement),
                r.substitute(index, replacement),
            ),
        }
    }
}

/// One parameter's admissible interval. Infinite bounds are exclusive.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
    pub hi_inclusive: bool,
}

impl Domain {
    /// The default domain: all of the real line.
    pub fn unbounded() -> Domain {
        Domain {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_inclusive: false,
            hi_inclusive: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Domain {
        Domain {
            lo,
            hi,
            lo_inclusive: true,
            hi_inclusive: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_inclusive { x >= self.lo } else { x > self.lo };
        let below = if self.hi_inclusive { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_unbounded_default(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

/// A named parameter with its domain.
#[derive(Debug, Clone, Serialize)]
pub struct ParamDecl {
    pub name: String,
    pub domain: Domain,
}

/// A parsed function: the unit of analysis for the whole pipeline.
#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub body: Expr,
}

impl FunctionDef {
    /// Construct directly (used by patch emission and tests); validates the
    /// same invariants the parser enforces.
    pub fn new(name: &str, params: Vec<ParamDecl>, body: Expr) -> Result<FunctionDef, String> {
        let mut seen = std::collections::HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(format!("duplicate parameter name `{}`", p.name));
            }
            if !(p.domain.lo <= p.domain.hi) {
                return Err(format!("parameter `{}` has an empty domain", p.name));
            }
        }
        if body.min_arity() > params.len() {
            return Err("body references an undeclared parameter index".to_string());
        }
        Ok(FunctionDef {
            name: name.to_string(),
            params,
            body,
        })
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// True when every coordinate lies inside its declared domain.
    pub fn point_in_domain(&self, point: &[f64]) -> bool {
        point.len() == self.arity()
            && point
                .iter()
                .zip(&self.params)
                .all(|(x, p)| p.domain.contains(*x))
    }

    pub fn structurally_eq(&self, other: &FunctionDef) -> bool {
        self.name == other.name
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name)
            && self.body.structurally_eq(&other.body)
    }
}

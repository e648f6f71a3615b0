//! Pretty-printer: emits `.fpdsl` source that re-parses to a structurally
//! identical AST, with constants in shortest round-trip form.

use super::{BinaryOp, Domain, Expr, FunctionDef, UnaryOp};
use std::fmt::Write;

/// Shortest decimal string that round-trips to the same binary64 value.
/// Rust's float formatter produces exactly this.
pub fn format_f64_shortest(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        let s = format!("{v}");
        debug_assert!(
            v.is_nan() || s.parse::<f64>().unwrap().to_bits() == v.to_bits(),
            "shortest form failed to round-trip: {v:?}"
        );
        s
    }
}

// Precedence levels for parenthesization decisions.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn binary_prec(op: BinaryOp) -> u8 {
    match op {
        BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
        BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
        BinaryOp::Pow => PREC_POW,
    }
}

/// Render an expression using the given parameter names.
pub fn pretty_print_expr(expr: &Expr, param_names: &[&str]) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, param_names, 0);
    out
}

fn write_expr(out: &mut String, expr: &Expr, names: &[&str], min_prec: u8) {
    match expr {
        Expr::Const { text, value } => {
            let printed = match text {
                Some(t) => t.to_string(),
                None => format_f64_shortest(*value),
            };
            // A negative constant needs parens in contexts that bind
            // tighter than unary minus (e.g. `x * (-1)` or `(-2)^3`).
            if printed.starts_with('-') && min_prec > PREC_NEG {
                let _ = write!(out, "({printed})");
            } else {
                out.push_str(&printed);
            }
        }
        Expr::Param(i) => out.push_str(names[*i]),
        Expr::Unary(UnaryOp::Neg, child) => {
            let needs_parens = min_prec > PREC_NEG;
            if needs_parens {
                out.push('(');
            }
            out.push('-');
            // A bare literal right after unary minus would re-parse as a
            // single negative constant; parenthesize to keep the Neg node.
            if matches!(child.as_ref(), Expr::Const { .. }) {
                out.push('(');
                write_expr(out, child, names, 0);
                out.push(')');
            } else {
                // `^` binds tighter than unary minus, so the child may be a
                // power without parens; anything looser needs them.
                write_expr(out, child, names, PREC_NEG + 1);
            }
            if needs_parens {
                out.push(')');
            }
        }
        Expr::Unary(op, child) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(out, child, names, 0);
            out.push(')');
        }
        Expr::Binary(op, left, right) => {
            let prec = binary_prec(*op);
            let needs_parens = prec < min_prec;
            if needs_parens {
                out.push('(');
            }
            match op {
                BinaryOp::Pow => {
                    // Right-associative: parenthesize a left child at the
                    // same level, allow it on the right.
                    write_expr(out, left, names, PREC_ATOM);
                    out.push('^');
                    write_expr(out, right, names, PREC_POW);
                }
                _ => {
                    write_expr(out, left, names, prec);
                    let spaced = prec == PREC_ADD;
                    if spaced {
                        let _ = write!(out, " {} ", op.symbol());
                    } else {
                        out.push_str(op.symbol());
                    }
                    // Left-associative: the right child must bind tighter.
                    write_expr(out, right, names, prec + 1);
                }
            }
            if needs_parens {
                out.push(')');
            }
        }
    }
}

fn write_domain(out: &mut String, d: &Domain) {
    let open = if d.lo_inclusive { '[' } else { '(' };
    let close = if d.hi_inclusive { ']' } else { ')' };
    let _ = write!(
        out,
        "{}{}, {}{}",
        open,
        format_f64_shortest(d.lo),
        format_f64_shortest(d.hi),
        close
    );
}

/// Render a full `func` declaration.
pub fn pretty_print(f: &FunctionDef) -> String {
    let mut out = String::new();
    let _ = write!(out, "func {}(", f.name);
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&p.name);
        if !p.domain.is_unbounded_default() {
            out.push_str(" in ");
            write_domain(&mut out, &p.domain);
        }
    }
    out.push_str(") = ");
    let names: Vec<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
    write_expr(&mut out, &f.body, &names, 0);
    out
}

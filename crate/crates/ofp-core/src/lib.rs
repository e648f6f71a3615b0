//! Detection and working-precision repair of floating-point cancellation
//! errors, entirely in binary64.
//!
//! The pipeline: parse a function from the `.fpdsl` DSL ([`expr`]), find
//! inputs where an atomic operation's condition number explodes ([`detect`]),
//! decide whether the error is repairable in working precision by probing the
//! whole-function condition number ([`detect::classify`]), and synthesize a
//! truncated Taylor polynomial evaluated via Horner's scheme that replaces
//! the ill-conditioned evaluation near the error region ([`repair`]).
//! Symbolic derivatives for the Taylor coefficients come from [`autodiff`],
//! and [`corpus`] ships benchmark functions with documented error regions.
//!
//! This crate never performs extended-precision arithmetic for its
//! decisions: detection and repair run in binary64 (plus compensated
//! double-double for patch coefficient values, still built from binary64
//! operations). Measuring errors against a high-precision oracle lives in
//! the companion `ofp` crate, keeping the quarantine structural.

pub mod autodiff;
pub mod corpus;
pub mod detect;
pub mod expr;
pub mod repair;

pub use expr::{
    eval_working, parse, parse_file, pretty_print, BinaryOp, Domain, EvalTrace, Expr, FunctionDef,
    ParamDecl, UnaryOp,
};

//! Parsing, printing, and traced binary64 evaluation of the `.fpdsl`
//! expression language.
//!
//! Frozen numeric literals were captured from a controlled run; the
//! subtraction witness value was additionally cross-checked against a
//! 250-bit evaluation of the same binary64 inputs (the binary64 result
//! is exact here because the operands share an exponent).

use ofp_core::expr::{
    eval_working, format_f64_shortest, parse, parse_file, pretty_print, pretty_print_expr,
    BinaryOp, Expr, FunctionDef, UnaryOp,
};
use proptest::prelude::*;

fn def(src: &str) -> FunctionDef {
    parse(src).expect("test source parses")
}

fn assert_bits(actual: f64, expected: f64, what: &str) {
    assert!(
        actual.to_bits() == expected.to_bits(),
        "{what}: got {actual:?} ({:#018x}), expected {expected:?} ({:#018x})",
        actual.to_bits(),
        expected.to_bits()
    );
}

#[test]
fn subtraction_witness_is_bit_exact() {
    // Two nearby decimal inputs whose binary64 difference is exact:
    // the operands share an exponent, so the subtraction loses no bits.
    let f = def("func gap(x, y) = x - y");
    let (value, trace) = eval_working(&f, &[3.14159265358973, 3.14159265358972]);
    assert_bits(value, 1.021405182655144e-14, "witness difference");
    assert_eq!(value.to_bits(), 0x3d07000000000000);
    assert_eq!(trace.records.len(), 1);
    assert!(trace.replays_bit_exact());
}

#[test]
fn parse_builds_the_documented_tree() {
    let f = def("func f(x, eps) = sin(x + eps) - sin(x)");
    assert_eq!(f.name, "f");
    assert_eq!(f.arity(), 2);
    assert_eq!(f.params[0].name, "x");
    assert_eq!(f.params[1].name, "eps");
    let Expr::Binary(BinaryOp::Sub, left, right) = &f.body else {
        panic!("expected Sub at the root, got {:?}", f.body);
    };
    let Expr::Unary(UnaryOp::Sin, inner) = left.as_ref() else {
        panic!("expected sin on the left");
    };
    let Expr::Binary(BinaryOp::Add, a, b) = inner.as_ref() else {
        panic!("expected x + eps inside the left sin");
    };
    assert!(matches!(a.as_ref(), Expr::Param(0)));
    assert!(matches!(b.as_ref(), Expr::Param(1)));
    let Expr::Unary(UnaryOp::Sin, inner) = right.as_ref() else {
        panic!("expected sin on the right");
    };
    assert!(matches!(inner.as_ref(), Expr::Param(0)));

    let g = def("func g(x in [0, 1e10]) = sqrt(x+1) - sqrt(x)");
    assert_eq!(g.arity(), 1);
    assert_bits(g.params[0].domain.lo, 0.0, "domain lo");
    assert_bits(g.params[0].domain.hi, 1e10, "domain hi");
    assert!(g.params[0].domain.lo_inclusive && g.params[0].domain.hi_inclusive);
}

#[test]
fn unannotated_parameters_span_the_whole_line() {
    let f = def("func open(x) = sin(x)");
    let d = &f.params[0].domain;
    assert_eq!(d.lo, f64::NEG_INFINITY);
    assert_eq!(d.hi, f64::INFINITY);
    assert!(!d.is_bounded());
    assert!(d.contains(0.0) && d.contains(-1e300));
    // An unbounded domain prints as a bare parameter, and round-trips.
    assert_eq!(pretty_print(&f), "func open(x) = sin(x)");
    assert!(parse(&pretty_print(&f)).unwrap().structurally_eq(&f));
}

#[test]
fn half_open_intervals_round_trip() {
    let f = def("func h(x in [0, 1)) = log(1 - x)");
    let d = &f.params[0].domain;
    assert!(d.lo_inclusive && !d.hi_inclusive);
    assert!(d.contains(0.0) && !d.contains(1.0));
    assert!(parse(&pretty_print(&f)).unwrap().structurally_eq(&f));
}

#[test]
fn parse_rejects_malformed_sources() {
    // (source, expected line, expected column, fragment of the message)
    let cases: &[(&str, u32, u32, &str)] = &[
        ("func h(x) = x +", 1, 16, "expected an expression"),
        ("func f(x) = y + 1", 1, 13, "unknown identifier `y`"),
        ("func f(x) = foo(x)", 1, 13, "unknown function `foo`"),
        ("func f(x in [2, 1]) = x", 1, 19, "malformed interval"),
        ("func f(x, x) = x + x", 1, 12, "duplicate parameter name `x`"),
        ("func f(x) = sin(x, x)", 1, 13, "`sin` takes 1 argument, found 2"),
        ("f(x) = x", 1, 2, "expected `func`"),
        ("func f(x in [0, 1]) = x x", 1, 25, "after function body"),
    ];
    for (src, line, col, fragment) in cases {
        let err = parse(src).expect_err(src);
        assert_eq!(err.line, *line, "line for {src:?}");
        assert_eq!(err.col, *col, "column for {src:?}");
        assert!(
            err.msg.contains(fragment),
            "message for {src:?}: {:?} should contain {fragment:?}",
            err.msg
        );
    }
}

#[test]
fn operator_precedence_and_associativity() {
    // * binds tighter than +, ^ tighter than *.
    let f = def("func f(x) = 2 + 3 * x ^ 2");
    let Expr::Binary(BinaryOp::Add, _, rhs) = &f.body else {
        panic!("+ should be the loosest binder");
    };
    let Expr::Binary(BinaryOp::Mul, _, pow) = rhs.as_ref() else {
        panic!("* should group under +");
    };
    assert!(matches!(pow.as_ref(), Expr::Binary(BinaryOp::Pow, _, _)));

    // Same-precedence operators associate left.
    let f = def("func f(x) = x - 1 - 2");
    let Expr::Binary(BinaryOp::Sub, left, _) = &f.body else {
        panic!("expected Sub at the root");
    };
    assert!(matches!(left.as_ref(), Expr::Binary(BinaryOp::Sub, _, _)));

    // ^ associates right.
    let f = def("func f(x) = x ^ 2 ^ 3");
    let Expr::Binary(BinaryOp::Pow, _, right) = &f.body else {
        panic!("expected Pow at the root");
    };
    assert!(matches!(right.as_ref(), Expr::Binary(BinaryOp::Pow, _, _)));

    // ^ binds tighter than unary minus.
    let f = def("func f(x) = -x^2");
    let Expr::Unary(UnaryOp::Neg, inner) = &f.body else {
        panic!("expected Neg at the root");
    };
    assert!(matches!(inner.as_ref(), Expr::Binary(BinaryOp::Pow, _, _)));
}

#[test]
fn negative_literals_fold_into_constants() {
    // A minus directly on a literal becomes one constant node, so printed
    // negative constants re-parse to the identical node.
    let f = def("func f(x) = x * (-1)");
    let Expr::Binary(BinaryOp::Mul, _, rhs) = &f.body else {
        panic!("expected Mul");
    };
    assert!(rhs.is_const_bits(-1.0), "got {rhs:?}");

    // ...but the base of a power is not stolen: -2^2 means -(2^2).
    let f = def("func f(x) = -2^2 + 0*x");
    let Expr::Binary(BinaryOp::Add, neg, _) = &f.body else {
        panic!("expected Add");
    };
    assert!(matches!(neg.as_ref(), Expr::Unary(UnaryOp::Neg, _)));
    assert_bits(eval_working(&f, &[1.0]).0, -4.0, "-2^2");

    // Hand-built negative constants (derivatives produce these as
    // exponents) survive a print/parse round trip structurally.
    let body = Expr::binary(
        BinaryOp::Pow,
        Expr::Param(0),
        Expr::constant(-0.5),
    );
    let f = FunctionDef::new(
        "rsqrt",
        def("func t(x in [1, 4]) = x").params,
        body,
    )
    .unwrap();
    assert_eq!(pretty_print(&f), "func rsqrt(x in [1, 4]) = x^(-0.5)");
    assert!(parse(&pretty_print(&f)).unwrap().structurally_eq(&f));
}

#[test]
fn comments_and_multiple_functions_parse() {
    let src = "# leading comment\nfunc a(x) = x + 1  # trailing\n\nfunc b(y in [0, 1]) = y * 2\n";
    let defs = parse_file(src).unwrap();
    assert_eq!(defs.len(), 2);
    assert_eq!(defs[0].name, "a");
    assert_eq!(defs[1].name, "b");
    assert_bits(eval_working(&defs[1], &[0.25]).0, 0.5, "b(0.25)");
}

#[test]
fn every_packaged_function_round_trips() {
    for e in ofp_core::corpus::builtin_corpus() {
        let printed = pretty_print(&e.function);
        let reparsed = parse(&printed).unwrap_or_else(|err| {
            panic!("{}: printed form failed to parse: {err} in {printed:?}", e.name)
        });
        assert!(
            reparsed.structurally_eq(&e.function),
            "{}: print/parse round trip changed the tree\n{printed}",
            e.name
        );
        if let Some(twin) = &e.twin {
            let printed = pretty_print(twin);
            let reparsed = parse(&printed).unwrap();
            assert!(reparsed.structurally_eq(twin), "{} twin round trip", e.name);
        }
    }
}

#[test]
fn constants_print_in_shortest_round_trip_form() {
    assert_eq!(format_f64_shortest(0.1), "0.1");
    assert_eq!(format_f64_shortest(2.13), "2.13");
    assert_eq!(format_f64_shortest(0.75), "0.75");
    assert_eq!(format_f64_shortest(f64::INFINITY), "inf");
    assert_eq!(format_f64_shortest(f64::NEG_INFINITY), "-inf");
    // Shortest means every printed constant re-parses to the same bits.
    for v in [
        0.1,
        1e-5,
        1e10,
        1.021405182655144e-14,
        3.14159265358973,
        1e-215,
        -0.001,
        f64::MAX,
        f64::MIN_POSITIVE,
    ] {
        let s = format_f64_shortest(v);
        assert_bits(s.parse::<f64>().unwrap(), v, &format!("round trip of {v:e}"));
    }
}

#[test]
fn printer_emits_canonical_spacing_and_parens() {
    let cases: &[(&str, &str)] = &[
        ("func f(x) = 2 + 3 * x ^ 2", "2 + 3*x^2"),
        ("func f(x) = x - 1 - 2", "x - 1 - 2"),
        ("func f(x) = x ^ 2 ^ 3", "x^2^3"),
        ("func f(x) = (x ^ 2) ^ 3", "(x^2)^3"),
        ("func f(x) = -x^2", "-x^2"),
        ("func f(x) = (-x)^2", "(-x)^2"),
        ("func f(x) = x / (2 * x)", "x/(2*x)"),
        ("func f(x, eps) = sin(x + eps) - sin(x)", "sin(x + eps) - sin(x)"),
    ];
    for (src, expected) in cases {
        let f = def(src);
        let names: Vec<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(&pretty_print_expr(&f.body, &names), expected, "for {src:?}");
        // The canonical form itself round-trips.
        assert!(parse(&pretty_print(&f)).unwrap().structurally_eq(&f));
    }
}

#[test]
fn trace_records_every_operation_node() {
    // The identity add is traced, not folded away.
    let f = def("func f(x in [0, 10]) = x + 0");
    let (value, trace) = eval_working(&f, &[7.5]);
    assert_bits(value, 7.5, "x + 0 at 7.5");
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].operands, vec![7.5, 0.0]);

    // Record count equals the operation-node count for the whole corpus.
    for e in ofp_core::corpus::builtin_corpus() {
        let point = &e.classification_point;
        let (_, trace) = eval_working(&e.function, point);
        assert_eq!(
            trace.records.len(),
            e.function.body.op_count(),
            "{}: one record per unary/binary node",
            e.name
        );
        assert!(trace.replays_bit_exact(), "{}: trace replays", e.name);
    }
}

#[test]
fn trace_node_ids_follow_post_order() {
    let src = "func sg(x in [0, 3], eps in [-0.001, 0.001]) = sin(x + eps) - sin(x)";
    let (_, trace) = eval_working(&def(src), &[2.13, 1e-6]);
    // Postorder over all nodes: x(0) eps(1) add(2) sin(3) x(4) sin(5) sub(6);
    // only operation nodes carry records.
    let ids: Vec<usize> = trace.records.iter().map(|r| r.node_id).collect();
    assert_eq!(ids, vec![2, 3, 5, 6]);

    // Ids are a property of the tree shape: a fresh parse of the same
    // source yields the same sequence.
    let (_, again) = eval_working(&def(src), &[0.5, -1e-4]);
    let ids_again: Vec<usize> = again.records.iter().map(|r| r.node_id).collect();
    assert_eq!(ids, ids_again);
}

#[test]
fn non_finite_results_flag_the_trace_without_crashing() {
    let f = def("func f(x in [-2, 2]) = log(x)");
    let (value, trace) = eval_working(&f, &[-1.0]);
    assert!(value.is_nan());
    assert!(trace.nonfinite);

    let f = def("func f(x in [-2, 2]) = 1 / x");
    let (value, trace) = eval_working(&f, &[0.0]);
    assert_eq!(value, f64::INFINITY);
    assert!(trace.nonfinite);
    assert!(trace.replays_bit_exact());

    let f = def("func f(x in [0, 4]) = sqrt(x - 4) + 1");
    let (value, trace) = eval_working(&f, &[2.0]);
    assert!(value.is_nan());
    assert!(trace.nonfinite);
}

#[test]
fn evaluation_is_deterministic() {
    for e in ofp_core::corpus::builtin_corpus() {
        let point = &e.classification_point;
        let (v1, t1) = eval_working(&e.function, point);
        let (v2, t2) = eval_working(&e.function, point);
        assert_bits(v2, v1, &format!("{}: value", e.name));
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a.node_id, b.node_id);
            assert_bits(a.result, b.result, &format!("{}: record result", e.name));
        }
    }
}

/// Strategy over expression trees whose printed form exercises every
/// operator, both constant sign cases, and nesting up to depth 4.
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::Param(0)),
        Just(Expr::Param(1)),
        prop_oneof![
            Just(0.5f64),
            Just(-0.5),
            Just(2.0),
            Just(-3.0),
            Just(0.1),
            Just(1e-6),
            Just(100.0),
        ]
        .prop_map(Expr::constant),
    ];
    leaf.prop_recursive(4, 64, 2, |inner| {
        prop_oneof![
            (any::<u8>(), inner.clone()).prop_map(|(op, c)| {
                let ops = [
                    UnaryOp::Neg,
                    UnaryOp::Sin,
                    UnaryOp::Cos,
                    UnaryOp::Exp,
                    UnaryOp::Log,
                    UnaryOp::Sqrt,
                    UnaryOp::Tan,
                    UnaryOp::Asin,
                    UnaryOp::Acos,
                    UnaryOp::Atan,
                ];
                Expr::unary(ops[op as usize % ops.len()], c)
            }),
            (any::<u8>(), inner.clone(), inner).prop_map(|(op, l, r)| {
                let ops = [
                    BinaryOp::Add,
                    BinaryOp::Sub,
                    BinaryOp::Mul,
                    BinaryOp::Div,
                    BinaryOp::Pow,
                ];
                Expr::binary(ops[op as usize % ops.len()], l, r)
            }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // Print/parse round trip holds for arbitrary trees, including ones no
    // parser would produce directly (hand-built negative constants).
    #[test]
    fn random_trees_round_trip_structurally(body in arb_expr()) {
        let template = parse("func p(x in [0, 1], y in [-1, 1]) = x + y").unwrap();
        let f = FunctionDef::new("p", template.params, body).unwrap();
        let printed = pretty_print(&f);
        let reparsed = parse(&printed)
            .unwrap_or_else(|e| panic!("printed form must parse: {e} in {printed:?}"));
        prop_assert!(
            reparsed.structurally_eq(&f),
            "round trip changed the tree: {printed:?}"
        );
    }

    // Whatever the tree does (including producing NaN), evaluation traces
    // replay bit-exactly and count one record per operation node.
    #[test]
    fn random_trees_trace_completely(body in arb_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let template = parse("func p(x in [0, 1], y in [-1, 1]) = x + y").unwrap();
        let f = FunctionDef::new("p", template.params, body).unwrap();
        let (value, trace) = eval_working(&f, &[x, y]);
        prop_assert_eq!(trace.records.len(), f.body.op_count());
        prop_assert!(trace.replays_bit_exact());
        prop_assert_eq!(value.is_finite(), !trace.nonfinite || value.is_finite());
        if !value.is_finite() {
            prop_assert!(trace.nonfinite);
        }
    }
}

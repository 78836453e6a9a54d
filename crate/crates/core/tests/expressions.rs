use complab_core::expr::{compile, parse_expression, slot_x, BinOp, Expr, FunctionTable, NVARS};
use complab_core::Error;
use proptest::prelude::*;

const IDENTS: &[&str] = &["t", "u", "v", "x1", "x2", "x3", "x8", "pi", "e"];
const UNARY: &[&str] = &["sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs"];
const BINARY: &[&str] = &["min", "max", "pow"];

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..1000, 0u32..4).prop_map(|(m, k)| Expr::Num(m as f64 / 10f64.powi(k as i32))),
        (1e-8f64..1e8).prop_map(Expr::Num),
        prop::sample::select(IDENTS).prop_map(|s| Expr::Ident(s.to_string())),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 64, 3, |inner| {
        let op = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
            (prop::sample::select(UNARY), inner.clone()).prop_map(|(f, a)| Expr::Call(f.to_string(), vec![a])),
            (prop::sample::select(BINARY), inner.clone(), inner).prop_map(|(f, a, b)| Expr::Call(f.to_string(), vec![a, b])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_trees_reparse_identically(e in expr()) {
        let printed = e.to_string();
        let back = parse_expression(&printed).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn cubic_polynomials_evaluate_like_rust(
        c in prop::array::uniform4(-5.0f64..5.0),
        x in -3.0f64..3.0,
    ) {
        let src = format!("{} + {}*x1 + {}*x1^2 + {}*x1^3", c[0], c[1], c[2], c[3]);
        let e = compile(&src, &FunctionTable::new()).unwrap();
        let mut vars = [0.0; NVARS];
        vars[slot_x(1)] = x;
        let expected = c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let got = e.eval(&vars).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

fn eval1(src: &str, x1: f64) -> f64 {
    let e = compile(src, &FunctionTable::new()).unwrap();
    let mut vars = [0.0; NVARS];
    vars[slot_x(1)] = x1;
    e.eval(&vars).unwrap()
}

#[test]
fn precedence_of_minus_and_power() {
    assert_eq!(eval1("-x1^2", 3.0), -9.0);
    assert_eq!(eval1("2^3^2", 0.0), 512.0);
    assert_eq!(eval1("-2^2", 0.0), -4.0);
    assert_eq!(eval1("(-2)^2", 0.0), 4.0);
    assert_eq!(eval1("8/4/2", 0.0), 1.0);
    assert_eq!(eval1("1.5e2 - 5E-1", 0.0), 149.5);
}

#[test]
fn sine_with_constants() {
    let got = eval1("sin(2*3.14159*x1)", 0.25);
    assert!((got - (2.0 * 3.14159 * 0.25f64).sin()).abs() < 1e-15);
    assert!((eval1("sin(2*pi*x1)", 0.25) - 1.0).abs() < 1e-15);
}

#[test]
fn helper_functions_build_the_wave_profile() {
    let table = FunctionTable::new()
        .with("a", &["s"], "sin(s)")
        .unwrap()
        .with("b", &["s"], "0.5*s")
        .unwrap()
        .with("c", &["s"], "1")
        .unwrap();
    let e = compile("a(u)*(x1^2-x2^2)+2*b(u)*x1*x2+c(u)*(x1^2+x2^2)", &table).unwrap();
    let (u, x, y) = (0.7f64, 0.3, -1.1);
    let mut vars = [0.0; NVARS];
    vars[complab_core::expr::SLOT_U] = u;
    vars[slot_x(1)] = x;
    vars[slot_x(2)] = y;
    let expected = u.sin() * (x * x - y * y) + 2.0 * 0.5 * u * x * y + (x * x + y * y);
    assert!((e.eval(&vars).unwrap() - expected).abs() < 1e-14);
}

#[test]
fn errors_carry_positions_and_names() {
    match parse_expression("1 + * 2") {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(matches!(
        compile("x1 + y", &FunctionTable::new()),
        Err(Error::UnknownIdentifier(name)) if name == "y"
    ));
    let e = compile("log(x1)", &FunctionTable::new()).unwrap();
    let mut vars = [0.0; NVARS];
    vars[slot_x(1)] = -1.0;
    assert!(matches!(e.eval(&vars), Err(Error::Eval(_))));
    vars[slot_x(1)] = 0.0;
    let div = compile("1/x1", &FunctionTable::new()).unwrap();
    assert!(matches!(div.eval(&vars), Err(Error::Eval(_))));
}

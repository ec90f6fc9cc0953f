//! Arithmetic expressions for potentials and seeds.
//!
//! Expressions are written in the variable `x` and free named parameters,
//! e.g. `a*x^alpha` or `exp(-2*a*x)`. The grammar is in `docs/grammar.md`.

mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::qlattice::{LatticeFn, QGrid};

pub use parser::{parse, ParseError};

/// Parameter bindings, keyed by identifier.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Pow,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "pow" => Some(Func::Pow),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Ln => 1,
            Func::Pow => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// The lattice variable `x`.
    Var,
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("zero raised to negative power {0}")]
    ZeroToNegative(f64),
    #[error("negative base {base} raised to non-integer power {exponent}")]
    FractionalPower { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
}

fn power(base: f64, exponent: f64) -> std::result::Result<f64, EvalError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::ZeroToNegative(exponent));
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exponent as i32));
    }
    if base < 0.0 {
        return Err(EvalError::FractionalPower { base, exponent });
    }
    Ok(base.powf(exponent))
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    /// Identifiers other than `x` that must be bound at evaluation.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) | Expr::Var => {}
            Expr::Param(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(e) => e.collect_params(out),
            Expr::Binary(_, l, r) => {
                l.collect_params(out);
                r.collect_params(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_params(out)),
        }
    }

    /// True when the expression is the literal `0` (possibly negated).
    pub fn is_literal_zero(&self) -> bool {
        match self {
            Expr::Num(v) => *v == 0.0,
            Expr::Neg(e) => e.is_literal_zero(),
            _ => false,
        }
    }

    pub fn eval(&self, x: f64, params: &Params) -> std::result::Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Param(name) => *params
                .get(name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Neg(e) => -e.eval(x, params)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(x, params)?;
                let b = r.eval(x, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => power(a, b)?,
                }
            }
            Expr::Call(func, args) => match func {
                Func::Exp => args[0].eval(x, params)?.exp(),
                Func::Ln => {
                    let a = args[0].eval(x, params)?;
                    if !(a > 0.0) {
                        return Err(EvalError::LogDomain(a));
                    }
                    a.ln()
                }
                Func::Pow => power(args[0].eval(x, params)?, args[1].eval(x, params)?)?,
            },
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

/// Fully parenthesized, so that printing and reparsing preserves the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var => f.write_str("x"),
            Expr::Param(name) => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn eval(e: &Expr, x: f64, params: &Params) -> std::result::Result<f64, EvalError> {
    e.eval(x, params)
}

/// Evaluates `e` at every lattice point.
pub fn sample(e: &Expr, grid: QGrid, params: &Params) -> Result<LatticeFn> {
    LatticeFn::try_from_indexed(grid, |index, x| {
        e.eval(x, params)
            .map_err(|source| Error::Sample { index, source })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(pairs: &[(&str, f64)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn power_law_parses_with_mul_over_pow() {
        let e = parse("a*x^alpha").unwrap();
        match &e {
            Expr::Binary(BinOp::Mul, l, r) => {
                assert_eq!(**l, Expr::Param("a".into()));
                assert!(matches!(**r, Expr::Binary(BinOp::Pow, _, _)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        let free: Vec<_> = e.free_params().into_iter().collect();
        assert_eq!(free, ["a", "alpha"]);
    }

    #[test]
    fn precedence_golden() {
        let cases = [
            ("-x^2", "(-(x ^ 2.0))"),
            ("1+2*3", "(1.0 + (2.0 * 3.0))"),
            ("1-2-3", "((1.0 - 2.0) - 3.0)"),
            ("8/4/2", "((8.0 / 4.0) / 2.0)"),
            ("2^3^2", "(2.0 ^ (3.0 ^ 2.0))"),
            ("-a*b", "((-a) * b)"),
            ("x^-1", "(x ^ (-1.0))"),
            ("2*-x", "(2.0 * (-x))"),
            ("(1+x)^2", "((1.0 + x) ^ 2.0)"),
            ("exp(-x)*pow(x, 0.5)", "(exp((-x)) * pow(x, 0.5))"),
            ("1.5e-3*x", "(0.0015 * x)"),
        ];
        for (src, printed) in cases {
            assert_eq!(parse(src).unwrap().to_string(), printed, "source {src}");
        }
    }

    #[test]
    fn negated_square_is_not_square_of_negation() {
        let e = parse("-x^2").unwrap();
        assert_eq!(e.eval(3.0, &Params::new()).unwrap(), -9.0);
    }

    #[test]
    fn evaluates_power_law() {
        let e = parse("a*x^alpha").unwrap();
        let p = params(&[("a", 2.0), ("alpha", 3.0)]);
        assert_eq!(e.eval(2.0, &p).unwrap(), 16.0);
    }

    #[test]
    fn exp_of_zero() {
        assert_eq!(parse("exp(x)").unwrap().eval(0.0, &Params::new()).unwrap(), 1.0);
    }

    #[test]
    fn evaluation_domain_errors() {
        let none = Params::new();
        assert_eq!(
            parse("1/(1-x)").unwrap().eval(1.0, &none),
            Err(EvalError::DivisionByZero)
        );
        assert!(matches!(
            parse("x^(1/2)").unwrap().eval(-1.0, &none),
            Err(EvalError::FractionalPower { .. })
        ));
        assert!(matches!(
            parse("ln(x)").unwrap().eval(0.0, &none),
            Err(EvalError::LogDomain(_))
        ));
        assert!(matches!(
            parse("x^-2").unwrap().eval(0.0, &none),
            Err(EvalError::ZeroToNegative(_))
        ));
        assert_eq!(
            parse("a+x").unwrap().eval(1.0, &none),
            Err(EvalError::Unbound("a".into()))
        );
        assert_eq!(
            parse("exp(x)").unwrap().eval(1e4, &none),
            Err(EvalError::NonFinite)
        );
    }

    #[test]
    fn integer_powers_of_negative_base_are_allowed() {
        let none = Params::new();
        assert_eq!(parse("x^3").unwrap().eval(-2.0, &none).unwrap(), -8.0);
    }

    #[test]
    fn syntax_errors_carry_offset_and_expectations() {
        let err = parse("1 + * 2").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.expected.iter().any(|s| s == "number"));
        let err = parse("(1 + x").unwrap_err();
        assert_eq!(err.offset, 6);
        assert_eq!(err.expected, vec!["`)`".to_string()]);
        let err = parse("x $ 2").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = parse("pow(x)").unwrap_err();
        assert!(err.expected[0].contains("2 argument"));
        assert!(parse("exp x").is_err());
        assert!(parse("x 2").is_err());
    }

    #[test]
    fn sample_zero_and_identity() {
        let g = QGrid::new(1.0, 0.5, 3).unwrap();
        let zero = sample(&parse("0").unwrap(), g, &Params::new()).unwrap();
        assert_eq!(zero.values(), &[0.0; 4]);
        let id = sample(&parse("x").unwrap(), g, &Params::new()).unwrap();
        assert_eq!(id.values(), &[1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn sample_singular_power_law_is_finite() {
        let g = QGrid::new(1.0, 0.5, 256).unwrap();
        let p = params(&[("a", 1.0), ("alpha", -0.5)]);
        let f = sample(&parse("a*x^alpha").unwrap(), g, &p).unwrap();
        assert!(f.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sample_reports_lattice_index() {
        let g = QGrid::new(-1.0, 0.5, 4).unwrap();
        let err = sample(&parse("ln(x+0.3)").unwrap(), g, &Params::new()).unwrap_err();
        assert!(matches!(err, Error::Sample { index: 0, .. }));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50.0f64..50.0).prop_map(Expr::Num),
            Just(Expr::Var),
            Just(Expr::Param("a".into())),
            Just(Expr::Param("b".into())),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
                inner.clone().prop_map(|e| Expr::Call(Func::Exp, vec![e])),
                inner.clone().prop_map(|e| Expr::Call(Func::Ln, vec![e])),
                (inner.clone(), inner).prop_map(|(b, e)| Expr::Call(Func::Pow, vec![b, e])),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_round_trip(
            e in arb_expr(),
            xs in proptest::collection::vec(-3.0f64..3.0, 10),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let reparsed = parse(&e.to_string()).unwrap();
            let p = params(&[("a", a), ("b", b)]);
            for x in xs {
                match (e.eval(x, &p), reparsed.eval(x, &p)) {
                    (Ok(u), Ok(v)) => prop_assert_eq!(u.to_bits(), v.to_bits()),
                    (Err(u), Err(v)) => prop_assert_eq!(u, v),
                    (u, v) => prop_assert!(false, "mismatch {:?} vs {:?}", u, v),
                }
            }
        }
    }
}

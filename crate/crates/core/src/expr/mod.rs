//! A small arithmetic language for matrix families `S(lambda, t)`, vector
//! fields `g(lambda, t, z)` and branches `z_lambda(t)` given as text.
//!
//! The grammar is documented in `docs/expression-grammar.md`. Precedence from
//! tightest to loosest: `^` (right associative), unary `-`, `* /`, `+ -`.

mod parser;

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unbound variable '{name}'")]
    UnboundVariable { name: String },
    #[error("domain error: {message} (at {bindings})")]
    Domain { message: String, bindings: String },
    #[error("malformed matrix expression: {0}")]
    Shape(String),
}

impl ExprError {
    /// Prefixes parse errors with the location of the offending entry.
    pub fn in_entry(self, what: &str) -> ExprError {
        match self {
            ExprError::Parse { offset, message } => ExprError::Parse {
                offset,
                message: format!("{what}: {message}"),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    Lambda,
    /// `z1 .. zn`, stored zero based.
    Z(usize),
}

impl Var {
    fn from_name(name: &str) -> Option<Var> {
        match name {
            "t" => Some(Var::T),
            "lambda" => Some(Var::Lambda),
            _ => {
                let idx = name.strip_prefix('z')?;
                if idx.is_empty() || idx.starts_with('0') || !idx.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let i: usize = idx.parse().ok()?;
                Some(Var::Z(i - 1))
            }
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => f.write_str("t"),
            Var::Lambda => f.write_str("lambda"),
            Var::Z(i) => write!(f, "z{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Sech,
    Cosh,
    Sinh,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan,
}

impl Func {
    const ALL: [(Func, &'static str); 12] = [
        (Func::Sin, "sin"),
        (Func::Cos, "cos"),
        (Func::Tan, "tan"),
        (Func::Tanh, "tanh"),
        (Func::Sech, "sech"),
        (Func::Cosh, "cosh"),
        (Func::Sinh, "sinh"),
        (Func::Exp, "exp"),
        (Func::Log, "log"),
        (Func::Sqrt, "sqrt"),
        (Func::Abs, "abs"),
        (Func::Atan, "atan"),
    ];

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().find(|(_, n)| *n == name).map(|(f, _)| *f)
    }

    pub fn name(self) -> &'static str {
        Func::ALL.iter().find(|(f, _)| *f == self).map(|(_, n)| *n).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Which variables an expression may refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// `t` and `lambda` only.
    Parameters,
    /// `t`, `lambda` and `z1 .. zn`.
    State { n: usize },
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub t: Option<f64>,
    pub lambda: Option<f64>,
    pub z: Option<&'a [f64]>,
}

impl<'a> Env<'a> {
    pub fn new(lambda: f64, t: f64) -> Self {
        Env {
            t: Some(t),
            lambda: Some(lambda),
            z: None,
        }
    }

    pub fn with_state(lambda: f64, t: f64, z: &'a [f64]) -> Self {
        Env {
            t: Some(t),
            lambda: Some(lambda),
            z: Some(z),
        }
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.t {
            parts.push(format!("t={t}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={l}"));
        }
        if let Some(z) = self.z {
            for (i, v) in z.iter().enumerate() {
                parts.push(format!("z{}={v}", i + 1));
            }
        }
        if parts.is_empty() {
            "no bindings".into()
        } else {
            parts.join(", ")
        }
    }
}

/// Parses an expression.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    parser::parse(src)
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => lookup(*var, env)?,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(domain("division by zero", env));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        let r = x.powf(y);
                        if r.is_nan() && !x.is_nan() && !y.is_nan() {
                            return Err(domain(&format!("{x}^{y} is undefined"), env));
                        }
                        r
                    }
                }
            }
            Expr::Call(f, arg) => {
                let x = arg.eval(env)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Tanh => x.tanh(),
                    Func::Sech => 1.0 / x.cosh(),
                    Func::Cosh => x.cosh(),
                    Func::Sinh => x.sinh(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(&format!("log of non-positive argument {x}"), env));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(&format!("sqrt of negative argument {x}"), env));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Atan => x.atan(),
                }
            }
        };
        Ok(v)
    }

    /// Checks that every variable is legal in `scope`.
    pub fn check_scope(&self, scope: Scope) -> Result<(), ExprError> {
        let mut err = None;
        self.visit_vars(&mut |v| {
            if err.is_some() {
                return;
            }
            let ok = match (v, scope) {
                (Var::T | Var::Lambda, _) => true,
                (Var::Z(_), Scope::Parameters) => false,
                (Var::Z(i), Scope::State { n }) => i < n,
            };
            if !ok {
                err = Some(ExprError::UnboundVariable {
                    name: v.to_string(),
                });
            }
        });
        err.map_or(Ok(()), Err)
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(e) | Expr::Call(_, e) => e.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// True when the expression does not mention `t`.
    pub fn is_autonomous(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= v == Var::T);
        !found
    }
}

fn lookup(var: Var, env: &Env<'_>) -> Result<f64, ExprError> {
    let v = match var {
        Var::T => env.t,
        Var::Lambda => env.lambda,
        Var::Z(i) => env.z.and_then(|z| z.get(i).copied()),
    };
    v.ok_or_else(|| ExprError::UnboundVariable {
        name: var.to_string(),
    })
}

fn domain(message: &str, env: &Env<'_>) -> ExprError {
    ExprError::Domain {
        message: message.to_string(),
        bindings: env.describe(),
    }
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Rectangular grid of expressions, evaluated entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExpr {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
    source: Vec<Vec<String>>,
}

impl MatrixExpr {
    pub fn parse(src: &[Vec<String>]) -> Result<Self, ExprError> {
        let rows = src.len();
        let cols = src.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(ExprError::Shape("matrix has no entries".into()));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for (i, row) in src.iter().enumerate() {
            if row.len() != cols {
                return Err(ExprError::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, s) in row.iter().enumerate() {
                entries.push(parse(s).map_err(|e| e.in_entry(&format!("entry ({i},{j})")))?);
            }
        }
        Ok(MatrixExpr {
            rows,
            cols,
            entries,
            source: src.to_vec(),
        })
    }

    pub fn from_strs<const C: usize>(rows: &[[&str; C]]) -> Result<Self, ExprError> {
        let src: Vec<Vec<String>> = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        MatrixExpr::parse(&src)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn source(&self) -> &[Vec<String>] {
        &self.source
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.cols + j]
    }

    pub fn check_scope(&self, scope: Scope) -> Result<(), ExprError> {
        self.entries.iter().try_for_each(|e| e.check_scope(scope))
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<DMatrix<f64>, ExprError> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.entry(i, j).eval(env)?;
            }
        }
        Ok(m)
    }
}

/// `eval_matrix(m, env)`.
pub fn eval_matrix(m: &MatrixExpr, env: &Env<'_>) -> Result<DMatrix<f64>, ExprError> {
    m.eval(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn ev(src: &str, lambda: f64, t: f64) -> f64 {
        parse(src).unwrap().eval(&Env::new(lambda, t)).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(ev("tanh(t) - 2*lambda", 0.5, 0.0), -1.0);
        assert_eq!(ev("sech(t)^2", 0.0, 0.0), 1.0);
        assert!((ev("1 - 2.5*lambda*sech(t)^2", 0.8, 0.0) + 1.0).abs() < 1e-15);
        assert_eq!(ev("t^2", 0.0, -3.0), 9.0);
    }

    #[test]
    fn precedence_golden() {
        assert_eq!(ev("2+3*4^2", 0.0, 0.0), 50.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(ev(" ( 1 +2 )* 3 ", 0.0, 0.0), 9.0);
    }

    #[test]
    fn parse_errors_report_offsets() {
        match parse("tanh(") {
            Err(ExprError::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match parse("1 + x") {
            Err(ExprError::Parse { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("'x'"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("1 2"), Err(ExprError::Parse { offset: 2, .. })));
        assert!(matches!(parse("sin 1"), Err(ExprError::Parse { .. })));
        assert!(matches!(parse("1e999"), Err(ExprError::Parse { offset: 0, .. })));
        assert!(matches!(parse("(1"), Err(ExprError::Parse { offset: 2, .. })));
        assert!(matches!(parse("z0"), Err(ExprError::Parse { .. })));
        assert!(matches!(parse("3 # 4"), Err(ExprError::Parse { offset: 2, .. })));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = "(".repeat(10_000) + "1" + &")".repeat(10_000);
        assert!(matches!(parse(&src), Err(ExprError::Parse { .. })));
        let src = "-".repeat(10_000) + "1";
        assert!(matches!(parse(&src), Err(ExprError::Parse { .. })));
    }

    #[test]
    fn domain_errors() {
        let e = parse("sqrt(-1)").unwrap().eval(&Env::new(0.0, 0.0));
        assert!(matches!(e, Err(ExprError::Domain { .. })));
        let e = parse("log(t)").unwrap().eval(&Env::new(0.3, 0.0));
        match e {
            Err(ExprError::Domain { bindings, .. }) => assert!(bindings.contains("t=0")),
            other => panic!("{other:?}"),
        }
        let e = parse("1/(t-1)").unwrap().eval(&Env::new(0.0, 1.0));
        assert!(matches!(e, Err(ExprError::Domain { .. })));
    }

    #[test]
    fn unbound_and_scope() {
        let e = parse("z2 + t").unwrap();
        assert!(matches!(
            e.eval(&Env::new(0.0, 0.0)),
            Err(ExprError::UnboundVariable { .. })
        ));
        assert!(e.check_scope(Scope::Parameters).is_err());
        assert!(e.check_scope(Scope::State { n: 1 }).is_err());
        assert!(e.check_scope(Scope::State { n: 2 }).is_ok());
        let z = [1.0, 2.0];
        assert_eq!(e.eval(&Env::with_state(0.0, 0.5, &z)).unwrap(), 2.5);
        let only_lambda = Env {
            lambda: Some(1.0),
            ..Env::default()
        };
        assert!(matches!(
            parse("t").unwrap().eval(&only_lambda),
            Err(ExprError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn matrix_examples() {
        let m = MatrixExpr::from_strs(&[["0", "1"], ["1", "0"]]).unwrap();
        assert_eq!(m.eval(&Env::new(0.3, 7.0)).unwrap(), dmatrix![0.0, 1.0; 1.0, 0.0]);
        let m = MatrixExpr::from_strs(&[["-1", "0"], ["0", "1+lambda"]]).unwrap();
        assert_eq!(m.eval(&Env::new(1.0, 0.0)).unwrap(), dmatrix![-1.0, 0.0; 0.0, 2.0]);
        let m = MatrixExpr::from_strs(&[["0", "1"], ["1-2.5*lambda*sech(t)^2", "0"]]).unwrap();
        let v = eval_matrix(&m, &Env::new(0.8, 0.0)).unwrap();
        assert!((v - dmatrix![0.0, 1.0; -1.0, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn matrix_shape_errors() {
        let ragged = vec![vec!["1".to_string(), "2".to_string()], vec!["3".to_string()]];
        assert!(matches!(MatrixExpr::parse(&ragged), Err(ExprError::Shape(_))));
        let bad = vec![vec!["1".to_string(), "sin(".to_string()]];
        match MatrixExpr::parse(&bad) {
            Err(ExprError::Parse { message, .. }) => assert!(message.contains("(0,1)")),
            other => panic!("{other:?}"),
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::Lambda)),
            (0usize..3).prop_map(|i| Expr::Var(Var::Z(i))),
        ];
        leaf.prop_recursive(6, 48, 2, |inner| {
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
                    .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
                (0usize..12, inner).prop_map(|(i, e)| Expr::Call(Func::ALL[i].0, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(parse(&reparsed.to_string()).unwrap(), reparsed);
        }

        #[test]
        fn parser_never_panics(s in "[ -~]{0,64}") {
            let _ = parse(&s);
        }
    }
}

//! Scalar coefficient fields over the plane, written as closed-form expressions in `x` and `y`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sin | cos | sqrt
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)` and `2^-1` is `0.5`.
//! Numbers accept an optional fraction and exponent (`1`, `2.5`, `.5`, `1e-3`).

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` at byte {offset} takes 1 argument, got {found}")]
    Arity {
        offset: usize,
        name: String,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at ({x}, {y})")]
    DivisionByZero { x: f64, y: f64 },
    #[error("log of non-positive argument {arg} at ({x}, {y})")]
    LogDomain { arg: f64, x: f64, y: f64 },
    #[error("sqrt of negative argument {arg} at ({x}, {y})")]
    SqrtDomain { arg: f64, x: f64, y: f64 },
    #[error("non-finite result of `{op}` at ({x}, {y})")]
    NonFinite { op: &'static str, x: f64, y: f64 },
}

// Smart constructors fold literal subtrees and drop additive/multiplicative identities.

fn constant(v: f64) -> Arc<Expr> {
    Arc::new(Expr::Const(v))
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) => Some(*v),
        _ => None,
    }
}

fn neg(a: Arc<Expr>) -> Arc<Expr> {
    match &*a {
        Expr::Const(v) => constant(-v),
        Expr::Neg(inner) => inner.clone(),
        _ => Arc::new(Expr::Neg(a)),
    }
}

fn binary(op: BinOp, a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(u), Some(v)) = (as_const(&a), as_const(&b)) {
        let folded = apply_binary(op, u, v);
        if folded.is_finite() {
            return constant(folded);
        }
    }
    let (ca, cb) = (as_const(&a), as_const(&b));
    match op {
        BinOp::Add if ca == Some(0.0) => b,
        BinOp::Add | BinOp::Sub if cb == Some(0.0) => a,
        BinOp::Sub if ca == Some(0.0) => neg(b),
        BinOp::Mul if ca == Some(0.0) || cb == Some(0.0) => constant(0.0),
        BinOp::Mul if ca == Some(1.0) => b,
        BinOp::Mul | BinOp::Div if cb == Some(1.0) => a,
        BinOp::Mul if ca == Some(-1.0) => neg(b),
        BinOp::Pow if cb == Some(1.0) => a,
        _ => Arc::new(Expr::Binary(op, a, b)),
    }
}

fn call(f: Func, a: Arc<Expr>) -> Arc<Expr> {
    if let Some(v) = as_const(&a) {
        if let Ok(r) = apply_func(f, v, 0.0, 0.0) {
            return constant(r);
        }
    }
    Arc::new(Expr::Call(f, a))
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => pow(a, b),
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn apply_func(f: Func, a: f64, x: f64, y: f64) -> Result<f64, EvalError> {
    let r = match f {
        Func::Exp => a.exp(),
        Func::Log => {
            if a <= 0.0 {
                return Err(EvalError::LogDomain { arg: a, x, y });
            }
            a.ln()
        }
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Sqrt => {
            if a < 0.0 {
                return Err(EvalError::SqrtDomain { arg: a, x, y });
            }
            a.sqrt()
        }
    };
    if r.is_finite() {
        Ok(r)
    } else {
        Err(EvalError::NonFinite {
            op: f.name(),
            x,
            y,
        })
    }
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Var(Var::X) => Ok(x),
            Expr::Var(Var::Y) => Ok(y),
            Expr::Neg(a) => Ok(-a.eval(x, y)?),
            Expr::Binary(op, a, b) => {
                let u = a.eval(x, y)?;
                let v = b.eval(x, y)?;
                if *op == BinOp::Div && v == 0.0 {
                    return Err(EvalError::DivisionByZero { x, y });
                }
                let r = apply_binary(*op, u, v);
                if r.is_finite() {
                    Ok(r)
                } else if *op == BinOp::Pow && u == 0.0 && v < 0.0 {
                    Err(EvalError::DivisionByZero { x, y })
                } else {
                    Err(EvalError::NonFinite {
                        op: match op {
                            BinOp::Add => "+",
                            BinOp::Sub => "-",
                            BinOp::Mul => "*",
                            BinOp::Div => "/",
                            BinOp::Pow => "^",
                        },
                        x,
                        y,
                    })
                }
            }
            Expr::Call(f, a) => apply_func(*f, a.eval(x, y)?, x, y),
        }
    }

    fn depends_on_variables(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_variables(),
            Expr::Binary(_, a, b) => a.depends_on_variables() || b.depends_on_variables(),
        }
    }
}

fn derivative(e: &Arc<Expr>, var: Var) -> Arc<Expr> {
    match &**e {
        Expr::Const(_) => constant(0.0),
        Expr::Var(v) => constant(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(derivative(a, var)),
        Expr::Binary(op, a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            match op {
                BinOp::Add => binary(BinOp::Add, da, db),
                BinOp::Sub => binary(BinOp::Sub, da, db),
                BinOp::Mul => binary(
                    BinOp::Add,
                    binary(BinOp::Mul, da, b.clone()),
                    binary(BinOp::Mul, a.clone(), db),
                ),
                BinOp::Div => {
                    // (a'b - ab') / b^2
                    let num = binary(
                        BinOp::Sub,
                        binary(BinOp::Mul, da, b.clone()),
                        binary(BinOp::Mul, a.clone(), db),
                    );
                    binary(BinOp::Div, num, binary(BinOp::Pow, b.clone(), constant(2.0)))
                }
                BinOp::Pow => match as_const(b) {
                    Some(c) => binary(
                        BinOp::Mul,
                        binary(
                            BinOp::Mul,
                            constant(c),
                            binary(BinOp::Pow, a.clone(), constant(c - 1.0)),
                        ),
                        da,
                    ),
                    None => {
                        // a^b * (b' ln a + b a'/a)
                        let t1 = binary(BinOp::Mul, db, call(Func::Log, a.clone()));
                        let t2 = binary(BinOp::Div, binary(BinOp::Mul, b.clone(), da), a.clone());
                        binary(BinOp::Mul, e.clone(), binary(BinOp::Add, t1, t2))
                    }
                },
            }
        }
        Expr::Call(f, a) => {
            let da = derivative(a, var);
            let outer = match f {
                Func::Exp => e.clone(),
                Func::Log => binary(BinOp::Div, constant(1.0), a.clone()),
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Sqrt => binary(BinOp::Div, constant(0.5), e.clone()),
            };
            binary(BinOp::Mul, outer, da)
        }
    }
}

/// An immutable expression field. Cloning is cheap (shared tree).
#[derive(Debug, Clone)]
pub struct ScalarField {
    expr: Arc<Expr>,
    source: Arc<str>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl ScalarField {
    pub fn parse(text: &str) -> Result<ScalarField, ParseError> {
        let expr = Parser::new(text).parse_all()?;
        Ok(ScalarField {
            expr,
            source: Arc::from(text),
        })
    }

    pub fn from_expr(expr: Arc<Expr>) -> ScalarField {
        let source = Arc::from(Display(&expr).to_string());
        ScalarField { expr, source }
    }

    pub fn constant(v: f64) -> ScalarField {
        ScalarField::from_expr(constant(v))
    }

    pub fn zero() -> ScalarField {
        ScalarField::constant(0.0)
    }

    pub fn x() -> ScalarField {
        ScalarField::from_expr(Arc::new(Expr::Var(Var::X)))
    }

    pub fn y() -> ScalarField {
        ScalarField::from_expr(Arc::new(Expr::Var(Var::Y)))
    }

    pub fn expr(&self) -> &Arc<Expr> {
        &self.expr
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        self.expr.eval(x, y)
    }

    pub fn diff(&self, var: Var) -> ScalarField {
        ScalarField::from_expr(derivative(&self.expr, var))
    }

    pub fn dx(&self) -> ScalarField {
        self.diff(Var::X)
    }

    pub fn dy(&self) -> ScalarField {
        self.diff(Var::Y)
    }

    /// The literal value when the tree has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.expr.depends_on_variables() {
            None
        } else {
            self.expr.eval(0.0, 0.0).ok()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Add, self.expr.clone(), other.expr.clone()))
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Sub, self.expr.clone(), other.expr.clone()))
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Mul, self.expr.clone(), other.expr.clone()))
    }

    pub fn div(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Div, self.expr.clone(), other.expr.clone()))
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Mul, constant(c), self.expr.clone()))
    }

    pub fn neg(&self) -> ScalarField {
        ScalarField::from_expr(neg(self.expr.clone()))
    }

    pub fn powi(&self, k: i32) -> ScalarField {
        ScalarField::from_expr(binary(BinOp::Pow, self.expr.clone(), constant(k as f64)))
    }

    pub fn sqrt(&self) -> ScalarField {
        ScalarField::from_expr(call(Func::Sqrt, self.expr.clone()))
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for ScalarField {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScalarField::parse(s)
    }
}

struct Display<'a>(&'a Expr);

impl Display<'_> {
    fn write(e: &Expr, parent: u8, right_of_pow: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Const(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Neg(a) => {
                let wrap = parent >= 3 || right_of_pow;
                if wrap {
                    f.write_str("(")?;
                }
                f.write_str("-")?;
                Self::write(a, 3, false, f)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let wrap = p < parent || (p == parent && right_of_pow);
                if wrap {
                    f.write_str("(")?;
                }
                // Left operand of `^` must bind tighter than unary minus.
                let left_parent = if *op == BinOp::Pow { 5 } else { p };
                Self::write(a, left_parent, false, f)?;
                write!(f, " {} ", op.symbol())?;
                match op {
                    // Right-hand sides of non-associative operators need a strict bump.
                    BinOp::Sub | BinOp::Div => Self::write(b, p + 1, false, f)?,
                    BinOp::Pow => Self::write(b, p, true, f)?,
                    _ => Self::write(b, p, false, f)?,
                }
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                Self::write(a, 0, false, f)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Display::write(self.0, 0, false, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    lex_error: Option<ParseError>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let mut p = Parser {
            text,
            toks: Vec::new(),
            pos: 0,
            lex_error: None,
        };
        p.lex();
        p
    }

    fn lex(&mut self) {
        let bytes = self.text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => i += 1,
                b'0'..=b'9' | b'.' => {
                    let start = i;
                    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                        i += 1;
                    }
                    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                        let mut j = i + 1;
                        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                            j += 1;
                        }
                        if j < bytes.len() && bytes[j].is_ascii_digit() {
                            while j < bytes.len() && bytes[j].is_ascii_digit() {
                                j += 1;
                            }
                            i = j;
                        }
                    }
                    let lit = &self.text[start..i];
                    match lit.parse::<f64>() {
                        Ok(v) => self.toks.push((Tok::Num(v), start)),
                        Err(_) => {
                            self.lex_error = Some(ParseError::Syntax {
                                offset: start,
                                message: format!("malformed number `{lit}`"),
                            });
                            return;
                        }
                    }
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = i;
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                        i += 1;
                    }
                    self.toks
                        .push((Tok::Ident(self.text[start..i].to_string()), start));
                }
                b'+' | b'-' | b'*' | b'/' | b'^' => {
                    self.toks.push((Tok::Op(c as char), i));
                    i += 1;
                }
                b'(' => {
                    self.toks.push((Tok::LParen, i));
                    i += 1;
                }
                b')' => {
                    self.toks.push((Tok::RParen, i));
                    i += 1;
                }
                b',' => {
                    self.toks.push((Tok::Comma, i));
                    i += 1;
                }
                _ => {
                    let ch = self.text[i..].chars().next().unwrap_or('?');
                    self.lex_error = Some(ParseError::Syntax {
                        offset: i,
                        message: format!("unexpected character `{ch}`"),
                    });
                    return;
                }
            }
        }
        self.toks.push((Tok::End, self.text.len()));
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn parse_all(mut self) -> Result<Arc<Expr>, ParseError> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        if *self.peek() == Tok::End {
            return self.syntax("empty expression");
        }
        let e = self.expr()?;
        match self.peek() {
            Tok::End => Ok(e),
            Tok::RParen => self.syntax("unbalanced `)`"),
            _ => self.syntax("expected operator or end of input"),
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Arc<Expr>, ParseError> {
        let offset = self.offset();
        match self.bump().0 {
            Tok::Num(v) => Ok(constant(v)),
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Arc::new(Expr::Var(Var::X))),
                "y" => Ok(Arc::new(Expr::Var(Var::Y))),
                "pi" => Ok(constant(std::f64::consts::PI)),
                _ => match Func::from_name(&name) {
                    Some(func) => self.call_args(func, name, offset),
                    None => Err(ParseError::UnknownIdentifier { offset, name }),
                },
            },
            Tok::LParen => {
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.syntax("expected `)`");
                }
                self.bump();
                Ok(e)
            }
            Tok::End => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            tok => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected token {}", describe(&tok)),
            }),
        }
    }

    fn call_args(&mut self, func: Func, name: String, offset: usize) -> Result<Arc<Expr>, ParseError> {
        if *self.peek() != Tok::LParen {
            return self.syntax(format!("expected `(` after `{name}`"));
        }
        self.bump();
        if *self.peek() == Tok::RParen {
            return Err(ParseError::Arity {
                offset,
                name,
                found: 0,
            });
        }
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        if *self.peek() != Tok::RParen {
            return self.syntax("expected `)` or `,`");
        }
        self.bump();
        if args.len() != 1 {
            return Err(ParseError::Arity {
                offset,
                name,
                found: args.len(),
            });
        }
        Ok(call(func, args.pop().expect("one argument")))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

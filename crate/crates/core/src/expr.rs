//! Arithmetic expressions over `x1..xn` with exact first and second derivatives.
//!
//! Expressions are parsed once into an immutable tree and evaluated either on
//! plain `f64` values or on second-order forward-mode duals ([`Dual2`]), which
//! carry the value, gradient and dense Hessian through every node.
//!
//! Grammar (standard precedence, `^` binds tighter than unary minus):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := primary ('^' exponent)*
//! exponent := ['+' | '-'] INTEGER | '(' ['+' | '-'] INTEGER ')'
//! primary  := NUMBER | 'x'k | ('ln' | 'exp') '(' expr ')' | '(' expr ')'
//! ```

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("variable x{index} at position {pos} is out of range (nvars = {nvars})")]
    VariableOutOfRange { index: usize, nvars: usize, pos: usize },
    #[error("exponent at position {pos} must be an integer literal")]
    NonIntegerExponent { pos: usize },
    #[error("logarithm of nonpositive value {0}")]
    LnDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("evaluation produced a non-finite value")]
    NonFinite,
    #[error("point has {got} coordinates, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Ln,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based variable index (`x1` is `Var(0)`).
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
}

impl Node {
    pub fn unary(op: UnaryOp, arg: Node) -> Node {
        Node::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Unary(_, a) | Node::Pow(a, _) => a.max_var(),
            Node::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

/// A parsed expression together with the number of variables it ranges over.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    nvars: usize,
}

impl Expr {
    /// Wraps a tree; fails if a variable index is not below `nvars`.
    pub fn from_node(root: Node, nvars: usize) -> Result<Expr, ExprError> {
        if let Some(i) = root.max_var() {
            if i >= nvars {
                return Err(ExprError::VariableOutOfRange { index: i + 1, nvars, pos: 0 });
            }
        }
        Ok(Expr { root, nvars })
    }

    pub fn parse(text: &str, nvars: usize) -> Result<Expr, ExprError> {
        parse(text, nvars)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// `ln(self)` as a new tree.
    pub fn ln(&self) -> Expr {
        Expr { root: Node::unary(UnaryOp::Ln, self.root.clone()), nvars: self.nvars }
    }

    /// `c * self` as a new tree.
    pub fn scaled(&self, c: f64) -> Expr {
        Expr { root: Node::binary(BinaryOp::Mul, Node::Const(c), self.root.clone()), nvars: self.nvars }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.check_dim(x)?;
        eval_node::<f64>(&self.root, x)
    }

    pub fn eval_dual(&self, x: &[f64]) -> Result<Dual2, ExprError> {
        self.check_dim(x)?;
        eval_node::<Dual2>(&self.root, x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.nvars {
            return Err(ExprError::DimensionMismatch { expected: self.nvars, got: x.len() });
        }
        Ok(())
    }
}

/// Fully parenthesised rendering; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) => write!(f, "{c}"),
        Node::Var(i) => write!(f, "x{}", i + 1),
        Node::Unary(op, a) => {
            match op {
                UnaryOp::Neg => f.write_str("(-")?,
                UnaryOp::Ln => f.write_str("ln(")?,
                UnaryOp::Exp => f.write_str("exp(")?,
            }
            write_node(a, f)?;
            f.write_str(")")
        }
        Node::Binary(op, a, b) => {
            let sym = match op {
                BinaryOp::Add => " + ",
                BinaryOp::Sub => " - ",
                BinaryOp::Mul => " * ",
                BinaryOp::Div => " / ",
            };
            f.write_str("(")?;
            write_node(a, f)?;
            f.write_str(sym)?;
            write_node(b, f)?;
            f.write_str(")")
        }
        Node::Pow(a, k) => {
            f.write_str("(")?;
            write_node(a, f)?;
            write!(f, "^{k})")
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer and parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
                let mut integral = true;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    integral = false;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        integral = false;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| ExprError::Syntax { pos: start, msg: format!("malformed number `{lit}`") })?;
                out.push((Tok::Num(v, integral), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax { pos: start, msg: format!("unexpected character `{ch}`") });
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    nvars: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> ExprError {
        let msg = match self.peek() {
            Tok::End => format!("expected {what}, found end of input"),
            t => format!("expected {what}, found {t:?}"),
        };
        ExprError::Syntax { pos: self.pos(), msg }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let arg = self.unary()?;
            return Ok(Node::unary(UnaryOp::Neg, arg));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let k = self.exponent()?;
            base = Node::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let paren = *self.peek() == Tok::LParen;
        if paren {
            self.bump();
        }
        let mut sign = 1.0;
        match self.peek() {
            Tok::Minus => {
                sign = -1.0;
                self.bump();
            }
            Tok::Plus => {
                self.bump();
            }
            _ => {}
        }
        let pos = self.pos();
        let k = match self.peek() {
            Tok::Num(v, integral) => {
                if !*integral || v.fract() != 0.0 || *v > i32::MAX as f64 {
                    return Err(ExprError::NonIntegerExponent { pos });
                }
                (sign * v) as i32
            }
            Tok::End => return Err(self.unexpected("integer exponent")),
            _ => return Err(ExprError::NonIntegerExponent { pos }),
        };
        self.bump();
        if paren {
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(k)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "ln" | "exp" => {
                        self.expect(Tok::LParen, "`(` after function name")?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        let op = if name == "ln" { UnaryOp::Ln } else { UnaryOp::Exp };
                        Ok(Node::unary(op, arg))
                    }
                    _ => self.variable(&name, pos),
                }
            }
            _ => Err(self.unexpected("a number, variable, function or `(`")),
        }
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Node, ExprError> {
        let digits = name.strip_prefix('x').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
        let Some(digits) = digits else {
            return Err(ExprError::UnknownIdentifier { name: name.to_string(), pos });
        };
        let index: usize = digits.parse().map_err(|_| ExprError::UnknownIdentifier { name: name.to_string(), pos })?;
        if index == 0 || index > self.nvars {
            return Err(ExprError::VariableOutOfRange { index, nvars: self.nvars, pos });
        }
        Ok(Node::Var(index - 1))
    }
}

/// Parses `text` as an expression over `x1..x{nvars}`.
pub fn parse(text: &str, nvars: usize) -> Result<Expr, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax { pos: 0, msg: "empty expression".into() });
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, nvars };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("operator or end of input"));
    }
    Ok(Expr { root, nvars })
}

// ---------------------------------------------------------------------------
// Evaluation

/// Value, gradient and Hessian of an expression at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Dual2 {
    fn constant(c: f64, n: usize) -> Dual2 {
        Dual2 { value: c, gradient: DVector::zeros(n), hessian: DMatrix::zeros(n, n) }
    }

    fn variable(i: usize, x: &[f64]) -> Dual2 {
        let n = x.len();
        let mut d = Dual2::constant(x[i], n);
        d.gradient[i] = 1.0;
        d
    }

    /// Chain rule for a scalar function with derivatives `d1`, `d2` at the value.
    fn compose(self, value: f64, d1: f64, d2: f64) -> Dual2 {
        let hessian = self.hessian * d1 + (&self.gradient * self.gradient.transpose()) * d2;
        Dual2 { value, gradient: self.gradient * d1, hessian }
    }
}

trait Scalar: Sized {
    fn constant(c: f64, n: usize) -> Self;
    fn variable(i: usize, x: &[f64]) -> Self;
    fn value(&self) -> f64;
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    /// Caller guarantees a nonzero denominator.
    fn div(self, rhs: Self) -> Self;
    fn neg(self) -> Self;
    /// Caller guarantees a positive argument.
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, k: i32) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64, _n: usize) -> f64 {
        c
    }
    fn variable(i: usize, x: &[f64]) -> f64 {
        x[i]
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(self, rhs: f64) -> f64 {
        self + rhs
    }
    fn sub(self, rhs: f64) -> f64 {
        self - rhs
    }
    fn mul(self, rhs: f64) -> f64 {
        self * rhs
    }
    fn div(self, rhs: f64) -> f64 {
        self / rhs
    }
    fn neg(self) -> f64 {
        -self
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn powi(self, k: i32) -> f64 {
        f64::powi(self, k)
    }
}

impl Scalar for Dual2 {
    fn constant(c: f64, n: usize) -> Dual2 {
        Dual2::constant(c, n)
    }
    fn variable(i: usize, x: &[f64]) -> Dual2 {
        Dual2::variable(i, x)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn add(self, rhs: Dual2) -> Dual2 {
        Dual2 {
            value: self.value + rhs.value,
            gradient: self.gradient + rhs.gradient,
            hessian: self.hessian + rhs.hessian,
        }
    }
    fn sub(self, rhs: Dual2) -> Dual2 {
        Dual2 {
            value: self.value - rhs.value,
            gradient: self.gradient - rhs.gradient,
            hessian: self.hessian - rhs.hessian,
        }
    }
    fn mul(self, rhs: Dual2) -> Dual2 {
        let (a, b) = (self.value, rhs.value);
        let cross = &self.gradient * rhs.gradient.transpose();
        let hessian = &rhs.hessian * a + &self.hessian * b + &cross + cross.transpose();
        Dual2 { value: a * b, gradient: &rhs.gradient * a + &self.gradient * b, hessian }
    }
    fn div(self, rhs: Dual2) -> Dual2 {
        let b = rhs.value;
        let recip = rhs.compose(1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b));
        self.mul(recip)
    }
    fn neg(self) -> Dual2 {
        Dual2 { value: -self.value, gradient: -self.gradient, hessian: -self.hessian }
    }
    fn ln(self) -> Dual2 {
        let u = self.value;
        self.compose(u.ln(), 1.0 / u, -1.0 / (u * u))
    }
    fn exp(self) -> Dual2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }
    fn powi(self, k: i32) -> Dual2 {
        let u = self.value;
        let kf = k as f64;
        // zero coefficients are kept exact so that 0 * u^(negative) never appears
        let d1 = if k == 0 { 0.0 } else { kf * u.powi(k - 1) };
        let d2 = if k == 0 || k == 1 { 0.0 } else { kf * (kf - 1.0) * u.powi(k - 2) };
        self.compose(u.powi(k), d1, d2)
    }
}

fn eval_node<S: Scalar>(node: &Node, x: &[f64]) -> Result<S, ExprError> {
    let out = match node {
        Node::Const(c) => S::constant(*c, x.len()),
        Node::Var(i) => S::variable(*i, x),
        Node::Unary(op, a) => {
            let a = eval_node::<S>(a, x)?;
            match op {
                UnaryOp::Neg => a.neg(),
                UnaryOp::Ln => {
                    if a.value() <= 0.0 {
                        return Err(ExprError::LnDomain(a.value()));
                    }
                    a.ln()
                }
                UnaryOp::Exp => a.exp(),
            }
        }
        Node::Binary(op, a, b) => {
            let a = eval_node::<S>(a, x)?;
            let b = eval_node::<S>(b, x)?;
            match op {
                BinaryOp::Add => a.add(b),
                BinaryOp::Sub => a.sub(b),
                BinaryOp::Mul => a.mul(b),
                BinaryOp::Div => {
                    if b.value() == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    a.div(b)
                }
            }
        }
        Node::Pow(a, k) => {
            let a = eval_node::<S>(a, x)?;
            if *k < 0 && a.value() == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            a.powi(*k)
        }
    };
    if !out.value().is_finite() {
        return Err(ExprError::NonFinite);
    }
    Ok(out)
}

//! Expression language for potentials and coupling coefficients.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exponent)?
//! exponent:= '-'? INT ('^' exponent)?
//! primary := NUMBER | 'pi' | 'x' | FUNC '(' expr ')' | '(' expr ')'
//! ```
//!
//! Juxtaposition is not multiplication: `2x` is a syntax error.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::scalar::{powi, DomainError, Jet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn apply<S: Scalar>(self, v: S) -> Result<S, DomainError> {
        Ok(match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln()?,
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
            Func::Sqrt => v.sqrt()?,
        })
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("exponent at byte {offset} is not an integer literal")]
    NonIntegerExponent { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::NonIntegerExponent { offset } => *offset,
        }
    }
}

/// Parse a formula in the variable `x`.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("operator or end of input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let start = match self.peek() {
            Some(_) => self.pos,
            None => return Err(self.syntax("integer exponent")),
        };
        let neg = if self.src[self.pos] == b'-' {
            self.pos += 1;
            self.ws();
            true
        } else {
            false
        };
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(ParseError::NonIntegerExponent { offset: start });
        }
        if matches!(self.src.get(self.pos), Some(b'.' | b'e' | b'E')) {
            return Err(ParseError::NonIntegerExponent { offset: start });
        }
        let text = std::str::from_utf8(&self.src[digits..self.pos]).expect("ascii digits");
        let mut value: i64 = text
            .parse()
            .map_err(|_| ParseError::Syntax {
                offset: digits,
                expected: "exponent that fits in 32 bits".into(),
            })?;
        if neg {
            value = -value;
        }
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let rest = self.exponent()?;
            if rest < 0 && value.abs() != 1 {
                return Err(ParseError::NonIntegerExponent { offset: start });
            }
            value = int_pow(value, rest).ok_or(ParseError::Syntax {
                offset: start,
                expected: "exponent that fits in 32 bits".into(),
            })?;
        }
        i32::try_from(value).map_err(|_| ParseError::Syntax {
            offset: start,
            expected: "exponent that fits in 32 bits".into(),
        })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("expression")),
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.syntax("number, identifier or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i == start + 1 && s[start] == b'.' {
            return Err(self.syntax("digit"));
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            let d = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j > d {
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii number");
        let v: f64 = text.parse().map_err(|_| self.syntax("number"))?;
        self.pos = i;
        Ok(Expr::Num(v))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        match name {
            "x" => Ok(Expr::X),
            "pi" => Ok(Expr::Pi),
            _ => {
                let Some(f) = Func::from_name(name) else {
                    return Err(ParseError::UnknownIdentifier {
                        offset: start,
                        name: name.to_string(),
                    });
                };
                if self.peek() != Some(b'(') {
                    return Err(self.syntax("'(' after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("')'"));
                }
                self.pos += 1;
                Ok(Expr::Call(f, Box::new(arg)))
            }
        }
    }
}

fn int_pow(base: i64, exp: i32) -> Option<i64> {
    if exp < 0 {
        // only reachable for |base| == 1
        return Some(if exp % 2 == 0 { base * base } else { base });
    }
    base.checked_pow(exp as u32)
}

impl Expr {
    /// Replace every occurrence of `x` by `with`.
    pub fn substitute(&self, with: &Expr) -> Expr {
        let b = |e: &Expr| Box::new(e.substitute(with));
        match self {
            Expr::X => with.clone(),
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Neg(a) => Expr::Neg(b(a)),
            Expr::Add(l, r) => Expr::Add(b(l), b(r)),
            Expr::Sub(l, r) => Expr::Sub(b(l), b(r)),
            Expr::Mul(l, r) => Expr::Mul(b(l), b(r)),
            Expr::Div(l, r) => Expr::Div(b(l), b(r)),
            Expr::Pow(a, n) => Expr::Pow(b(a), *n),
            Expr::Call(f, a) => Expr::Call(*f, b(a)),
        }
    }

    fn level(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, child: &Expr, wrap: bool) -> fmt::Result {
        if wrap {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }

    /// Evaluate at `x` in any scalar type.
    pub fn eval_scalar<S: Scalar>(&self, x: &S) -> Result<S, DomainError> {
        let v = self.walk(x)?;
        if !v.is_finite() {
            return Err(DomainError::NonFinite);
        }
        Ok(v)
    }

    fn walk<S: Scalar>(&self, x: &S) -> Result<S, DomainError> {
        Ok(match self {
            Expr::Num(v) => x.constant(*v),
            Expr::Pi => x.constant(PI),
            Expr::X => x.clone(),
            Expr::Neg(a) => -a.walk(x)?,
            Expr::Add(a, b) => a.walk(x)? + b.walk(x)?,
            Expr::Sub(a, b) => a.walk(x)? - b.walk(x)?,
            Expr::Mul(a, b) => a.walk(x)? * b.walk(x)?,
            Expr::Div(a, b) => a.walk(x)?.checked_div(b.walk(x)?)?,
            Expr::Pow(a, n) => powi(a.walk(x)?, *n)?,
            Expr::Call(func, a) => func.apply(a.walk(x)?)?,
        })
    }

    /// Real evaluation.
    pub fn eval_real(&self, x: f64) -> Result<f64, DomainError> {
        self.eval_scalar(&x)
    }

    /// True when the tree is the literal zero, so callers can skip work.
    pub fn is_literal_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(0 - {})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Pi => write!(f, "pi"),
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                self.write_child(f, a, a.level() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, lvl) = match self {
                    Expr::Add(..) => ("+", 1),
                    Expr::Sub(..) => ("-", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                self.write_child(f, a, a.level() < lvl)?;
                write!(f, " {op} ")?;
                self.write_child(f, b, b.level() <= lvl)
            }
            Expr::Pow(a, n) => {
                self.write_child(f, a, a.level() < 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Render an expression back to source text.
pub fn unparse(e: &Expr) -> String {
    e.to_string()
}

/// Complex evaluation; for real `x` the imaginary part of the result is exactly zero.
pub fn eval(e: &Expr, x: Complex64) -> Result<Complex64, DomainError> {
    e.eval_scalar(&x)
}

/// Taylor coefficients `c_k = f^(k)(x0) / k!` for `k = 0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    pub x0: f64,
    pub coeffs: Vec<f64>,
}

impl TaylorJet {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// k-th derivative at the base point.
    pub fn derivative(&self, k: usize) -> f64 {
        self.coeffs[k] * factorial(k)
    }
}

pub fn taylor_jet(e: &Expr, x0: f64, order: usize) -> Result<TaylorJet, DomainError> {
    let j = e.eval_scalar(&Jet::variable(x0, order))?;
    Ok(TaylorJet { x0, coeffs: j.c })
}

/// Value and first derivative at a complex point.
pub fn eval_with_derivative(e: &Expr, x: Complex64) -> Result<(Complex64, Complex64), DomainError> {
    let j = e.eval_scalar(&Jet::variable(x, 1))?;
    Ok((j.c[0], j.c[1]))
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

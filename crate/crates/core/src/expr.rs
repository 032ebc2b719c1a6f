//! Scalar expressions over chart coordinates.
//!
//! The grammar is deliberately small: numeric literals, identifiers, unary
//! minus, `+ - * /`, integer powers `^n` and the functions `sin`, `cos`,
//! `exp`. It is closed under differentiation, which is what makes exact Lie
//! brackets and Jacobians possible without any computer-algebra machinery.
//!
//! Identifiers are bound to coordinate slots with [`Expr::resolve`]. An
//! identifier that was never resolved is only reported when the expression is
//! evaluated.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// A named variable; `index` is the coordinate slot once resolved.
    Var { name: Arc<str>, index: Option<usize> },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Parse an expression. Identifiers are left unresolved.
pub fn parse_expression(text: &str) -> Result<Expr, Error> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Exact partial derivative of `e` with respect to the coordinate named `coordinate`.
///
/// `coords` is the chart's coordinate list; `e` is resolved against it first.
pub fn differentiate(e: &Expr, coordinate: &str, coords: &[String]) -> Result<Expr, Error> {
    let index = coords
        .iter()
        .position(|c| c == coordinate)
        .ok_or_else(|| Error::InvalidInput(format!("'{coordinate}' is not a chart coordinate")))?;
    Ok(e.resolve(coords).derivative(index))
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn coord(name: &str, index: usize) -> Expr {
        Expr::Var { name: Arc::from(name), index: Some(index) }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Neg(a) => a.as_const().map(|v| -v),
            _ => None,
        }
    }

    /// Bind identifiers to coordinate slots by name. Unknown names stay unresolved.
    pub fn resolve(&self, coords: &[String]) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var { name, .. } => Expr::Var {
                name: name.clone(),
                index: coords.iter().position(|c| **c == **name),
            },
            Expr::Neg(a) => Expr::Neg(Box::new(a.resolve(coords))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.resolve(coords)), Box::new(b.resolve(coords))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.resolve(coords)), Box::new(b.resolve(coords))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.resolve(coords)), Box::new(b.resolve(coords))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.resolve(coords)), Box::new(b.resolve(coords))),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.resolve(coords)), *n),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.resolve(coords))),
        }
    }

    /// Names of identifiers that have no coordinate slot.
    pub fn unresolved(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var { name, index: None } = e {
                if !out.iter().any(|n: &String| **n == **name) {
                    out.push(name.to_string());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var { .. } => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.visit(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_raw(point)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_raw(&self, point: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var { name, index } => match index {
                Some(i) => *point
                    .get(*i)
                    .ok_or(EvalError::CoordOutOfRange { index: *i, dim: point.len() })?,
                None => return Err(EvalError::UnknownIdentifier(name.to_string())),
            },
            Expr::Neg(a) => -a.eval_raw(point)?,
            Expr::Add(a, b) => a.eval_raw(point)? + b.eval_raw(point)?,
            Expr::Sub(a, b) => a.eval_raw(point)? - b.eval_raw(point)?,
            Expr::Mul(a, b) => a.eval_raw(point)? * b.eval_raw(point)?,
            Expr::Div(a, b) => {
                let num = a.eval_raw(point)?;
                let den = b.eval_raw(point)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval_raw(point)?;
                if *n < 0 {
                    if base == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    1.0 / base.powi(-n)
                } else {
                    base.powi(*n)
                }
            }
            Expr::Call(f, a) => f.apply(a.eval_raw(point)?),
        })
    }

    /// Exact partial derivative with respect to coordinate slot `index`.
    pub fn derivative(&self, index: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var { index: Some(i), .. } => Expr::Num(if *i == index { 1.0 } else { 0.0 }),
            // unresolved: keep the identifier so evaluation still fails
            Expr::Var { index: None, .. } => {
                Expr::Mul(Box::new(Expr::Num(0.0)), Box::new(self.clone()))
            }
            Expr::Neg(a) => neg(a.derivative(index)),
            Expr::Add(a, b) => add(a.derivative(index), b.derivative(index)),
            Expr::Sub(a, b) => sub(a.derivative(index), b.derivative(index)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(index), (**b).clone()),
                mul((**a).clone(), b.derivative(index)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.derivative(index), (**b).clone()),
                    mul((**a).clone(), b.derivative(index)),
                ),
                pow((**b).clone(), 2),
            ),
            Expr::Pow(a, n) => mul(
                mul(Expr::Num(*n as f64), pow((**a).clone(), n - 1)),
                a.derivative(index),
            ),
            Expr::Call(f, a) => {
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Exp => call(Func::Exp, (**a).clone()),
                };
                mul(outer, a.derivative(index))
            }
        }
    }
}

// Smart constructors with constant folding and identity elimination.

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
        (Some(x), Some(y)) if x == 0.0 && y != 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (a.as_const(), n) {
        (_, 0) => Expr::Num(1.0),
        (_, 1) => a,
        (Some(x), n) if n > 0 || x != 0.0 => Expr::Num(x.powi(n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match a.as_const() {
        Some(x) => Expr::Num(f.apply(x)),
        None => Expr::Call(f, Box::new(a)),
    }
}

/// Fully parenthesised rendering; re-parsing it yields an evaluation-equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var { name, .. } => write!(f, "{name}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => {
                if *n < 0 {
                    write!(f, "({a})^({n})")
                } else {
                    write!(f, "({a})^{n}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), Error> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, Error> {
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

    fn term(&mut self) -> Result<Expr, Error> {
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

    fn unary(&mut self) -> Result<Expr, Error> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, Error> {
        let base = self.primary()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let paren = self.peek() == Some(b'(');
        if paren {
            self.pos += 1;
        }
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let magnitude: i32 = digits
            .parse()
            .map_err(|_| Error::Syntax { offset: start, message: "exponent out of range".into() })?;
        if paren {
            self.expect(b')')?;
        }
        Ok(Expr::Pow(Box::new(base), if negative { -magnitude } else { magnitude }))
    }

    fn primary(&mut self) -> Result<Expr, Error> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
                if let Some(func) = Func::from_name(name) {
                    if self.peek() == Some(b'(') {
                        self.pos += 1;
                        let arg = self.expr()?;
                        self.expect(b')')?;
                        return Ok(Expr::Call(func, Box::new(arg)));
                    }
                }
                Ok(Expr::Var { name: Arc::from(name), index: None })
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, Error> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut look = self.pos + 1;
            if look < s.len() && (s[look] == b'+' || s[look] == b'-') {
                look += 1;
            }
            if look < s.len() && s[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Syntax { offset: start, message: format!("malformed number '{text}'") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xyz() -> Vec<String> {
        vec!["x".into(), "y".into(), "t".into()]
    }

    fn eval_at(text: &str, p: &[f64]) -> f64 {
        parse_expression(text).unwrap().resolve(&xyz()).eval(p).unwrap()
    }

    #[test]
    fn literal_arithmetic() {
        assert_eq!(eval_at("0.5*y", &[1.0, 3.0, 0.0]), 1.5);
        assert_eq!(eval_at("x^2*y - sin(t)", &[2.0, 1.0, 0.0]), 4.0);
        assert_eq!(eval_at("-x^2", &[3.0, 0.0, 0.0]), -9.0);
        assert_eq!(eval_at("2^-2", &[0.0; 3]), 0.25);
        assert_eq!(eval_at("x^(-1)", &[4.0, 0.0, 0.0]), 0.25);
        assert_eq!(eval_at("1e-2 * 3", &[0.0; 3]), 0.03);
    }

    #[test]
    fn unbalanced_paren_offset() {
        match parse_expression("x*(y") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(parse_expression(""), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse_expression("x^y"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse_expression("x $ y"), Err(Error::Syntax { offset: 2, .. })));
    }

    #[test]
    fn unknown_identifier_is_deferred() {
        let e = parse_expression("x + z").unwrap().resolve(&xyz());
        assert_eq!(e.unresolved(), vec!["z".to_string()]);
        assert_eq!(e.eval(&[1.0, 0.0, 0.0]), Err(EvalError::UnknownIdentifier("z".into())));
        let d = e.derivative(0);
        assert!(d.eval(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn division_by_zero_reported() {
        let e = parse_expression("1/x").unwrap().resolve(&xyz());
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]), Err(EvalError::DivisionByZero));
        let e = parse_expression("x^-3").unwrap().resolve(&xyz());
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn derivative_examples() {
        let c = xyz();
        let d = differentiate(&parse_expression("x^2*y").unwrap(), "x", &c).unwrap();
        for p in [[1.0, 2.0, 0.0], [-3.0, 0.5, 7.0]] {
            assert!((d.eval(&p).unwrap() - 2.0 * p[0] * p[1]).abs() < 1e-14);
        }
        let d = differentiate(&parse_expression("0.5*y").unwrap(), "t", &c).unwrap();
        assert!(d.is_zero());
        let d = differentiate(&parse_expression("sin(x)").unwrap(), "x", &c).unwrap();
        assert_eq!(d.eval(&[0.0; 3]).unwrap(), 1.0);
        assert!(differentiate(&d, "w", &c).is_err());
    }

    #[test]
    fn display_reparses() {
        let e = parse_expression("-x^2*y - 3/(t+1)^-2 + exp(-0.5*x)").unwrap();
        let back = parse_expression(&e.to_string()).unwrap();
        let c = xyz();
        let p = [0.3, -1.2, 0.7];
        assert_eq!(e.resolve(&c).eval(&p).unwrap(), back.resolve(&c).eval(&p).unwrap());
    }
}

//! Small arithmetic expressions in x and t, for problem data given inline
//! in a config file.
//!
//! Grammar: numbers, `x`, `t`, `pi`, `+ - * / ^`, unary minus, parentheses
//! and the functions `sin`, `cos`, `exp`. `^` binds tighter than unary
//! minus and is right associative.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    T,
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// only produced by differentiation
    Ln(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

use Expr::*;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src,
            toks: tokenize(src)?,
            pos: 0,
        };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Num(v) => *v,
            X => x,
            T => t,
            Pi => PI,
            Neg(a) => -a.eval(x, t),
            Add(a, c) => a.eval(x, t) + c.eval(x, t),
            Sub(a, c) => a.eval(x, t) - c.eval(x, t),
            Mul(a, c) => a.eval(x, t) * c.eval(x, t),
            Div(a, c) => a.eval(x, t) / c.eval(x, t),
            Pow(a, c) => {
                let (base, e) = (a.eval(x, t), c.eval(x, t));
                if e == e.round() && e.abs() < 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Sin(a) => a.eval(x, t).sin(),
            Cos(a) => a.eval(x, t).cos(),
            Exp(a) => a.eval(x, t).exp(),
            Ln(a) => a.eval(x, t).ln(),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Num(_) | Pi => false,
            X => v == Var::X,
            T => v == Var::T,
            Neg(a) | Sin(a) | Cos(a) | Exp(a) | Ln(a) => a.depends_on(v),
            Add(a, c) | Sub(a, c) | Mul(a, c) | Div(a, c) | Pow(a, c) => a.depends_on(v) || c.depends_on(v),
        }
    }

    fn is_const(&self) -> bool {
        !self.depends_on(Var::X) && !self.depends_on(Var::T)
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn derivative(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Num(0.0);
        }
        match self {
            Num(_) | Pi => Num(0.0),
            X | T => Num(1.0),
            Neg(a) => neg(a.derivative(v)),
            Add(a, c) => add(a.derivative(v), c.derivative(v)),
            Sub(a, c) => sub(a.derivative(v), c.derivative(v)),
            Mul(a, c) => add(mul(a.derivative(v), (**c).clone()), mul((**a).clone(), c.derivative(v))),
            Div(a, c) => div(
                sub(mul(a.derivative(v), (**c).clone()), mul((**a).clone(), c.derivative(v))),
                pow((**c).clone(), Num(2.0)),
            ),
            Pow(a, c) if c.is_const() => mul(
                mul((**c).clone(), pow((**a).clone(), sub((**c).clone(), Num(1.0)))),
                a.derivative(v),
            ),
            Pow(a, c) => mul(
                self.clone(),
                add(
                    mul(c.derivative(v), Ln(a.clone())),
                    div(mul((**c).clone(), a.derivative(v)), (**a).clone()),
                ),
            ),
            Sin(a) => mul(Cos(a.clone()), a.derivative(v)),
            Cos(a) => neg(mul(Sin(a.clone()), a.derivative(v))),
            Exp(a) => mul(self.clone(), a.derivative(v)),
            Ln(a) => div(a.derivative(v), (**a).clone()),
        }
    }

    /// Shareable closure (x, t) ↦ value.
    pub fn field(&self) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        let e = self.clone();
        Arc::new(move |x, t| e.eval(x, t))
    }

    /// Closure x ↦ value at t = `t`.
    pub fn at_time(&self, t: f64) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let e = self.clone();
        Arc::new(move |x| e.eval(x, t))
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Num(v) if *v == 1.0)
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(v) => Num(-v),
        Neg(inner) => *inner,
        a => Neg(b(a)),
    }
}

fn add(a: Expr, c: Expr) -> Expr {
    match (a, c) {
        (a, c) if is_zero(&c) => a,
        (a, c) if is_zero(&a) => c,
        (Num(p), Num(q)) => Num(p + q),
        (a, c) => Add(b(a), b(c)),
    }
}

fn sub(a: Expr, c: Expr) -> Expr {
    match (a, c) {
        (a, c) if is_zero(&c) => a,
        (a, c) if is_zero(&a) => neg(c),
        (Num(p), Num(q)) => Num(p - q),
        (a, c) => Sub(b(a), b(c)),
    }
}

fn mul(a: Expr, c: Expr) -> Expr {
    match (a, c) {
        (a, c) if is_zero(&a) || is_zero(&c) => Num(0.0),
        (a, c) if is_one(&c) => a,
        (a, c) if is_one(&a) => c,
        (Num(p), Num(q)) => Num(p * q),
        (a, c) => Mul(b(a), b(c)),
    }
}

fn div(a: Expr, c: Expr) -> Expr {
    match (a, c) {
        (a, _) if is_zero(&a) => Num(0.0),
        (a, c) if is_one(&c) => a,
        (a, c) => Div(b(a), b(c)),
    }
}

fn pow(a: Expr, c: Expr) -> Expr {
    match (a, c) {
        (_, c) if is_zero(&c) => Num(1.0),
        (a, c) if is_one(&c) => a,
        (a, c) => Pow(b(a), b(c)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) => write!(f, "{v:?}"),
            X => write!(f, "x"),
            T => write!(f, "t"),
            Pi => write!(f, "pi"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, c) => write!(f, "({a} + {c})"),
            Sub(a, c) => write!(f, "({a} - {c})"),
            Mul(a, c) => write!(f, "({a} * {c})"),
            Div(a, c) => write!(f, "({a} / {c})"),
            Pow(a, c) => write!(f, "({a} ^ {c})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Ln(a) => write!(f, "ln({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            let text = &src[chars[start].0..end];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Expr(format!("bad number '{text}' at {pos} in '{src}'")))?;
            out.push((Tok::Num(v), pos));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_alphanumeric() {
                i += 1;
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            out.push((Tok::Ident(src[chars[start].0..end].to_string()), pos));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), pos));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' at {pos} in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let at = self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.src.len());
        Error::Expr(format!("{msg} at {at} in '{}'", self.src))
    }

    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some((Tok::Op(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Add(b(lhs), b(rhs)) } else { Sub(b(lhs), b(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Mul(b(lhs), b(rhs)) } else { Div(b(lhs), b(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Neg(b(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Pow(b(base), b(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op(_) => {
                self.pos -= 1;
                Err(self.error("unexpected operator"))
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(X),
                "t" => Ok(T),
                "pi" => Ok(Pi),
                "sin" | "cos" | "exp" => {
                    self.expect('(')?;
                    let arg = b(self.expr()?);
                    self.expect(')')?;
                    Ok(match name.as_str() {
                        "sin" => Sin(arg),
                        "cos" => Cos(arg),
                        _ => Exp(arg),
                    })
                }
                _ => {
                    self.pos -= 1;
                    Err(self.error(&format!("unknown name '{name}'")))
                }
            },
        }
    }
}

//! Arithmetic expressions over chart coordinates.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus on its left,
//! so `-x^2` is `-(x^2)`. Columns in errors are 1-based.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Syntax tree. Identifiers are resolved at parse time: coordinates become
/// `Var` slots, named constants and parameters are folded into `Const`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars),
            Expr::Call(f, e) => f.apply(e.eval(vars)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "${i}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{func:?}({e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E4
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Syntax {
                column: col,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(Error::Syntax {
                        column: col,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((tok, col));
            i += 1;
        }
    }
    Ok(out)
}

/// Names visible to an expression: coordinate variables (by slot) and
/// constant parameters. `pi` is always defined.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub vars: Vec<String>,
    pub params: BTreeMap<String, f64>,
}

impl Scope {
    pub fn coords(names: &[&str]) -> Self {
        Scope {
            vars: names.iter().map(|s| s.to_string()).collect(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_params(mut self, params: &BTreeMap<String, f64>) -> Self {
        self.params.extend(params.iter().map(|(k, v)| (k.clone(), *v)));
        self
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
    scope: &'a Scope,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn paren_body(&mut self, open_col: usize) -> Result<Expr> {
        if self.peek().is_none() {
            return Err(Error::Syntax {
                column: open_col,
                message: "unclosed parenthesis".into(),
            });
        }
        let inner = self.sum()?;
        match self.bump() {
            Some((Tok::RParen, _)) => Ok(inner),
            None => Err(Error::Syntax {
                column: open_col,
                message: "unclosed parenthesis".into(),
            }),
            Some((t, c)) => Err(Error::Syntax {
                column: c,
                message: format!("expected `)`, found {t:?}"),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let col = self.col();
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expr::Const(v)),
            Some((Tok::LParen, c)) => self.paren_body(c),
            Some((Tok::Ident(name), c)) => {
                if let Some(func) = Func::lookup(&name) {
                    match self.bump() {
                        Some((Tok::LParen, pc)) => {
                            let arg = self.paren_body(pc)?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        _ => Err(Error::Syntax {
                            column: c + name.len(),
                            message: format!("`{name}` must be followed by `(`"),
                        }),
                    }
                } else if let Some(slot) = self.scope.vars.iter().position(|v| *v == name) {
                    Ok(Expr::Var(slot))
                } else if let Some(v) = self.scope.params.get(&name) {
                    Ok(Expr::Const(*v))
                } else if name == "pi" {
                    Ok(Expr::Const(std::f64::consts::PI))
                } else {
                    Err(Error::UnknownIdentifier { name, column: c })
                }
            }
            Some((t, c)) => Err(Error::Syntax {
                column: c,
                message: format!("unexpected token {t:?}"),
            }),
            None => Err(Error::Syntax {
                column: col,
                message: "unexpected end of expression".into(),
            }),
        }
    }
}

/// Parse one expression in the given scope.
pub fn parse(src: &str, scope: &Scope) -> Result<Expr> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: src.chars().count() + 1,
        scope,
    };
    let e = p.sum()?;
    if let Some((t, c)) = p.toks.get(p.pos) {
        return Err(Error::Syntax {
            column: *c,
            message: format!("trailing input starting with {t:?}"),
        });
    }
    Ok(e)
}

/// Split a comma-separated component list at top-level commas.
pub fn split_components(src: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in src.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() || !parts.is_empty() {
        parts.push(cur.trim().to_string());
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Scope {
        Scope::coords(&["x", "y"])
    }

    #[test]
    fn evaluates_linear_components() {
        let s = xy();
        let parts = split_components("x*0.625, -y*0.625");
        assert_eq!(parts.len(), 2);
        let a = parse(&parts[0], &s).unwrap();
        let b = parse(&parts[1], &s).unwrap();
        assert!((a.eval(&[1.0, 1.0]) - 0.625).abs() < 1e-15);
        assert!((b.eval(&[1.0, 1.0]) + 0.625).abs() < 1e-15);
    }

    #[test]
    fn sine_quarter_period() {
        let e = parse("sin(2*pi*x)", &Scope::coords(&["x"])).unwrap();
        assert!((e.eval(&[0.25]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_paren_reports_its_column() {
        match parse("x*(", &xy()) {
            Err(Error::Syntax { column, .. }) => assert_eq!(column, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        match parse("x + z", &xy()) {
            Err(Error::UnknownIdentifier { name, column }) => {
                assert_eq!(name, "z");
                assert_eq!(column, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let s = xy();
        let e = parse("-x^2", &s).unwrap();
        assert_eq!(e.eval(&[3.0, 0.0]), -9.0);
        let e = parse("2^3^2", &s).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 512.0);
        let e = parse("1 - 2 - 3", &s).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), -4.0);
        let e = parse("8 / 4 / 2", &s).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 1.0);
        let e = parse("2*x + y*exp(0)", &s).unwrap();
        assert_eq!(e.eval(&[1.5, 2.0]), 5.0);
        let e = parse("1.5e-1 * cos(0)", &s).unwrap();
        assert!((e.eval(&[0.0, 0.0]) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn parameters_fold_to_constants() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.5);
        let s = xy().with_params(&params);
        let e = parse("k*x", &s).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]), 5.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("", &xy()).is_err());
        assert!(parse("x y", &xy()).is_err());
        assert!(parse("sin x", &xy()).is_err());
        assert!(parse("x # 2", &xy()).is_err());
        assert!(parse("(x))", &xy()).is_err());
    }

    #[test]
    fn split_respects_parentheses() {
        // no multi-argument functions exist, but nested parens must not split
        let parts = split_components("sin((x)), (y)*2");
        assert_eq!(parts, vec!["sin((x))", "(y)*2"]);
    }
}

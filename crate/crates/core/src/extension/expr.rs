//! Arithmetic expressions over `t, x1, x2, x3`.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, and the functions `sin cos exp sqrt ln abs tanh`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
    Abs,
    Tanh,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    /// 0 = t, 1..=3 = x1..x3
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64; 4]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(vars)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, ops: &str) -> Option<char> {
        if let Some(Token::Op(c)) = self.peek() {
            if ops.contains(*c) {
                let c = *c;
                self.pos += 1;
                return Some(c);
            }
        }
        None
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op("+-") {
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op("*/") {
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat_op("-").is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op("+").is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat_op("^").is_some() {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Op('(') => {
                let inner = self.expr()?;
                self.eat_op(")")
                    .ok_or_else(|| Error::Expression("missing ')'".into()))?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.eat_op("(")
                        .ok_or_else(|| Error::Expression(format!("'{name}' needs '('")))?;
                    let arg = self.expr()?;
                    self.eat_op(")")
                        .ok_or_else(|| Error::Expression("missing ')'".into()))?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "t" => Ok(Node::Var(0)),
                    "x1" => Ok(Node::Var(1)),
                    "x2" => Ok(Node::Var(2)),
                    "x3" => Ok(Node::Var(3)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expression(format!("unknown identifier '{name}'"))),
                }
            }
            Token::Op(c) => Err(Error::Expression(format!("unexpected '{c}'"))),
        }
    }
}

/// A parsed expression; serializes as its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
        };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "trailing input after position {} in '{src}'",
                p.pos
            )));
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            source: format!("{v:?}"),
            root: Node::Num(v),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let mut vars = [t, 0.0, 0.0, 0.0];
        for (slot, v) in vars[1..].iter_mut().zip(x) {
            *slot = *v;
        }
        self.root.eval(&vars)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: f64, x: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(t, x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[]), 7.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, &[]), 1.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, &[]), -4.0);
        assert_eq!(ev("(1 - 3) * -2", 0.0, &[]), 4.0);
        assert_eq!(ev("1.5e-1 * 10", 0.0, &[]), 1.5);
    }

    #[test]
    fn variables_and_functions() {
        let v = ev("sin(pi*x1)*x2 + exp(t) - cos(0)", 0.5, &[0.5, 2.0]);
        assert!((v - (2.0 + 0.5f64.exp() - 1.0)).abs() < 1e-15);
        assert!((ev("e", 0.0, &[]) - std::f64::consts::E).abs() < 1e-16);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("x1 $ 2").is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let e = Expr::parse("x1*(1-x1)").unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, "\"x1*(1-x1)\"");
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }
}

//! Small arithmetic formulas over the level `k` and index `n`.
//!
//! Used for generator rules such as `alpha = n` or `log a = k*ln(n)`.
//! Grammar (usual precedence, `^` right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names: `k`, `n`, `pi`, `e`. Functions: `ln`, `log` (natural), `log2`,
//! `log10`, `exp`, `sqrt`, `abs`, `floor`, `ceil`, `min`, `max`, `pow`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("formula `{source_text}`: {message} at byte {offset}")]
pub struct ExprError {
    pub source_text: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Ln,
    Log2,
    Log10,
    Exp,
    Sqrt,
    Abs,
    Floor,
    Ceil,
    Min,
    Max,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "ln" | "log" => (Func::Ln, 1),
            "log2" => (Func::Log2, 1),
            "log10" => (Func::Log10, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "floor" => (Func::Floor, 1),
            "ceil" => (Func::Ceil, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    K,
    N,
    Neg(Box<Node>),
    Bin(u8, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, k: f64, n: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::K => k,
            Node::N => n,
            Node::Neg(a) => -a.eval(k, n),
            Node::Bin(op, a, b) => {
                let (x, y) = (a.eval(k, n), b.eval(k, n));
                match op {
                    b'+' => x + y,
                    b'-' => x - y,
                    b'*' => x * y,
                    b'/' => x / y,
                    _ => libm::pow(x, y),
                }
            }
            Node::Call(f, args) => {
                let x = args[0].eval(k, n);
                match f {
                    Func::Ln => libm::log(x),
                    Func::Log2 => libm::log2(x),
                    Func::Log10 => libm::log10(x),
                    Func::Exp => libm::exp(x),
                    Func::Sqrt => libm::sqrt(x),
                    Func::Abs => x.abs(),
                    Func::Floor => libm::floor(x),
                    Func::Ceil => libm::ceil(x),
                    Func::Min => x.min(args[1].eval(k, n)),
                    Func::Max => x.max(args[1].eval(k, n)),
                    Func::Pow => libm::pow(x, args[1].eval(k, n)),
                }
            }
        }
    }

    fn uses(&self, var: &Node) -> bool {
        match self {
            Node::K | Node::N => self == var,
            Node::Num(_) => false,
            Node::Neg(a) => a.uses(var),
            Node::Bin(_, a, b) => a.uses(var) || b.uses(var),
            Node::Call(_, args) => args.iter().any(|a| a.uses(var)),
        }
    }
}

/// A parsed formula. Keeps its source text, which is also its serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    source: String,
    root: Node,
}

impl Formula {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source,
            bytes: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Formula {
            source: source.to_string(),
            root,
        })
    }

    /// Parses a formula that may only mention `n`.
    pub fn parse_in_n(source: &str) -> Result<Self, ExprError> {
        let f = Self::parse(source)?;
        if f.root.uses(&Node::K) {
            return Err(ExprError {
                source_text: source.to_string(),
                offset: source.find('k').unwrap_or(0),
                message: "only `n` is allowed here".to_string(),
            });
        }
        Ok(f)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, k: f64, n: f64) -> f64 {
        self.root.eval(k, n)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Formula::parse(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            source_text: self.src.to_string(),
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(b'^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                // Not an exponent: `2e` leaves `e` for the caller.
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Node::Num).map_err(|_| ExprError {
            source_text: self.src.to_string(),
            offset: start,
            message: "malformed number".to_string(),
        })
    }

    fn name(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let (func, arity) = Func::lookup(name).ok_or_else(|| ExprError {
                source_text: self.src.to_string(),
                offset: start,
                message: alloc::format!("unknown function `{name}`"),
            })?;
            self.pos += 1;
            let mut args = Vec::new();
            loop {
                args.push(self.expr()?);
                if self.eat(b',') {
                    continue;
                }
                if self.eat(b')') {
                    break;
                }
                return Err(self.error("expected `,` or `)`"));
            }
            if args.len() != arity {
                return Err(ExprError {
                    source_text: self.src.to_string(),
                    offset: start,
                    message: alloc::format!("`{name}` takes {arity} argument(s)"),
                });
            }
            return Ok(Node::Call(func, args));
        }
        match name {
            "k" => Ok(Node::K),
            "n" => Ok(Node::N),
            "pi" => Ok(Node::Num(core::f64::consts::PI)),
            "e" => Ok(Node::Num(core::f64::consts::E)),
            _ => Err(ExprError {
                source_text: self.src.to_string(),
                offset: start,
                message: alloc::format!("unknown name `{name}`"),
            }),
        }
    }
}

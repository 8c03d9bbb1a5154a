//! Annotation templates (`PositionX: ${obj_1.x}`) and the small arithmetic
//! language used inside holes and property bindings.
//!
//! Evaluation never fails: a missing operand, a division by zero or a
//! non-finite intermediate all collapse to "unavailable", which templates
//! render as `--`.

mod format;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::VariableRegistry;

pub use format::{format_fixed, format_value, UNAVAILABLE};
pub use parser::{parse_expr, parse_template};

pub const DEFAULT_PRECISION: u8 = 2;
/// Largest accepted display precision.
pub const MAX_PRECISION: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unterminated '${{' hole")]
    UnterminatedHole,
    #[error("empty hole")]
    EmptyHole,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expected ')'")]
    UnclosedParen,
    #[error("malformed number")]
    BadNumber,
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
}

/// A variable the template refers to that the registry does not declare.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variable '{name}' at byte {offset}")]
pub struct UnknownVariable {
    pub name: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Dotted variable path such as `obj_1.speed.x`.
    Var(String),
    /// `time()`: seconds since the start of the clip.
    Time,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, reg: &VariableRegistry) -> Option<f64> {
        let v = match self {
            Expr::Num(n) => *n,
            Expr::Var(name) => reg.value(name)?,
            Expr::Time => reg.time(),
            Expr::Neg(e) => -e.eval(reg)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(reg)?, b.eval(reg)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return None,
                    BinOp::Div => a / b,
                }
            }
        };
        v.is_finite().then_some(v)
    }

    /// Variable paths in source order, duplicates included.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num(_) | Expr::Time => {}
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

/// Canonical form with the minimum parentheses needed to reparse to the same
/// tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Time => f.write_str("time()"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // Left associativity: an equal-precedence right operand needs
                // parentheses.
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

/// A `${...}` interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Hole {
    pub expr: Expr,
    /// Text between the braces, verbatim.
    pub raw: String,
    /// Byte offset of the `$` that opens the hole.
    pub offset: usize,
    /// Variables with their absolute byte offsets.
    pub vars: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// `text` is the decoded literal, `raw` the source it came from.
    Literal {
        text: String,
        raw: String,
    },
    Hole(Hole),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub segments: Vec<Segment>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        parse_template(src)
    }

    pub fn holes(&self) -> impl Iterator<Item = &Hole> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Hole(h) => Some(h),
            Segment::Literal { .. } => None,
        })
    }

    /// Check every referenced variable against `declared`. Run when the
    /// template is attached, never at evaluation.
    pub fn check(&self, declared: impl Fn(&str) -> bool) -> Result<(), UnknownVariable> {
        for h in self.holes() {
            if let Some((name, offset)) = h.vars.iter().find(|(n, _)| !declared(n)) {
                return Err(UnknownVariable { name: name.clone(), offset: *offset });
            }
        }
        Ok(())
    }

    pub fn render(&self, reg: &VariableRegistry, precision: u8) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal { text, .. } => out.push_str(text),
                Segment::Hole(h) => out.push_str(&format_value(h.expr.eval(reg), precision)),
            }
        }
        out
    }
}

/// Reproduces the source string exactly.
impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            match s {
                Segment::Literal { raw, .. } => f.write_str(raw)?,
                Segment::Hole(h) => write!(f, "${{{}}}", h.raw)?,
            }
        }
        Ok(())
    }
}

/// Templates travel through project files and the protocol as their source
/// text.
impl Serialize for Template {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        parse_template(&src).map_err(serde::de::Error::custom)
    }
}

/// A standalone expression that remembers its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceExpr {
    pub src: String,
    pub expr: Expr,
}

impl SourceExpr {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        Ok(Self { src: src.to_string(), expr: parse_expr(src)? })
    }
}

impl Serialize for SourceExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.src)
    }
}

impl<'de> Deserialize<'de> for SourceExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        SourceExpr::parse(&src).map_err(serde::de::Error::custom)
    }
}

//! Hyperparameter search-space notation: parsing, membership, sampling and grid enumeration.
//!
//! ```text
//! list   := union ("," union)*
//! union  := atom ("and" atom)*
//! atom   := "choice" "[" union ("," union)* "]"
//!         | "[" num "," num ("," (num | "x" num))? "]"
//!         | "{" union ("," union)* "}"
//!         | "(" arg ("," arg)* ")"
//!         | word "(" arg ("," arg)* ")"
//!         | num ["%"] | num ("x" num)+ | "True" | "False" | "-"
//!         | '"' text '"' | word (" " word)*
//! arg    := [word "="] union
//! ```
//!
//! Numbers are exact decimals, so stepped ranges never accumulate rounding.

mod parser;
mod space;

use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

pub use parser::{normalize_name, parse_expr, parse_space};
pub use space::{
    cardinality, contains, enumerate_grid, enumerate_values, render_config, render_space, sample,
    parse_value_for, sample_expr, validate_assignment, Cardinality, ConfigAssignment, GridIter, SearchSpace,
    SpaceEntry,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(Decimal),
    Percent(Decimal),
    Bool(bool),
    Str(String),
    Dims(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: SpaceExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceExpr {
    /// Continuous interval `[lo, hi]`.
    Range(Decimal, Decimal),
    /// `lo, lo + step, ...` up to `hi`.
    Stepped(Decimal, Decimal, Decimal),
    /// `lo, lo * factor, ...` up to `hi`, written `[lo, hi, x factor]`.
    Geometric(Decimal, Decimal, Decimal),
    /// Exactly one of the members.
    Choice(Vec<SpaceExpr>),
    /// Bracketed values that are not a range or stepped triple, e.g.
    /// `[0,90,180,270]`; one of them, like a choice.
    List(Vec<SpaceExpr>),
    /// Alternatives joined by `and`; the value set is the union of the members'.
    Union(Vec<SpaceExpr>),
    /// A fixed comma-separated list, all used together.
    TermList(Vec<SpaceExpr>),
    /// `name(args)`; a bare `(k=v, ...)` is the term `tuple`.
    Term(String, Vec<Arg>),
    /// Brace list `{a, b, c}`: one ordered value.
    Set(Vec<SpaceExpr>),
    Literal(Literal),
    /// `-`: the hyperparameter was not used.
    NotSelected,
}

impl SpaceExpr {
    pub fn number(n: impl Into<Decimal>) -> Self {
        SpaceExpr::Literal(Literal::Number(n.into()))
    }

    pub fn string(s: impl Into<String>) -> Self {
        SpaceExpr::Literal(Literal::Str(s.into()))
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            SpaceExpr::Literal(Literal::Number(n)) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at offset {position}: expected {expected}")]
    SyntaxError { position: usize, expected: String },
    #[error("empty choice at offset {0}")]
    EmptyChoice(usize),
    #[error("step must be positive (geometric factor above 1, start above 0) at offset {0}")]
    BadStep(usize),
    #[error("range lower bound exceeds upper bound at offset {0}")]
    ReversedRange(usize),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DslError>,
    },
    #[error("duplicate hyperparameter name `{0}`")]
    DuplicateName(String),
    #[error("hyperparameter `{0}` has an infinite value set")]
    InfiniteSpace(String),
    #[error("value set of `{0}` is too large to enumerate")]
    GridTooLarge(String),
    #[error("`{0}` is not in the search space")]
    UnknownName(String),
    #[error("value `{value}` of `{name}` is not a member of `{space}`")]
    NotAMember {
        name: String,
        value: String,
        space: String,
    },
}

impl DslError {
    pub fn name(&self) -> &'static str {
        match self {
            DslError::SyntaxError { .. } => "SyntaxError",
            DslError::EmptyChoice(_) => "EmptyChoice",
            DslError::BadStep(_) => "BadStep",
            DslError::ReversedRange(_) => "ReversedRange",
            DslError::AtLine { source, .. } => source.name(),
            DslError::DuplicateName(_) => "DuplicateName",
            DslError::InfiniteSpace(_) => "InfiniteSpace",
            DslError::GridTooLarge(_) => "GridTooLarge",
            DslError::UnknownName(_) => "UnknownName",
            DslError::NotAMember { .. } => "NotAMember",
        }
    }
}

fn num(d: &Decimal) -> String {
    d.normalize().to_string()
}

fn join(items: &[SpaceExpr], sep: &str) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => f.write_str(&num(n)),
            Literal::Percent(n) => write!(f, "{}%", num(n)),
            Literal::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Literal::Dims(d) => {
                let parts: Vec<String> = d.iter().map(u64::to_string).collect();
                f.write_str(&parts.join("x"))
            }
            Literal::Str(s) => {
                // Bare when it reads back as the same string, quoted otherwise.
                let bare = matches!(
                    parse_expr(s),
                    Ok(SpaceExpr::Literal(Literal::Str(ref back))) if back == s
                );
                if bare {
                    f.write_str(s)
                } else {
                    f.write_str(&quote(s))
                }
            }
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{n}={}", self.value),
            None => write!(f, "{}", self.value),
        }
    }
}

impl fmt::Display for SpaceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceExpr::Range(lo, hi) => write!(f, "[{},{}]", num(lo), num(hi)),
            SpaceExpr::Stepped(lo, hi, s) => write!(f, "[{},{},{}]", num(lo), num(hi), num(s)),
            SpaceExpr::Geometric(lo, hi, k) => write!(f, "[{},{},x{}]", num(lo), num(hi), num(k)),
            SpaceExpr::Choice(m) => write!(f, "choice[{}]", join(m, ",")),
            SpaceExpr::List(m) => write!(f, "[{}]", join(m, ",")),
            SpaceExpr::Union(m) => f.write_str(&join(m, " and ")),
            SpaceExpr::TermList(m) => f.write_str(&join(m, ", ")),
            SpaceExpr::Set(m) => write!(f, "{{{}}}", join(m, ",")),
            SpaceExpr::Term(name, args) => {
                let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                if name == "tuple" {
                    write!(f, "({})", args.join(","))
                } else {
                    write!(f, "{name}({})", args.join(","))
                }
            }
            SpaceExpr::Literal(l) => write!(f, "{l}"),
            SpaceExpr::NotSelected => f.write_str("-"),
        }
    }
}

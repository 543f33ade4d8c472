//! Query expressions: arithmetic over sums of (derived) series.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := NUMBER | '-' NUMBER | 'n' | '(' expr ')'
//!         | Sum '(' series ',' bound ',' bound ')'
//!         | Sqrt '(' expr ')'
//!         | macro '(' ID (',' ID)* (',' INT)? ')'
//! series := ID | SeriesGen '(' NUMBER ',' bound ')'
//!         | (Plus | Minus | Times) '(' series ',' series ')'
//!         | Lag '(' series ',' INT ',' bound ')'
//! bound  := INT | 'n' | 'n' ('+' | '-') INT
//! ```
//!
//! `n` is the length of the series referenced by the query; it is an error to
//! use it when those series differ in length.

mod ast;
mod macros;
mod parser;
mod plan;
mod printer;

use thiserror::Error;

pub use ast::{ArithOp, Bound, Expr, MacroKind, SeriesExpr, StatisticMacro};
pub use macros::{expand_macro, expand_macros};
pub use parser::parse;
pub use plan::{validate, Catalog, PlanExpr, PlanSeries, QueryPlan, SumSpec};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QueryError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown function `{name}` at byte {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("{name} takes {expected}, got {found} argument(s)")]
    Arity { name: String, expected: String, found: usize },
    #[error("lag {lag} on `{series}` needs {needed} points, series has {len}")]
    LagOutOfBounds { series: String, lag: u64, needed: u64, len: u64 },
    #[error("range [{start}, {end}] outside series of length {len} in `{node}`")]
    RangeOutOfBounds { node: String, start: i128, end: i128, len: u64 },
    #[error("length mismatch in `{node}`: {left} vs {right}")]
    LengthMismatch { node: String, left: u64, right: u64 },
    #[error("division by constant zero in `{node}`")]
    DivisionByZeroLiteral { node: String },
    #[error("`n` is ambiguous: referenced series have lengths {0:?}")]
    AmbiguousLength(Vec<u64>),
    #[error("`n` used but the query references no series")]
    NoSeriesForLength,
}

//! Validation of a parsed query against known series lengths.

use std::collections::{BTreeMap, BTreeSet};

use crate::series::IndexRange;

use super::ast::{ArithOp, Bound, Expr, SeriesExpr};
use super::macros::expand_macros;
use super::QueryError;

/// Lengths of the series a query may reference.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    lengths: BTreeMap<String, u64>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, len: u64) {
        self.lengths.insert(id.into(), len);
    }

    pub fn len_of(&self, id: &str) -> Option<u64> {
        self.lengths.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.lengths.keys().map(String::as_str)
    }
}

impl FromIterator<(String, u64)> for Catalog {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        Self { lengths: iter.into_iter().collect() }
    }
}

/// A series expression with every length resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSeries {
    /// Index into [`QueryPlan::series`].
    Base { series: usize, len: u64 },
    Gen { value: f64, len: u64 },
    Plus(Box<PlanSeries>, Box<PlanSeries>),
    Minus(Box<PlanSeries>, Box<PlanSeries>),
    Times(Box<PlanSeries>, Box<PlanSeries>),
    Lag { inner: Box<PlanSeries>, lag: u64, len: u64 },
}

impl PlanSeries {
    pub fn len(&self) -> u64 {
        match self {
            PlanSeries::Base { len, .. } | PlanSeries::Gen { len, .. } | PlanSeries::Lag { len, .. } => *len,
            PlanSeries::Plus(a, _) | PlanSeries::Minus(a, _) | PlanSeries::Times(a, _) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether base series `idx` occurs anywhere below.
    pub fn uses(&self, idx: usize) -> bool {
        match self {
            PlanSeries::Base { series, .. } => *series == idx,
            PlanSeries::Gen { .. } => false,
            PlanSeries::Plus(a, b) | PlanSeries::Minus(a, b) | PlanSeries::Times(a, b) => a.uses(idx) || b.uses(idx),
            PlanSeries::Lag { inner, .. } => inner.uses(idx),
        }
    }

    /// Number of `Times` nodes below, in pre-order.
    pub fn times_count(&self) -> usize {
        match self {
            PlanSeries::Base { .. } | PlanSeries::Gen { .. } => 0,
            PlanSeries::Plus(a, b) | PlanSeries::Minus(a, b) => a.times_count() + b.times_count(),
            PlanSeries::Times(a, b) => 1 + a.times_count() + b.times_count(),
            PlanSeries::Lag { inner, .. } => inner.times_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumSpec {
    pub series: PlanSeries,
    pub range: IndexRange,
}

/// Arithmetic skeleton of a validated query; sums are referenced by slot.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanExpr {
    Number(f64),
    Sum(usize),
    Arith { op: ArithOp, left: Box<PlanExpr>, right: Box<PlanExpr> },
    Sqrt(Box<PlanExpr>),
}

impl PlanExpr {
    fn has_sum(&self) -> bool {
        match self {
            PlanExpr::Number(_) => false,
            PlanExpr::Sum(_) => true,
            PlanExpr::Arith { left, right, .. } => left.has_sum() || right.has_sum(),
            PlanExpr::Sqrt(e) => e.has_sum(),
        }
    }

    /// Value of a sum-free subtree.
    fn constant(&self) -> Option<f64> {
        match self {
            PlanExpr::Number(v) => Some(*v),
            PlanExpr::Sum(_) => None,
            PlanExpr::Sqrt(e) => e.constant().map(f64::sqrt),
            PlanExpr::Arith { op, left, right } => {
                let (a, b) = (left.constant()?, right.constant()?);
                Some(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => a / b,
                })
            }
        }
    }
}

/// A validated query: macros expanded, `n` resolved, all ranges in bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    /// Expanded source expression.
    pub source: Expr,
    pub expr: PlanExpr,
    pub sums: Vec<SumSpec>,
    /// Referenced base series ids, sorted; `PlanSeries::Base` indexes this.
    pub series: Vec<String>,
    pub lengths: Vec<u64>,
}

struct Resolver<'a> {
    ids: &'a [String],
    lengths: &'a [u64],
    n: Option<u64>,
    ambiguous: Option<QueryError>,
    sums: Vec<SumSpec>,
}

impl Resolver<'_> {
    fn n(&self) -> Result<u64, QueryError> {
        match (self.n, &self.ambiguous) {
            (Some(n), _) => Ok(n),
            (None, Some(e)) => Err(e.clone()),
            (None, None) => Err(QueryError::NoSeriesForLength),
        }
    }

    fn bound(&self, b: Bound) -> Result<i128, QueryError> {
        match b {
            Bound::Lit(v) => Ok(v as i128),
            Bound::N(_) => Ok(b.resolve(Some(self.n()?)).unwrap()),
        }
    }

    fn series(&self, s: &SeriesExpr) -> Result<PlanSeries, QueryError> {
        Ok(match s {
            SeriesExpr::Base(id) => {
                let i = self.ids.binary_search(id).map_err(|_| QueryError::UnknownSeries(id.clone()))?;
                PlanSeries::Base { series: i, len: self.lengths[i] }
            }
            SeriesExpr::SeriesGen { value, count } => {
                let c = self.bound(*count)?;
                if c < 1 {
                    return Err(QueryError::RangeOutOfBounds { node: s.to_string(), start: 1, end: c, len: 0 });
                }
                PlanSeries::Gen { value: *value, len: c as u64 }
            }
            SeriesExpr::Plus(a, b) | SeriesExpr::Minus(a, b) | SeriesExpr::Times(a, b) => {
                let (pa, pb) = (self.series(a)?, self.series(b)?);
                if pa.len() != pb.len() {
                    return Err(QueryError::LengthMismatch { node: s.to_string(), left: pa.len(), right: pb.len() });
                }
                let (pa, pb) = (Box::new(pa), Box::new(pb));
                match s {
                    SeriesExpr::Plus(..) => PlanSeries::Plus(pa, pb),
                    SeriesExpr::Minus(..) => PlanSeries::Minus(pa, pb),
                    _ => PlanSeries::Times(pa, pb),
                }
            }
            SeriesExpr::Lag { series, lag, len } => {
                let inner = self.series(series)?;
                let len = self.bound(*len)?;
                if len < 1 {
                    return Err(QueryError::RangeOutOfBounds { node: s.to_string(), start: 1, end: len, len: 0 });
                }
                let needed = len + *lag as i128;
                if needed > inner.len() as i128 {
                    return Err(QueryError::LagOutOfBounds {
                        series: series.to_string(),
                        lag: *lag,
                        needed: needed as u64,
                        len: inner.len(),
                    });
                }
                PlanSeries::Lag { inner: Box::new(inner), lag: *lag, len: len as u64 }
            }
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<PlanExpr, QueryError> {
        Ok(match e {
            Expr::Number(v) => PlanExpr::Number(*v),
            Expr::Length => PlanExpr::Number(self.n()? as f64),
            Expr::Macro(_) => unreachable!("macros are expanded before resolution"),
            Expr::Sqrt(inner) => PlanExpr::Sqrt(Box::new(self.expr(inner)?)),
            Expr::Sum { series, start, end } => {
                let s = self.series(series)?;
                let (a, b) = (self.bound(*start)?, self.bound(*end)?);
                let len = s.len();
                if a < 1 || b > len as i128 || a > b {
                    return Err(QueryError::RangeOutOfBounds { node: e.to_string(), start: a, end: b, len });
                }
                let range = IndexRange::new(a as u64, b as u64).expect("checked");
                self.sums.push(SumSpec { series: s, range });
                PlanExpr::Sum(self.sums.len() - 1)
            }
            Expr::Arith { op, left, right } => {
                let l = self.expr(left)?;
                let r = self.expr(right)?;
                if *op == ArithOp::Div && !r.has_sum() && r.constant() == Some(0.0) {
                    return Err(QueryError::DivisionByZeroLiteral { node: e.to_string() });
                }
                PlanExpr::Arith { op: *op, left: Box::new(l), right: Box::new(r) }
            }
        })
    }
}

/// Expands macros, resolves `n` and checks every range and length.
pub fn validate(expr: &Expr, catalog: &Catalog) -> Result<QueryPlan, QueryError> {
    let source = expand_macros(expr, catalog)?;
    let ids: BTreeSet<String> = source.base_series().into_iter().map(str::to_string).collect();
    let mut lengths = Vec::with_capacity(ids.len());
    for id in &ids {
        lengths.push(catalog.len_of(id).ok_or_else(|| QueryError::UnknownSeries(id.clone()))?);
    }
    let ids: Vec<String> = ids.into_iter().collect();
    let distinct: BTreeSet<u64> = lengths.iter().copied().collect();
    let (n, ambiguous) = match distinct.len() {
        0 => (None, None),
        1 => (distinct.first().copied(), None),
        _ => (None, Some(QueryError::AmbiguousLength(distinct.into_iter().collect()))),
    };
    let mut r = Resolver { ids: &ids, lengths: &lengths, n, ambiguous, sums: Vec::new() };
    let plan_expr = r.expr(&source)?;
    let sums = r.sums;
    Ok(QueryPlan { source, expr: plan_expr, sums, series: ids, lengths })
}

//! Statistic macros and their expansion into plain query expressions.
//!
//! | macro | expression |
//! |---|---|
//! | `mean(T)` | `Sum(T,1,n) / n` |
//! | `variance(T)` | `Sum(Times(T,T),1,n) - Sum(T,1,n) * Sum(T,1,n) / n` |
//! | `covariance(T1,T2)` | `Sum(Times(T1,T2),1,n) / (n-1) - Sum(T1,1,n) * Sum(T2,1,n) / (n*(n-1))` |
//! | `correlation(T1,T2)` | `(Sum(Times(T1,T2),1,n) - 1/n * Sum(T1,1,n) * Sum(T2,1,n)) / Sqrt(V(T1) * V(T2))` |
//! | `cross_correlation(T1,T2,l)` | as correlation, with `T2` replaced by `Lag(T2,l,n)` and `Sum(T2,1+l,n+l)` |
//!
//! `V(T)` is the `variance` expression. `n` is the length of `T1` and is
//! emitted as a literal, so expansions stay valid when `T2` is longer.

use super::ast::{ArithOp, Bound, Expr, MacroKind, SeriesExpr, StatisticMacro};
use super::plan::Catalog;
use super::QueryError;

fn num(v: u64) -> Expr {
    Expr::Number(v as f64)
}

fn sum(s: SeriesExpr, start: u64, end: u64) -> Expr {
    Expr::sum(s, Bound::Lit(start), Bound::Lit(end))
}

fn div(a: Expr, b: Expr) -> Expr {
    Expr::arith(ArithOp::Div, a, b)
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::arith(ArithOp::Mul, a, b)
}

fn sub(a: Expr, b: Expr) -> Expr {
    Expr::arith(ArithOp::Sub, a, b)
}

/// `Sum(Times(s,s),1,n) - w * w / n` where `w` is the plain sum of the window.
fn variance_of(s: &SeriesExpr, window_sum: &Expr, n: u64) -> Expr {
    sub(
        sum(SeriesExpr::times(s.clone(), s.clone()), 1, n),
        div(mul(window_sum.clone(), window_sum.clone()), num(n)),
    )
}

fn correlation_shape(t1: &SeriesExpr, t2: &SeriesExpr, s2: Expr, n: u64) -> Expr {
    let s1 = sum(t1.clone(), 1, n);
    let numerator = sub(
        sum(SeriesExpr::times(t1.clone(), t2.clone()), 1, n),
        mul(mul(div(num(1), num(n)), s1.clone()), s2.clone()),
    );
    let denominator = Expr::Sqrt(Box::new(mul(variance_of(t1, &s1, n), variance_of(t2, &s2, n))));
    div(numerator, denominator)
}

/// Expands one macro against the series lengths in `catalog`.
pub fn expand_macro(m: &StatisticMacro, catalog: &Catalog) -> Result<Expr, QueryError> {
    let lens = m
        .series
        .iter()
        .map(|id| catalog.len_of(id).ok_or_else(|| QueryError::UnknownSeries(id.clone())))
        .collect::<Result<Vec<u64>, _>>()?;
    if lens.len() != m.kind.series_arity() || (m.kind == MacroKind::CrossCorrelation) != m.lag.is_some() {
        return Err(QueryError::Arity {
            name: m.kind.name().into(),
            expected: format!("{} series", m.kind.series_arity()),
            found: lens.len(),
        });
    }
    let n = lens[0];
    let t1 = SeriesExpr::base(&m.series[0]);
    let same_length = |node: &str| {
        if lens[0] == lens[1] {
            Ok(())
        } else {
            Err(QueryError::LengthMismatch { node: node.into(), left: lens[0], right: lens[1] })
        }
    };
    Ok(match m.kind {
        MacroKind::Mean => div(sum(t1, 1, n), num(n)),
        MacroKind::Variance => {
            let s = sum(t1.clone(), 1, n);
            variance_of(&t1, &s, n)
        }
        MacroKind::Covariance => {
            same_length(&m.to_string())?;
            let t2 = SeriesExpr::base(&m.series[1]);
            let n_minus_1 = sub(num(n), num(1));
            sub(
                div(sum(SeriesExpr::times(t1.clone(), t2.clone()), 1, n), n_minus_1.clone()),
                div(mul(sum(t1, 1, n), sum(t2, 1, n)), mul(num(n), n_minus_1)),
            )
        }
        MacroKind::Correlation => {
            same_length(&m.to_string())?;
            let t2 = SeriesExpr::base(&m.series[1]);
            let s2 = sum(t2.clone(), 1, n);
            correlation_shape(&t1, &t2, s2, n)
        }
        MacroKind::CrossCorrelation => {
            let lag = m.lag.unwrap_or(0);
            let needed = n.saturating_add(lag);
            if lens[1] < needed {
                return Err(QueryError::LagOutOfBounds { series: m.series[1].clone(), lag, needed, len: lens[1] });
            }
            let base2 = SeriesExpr::base(&m.series[1]);
            if lag == 0 && lens[1] == n {
                let s2 = sum(base2.clone(), 1, n);
                correlation_shape(&t1, &base2, s2, n)
            } else {
                let lagged = SeriesExpr::Lag { series: Box::new(base2.clone()), lag, len: Bound::Lit(n) };
                let s2 = sum(base2, 1 + lag, n + lag);
                correlation_shape(&t1, &lagged, s2, n)
            }
        }
    })
}

/// Replaces every macro in `expr` by its expansion.
pub fn expand_macros(expr: &Expr, catalog: &Catalog) -> Result<Expr, QueryError> {
    Ok(match expr {
        Expr::Macro(m) => expand_macro(m, catalog)?,
        Expr::Arith { op, left, right } => {
            Expr::arith(*op, expand_macros(left, catalog)?, expand_macros(right, catalog)?)
        }
        Expr::Sqrt(e) => Expr::Sqrt(Box::new(expand_macros(e, catalog)?)),
        other => other.clone(),
    })
}

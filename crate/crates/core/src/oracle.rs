//! Exact query evaluation over raw series.
//!
//! Deliberately naive: every series operator materializes its result, and
//! every `Sum` walks its range with compensated summation.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::query::{ArithOp, PlanExpr, PlanSeries, QueryPlan};
use crate::scalar::{compensated_sum, Scalar};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative value")]
    NegativeSqrt,
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("series `{id}` has length {found}, query expects {expected}")]
    LengthMismatch { id: String, expected: u64, found: u64 },
}

/// Raw series by id.
pub trait SeriesStore<S> {
    fn values_of(&self, id: &str) -> Option<&[S]>;
}

impl<S: Scalar> SeriesStore<S> for HashMap<String, TimeSeries<S>> {
    fn values_of(&self, id: &str) -> Option<&[S]> {
        self.get(id).map(TimeSeries::values)
    }
}

impl<S: Scalar> SeriesStore<S> for BTreeMap<String, TimeSeries<S>> {
    fn values_of(&self, id: &str) -> Option<&[S]> {
        self.get(id).map(TimeSeries::values)
    }
}

impl<S: Scalar> SeriesStore<S> for [TimeSeries<S>] {
    fn values_of(&self, id: &str) -> Option<&[S]> {
        self.iter().find(|t| t.id() == id).map(TimeSeries::values)
    }
}

impl<S: Scalar, const N: usize> SeriesStore<S> for [TimeSeries<S>; N] {
    fn values_of(&self, id: &str) -> Option<&[S]> {
        self.as_slice().values_of(id)
    }
}

fn materialize<S: Scalar>(ps: &PlanSeries, base: &[&[S]]) -> Vec<S> {
    let zip = |a: &PlanSeries, b: &PlanSeries, f: fn(S, S) -> S| {
        let (x, y) = (materialize(a, base), materialize(b, base));
        x.into_iter().zip(y).map(|(p, q)| f(p, q)).collect()
    };
    match ps {
        PlanSeries::Base { series, .. } => base[*series].to_vec(),
        PlanSeries::Gen { value, len } => vec![S::lit(*value); *len as usize],
        PlanSeries::Plus(a, b) => zip(a, b, |p, q| p + q),
        PlanSeries::Minus(a, b) => zip(a, b, |p, q| p - q),
        PlanSeries::Times(a, b) => zip(a, b, |p, q| p * q),
        PlanSeries::Lag { inner, lag, len } => {
            let v = materialize(inner, base);
            v[*lag as usize..(*lag + *len) as usize].to_vec()
        }
    }
}

fn arith<S: Scalar>(e: &PlanExpr, sums: &[S]) -> Result<S, OracleError> {
    Ok(match e {
        PlanExpr::Number(v) => S::lit(*v),
        PlanExpr::Sum(i) => sums[*i],
        PlanExpr::Arith { op, left, right } => {
            let (a, b) = (arith(left, sums)?, arith(right, sums)?);
            match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div if b == S::zero() => return Err(OracleError::DivisionByZero),
                ArithOp::Div => a / b,
            }
        }
        PlanExpr::Sqrt(x) => {
            let v = arith(x, sums)?;
            if v < S::zero() {
                return Err(OracleError::NegativeSqrt);
            }
            v.sqrt()
        }
    })
}

/// Values of every `Sum` in the plan, in slot order.
pub fn exact_sums<S: Scalar, St: SeriesStore<S> + ?Sized>(plan: &QueryPlan, store: &St) -> Result<Vec<S>, OracleError> {
    let mut base = Vec::with_capacity(plan.series.len());
    for (id, &expected) in plan.series.iter().zip(&plan.lengths) {
        let v = store.values_of(id).ok_or_else(|| OracleError::UnknownSeries(id.clone()))?;
        if v.len() as u64 != expected {
            return Err(OracleError::LengthMismatch { id: id.clone(), expected, found: v.len() as u64 });
        }
        base.push(v);
    }
    Ok(plan
        .sums
        .iter()
        .map(|s| {
            let v = materialize(&s.series, &base);
            compensated_sum(v[s.range.start() as usize - 1..s.range.end() as usize].iter().copied())
        })
        .collect())
}

/// The exact answer of a validated query.
pub fn evaluate_exact<S: Scalar, St: SeriesStore<S> + ?Sized>(plan: &QueryPlan, store: &St) -> Result<S, OracleError> {
    arith(&plan.expr, &exact_sums(plan, store)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse, validate, Catalog};

    fn run(q: &str, series: &[TimeSeries<f64>]) -> Result<f64, OracleError> {
        let catalog: Catalog = series.iter().map(|t| (t.id().to_string(), t.len())).collect();
        let plan = validate(&parse(q).unwrap(), &catalog).unwrap();
        evaluate_exact(&plan, series)
    }

    fn ts(id: &str, v: &[f64]) -> TimeSeries<f64> {
        TimeSeries::from_values(id, v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let t = ts("T", &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(run("Sum(T, 1, 4)", &[t.clone()]).unwrap(), 10.0);
        assert_eq!(run("variance(C)", &[ts("C", &[3.0; 9])]).unwrap(), 0.0);
        let u = ts("U", &[0.3, -1.0, 2.5, 7.0, 1.0, 0.0]);
        let v = ts("V", u.values());
        assert!((run("correlation(U, V)", &[u, v]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(run("Sum(T, 1, 2) / Sum(Minus(T, T), 1, n)", &[t.clone()]), Err(OracleError::DivisionByZero));
        assert!(matches!(
            evaluate_exact(&validate(&parse("Sum(T, 1, n)").unwrap(), &[("T".to_string(), 4)].into_iter().collect()).unwrap(), &[] as &[TimeSeries<f64>]),
            Err(OracleError::UnknownSeries(_))
        ));
    }

    /// Each operator against its pointwise definition on every small case.
    #[test]
    fn pointwise_semantics() {
        let a = [1.5, -2.0, 0.25];
        let b = [4.0, 0.5, -3.0];
        let s = [ts("A", &a), ts("B", &b)];
        for i in 1..=3usize {
            for j in i..=3 {
                let r = |q: &str| run(&q.replace("RANGE", &format!("{i}, {j}")), &s).unwrap();
                let range = (i - 1)..j;
                let want = |f: fn(f64, f64) -> f64| range.clone().map(|k| f(a[k], b[k])).sum::<f64>();
                assert_eq!(r("Sum(Plus(A, B), RANGE)"), want(|x, y| x + y));
                assert_eq!(r("Sum(Minus(A, B), RANGE)"), want(|x, y| x - y));
                assert_eq!(r("Sum(Times(A, B), RANGE)"), want(|x, y| x * y));
                assert_eq!(r("Sum(Times(A, SeriesGen(-2, n)), RANGE)"), want(|x, _| -2.0 * x));
            }
        }
        assert_eq!(run("Sum(Lag(A, 1, 2), 1, 2)", &s).unwrap(), -1.75);
        assert_eq!(run("Sum(Lag(A, 2, 1), 1, 1)", &s).unwrap(), 0.25);
    }
}

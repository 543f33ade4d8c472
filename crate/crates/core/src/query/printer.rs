//! Canonical text form. Output reparses to the same AST.

use std::fmt;

use super::ast::{Bound, Expr, SeriesExpr, StatisticMacro};

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Bound::Lit(v) => write!(f, "{v}"),
            Bound::N(0) => f.write_str("n"),
            Bound::N(o) if o > 0 => write!(f, "n+{o}"),
            Bound::N(o) => write!(f, "n-{}", o.unsigned_abs()),
        }
    }
}

fn number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{v}")
    }
}

fn signed(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "-{}", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for SeriesExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesExpr::Base(id) => f.write_str(id),
            SeriesExpr::SeriesGen { value, count } => {
                f.write_str("SeriesGen(")?;
                signed(f, *value)?;
                write!(f, ", {count})")
            }
            SeriesExpr::Plus(a, b) => write!(f, "Plus({a}, {b})"),
            SeriesExpr::Minus(a, b) => write!(f, "Minus({a}, {b})"),
            SeriesExpr::Times(a, b) => write!(f, "Times({a}, {b})"),
            SeriesExpr::Lag { series, lag, len } => write!(f, "Lag({series}, {lag}, {len})"),
        }
    }
}

impl fmt::Display for StatisticMacro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.kind.name(), self.series.join(", "))?;
        if let Some(l) = self.lag {
            write!(f, ", {l}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => number(f, *v),
            Expr::Length => f.write_str("n"),
            Expr::Sum { series, start, end } => write!(f, "Sum({series}, {start}, {end})"),
            Expr::Sqrt(e) => write!(f, "Sqrt({e})"),
            Expr::Macro(m) => write!(f, "{m}"),
            Expr::Arith { op, left, right } => {
                let p = op.precedence();
                let wrap = |e: &Expr, strict: bool| match e {
                    Expr::Arith { op: inner, .. } => {
                        if strict {
                            inner.precedence() <= p
                        } else {
                            inner.precedence() < p
                        }
                    }
                    _ => false,
                };
                if wrap(left, false) {
                    write!(f, "({left})")?;
                } else {
                    write!(f, "{left}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if wrap(right, true) {
                    write!(f, "({right})")
                } else {
                    write!(f, "{right}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;

    #[test]
    fn minimal_parentheses() {
        for (src, printed) in [
            ("(1-2)-3", "1 - 2 - 3"),
            ("1-(2-3)", "1 - (2 - 3)"),
            ("(1+2)*3", "(1 + 2) * 3"),
            ("1/(2*3)", "1 / (2 * 3)"),
            ("1*2/3", "1 * 2 / 3"),
            ("3*-2", "3 * (-2)"),
            ("Sum(Times(a,b),1,n-1)/(n-1)", "Sum(Times(a, b), 1, n-1) / (n - 1)"),
            ("Sum(SeriesGen(-0.5,n+2),1,3)", "Sum(SeriesGen(-0.5, n+2), 1, 3)"),
            ("cross_correlation(a,b,4)", "cross_correlation(a, b, 4)"),
        ] {
            let e = parse(src).unwrap();
            assert_eq!(e.to_string(), printed);
            assert_eq!(parse(printed).unwrap(), e);
        }
    }

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [0.1, 1e-300, 1.7976931348623157e308, 123456789.123456789, 5e-324] {
            let e = super::Expr::Number(v);
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}

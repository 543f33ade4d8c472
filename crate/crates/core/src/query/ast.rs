#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> char {
        match self {
            ArithOp::Add => '+',
            ArithOp::Sub => '-',
            ArithOp::Mul => '*',
            ArithOp::Div => '/',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

/// A range endpoint or count: a literal, or `n + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    Lit(u64),
    N(i64),
}

impl Bound {
    pub fn resolve(self, n: Option<u64>) -> Option<i128> {
        match self {
            Bound::Lit(v) => Some(v as i128),
            Bound::N(off) => n.map(|n| n as i128 + off as i128),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacroKind {
    Mean,
    Variance,
    Covariance,
    Correlation,
    CrossCorrelation,
}

impl MacroKind {
    pub fn name(self) -> &'static str {
        match self {
            MacroKind::Mean => "mean",
            MacroKind::Variance => "variance",
            MacroKind::Covariance => "covariance",
            MacroKind::Correlation => "correlation",
            MacroKind::CrossCorrelation => "cross_correlation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Mean, Self::Variance, Self::Covariance, Self::Correlation, Self::CrossCorrelation]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name))
    }

    pub fn series_arity(self) -> usize {
        match self {
            MacroKind::Mean | MacroKind::Variance => 1,
            _ => 2,
        }
    }
}

/// A named statistic over base series, expanded before evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatisticMacro {
    pub kind: MacroKind,
    pub series: Vec<String>,
    /// Only for cross-correlation.
    pub lag: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    /// The symbol `n`.
    Length,
    Sum { series: SeriesExpr, start: Bound, end: Bound },
    Arith { op: ArithOp, left: Box<Expr>, right: Box<Expr> },
    Sqrt(Box<Expr>),
    Macro(StatisticMacro),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesExpr {
    Base(String),
    SeriesGen { value: f64, count: Bound },
    Plus(Box<SeriesExpr>, Box<SeriesExpr>),
    Minus(Box<SeriesExpr>, Box<SeriesExpr>),
    Times(Box<SeriesExpr>, Box<SeriesExpr>),
    /// `(s_{1+lag}, ..., s_{len+lag})`
    Lag { series: Box<SeriesExpr>, lag: u64, len: Bound },
}

impl Expr {
    pub fn arith(op: ArithOp, left: Expr, right: Expr) -> Self {
        Expr::Arith { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn sum(series: SeriesExpr, start: Bound, end: Bound) -> Self {
        Expr::Sum { series, start, end }
    }

    /// Base series ids referenced anywhere, including inside macros.
    pub fn base_series(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_series(&mut |id| out.push(id));
        out
    }

    fn visit_series<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Number(_) | Expr::Length => {}
            Expr::Sum { series, .. } => series.visit(f),
            Expr::Arith { left, right, .. } => {
                left.visit_series(f);
                right.visit_series(f);
            }
            Expr::Sqrt(e) => e.visit_series(f),
            Expr::Macro(m) => m.series.iter().for_each(|s| f(s)),
        }
    }
}

impl SeriesExpr {
    pub fn base(id: impl Into<String>) -> Self {
        SeriesExpr::Base(id.into())
    }

    pub fn plus(a: SeriesExpr, b: SeriesExpr) -> Self {
        SeriesExpr::Plus(Box::new(a), Box::new(b))
    }

    pub fn minus(a: SeriesExpr, b: SeriesExpr) -> Self {
        SeriesExpr::Minus(Box::new(a), Box::new(b))
    }

    pub fn times(a: SeriesExpr, b: SeriesExpr) -> Self {
        SeriesExpr::Times(Box::new(a), Box::new(b))
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            SeriesExpr::Base(id) => f(id),
            SeriesExpr::SeriesGen { .. } => {}
            SeriesExpr::Plus(a, b) | SeriesExpr::Minus(a, b) | SeriesExpr::Times(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            SeriesExpr::Lag { series, .. } => series.visit(f),
        }
    }
}

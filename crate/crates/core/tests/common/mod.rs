//! Generators shared by the integration tests.
#![allow(dead_code)]

use plato_core::query::{ArithOp, Bound, Expr, MacroKind, SeriesExpr, StatisticMacro};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;

const RESERVED: &[&str] = &["n", "sum", "sqrt", "seriesgen", "plus", "minus", "times", "lag"];

fn reserved(id: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(id)) || MacroKind::from_name(id).is_some()
}

const MACROS: [MacroKind; 5] =
    [MacroKind::Mean, MacroKind::Variance, MacroKind::Covariance, MacroKind::Correlation, MacroKind::CrossCorrelation];

/// Nesting depth, counting series operators below a `Sum`.
pub fn depth(e: &Expr) -> usize {
    fn series(s: &SeriesExpr) -> usize {
        1 + match s {
            SeriesExpr::Base(_) | SeriesExpr::SeriesGen { .. } => 0,
            SeriesExpr::Plus(a, b) | SeriesExpr::Minus(a, b) | SeriesExpr::Times(a, b) => series(a).max(series(b)),
            SeriesExpr::Lag { series: s, .. } => series(s),
        }
    }
    1 + match e {
        Expr::Number(_) | Expr::Length | Expr::Macro(_) => 0,
        Expr::Sum { series: s, .. } => series(s),
        Expr::Arith { left, right, .. } => depth(left).max(depth(right)),
        Expr::Sqrt(x) => depth(x),
    }
}

// Arbitrary syntax trees, valid or not against any catalog.

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,5}".prop_filter("reserved word", |s| !reserved(s))
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (-1e3..1e3f64),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn bound() -> impl Strategy<Value = Bound> {
    prop_oneof![(1u64..100_000).prop_map(Bound::Lit), (-40i64..40).prop_map(Bound::N)]
}

fn range() -> impl Strategy<Value = (Bound, Bound)> {
    (bound(), bound()).prop_map(|(a, b)| match (a, b) {
        (Bound::Lit(x), Bound::Lit(y)) => (Bound::Lit(x.min(y)), Bound::Lit(x.max(y))),
        (Bound::N(x), Bound::N(y)) => (Bound::N(x.min(y)), Bound::N(x.max(y))),
        other => other,
    })
}

fn statistic() -> impl Strategy<Value = StatisticMacro> {
    (0..MACROS.len(), ident(), ident(), 0u64..50).prop_map(|(k, a, b, lag)| {
        let kind = MACROS[k];
        let series = if kind.series_arity() == 1 { vec![a] } else { vec![a, b] };
        StatisticMacro { kind, series, lag: (kind == MacroKind::CrossCorrelation).then_some(lag) }
    })
}

/// Series expressions of depth at most `levels`, one strategy per depth.
fn series_levels(levels: usize) -> Vec<BoxedStrategy<SeriesExpr>> {
    let leaf = prop_oneof![
        3 => ident().prop_map(SeriesExpr::Base),
        1 => (number(), bound()).prop_map(|(value, count)| SeriesExpr::SeriesGen { value, count }),
    ]
    .boxed();
    let mut out = vec![leaf.clone()];
    for _ in 1..levels {
        let below = out.last().unwrap().clone();
        let next = prop_oneof![
            2 => leaf.clone(),
            1 => (below.clone(), below.clone()).prop_map(|(a, b)| SeriesExpr::plus(a, b)),
            1 => (below.clone(), below.clone()).prop_map(|(a, b)| SeriesExpr::minus(a, b)),
            1 => (below.clone(), below.clone()).prop_map(|(a, b)| SeriesExpr::times(a, b)),
            1 => (below, 0u64..1000, bound()).prop_map(|(s, lag, len)| SeriesExpr::Lag { series: Box::new(s), lag, len }),
        ]
        .boxed();
        out.push(next);
    }
    out
}

/// Query syntax trees of depth at most `max_depth`.
pub fn arbitrary_expr(max_depth: usize) -> BoxedStrategy<Expr> {
    assert!(max_depth >= 2);
    let series = series_levels(max_depth - 1);
    let leaf_at = |level: usize| {
        let mut choices: Vec<(u32, BoxedStrategy<Expr>)> = vec![
            (2, number().prop_map(Expr::Number).boxed()),
            (1, Just(Expr::Length).boxed()),
            (1, statistic().prop_map(Expr::Macro).boxed()),
        ];
        if level >= 2 {
            let s = series[level - 2].clone();
            choices.push((3, (s, range()).prop_map(|(s, (a, b))| Expr::sum(s, a, b)).boxed()));
        }
        proptest::strategy::Union::new_weighted(choices).boxed()
    };
    let mut e = leaf_at(1);
    for level in 2..=max_depth {
        let ops = prop_oneof![Just(ArithOp::Add), Just(ArithOp::Sub), Just(ArithOp::Mul), Just(ArithOp::Div)];
        e = prop_oneof![
            2 => leaf_at(level),
            2 => (ops, e.clone(), e.clone()).prop_map(|(op, a, b)| Expr::arith(op, a, b)),
            1 => e.prop_map(|x| Expr::Sqrt(Box::new(x))),
        ]
        .boxed();
    }
    e
}

/// `count` deterministic samples of `strategy`.
pub fn samples<T: std::fmt::Debug>(strategy: &BoxedStrategy<T>, count: usize, seed: u8) -> Vec<T> {
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    (0..count).map(|_| strategy.new_tree(&mut runner).expect("strategy never rejects").current()).collect()
}

// Queries that validate against T1, T2 (length `n`) and T3 (length `n + extra`).

pub struct QueryGen {
    pub n: u64,
    pub extra: u64,
    /// Bounds may use `n`; off whenever T3 can appear, since its length
    /// differs.
    pub relative: bool,
    pub long: bool,
}

impl QueryGen {
    pub fn new<R: Rng>(rng: &mut R, n: u64, extra: u64) -> Self {
        let long = rng.random_bool(0.3);
        Self { n, extra, relative: !long && rng.random_bool(0.5), long }
    }

    fn len_bound(&self, m: u64) -> Bound {
        if self.relative {
            Bound::N(m as i64 - self.n as i64)
        } else {
            Bound::Lit(m)
        }
    }

    fn number<R: Rng>(&self, rng: &mut R) -> f64 {
        match rng.random_range(0..3) {
            0 => rng.random_range(1..10) as f64,
            1 => rng.random_range(-3.0..3.0),
            _ => (rng.random_range(-40..40) as f64) / 8.0,
        }
    }

    /// A base series, lagged when its length is not `m`; lagging costs a level.
    fn base_of_len<R: Rng>(&self, rng: &mut R, m: u64, levels: usize) -> SeriesExpr {
        let (id, len) = if self.long && levels >= 2 && rng.random_bool(0.4) {
            ("T3", self.n + self.extra)
        } else if rng.random_bool(0.5) {
            ("T1", self.n)
        } else {
            ("T2", self.n)
        };
        if len == m && (levels < 2 || rng.random_bool(0.7)) {
            return SeriesExpr::base(id);
        }
        if levels < 2 {
            return SeriesExpr::SeriesGen { value: self.number(rng), count: self.len_bound(m) };
        }
        let lag = rng.random_range(0..=len - m);
        SeriesExpr::Lag { series: Box::new(SeriesExpr::base(id)), lag, len: self.len_bound(m) }
    }

    /// A series of length `m` nested at most `levels` deep.
    pub fn series<R: Rng>(&self, rng: &mut R, m: u64, levels: usize) -> SeriesExpr {
        let leaf = |rng: &mut R| {
            if rng.random_bool(0.12) {
                SeriesExpr::SeriesGen { value: self.number(rng), count: self.len_bound(m) }
            } else {
                self.base_of_len(rng, m, levels)
            }
        };
        if levels <= 1 || rng.random_bool(0.35) {
            return leaf(rng);
        }
        match rng.random_range(0..7) {
            0 | 1 => SeriesExpr::plus(self.series(rng, m, levels - 1), self.series(rng, m, levels - 1)),
            2 => SeriesExpr::minus(self.series(rng, m, levels - 1), self.series(rng, m, levels - 1)),
            3 | 4 => SeriesExpr::times(self.series(rng, m, levels - 1), self.series(rng, m, levels - 1)),
            5 if m < self.n => {
                let lag = rng.random_range(0..=self.n - m);
                SeriesExpr::Lag { series: Box::new(self.series(rng, self.n, levels - 1)), lag, len: self.len_bound(m) }
            }
            _ => leaf(rng),
        }
    }

    /// A `Sum` whose series is at most `levels` deep.
    pub fn sum<R: Rng>(&self, rng: &mut R, levels: usize) -> Expr {
        let m = if levels < 2 || rng.random_bool(0.6) { self.n } else { rng.random_range(1..=self.n) };
        let series = self.series(rng, m, levels);
        let a = rng.random_range(1..=m);
        let b = rng.random_range(1..=m);
        let (a, b) = (a.min(b), a.max(b));
        let (start, end) = if self.relative && rng.random_bool(0.5) {
            (Bound::Lit(a), Bound::N(b as i64 - self.n as i64))
        } else {
            (Bound::Lit(a), Bound::Lit(b))
        };
        Expr::sum(series, start, end)
    }

    pub fn statistic<R: Rng>(&self, rng: &mut R) -> Expr {
        let kind = MACROS[rng.random_range(0..MACROS.len())];
        let (series, lag) = match kind {
            MacroKind::Mean | MacroKind::Variance => (vec!["T1".to_string()], None),
            MacroKind::CrossCorrelation => {
                let (other, max) = if self.long { ("T3", self.extra) } else { ("T2", 0) };
                (vec!["T1".to_string(), other.to_string()], Some(rng.random_range(0..=max)))
            }
            _ => (vec!["T1".to_string(), "T2".to_string()], None),
        };
        Expr::Macro(StatisticMacro { kind, series, lag })
    }

    /// A query at most `max_depth` deep.
    pub fn expr<R: Rng>(&self, rng: &mut R, max_depth: usize) -> Expr {
        if max_depth <= 2 {
            return match rng.random_range(0..6) {
                0 => Expr::Number(self.number(rng)),
                1 if self.relative => Expr::Length,
                2 => self.statistic(rng),
                _ if max_depth == 2 => self.sum(rng, 1),
                _ => Expr::Number(self.number(rng)),
            };
        }
        match rng.random_range(0..10) {
            0..=4 => {
                let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div][rng.random_range(0..4)];
                Expr::arith(op, self.expr(rng, max_depth - 1), self.expr(rng, max_depth - 1))
            }
            5 => {
                // Mostly a square, so the radicand stays nonnegative.
                let inner = if max_depth >= 4 && rng.random_bool(0.7) {
                    let s = self.series(rng, self.n, max_depth - 3);
                    Expr::sum(SeriesExpr::times(s.clone(), s), Bound::Lit(1), Bound::Lit(self.n))
                } else {
                    self.expr(rng, max_depth - 1)
                };
                Expr::Sqrt(Box::new(inner))
            }
            6 => self.statistic(rng),
            _ => self.sum(rng, max_depth - 1),
        }
    }

    /// A plain sum, a statistic, or a random expression, in roughly equal
    /// shares.
    pub fn query<R: Rng>(&self, rng: &mut R, max_depth: usize) -> Expr {
        match rng.random_range(0..3) {
            0 => {
                let id = if rng.random_bool(0.5) { "T1" } else { "T2" };
                let a = rng.random_range(1..=self.n);
                let b = rng.random_range(a..=self.n);
                Expr::sum(SeriesExpr::base(id), Bound::Lit(a), Bound::Lit(b))
            }
            1 => self.statistic(rng),
            _ => self.expr(rng, max_depth),
        }
    }
}

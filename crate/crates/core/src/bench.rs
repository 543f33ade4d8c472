//! Budget sweeps comparing approximate answers against the exact evaluator.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::compression::FunctionKind;
use crate::oracle::{evaluate_exact, OracleError, SeriesStore};
use crate::processor::{answer, Budget, ProcessError, QueryResult, Status, TreeStore};
use crate::query::QueryPlan;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BenchError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("no trees for series `{0}`")]
    MissingTree(String),
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Error budgets as fractions of the exact answer's magnitude.
    pub fractions: Vec<f64>,
    /// Timings are the minimum over this many runs.
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { fractions: DEFAULT_FRACTIONS.to_vec(), repeats: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<S> {
    pub fraction: f64,
    pub budget: S,
    pub result: QueryResult<S>,
    pub approx: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep<S> {
    pub exact: S,
    pub exact_time: Duration,
    /// Raw points the exact evaluator reads at least once.
    pub raw_points: u64,
    pub rows: Vec<SweepRow<S>>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl<S: Scalar> SweepRow<S> {
    pub fn approx_ms(&self) -> f64 {
        ms(self.approx)
    }
}

impl<S: Scalar> Sweep<S> {
    pub fn exact_ms(&self) -> f64 {
        ms(self.exact_time)
    }

    pub fn speedup(&self, row: &SweepRow<S>) -> f64 {
        self.exact_time.as_secs_f64() / row.approx.as_secs_f64().max(1e-9)
    }

    /// `budget,eps_hat,nodes_accessed,approx_ms,exact_ms,speedup,status`, one
    /// row per budget followed by the exact baseline. The baseline's
    /// `nodes_accessed` column holds the raw points it reads.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("budget,eps_hat,nodes_accessed,approx_ms,exact_ms,speedup,status\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.3},{}\n",
                r.budget,
                r.result.error,
                r.result.nodes_accessed,
                r.approx_ms(),
                self.exact_ms(),
                self.speedup(r),
                r.result.status
            ));
        }
        out.push_str(&format!(
            "exact,0,{},{:.4},{:.4},1.000,Exact\n",
            self.raw_points,
            self.exact_ms(),
            self.exact_ms()
        ));
        out
    }
}

/// Coefficients read per accessed node: one for PAA, two for PLR.
pub fn coefficients_per_node(kind: FunctionKind) -> u64 {
    match kind {
        FunctionKind::Constant => 1,
        FunctionKind::Linear => 2,
    }
}

/// Numbers an approximate run reads: every accessed node's coefficients.
/// Trees are assumed to share one function kind.
pub fn data_touching_ops(nodes_accessed: u64, kind: FunctionKind) -> u64 {
    nodes_accessed * coefficients_per_node(kind)
}

/// Raw points the exact evaluator must read: every referenced series once.
pub fn exact_points(plan: &QueryPlan) -> u64 {
    plan.lengths.iter().sum()
}

fn min_time<T>(repeats: usize, mut f: impl FnMut() -> T) -> (T, Duration) {
    let mut best = Duration::MAX;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let started = Instant::now();
        let v = f();
        best = best.min(started.elapsed());
        out = Some(v);
    }
    (out.expect("at least one run"), best)
}

/// Times the exact evaluator once per repeat, then answers the query under
/// each relative budget.
pub fn sweep<S: Scalar, St, T>(plan: &QueryPlan, series: &St, trees: &T, config: &SweepConfig) -> Result<Sweep<S>, BenchError>
where
    St: SeriesStore<S> + ?Sized,
    T: TreeStore<S> + ?Sized,
{
    for id in &plan.series {
        if trees.tree(id).is_none() {
            return Err(BenchError::MissingTree(id.clone()));
        }
    }
    let (exact, exact_time) = min_time(config.repeats, || evaluate_exact(plan, series));
    let exact = exact?;
    let mut rows = Vec::with_capacity(config.fractions.len());
    for &fraction in &config.fractions {
        let budget = S::lit(fraction) * exact.abs();
        let (result, approx) = min_time(config.repeats, || answer(plan, trees, Budget::Error(budget)));
        rows.push(SweepRow { fraction, budget, result: result?, approx });
    }
    Ok(Sweep { exact, exact_time, raw_points: exact_points(plan), rows })
}

/// True when `nodes_accessed` never grows down the sweep and every met
/// budget holds.
pub fn is_monotone<S: Scalar>(sweep: &Sweep<S>) -> bool {
    let nodes_ok = sweep.rows.windows(2).all(|w| w[1].result.nodes_accessed <= w[0].result.nodes_accessed);
    let budgets_ok = sweep.rows.iter().all(|r| r.result.status != Status::BudgetMet || r.result.error <= r.budget);
    nodes_ok && budgets_ok
}

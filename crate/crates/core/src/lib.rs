//! Hierarchical segment summaries of time series and approximate query
//! answering with deterministic error guarantees.
//!
//! Every series is summarized by a [`PlatoTree`]: a binary hierarchy whose
//! nodes carry a compression function and three error measures. Queries are
//! arithmetic over sums of series expressions; the [`processor`] walks the
//! trees, tightening a guaranteed bound on the distance between the
//! approximate and exact answer until a budget is met.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common choice.

pub mod bench;
pub mod compression;
pub mod estimator;
pub mod oracle;
pub mod processor;
pub mod scalar;
pub mod series;
pub mod synth;
pub mod query;
pub mod tree;

pub use bench::{BenchError, Sweep, SweepConfig};
pub use compression::{fit, measure, CompressionError, FunctionDescriptor, FunctionKind};
pub use estimator::{estimate_query, Estimate, EstimateError, QueryEstimate};
pub use oracle::{evaluate_exact, OracleError, SeriesStore};
pub use processor::{answer, answer_progressive, Budget, Navigator, ProcessError, Progress, QueryResult, Status, TreeStore};
pub use query::{parse, validate, Catalog, QueryError, QueryPlan};
pub use scalar::{compensated_sum, CompensatedSum, Scalar};
pub use series::{ErrorMeasures, IndexRange, SeriesError, TimeSeries};
pub use tree::{best_split, BuildConfig, NodeId, PlatoTree, StopRule, TreeError, TreeNode};

/// Any failure surfaced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type PlatoTreeF64 = PlatoTree<f64>;
pub type PlatoTreeF32 = PlatoTree<f32>;

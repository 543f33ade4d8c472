//! Approximate answers and deterministic error bounds from segment summaries.
//!
//! Series expressions are evaluated into [`Partition`]s; each `Sum` turns a
//! partition into an [`Estimate`]; arithmetic combines estimates as
//! intervals `[answer - error, answer + error]`.

mod interval;
mod partition;
mod poly;

use thiserror::Error;

use crate::compression::FunctionDescriptor;
use crate::query::{PlanSeries, QueryPlan, SumSpec};
use crate::scalar::{CompensatedSum, Scalar};
use crate::series::{ErrorMeasures, IndexRange};

pub use interval::{combine, estimate_arith, estimate_sqrt, Estimate, Program};
pub use partition::{align, estimate_sum, lag, minus, plus, times, Charge, Partition, Piece, TimesOption, TimesReport};
pub use poly::Poly;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimateError {
    #[error("partitions cover different ranges")]
    RangeMismatch,
    #[error("pieces are not contiguous")]
    NotContiguous,
    #[error("range {range} is not covered by the partition")]
    RangeOutOfBounds { range: IndexRange },
    #[error("square root of an interval that lies below zero")]
    NegativeSqrt,
    #[error("no segments for series #{0}")]
    MissingSeries(usize),
}

/// One summarized segment of a base series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<S> {
    pub range: IndexRange,
    pub f: FunctionDescriptor<S>,
    pub measures: ErrorMeasures<S>,
}

impl<S: Scalar> Segment<S> {
    pub fn of_node(node: &crate::tree::TreeNode<S>) -> Self {
        Self { range: node.range, f: node.f, measures: node.measures }
    }
}

/// Supplies the current segments of each base series.
pub trait SegmentSource<S> {
    /// Length of base series `series`.
    fn series_len(&self, series: usize) -> Option<u64>;

    /// Appends the segments of `series` overlapping `range`, in index order.
    fn segments(&self, series: usize, range: IndexRange, out: &mut Vec<Segment<S>>);

    /// Hull of the segments of `series` overlapping `range`.
    fn cover(&self, series: usize, range: IndexRange) -> Option<IndexRange> {
        let mut out = Vec::new();
        self.segments(series, range, &mut out);
        let (first, last) = (out.first()?, out.last()?);
        IndexRange::new(first.range.start(), last.range.end()).ok()
    }
}

/// Fixed segment lists, one per base series.
#[derive(Debug, Clone, Default)]
pub struct SegmentLists<S> {
    pub series: Vec<Vec<Segment<S>>>,
}

impl<S: Scalar> SegmentSource<S> for SegmentLists<S> {
    fn series_len(&self, series: usize) -> Option<u64> {
        self.series.get(series).and_then(|s| s.last()).map(|s| s.range.end())
    }

    fn segments(&self, series: usize, range: IndexRange, out: &mut Vec<Segment<S>>) {
        let Some(list) = self.series.get(series) else { return };
        let first = list.partition_point(|s| s.range.end() < range.start());
        out.extend(list[first..].iter().take_while(|s| s.range.start() <= range.end()).copied());
    }
}

/// A signed index interval; may reach outside a series' domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn of(r: IndexRange) -> Self {
        Self { lo: r.start() as i64, hi: r.end() as i64 }
    }

    pub fn up(self, lag: u64) -> Self {
        Self { lo: self.lo + lag as i64, hi: self.hi + lag as i64 }
    }

    pub fn clip(self, len: u64) -> Option<IndexRange> {
        let lo = self.lo.max(1);
        let hi = self.hi.min(len as i64);
        (lo <= hi).then(|| IndexRange::new(lo as u64, hi as u64).expect("clipped"))
    }

    pub fn overlaps(self, r: IndexRange) -> bool {
        self.lo <= r.end() as i64 && r.start() as i64 <= self.hi
    }

    pub fn hull(self, other: Window) -> Window {
        Window { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// How `Times` nodes pick their option during one evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Options<'a> {
    Decide,
    Forced(&'a [TimesOption]),
}

/// Restricts an evaluation to the part of a series that one expansion can
/// influence: pieces are built over `extent`, and only charges overlapping
/// `core` are kept. Both are in the coordinates of the `Sum`'s series.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Focus {
    pub core: Window,
    pub extent: Window,
}

struct Evaluator<'a, S, Src: ?Sized> {
    src: &'a Src,
    options: Options<'a>,
    reports: Vec<Option<TimesReport<S>>>,
    next_times: usize,
    scratch: Vec<Segment<S>>,
}

impl<S: Scalar, Src: SegmentSource<S> + ?Sized> Evaluator<'_, S, Src> {
    fn eval(
        &mut self,
        ps: &PlanSeries,
        window: Window,
        core: Option<Window>,
        rel: IndexRange,
    ) -> Result<Partition<S>, EstimateError> {
        let len = ps.len();
        match ps {
            PlanSeries::Base { series, .. } => {
                let Some(span) = window.clip(len) else { return Ok(Partition::empty()) };
                if self.src.series_len(*series) != Some(len) {
                    return Err(EstimateError::MissingSeries(*series));
                }
                self.scratch.clear();
                self.src.segments(*series, span, &mut self.scratch);
                let mut pieces = Vec::with_capacity(self.scratch.len());
                let mut charges = Vec::with_capacity(self.scratch.len());
                for seg in &self.scratch {
                    let piece =
                        Piece { range: seg.range, poly: Poly::from_descriptor(&seg.f), d_star: seg.measures.d_star, f_star: seg.measures.f_star };
                    let clipped = seg.range.intersect(&span).expect("segment overlaps window");
                    pieces.push(if clipped == seg.range { piece } else { piece.restrict(clipped) });
                    if core.is_none_or(|c| c.overlaps(seg.range)) {
                        charges.push(Charge { range: seg.range, l1: seg.measures.l1 });
                    }
                }
                let p = Partition::new(pieces, charges)?;
                if p.span() != Some(span) {
                    return Err(EstimateError::MissingSeries(*series));
                }
                Ok(p)
            }
            PlanSeries::Gen { value, .. } => Ok(match window.clip(len) {
                Some(span) => Partition::series_gen(S::lit(*value), len).restrict(span),
                None => Partition::empty(),
            }),
            PlanSeries::Plus(a, b) | PlanSeries::Minus(a, b) => {
                let pa = self.eval(a, window, core, rel)?;
                let pb = self.eval(b, window, core, rel)?;
                if matches!(ps, PlanSeries::Plus(..)) {
                    plus(&pa, &pb)
                } else {
                    minus(&pa, &pb)
                }
            }
            PlanSeries::Times(a, b) => {
                let idx = self.next_times;
                self.next_times += 1;
                let pa = self.eval(a, window, core, rel)?;
                let pb = self.eval(b, window, core, rel)?;
                let forced = match self.options {
                    Options::Decide => None,
                    Options::Forced(opts) => Some(opts[idx]),
                };
                let (p, report) = times(&pa, &pb, rel, forced)?;
                self.reports[idx] = Some(report);
                Ok(p)
            }
            PlanSeries::Lag { inner, lag: l, len } => {
                let rel_inner = IndexRange::new(rel.start() + l, rel.end() + l).expect("shifted");
                let p = self.eval(inner, window.up(*l), core.map(|c| c.up(*l)), rel_inner)?;
                Ok(lag(&p, *l, *len))
            }
        }
    }
}

/// Per-`Sum` result of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SumEstimate<S> {
    pub answer: S,
    pub error: S,
    /// One entry per `Times` node of the summed expression, in pre-order.
    pub times: Vec<TimesReport<S>>,
}

impl<S: Scalar> SumEstimate<S> {
    pub fn estimate(&self) -> Estimate<S> {
        Estimate::bounded(self.answer, self.error)
    }

    pub fn options(&self) -> Vec<TimesOption> {
        self.times.iter().map(|t| t.option).collect()
    }
}

/// `(series, cumulative lag, length)` of every base series occurrence.
pub(crate) fn base_occurrences(ps: &PlanSeries, lag: u64, out: &mut Vec<(usize, u64, u64)>) {
    match ps {
        PlanSeries::Base { series, len } => out.push((*series, lag, *len)),
        PlanSeries::Gen { .. } => {}
        PlanSeries::Plus(a, b) | PlanSeries::Minus(a, b) | PlanSeries::Times(a, b) => {
            base_occurrences(a, lag, out);
            base_occurrences(b, lag, out);
        }
        PlanSeries::Lag { inner, lag: l, .. } => base_occurrences(inner, lag + l, out),
    }
}

/// The neighbourhood of `range` in base series `series` as seen by a summed
/// expression with base occurrences `occ`.
pub(crate) fn focus_for<S: Scalar, Src: SegmentSource<S> + ?Sized>(
    occ: &[(usize, u64, u64)],
    series: usize,
    range: IndexRange,
    src: &Src,
) -> Focus {
    let down = |r: IndexRange, lag: u64| Window { lo: r.start() as i64 - lag as i64, hi: r.end() as i64 - lag as i64 };
    let core = occ
        .iter()
        .filter(|o| o.0 == series)
        .map(|&(_, lag, _)| down(range, lag))
        .reduce(Window::hull)
        .unwrap_or(Window::of(range));
    let mut extent = core;
    for &(s, lag, len) in occ {
        let Some(span) = core.up(lag).clip(len) else { continue };
        if let Some(c) = src.cover(s, span) {
            extent = extent.hull(down(c, lag));
        }
    }
    Focus { core, extent }
}

pub(crate) fn evaluate_sum<S: Scalar, Src: SegmentSource<S> + ?Sized>(
    spec: &SumSpec,
    src: &Src,
    options: Options<'_>,
    focus: Option<Focus>,
) -> Result<SumEstimate<S>, EstimateError> {
    let len = spec.series.len();
    let mut ev = Evaluator { src, options, reports: vec![None; spec.series.times_count()], next_times: 0, scratch: Vec::new() };
    let window = focus.map_or(Window { lo: 1, hi: len as i64 }, |f| f.extent);
    let core = focus.map(|f| f.core);
    let p = ev.eval(&spec.series, window, core, spec.range)?;
    let answer_range = match core {
        Some(c) => c.clip(len).and_then(|c| c.intersect(&spec.range)),
        None => Some(spec.range),
    };
    let answer = match answer_range {
        Some(r) => p.pieces_within(r).map(|(sub, piece)| piece.sum_over(sub)).collect::<CompensatedSum<S>>().value(),
        None => S::zero(),
    };
    if focus.is_none() && p.span().is_none_or(|s| !s.covers(&spec.range)) {
        return Err(EstimateError::RangeOutOfBounds { range: spec.range });
    }
    let error = p
        .charges
        .iter()
        .filter(|c| c.range.overlaps(&spec.range))
        .map(|c| c.l1)
        .collect::<CompensatedSum<S>>()
        .value();
    let times = ev.reports.into_iter().map(|r| r.expect("every Times node evaluated")).collect();
    Ok(SumEstimate { answer, error, times })
}

/// Partition of a derived series over its whole domain, options chosen over
/// `relevant`.
pub fn derive_series<S: Scalar, Src: SegmentSource<S> + ?Sized>(
    series: &PlanSeries,
    src: &Src,
    relevant: IndexRange,
) -> Result<Partition<S>, EstimateError> {
    let mut ev = Evaluator { src, options: Options::Decide, reports: vec![None; series.times_count()], next_times: 0, scratch: Vec::new() };
    ev.eval(series, Window { lo: 1, hi: series.len() as i64 }, None, relevant)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEstimate<S> {
    pub estimate: Estimate<S>,
    pub sums: Vec<SumEstimate<S>>,
}

/// Estimates a validated query from the given segments, bottom-up.
pub fn estimate_query<S: Scalar, Src: SegmentSource<S> + ?Sized>(
    plan: &QueryPlan,
    src: &Src,
) -> Result<QueryEstimate<S>, EstimateError> {
    let sums = plan
        .sums
        .iter()
        .map(|spec| evaluate_sum(spec, src, Options::Decide, None))
        .collect::<Result<Vec<_>, _>>()?;
    let estimates: Vec<Estimate<S>> = sums.iter().map(SumEstimate::estimate).collect();
    Ok(QueryEstimate { estimate: combine(&plan.expr, &estimates)?, sums })
}

#[cfg(test)]
mod tests;

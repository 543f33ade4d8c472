//! Greedy top-down navigation of the trees under an error or time budget.
//!
//! A [`Navigator`] holds one frontier per series, starting at the roots, and
//! repeatedly replaces the frontier node whose expansion reduces the query's
//! error bound the most by its two children. Errors are maintained
//! incrementally: expanding a node only re-evaluates the neighbourhood of its
//! range in each `Sum` that reads its series.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use smallvec::SmallVec;
use thiserror::Error;

use crate::estimator::{
    base_occurrences, estimate_query, evaluate_sum, focus_for, Estimate, EstimateError, Focus, Options, Program,
    QueryEstimate, Segment, SegmentSource, SumEstimate, TimesOption,
};
use crate::query::{PlanSeries, QueryPlan, SumSpec};
use crate::scalar::{CompensatedSum, Scalar};
use crate::series::IndexRange;
use crate::tree::{NodeId, PlatoTree, TreeNode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProcessError {
    #[error("no tree for series `{0}`")]
    UnknownSeries(String),
    #[error("tree for `{id}` covers {found} points, query expects {expected}")]
    LengthMismatch { id: String, expected: u64, found: u64 },
    #[error("node {node:?} of series #{series} is not on the frontier")]
    NodeNotOnFrontier { series: usize, node: NodeId },
    #[error("node {node:?} of series #{series} is a leaf")]
    LeafNotExpandable { series: usize, node: NodeId },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Trees by series id.
pub trait TreeStore<S> {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>>;
}

impl<S> TreeStore<S> for HashMap<String, PlatoTree<S>> {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.get(id)
    }
}

impl<S> TreeStore<S> for BTreeMap<String, PlatoTree<S>> {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.get(id)
    }
}

impl<S: Scalar> TreeStore<S> for [PlatoTree<S>] {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.iter().find(|t| t.series_id() == id)
    }
}

impl<S: Scalar> TreeStore<S> for [&PlatoTree<S>] {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.iter().copied().find(|t| t.series_id() == id)
    }
}

impl<S: Scalar, const N: usize> TreeStore<S> for [PlatoTree<S>; N] {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.as_slice().tree(id)
    }
}

impl<S: Scalar, const N: usize> TreeStore<S> for [&PlatoTree<S>; N] {
    fn tree(&self, id: &str) -> Option<&PlatoTree<S>> {
        self.as_slice().tree(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget<S> {
    /// Stop once the error bound is at most this.
    Error(S),
    /// Keep refining until this much time has passed.
    Time(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    BudgetMet,
    /// Every frontier reached the leaves and the bound is still too wide.
    BudgetInfeasible,
    TimeExpired,
    /// A denominator interval still contains zero.
    Unbounded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::BudgetMet => "BudgetMet",
            Status::BudgetInfeasible => "BudgetInfeasible",
            Status::TimeExpired => "TimeExpired",
            Status::Unbounded => "Unbounded",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult<S> {
    pub answer: S,
    pub error: S,
    pub nodes_accessed: u64,
    pub expansions: u64,
    pub elapsed: Duration,
    pub status: Status,
}

/// One emission of [`answer_progressive`].
#[derive(Debug, Clone, PartialEq)]
pub struct Progress<S> {
    pub estimate: Estimate<S>,
    pub nodes_accessed: u64,
    pub expansions: u64,
    pub elapsed: Duration,
    /// No frontier node can be expanded further.
    pub exhausted: bool,
}

/// Per `Times` node: a value for each option.
type Totals<S> = SmallVec<[[S; 2]; 1]>;

/// Change of one `Sum` caused by expanding a node.
#[derive(Debug, Clone)]
enum Delta<S> {
    /// `other` shifts [`SumState::other`]; `totals` shifts the option totals.
    Shift { answer: S, other: S, totals: Totals<S> },
    /// The expansion flips a nested `Times` option; the whole `Sum` is
    /// re-evaluated.
    Replace(SumEstimate<S>),
}

#[derive(Debug, Clone)]
struct Candidate<S> {
    version: u32,
    deltas: Vec<(usize, Delta<S>)>,
    priority: S,
}

struct SumState<S> {
    spec: SumSpec,
    answer: CompensatedSum<S>,
    /// For flat sums, the error minus the chosen option totals; otherwise
    /// the whole error.
    other: CompensatedSum<S>,
    totals: Vec<[CompensatedSum<S>; 2]>,
    options: Vec<TimesOption>,
    /// No `Times` node has another below it, so each one's contribution to
    /// the error is exactly its chosen total and options never go stale.
    flat: bool,
    /// `(series, cumulative lag, length)` of each base occurrence.
    occurrences: Vec<(usize, u64, u64)>,
    shape: fast::Shape,
    /// Values of `other` and `totals`, and the estimate, as of the last change.
    other_now: S,
    totals_now: Vec<[S; 2]>,
    now: Estimate<S>,
    /// Candidates whose delta for this `Sum` is a full re-evaluation.
    replaced_by: Vec<(usize, NodeId)>,
}

fn nested_times(ps: &PlanSeries) -> bool {
    match ps {
        PlanSeries::Base { .. } | PlanSeries::Gen { .. } => false,
        PlanSeries::Plus(a, b) | PlanSeries::Minus(a, b) => nested_times(a) || nested_times(b),
        PlanSeries::Times(a, b) => a.times_count() + b.times_count() > 0,
        PlanSeries::Lag { inner, .. } => nested_times(inner),
    }
}

fn chosen<S: Scalar>(t: [S; 2], opt: TimesOption) -> S {
    match opt {
        TimesOption::First => t[0],
        TimesOption::Second => t[1],
    }
}

impl<S: Scalar> SumState<S> {
    fn new(spec: &SumSpec, occurrences: Vec<(usize, u64, u64)>, est: &SumEstimate<S>) -> Self {
        let mut state = Self {
            spec: spec.clone(),
            answer: CompensatedSum::new(),
            other: CompensatedSum::new(),
            totals: Vec::new(),
            options: Vec::new(),
            flat: !nested_times(&spec.series),
            occurrences,
            shape: fast::shape_of(&spec.series),
            other_now: S::zero(),
            totals_now: Vec::new(),
            now: Estimate::exact(S::zero()),
            replaced_by: Vec::new(),
        };
        state.load(est);
        state
    }

    fn load(&mut self, est: &SumEstimate<S>) {
        self.answer = CompensatedSum::new();
        self.answer.add(est.answer);
        self.other = CompensatedSum::new();
        self.other.add(est.error);
        self.totals = est
            .times
            .iter()
            .map(|t| {
                let mut pair = [CompensatedSum::new(); 2];
                pair[0].add(t.totals[0]);
                pair[1].add(t.totals[1]);
                pair
            })
            .collect();
        self.options = est.options();
        if self.flat {
            for t in &est.times {
                self.other.add(-chosen(t.totals, t.option));
            }
        }
        self.snapshot();
    }

    fn snapshot(&mut self) {
        self.other_now = self.other.value();
        self.totals_now = self.totals.iter().map(|t| [t[0].value(), t[1].value()]).collect();
        self.now = Estimate::bounded(self.answer.value(), self.error_with(self.other_now, None).max(S::zero()));
    }

    fn error_with(&self, other: S, shift: Option<&[[S; 2]]>) -> S {
        if !self.flat {
            return other;
        }
        let mut err = other;
        for (j, t) in self.totals_now.iter().enumerate() {
            let d = shift.map_or([S::zero(); 2], |s| s[j]);
            let pair = [t[0] + d[0], t[1] + d[1]];
            err = err + chosen(pair, TimesOption::cheaper(pair));
        }
        err
    }

    fn estimate(&self) -> Estimate<S> {
        self.now
    }

    fn estimate_after(&self, delta: &Delta<S>) -> Estimate<S> {
        match delta {
            Delta::Shift { answer, other, totals } => Estimate::bounded(
                self.now.answer + *answer,
                self.error_with(self.other_now + *other, Some(totals)).max(S::zero()),
            ),
            Delta::Replace(full) => full.estimate(),
        }
    }

    /// Options the next focused evaluations are forced to. For flat sums any
    /// fixed choice works, since `other` excludes the option totals.
    fn forced(&self) -> &[TimesOption] {
        &self.options
    }

    /// Whether shifting the option totals by `delta` makes some nested
    /// `Times` node prefer the other option.
    fn flips(&self, delta: &[[S; 2]]) -> bool {
        if self.flat {
            return false;
        }
        self.totals_now.iter().zip(delta).zip(&self.options).any(|((cur, d), &opt)| {
            let t = [cur[0] + d[0], cur[1] + d[1]];
            let (kept, other) = match opt {
                TimesOption::First => (t[0], t[1]),
                TimesOption::Second => (t[1], t[0]),
            };
            // Near-ties are left alone: both options then give the same bound
            // up to rounding.
            kept - other > S::lit(1e-12) * kept.abs().max(other.abs())
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry<S> {
    priority: S,
    start: u64,
    series: usize,
    node: NodeId,
    version: u32,
}

impl<S: Scalar> Entry<S> {
    /// Larger is better: higher priority, then leftmost start, then lowest
    /// series index.
    fn rank(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp_s(&other.priority)
            .then_with(|| other.start.cmp(&self.start))
            .then_with(|| other.series.cmp(&self.series))
    }
}

impl<S: Scalar> PartialEq for Entry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for Entry<S> {}

impl<S: Scalar> PartialOrd for Entry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Entry<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other).then_with(|| other.node.0.cmp(&self.node.0)).then_with(|| self.version.cmp(&other.version))
    }
}

/// Segments of the current frontiers.
struct Frontiers<'a, S> {
    trees: Vec<&'a PlatoTree<S>>,
    /// Per series: `(range, node)` in index order.
    nodes: Vec<Vec<(IndexRange, NodeId)>>,
}

impl<S: Scalar> Frontiers<'_, S> {
    /// Frontier nodes of `series` overlapping `range`, in index order.
    fn each_in(&self, series: usize, range: IndexRange, mut f: impl FnMut(NodeId)) {
        let nodes = &self.nodes[series];
        let from = nodes.partition_point(|(r, _)| r.end() < range.start());
        for &(r, id) in &nodes[from..] {
            if r.start() > range.end() {
                break;
            }
            f(id);
        }
    }

    fn position(&self, series: usize, node: NodeId) -> Option<usize> {
        let start = self.trees[series].node(node).range.start();
        let nodes = &self.nodes[series];
        let i = nodes.partition_point(|(r, _)| r.start() < start);
        (nodes.get(i)?.1 == node).then_some(i)
    }

    fn contains(&self, series: usize, node: NodeId) -> bool {
        self.position(series, node).is_some()
    }

    fn replace(&mut self, series: usize, node: NodeId, children: [NodeId; 2]) {
        let i = self.position(series, node).expect("on the frontier");
        let tree = self.trees[series];
        self.nodes[series].splice(i..=i, children.map(|c| (tree.node(c).range, c)));
    }
}

impl<S: Scalar> SegmentSource<S> for Frontiers<'_, S> {
    fn series_len(&self, series: usize) -> Option<u64> {
        self.trees.get(series).map(|t| t.len())
    }

    fn segments(&self, series: usize, range: IndexRange, out: &mut Vec<Segment<S>>) {
        let tree = self.trees[series];
        self.each_in(series, range, |id| out.push(Segment::of_node(tree.node(id))));
    }

    fn cover(&self, series: usize, range: IndexRange) -> Option<IndexRange> {
        let nodes = &self.nodes[series];
        let from = nodes.partition_point(|(r, _)| r.end() < range.start());
        let to = nodes.partition_point(|(r, _)| r.start() <= range.end());
        if from >= to {
            return None;
        }
        IndexRange::new(nodes[from].0.start(), nodes[to - 1].0.end()).ok()
    }
}

/// The frontiers with one node replaced by its children.
struct Overlay<'f, 'a, S> {
    base: &'f Frontiers<'a, S>,
    series: usize,
    node: &'a TreeNode<S>,
    children: [&'a TreeNode<S>; 2],
}

impl<S: Scalar> SegmentSource<S> for Overlay<'_, '_, S> {
    fn series_len(&self, series: usize) -> Option<u64> {
        self.base.series_len(series)
    }

    fn segments(&self, series: usize, range: IndexRange, out: &mut Vec<Segment<S>>) {
        let from = out.len();
        self.base.segments(series, range, out);
        if series != self.series {
            return;
        }
        if let Some(pos) = out[from..].iter().position(|s| s.range == self.node.range) {
            let kids = self.children.iter().filter(|c| c.range.overlaps(&range)).map(|c| Segment::of_node(c));
            out.splice(from + pos..=from + pos, kids);
        }
    }
}

/// Incremental state of one query over its trees.
pub struct Navigator<'a, S: Scalar> {
    plan: &'a QueryPlan,
    frontiers: Frontiers<'a, S>,
    sums: Vec<SumState<S>>,
    /// The query arithmetic over unique sums.
    program: Program<S>,
    /// Per series: unique sums that read it.
    readers: Vec<Vec<usize>>,
    candidates: FxHashMap<(usize, NodeId), Candidate<S>>,
    heap: BinaryHeap<Entry<S>>,
    next_version: u32,
    expansions: u64,
    /// Non-leaf frontier nodes.
    expandable: usize,
    current: Estimate<S>,
    /// Sensitivity of the current error to each unique sum, for ranking
    /// refreshed candidates without evaluating the whole query.
    gradient: Option<Vec<[S; 2]>>,
    scratch: Vec<Estimate<S>>,
    stack: Vec<Estimate<S>>,
}

impl<'a, S: Scalar> Navigator<'a, S> {
    /// Accesses the root of every series the query reads.
    pub fn new<T: TreeStore<S> + ?Sized>(plan: &'a QueryPlan, store: &'a T) -> Result<Self, ProcessError> {
        let mut trees = Vec::with_capacity(plan.series.len());
        for (id, &expected) in plan.series.iter().zip(&plan.lengths) {
            let tree = store.tree(id).ok_or_else(|| ProcessError::UnknownSeries(id.clone()))?;
            if tree.len() != expected {
                return Err(ProcessError::LengthMismatch { id: id.clone(), expected, found: tree.len() });
            }
            trees.push(tree);
        }
        let nodes = trees.iter().map(|t| vec![(t.node(t.root()).range, t.root())]).collect();
        let frontiers = Frontiers { trees, nodes };

        let mut unique: Vec<&SumSpec> = Vec::new();
        let mut slot_of = Vec::with_capacity(plan.sums.len());
        for spec in &plan.sums {
            let idx = unique.iter().position(|u| *u == spec).unwrap_or_else(|| {
                unique.push(spec);
                unique.len() - 1
            });
            slot_of.push(idx);
        }
        let mut readers = vec![Vec::new(); plan.series.len()];
        let mut sums = Vec::with_capacity(unique.len());
        for (k, spec) in unique.into_iter().enumerate() {
            let mut occ = Vec::new();
            base_occurrences(&spec.series, 0, &mut occ);
            for &(s, _, _) in &occ {
                if !readers[s].contains(&k) {
                    readers[s].push(k);
                }
            }
            let est = evaluate_sum(spec, &frontiers, Options::Decide, None)?;
            sums.push(SumState::new(spec, occ, &est));
        }
        let mut nav = Self {
            plan,
            frontiers,
            sums,
            program: Program::compile(&plan.expr, |i| slot_of[i]),
            readers,
            candidates: FxHashMap::default(),
            heap: BinaryHeap::new(),
            next_version: 0,
            expansions: 0,
            expandable: 0,
            current: Estimate::exact(S::zero()),
            gradient: None,
            scratch: Vec::new(),
            stack: Vec::new(),
        };
        nav.update_current()?;
        for s in 0..nav.frontiers.trees.len() {
            let tree = nav.frontiers.trees[s];
            if !tree.node(tree.root()).is_leaf() {
                nav.expandable += 1;
            }
            nav.refresh(s, tree.root(), None)?;
        }
        Ok(nav)
    }

    pub fn plan(&self) -> &QueryPlan {
        self.plan
    }

    /// The incrementally maintained estimate.
    pub fn estimate(&self) -> Estimate<S> {
        self.current
    }

    /// The estimate of the current frontiers, evaluated from scratch.
    pub fn recompute(&self) -> Result<QueryEstimate<S>, ProcessError> {
        Ok(estimate_query(self.plan, &self.frontiers)?)
    }

    /// Roots plus two nodes per expansion.
    pub fn nodes_accessed(&self) -> u64 {
        self.frontiers.trees.len() as u64 + 2 * self.expansions
    }

    pub fn expansions(&self) -> u64 {
        self.expansions
    }

    /// Frontier nodes of `series` in index order.
    pub fn frontier(&self, series: usize) -> Vec<NodeId> {
        self.frontiers.nodes[series].iter().map(|&(_, id)| id).collect()
    }

    pub fn tree(&self, series: usize) -> &'a PlatoTree<S> {
        self.frontiers.trees[series]
    }

    /// Whether every frontier consists of leaves only.
    pub fn is_exhausted(&self) -> bool {
        self.expandable == 0
    }

    /// `estimate().error` now minus the error after expanding `node`.
    pub fn error_reduction(&mut self, series: usize, node: NodeId) -> Result<S, ProcessError> {
        self.check_expandable(series, node)?;
        let deltas = self.current_deltas(series, node)?;
        let after = self.combine_with(&deltas)?;
        Ok(reduction(self.current, after))
    }

    /// Replaces `node` by its children.
    pub fn expand(&mut self, series: usize, node: NodeId) -> Result<(), ProcessError> {
        self.check_expandable(series, node)?;
        self.apply(series, node)
    }

    /// Expands the node with the largest error reduction. Returns `None` once
    /// nothing is left to expand.
    pub fn step(&mut self) -> Result<Option<(usize, NodeId)>, ProcessError> {
        while let Some(top) = self.heap.pop() {
            let Some(cand) = self.candidates.get(&(top.series, top.node)) else { continue };
            if cand.version != top.version {
                continue;
            }
            if !self.deltas_current(&cand.deltas) {
                self.refresh(top.series, top.node, None)?;
                continue;
            }
            let deltas = std::mem::take(&mut self.candidates.get_mut(&(top.series, top.node)).expect("present").deltas);
            let priority = self.priority_of(&deltas);
            let cand = self.candidates.get_mut(&(top.series, top.node)).expect("present");
            cand.deltas = deltas;
            cand.priority = priority;
            let fresh = Entry { priority, ..top };
            if self.heap.peek().is_none_or(|next| fresh.rank(next) != Ordering::Less) {
                self.apply(top.series, top.node)?;
                return Ok(Some((top.series, top.node)));
            }
            self.heap.push(fresh);
        }
        Ok(None)
    }

    fn check_expandable(&self, series: usize, node: NodeId) -> Result<(), ProcessError> {
        let tree = self.frontiers.trees.get(series).ok_or(ProcessError::NodeNotOnFrontier { series, node })?;
        if node.0 >= tree.node_count() {
            return Err(ProcessError::NodeNotOnFrontier { series, node });
        }
        if !self.frontiers.contains(series, node) {
            return Err(ProcessError::NodeNotOnFrontier { series, node });
        }
        if tree.node(node).is_leaf() {
            return Err(ProcessError::LeafNotExpandable { series, node });
        }
        Ok(())
    }

    /// Cached shifts stay valid only while they flip no option under the
    /// current totals.
    fn deltas_current(&self, deltas: &[(usize, Delta<S>)]) -> bool {
        deltas.iter().all(|(k, d)| match d {
            Delta::Shift { totals, .. } => !self.sums[*k].flips(totals),
            Delta::Replace(_) => true,
        })
    }

    /// The cached deltas of an expandable frontier node, recomputed if stale.
    fn current_deltas(&self, series: usize, node: NodeId) -> Result<Vec<(usize, Delta<S>)>, ProcessError> {
        match self.candidates.get(&(series, node)) {
            Some(c) if self.deltas_current(&c.deltas) => Ok(c.deltas.clone()),
            _ => {
                let overlay = self.overlay(series, node);
                let mut out = Vec::with_capacity(self.readers[series].len());
                for &k in &self.readers[series] {
                    out.push((k, self.delta_for(k, &overlay)?));
                }
                Ok(out)
            }
        }
    }

    /// Combines the per-`Sum` estimates with `deltas` applied.
    fn combine_with(&mut self, deltas: &[(usize, Delta<S>)]) -> Result<Estimate<S>, EstimateError> {
        self.scratch.clear();
        self.scratch.extend(self.sums.iter().map(SumState::estimate));
        for (k, d) in deltas {
            self.scratch[*k] = self.sums[*k].estimate_after(d);
        }
        self.program.run(&self.scratch, &mut self.stack)
    }

    fn update_current(&mut self) -> Result<(), EstimateError> {
        self.current = self.combine_with(&[])?;
        self.gradient = if self.current.is_unbounded() { None } else { self.program.error_gradient(&self.scratch) };
        Ok(())
    }

    /// First-order estimate of [`Self::priority_of`]; exact for a plain
    /// `Sum`. The heap re-checks the top entry exactly before expanding it.
    fn key_of(&mut self, deltas: &[(usize, Delta<S>)]) -> S {
        let Some(grad) = &self.gradient else { return self.priority_of(deltas) };
        let mut key = S::zero();
        for (k, d) in deltas {
            let (now, after) = (self.sums[*k].estimate(), self.sums[*k].estimate_after(d));
            if after.is_unbounded() {
                return self.priority_of(deltas);
            }
            key = key - (grad[*k][0] * (after.answer - now.answer) + grad[*k][1] * (after.error - now.error));
        }
        key
    }

    fn priority_of(&mut self, deltas: &[(usize, Delta<S>)]) -> S {
        let Ok(after) = self.combine_with(deltas) else { return S::neg_infinity() };
        if self.current.is_unbounded() && after.is_unbounded() {
            return deltas
                .iter()
                .map(|(k, d)| self.sums[*k].estimate().error - self.sums[*k].estimate_after(d).error)
                .fold(S::zero(), |a, b| a + b);
        }
        reduction(self.current, after)
    }

    fn overlay(&self, series: usize, node: NodeId) -> Overlay<'_, 'a, S> {
        let tree = self.frontiers.trees[series];
        let n = tree.node(node);
        let (l, r) = n.children.expect("expandable");
        Overlay { base: &self.frontiers, series, node: n, children: [tree.node(l), tree.node(r)] }
    }

    fn delta_for(&self, k: usize, overlay: &Overlay<'_, 'a, S>) -> Result<Delta<S>, EstimateError> {
        let state = &self.sums[k];
        if let Some(d) =
            fast::delta(state.shape, &state.spec, &self.frontiers, overlay.series, overlay.node, overlay.children)
        {
            return Ok(d);
        }
        let focus: Focus = focus_for(&state.occurrences, overlay.series, overlay.node.range, &self.frontiers);
        let forced = state.forced();
        let opts = Options::Forced(forced);
        let old = evaluate_sum(&state.spec, &self.frontiers, opts, Some(focus))?;
        let new = evaluate_sum(&state.spec, overlay, opts, Some(focus))?;
        let totals: Totals<S> = old
            .times
            .iter()
            .zip(&new.times)
            .map(|(o, n)| [n.totals[0] - o.totals[0], n.totals[1] - o.totals[1]])
            .collect();
        if state.flips(&totals) {
            return Ok(Delta::Replace(evaluate_sum(&state.spec, overlay, Options::Decide, None)?));
        }
        let mut other = new.error - old.error;
        if state.flat {
            for (t, &opt) in totals.iter().zip(forced) {
                other = other - chosen(*t, opt);
            }
        }
        Ok(Delta::Shift { answer: new.answer - old.answer, other, totals })
    }

    /// Recomputes the candidate entry of a frontier node: the deltas of the
    /// sums in `only`, or all of them.
    fn refresh(&mut self, series: usize, node: NodeId, only: Option<&[usize]>) -> Result<(), ProcessError> {
        let tree = self.frontiers.trees[series];
        let n = tree.node(node);
        if n.is_leaf() {
            self.candidates.remove(&(series, node));
            return Ok(());
        }
        let mut deltas = match (only, self.candidates.remove(&(series, node))) {
            (Some(_), Some(c)) => c.deltas,
            _ => Vec::with_capacity(self.readers[series].len()),
        };
        let overlay = self.overlay(series, node);
        let mut replaced = Vec::new();
        for &k in &self.readers[series] {
            if only.is_some_and(|o| !o.contains(&k)) && deltas.iter().any(|(j, _)| *j == k) {
                continue;
            }
            let d = self.delta_for(k, &overlay)?;
            if matches!(d, Delta::Replace(_)) {
                replaced.push(k);
            }
            match deltas.iter_mut().find(|(j, _)| *j == k) {
                Some(slot) => slot.1 = d,
                None => deltas.push((k, d)),
            }
        }
        for k in replaced {
            self.sums[k].replaced_by.push((series, node));
        }
        let priority = self.key_of(&deltas);
        self.next_version = self.next_version.wrapping_add(1);
        let version = self.next_version;
        self.candidates.insert((series, node), Candidate { version, deltas, priority });
        self.heap.push(Entry { priority, start: n.range.start(), series, node, version });
        Ok(())
    }

    fn apply(&mut self, series: usize, node: NodeId) -> Result<(), ProcessError> {
        let tree = self.frontiers.trees[series];
        let n = tree.node(node);
        let (l, r) = n.children.expect("checked expandable");
        let deltas = self.current_deltas(series, node)?;
        self.candidates.remove(&(series, node));

        // (series, node, sum) triples whose cached delta is out of date.
        let mut stale: Vec<(usize, NodeId, usize)> = Vec::new();
        let mut flipped = Vec::new();
        for (k, d) in deltas {
            let state = &mut self.sums[k];
            match d {
                Delta::Shift { answer, other, totals } => {
                    state.answer.add(answer);
                    state.other.add(other);
                    for (acc, t) in state.totals.iter_mut().zip(totals) {
                        acc[0].add(t[0]);
                        acc[1].add(t[1]);
                    }
                }
                Delta::Replace(full) => {
                    let before = state.options.clone();
                    state.load(&full);
                    if state.options != before {
                        flipped.push(k);
                    }
                }
            }
            state.snapshot();
            stale.extend(state.replaced_by.drain(..).map(|(s, id)| (s, id, k)));
        }

        self.frontiers.replace(series, node, [l, r]);
        self.expansions += 1;
        self.expandable = self.expandable - 1
            + usize::from(!tree.node(l).is_leaf())
            + usize::from(!tree.node(r).is_leaf());
        self.update_current()?;

        // Frontier nodes near the expanded range see different neighbours.
        for &k in &self.readers[series] {
            let state = &self.sums[k];
            if flipped.contains(&k) {
                for s in 0..self.frontiers.trees.len() {
                    if self.readers[s].contains(&k) {
                        stale.extend(self.frontiers.nodes[s].iter().map(|&(_, id)| (s, id, k)));
                    }
                }
                continue;
            }
            // Closed-form deltas of these shapes only read the node itself.
            if matches!(state.shape, fast::Shape::Base(_) | fast::Shape::Square(_)) {
                continue;
            }
            let near = focus_for(&state.occurrences, series, n.range, &self.frontiers).extent;
            for &(s, lag, len) in &state.occurrences {
                if let Some(range) = near.up(lag).clip(len) {
                    self.frontiers.each_in(s, range, |id| stale.push((s, id, k)));
                }
            }
        }
        stale.retain(|&(s, id, _)| s != series || (id != l && id != r));
        stale.sort_unstable_by_key(|&(s, id, k)| (s, id.0, k));
        stale.dedup();
        self.refresh(series, l, None)?;
        self.refresh(series, r, None)?;
        let mut only = Vec::new();
        let mut i = 0;
        while i < stale.len() {
            let (s, id, _) = stale[i];
            only.clear();
            while i < stale.len() && stale[i].0 == s && stale[i].1 == id {
                only.push(stale[i].2);
                i += 1;
            }
            if self.frontiers.contains(s, id) {
                self.refresh(s, id, Some(&only))?;
            }
        }
        Ok(())
    }
}

/// Error reduction from `now` to `after`. While the estimate is unbounded, an
/// expansion that bounds it ranks above everything; otherwise expansions are
/// ranked by how much they shrink the per-`Sum` errors.
fn reduction<S: Scalar>(now: Estimate<S>, after: Estimate<S>) -> S {
    match (now.is_unbounded(), after.is_unbounded()) {
        (false, false) => now.error - after.error,
        (false, true) => S::neg_infinity(),
        (true, false) => S::infinity(),
        (true, true) => S::zero(),
    }
}

fn finish<S: Scalar>(nav: &Navigator<'_, S>, started: Instant, status: Status) -> QueryResult<S> {
    let est = nav.estimate();
    QueryResult {
        answer: est.answer,
        error: est.error,
        nodes_accessed: nav.nodes_accessed(),
        expansions: nav.expansions(),
        elapsed: started.elapsed(),
        status,
    }
}

/// Answers `plan` within `budget`.
pub fn answer<S: Scalar, T: TreeStore<S> + ?Sized>(
    plan: &QueryPlan,
    trees: &T,
    budget: Budget<S>,
) -> Result<QueryResult<S>, ProcessError> {
    let started = Instant::now();
    match budget {
        Budget::Error(e) if e.is_nan() || e < S::zero() => {
            return Err(ProcessError::InvalidBudget(format!("error budget {e} must be nonnegative")))
        }
        Budget::Time(t) if t.is_zero() => return Err(ProcessError::InvalidBudget("time budget must be positive".into())),
        _ => {}
    }
    let mut nav = Navigator::new(plan, trees)?;
    let status = match budget {
        Budget::Error(max) => loop {
            let est = nav.estimate();
            if !est.is_unbounded() && est.error <= max {
                break Status::BudgetMet;
            }
            if nav.step()?.is_none() {
                break if est.is_unbounded() { Status::Unbounded } else { Status::BudgetInfeasible };
            }
        },
        Budget::Time(limit) => loop {
            if started.elapsed() >= limit {
                break if nav.estimate().is_unbounded() { Status::Unbounded } else { Status::TimeExpired };
            }
            if nav.step()?.is_none() {
                break if nav.estimate().is_unbounded() { Status::Unbounded } else { Status::BudgetMet };
            }
        },
    };
    Ok(finish(&nav, started, status))
}

/// Refines until exhaustion, reporting after the roots and after every
/// expansion. Returning `ControlFlow::Break` from `emit` stops the run; the
/// last emission is returned either way.
pub fn answer_progressive<S: Scalar, T: TreeStore<S> + ?Sized>(
    plan: &QueryPlan,
    trees: &T,
    mut emit: impl FnMut(&Progress<S>) -> ControlFlow<()>,
) -> Result<Progress<S>, ProcessError> {
    let started = Instant::now();
    let mut nav = Navigator::new(plan, trees)?;
    loop {
        let progress = Progress {
            estimate: nav.estimate(),
            nodes_accessed: nav.nodes_accessed(),
            expansions: nav.expansions(),
            elapsed: started.elapsed(),
            exhausted: nav.is_exhausted(),
        };
        if emit(&progress).is_break() || progress.exhausted {
            return Ok(progress);
        }
        nav.step()?;
    }
}

mod fast;

//! Binary hierarchy of segment summaries over one series.
//!
//! The root summarizes `[1, n]`; every inner node splits its range into two
//! adjacent children. Nodes live in an arena in pre-order, root first.

mod format;
mod split;

use thiserror::Error;

use crate::compression::{fit, measure, CompressionError, FunctionDescriptor, FunctionKind};
use crate::scalar::Scalar;
use crate::series::{ErrorMeasures, IndexRange, TimeSeries};

pub use format::FORMAT_VERSION;
pub use split::{best_split, EXHAUSTIVE_LINEAR_SPLIT_LIMIT};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("segment of length {0} cannot be split")]
    SegmentTooShort(usize),
    #[error("invalid build configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("corrupt tree file at byte {offset}: {reason}")]
    CorruptFile { offset: usize, reason: String },
    #[error("unsupported tree file (found {found})")]
    VersionMismatch { found: String },
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// When the top-down construction stops splitting a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Leaf once `L <= tau`.
    TauOnly,
    /// Leaf once the node length is `<= kappa`.
    KappaOnly,
    /// Leaf when either condition holds.
    TauOrKappa,
}

impl StopRule {
    pub fn tag(self) -> u8 {
        match self {
            StopRule::TauOnly => 0,
            StopRule::KappaOnly => 1,
            StopRule::TauOrKappa => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(StopRule::TauOnly),
            1 => Some(StopRule::KappaOnly),
            2 => Some(StopRule::TauOrKappa),
            _ => None,
        }
    }
}

pub const DEFAULT_KAPPA: u64 = 32;
/// Default `tau` as a fraction of the root's `L`.
pub const DEFAULT_TAU_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig<S> {
    pub kind: FunctionKind,
    pub tau: S,
    pub kappa: u64,
    pub stop_rule: StopRule,
}

impl<S: Scalar> BuildConfig<S> {
    pub fn new(kind: FunctionKind, tau: S, kappa: u64, stop_rule: StopRule) -> Result<Self, TreeError> {
        let cfg = Self { kind, tau, kappa, stop_rule };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `tau = 1%` of the root's `L`, `kappa = 32`, either rule stops.
    pub fn defaults_for(kind: FunctionKind, series: &TimeSeries<S>) -> Result<Self, TreeError> {
        let f = fit(kind, series.values())?;
        let root = measure(series.values(), &f)?;
        Self::new(kind, root.l1 * S::lit(DEFAULT_TAU_FRACTION), DEFAULT_KAPPA, StopRule::TauOrKappa)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.tau.is_nan() || self.tau < S::zero() {
            return Err(TreeError::InvalidConfig(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.kappa < 1 {
            return Err(TreeError::InvalidConfig("kappa must be >= 1".into()));
        }
        Ok(())
    }

    /// True if a node with measure `l1` and `len` points becomes a leaf.
    pub fn stops(&self, l1: S, len: u64) -> bool {
        if len < 2 {
            return true;
        }
        match self.stop_rule {
            StopRule::TauOnly => l1 <= self.tau,
            StopRule::KappaOnly => len <= self.kappa,
            StopRule::TauOrKappa => l1 <= self.tau || len <= self.kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<S> {
    pub range: IndexRange,
    pub f: FunctionDescriptor<S>,
    pub measures: ErrorMeasures<S>,
    pub children: Option<(NodeId, NodeId)>,
}

impl<S: Scalar> TreeNode<S> {
    pub fn leaf(range: IndexRange, f: FunctionDescriptor<S>, measures: ErrorMeasures<S>) -> Self {
        Self { range, f, measures, children: None }
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoTree<S> {
    series_id: String,
    n: u64,
    config: BuildConfig<S>,
    nodes: Vec<TreeNode<S>>,
}

impl<S: Scalar> PlatoTree<S> {
    /// Top-down greedy construction: split each node where the children's
    /// summed `L` is smallest, until the stop rule fires.
    pub fn build(series: &TimeSeries<S>, config: BuildConfig<S>) -> Result<Self, TreeError> {
        config.validate()?;
        let data = series.values();
        let mut nodes: Vec<TreeNode<S>> = Vec::new();
        // (range, parent slot to patch: (parent, is_right))
        let mut stack: Vec<(IndexRange, Option<(usize, bool)>)> = vec![(series.full_range(), None)];
        while let Some((range, parent)) = stack.pop() {
            let seg = &data[(range.start() - 1) as usize..range.end() as usize];
            let f = fit(config.kind, seg)?;
            let measures = measure(seg, &f)?;
            let id = nodes.len();
            nodes.push(TreeNode::leaf(range, f, measures));
            if let Some((p, is_right)) = parent {
                let slot = nodes[p].children.get_or_insert((NodeId(usize::MAX), NodeId(usize::MAX)));
                if is_right {
                    slot.1 = NodeId(id);
                } else {
                    slot.0 = NodeId(id);
                }
            }
            if config.stops(measures.l1, range.len()) {
                continue;
            }
            let (k, _) = best_split(seg, config.kind)?;
            let mid = range.start() + k as u64 - 1;
            let left = IndexRange::new(range.start(), mid).expect("split inside range");
            let right = IndexRange::new(mid + 1, range.end()).expect("split inside range");
            // Right first so the left subtree is emitted next (pre-order).
            stack.push((right, Some((id, true))));
            stack.push((left, Some((id, false))));
        }
        Ok(Self { series_id: series.id().to_string(), n: series.len(), config, nodes })
    }

    /// Assembles a tree from explicit nodes. `nodes[0]` is the root and must
    /// cover `[1, n]`; children must partition their parent and every node
    /// must be reachable exactly once. Measures are taken as given.
    pub fn from_nodes(
        series_id: impl Into<String>,
        n: u64,
        config: BuildConfig<S>,
        nodes: Vec<TreeNode<S>>,
    ) -> Result<Self, TreeError> {
        let tree = Self { series_id: series_id.into(), n, config, nodes };
        tree.check_structure()?;
        Ok(tree)
    }

    fn check_structure(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::Malformed(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.nodes[0].range != IndexRange::full(self.n.max(1)) || self.n == 0 {
            return bad(format!("root range {} does not cover [1, {}]", self.nodes[0].range, self.n));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("node {i} reachable twice"));
            }
            let node = &self.nodes[i];
            let m = &node.measures;
            if !(m.l1 >= S::zero() && m.d_star >= S::zero() && m.f_star >= S::zero()) {
                return bad(format!("node {i} has negative or NaN measures"));
            }
            if let Some((l, r)) = node.children {
                let (Some(ln), Some(rn)) = (self.nodes.get(l.0), self.nodes.get(r.0)) else {
                    return bad(format!("node {i} has a dangling child"));
                };
                if ln.range.start() != node.range.start()
                    || rn.range.end() != node.range.end()
                    || ln.range.end() + 1 != rn.range.start()
                {
                    return bad(format!("children of node {i} do not partition {}", node.range));
                }
                stack.push(r.0);
                stack.push(l.0);
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    /// Length of the summarized series.
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn config(&self) -> &BuildConfig<S> {
        &self.config
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &TreeNode<S> {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[TreeNode<S>] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root(), 1usize)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            if let Some((l, r)) = self.node(id).children {
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            }
        }
        best
    }

    /// Leaves in index order; their ranges partition `[1, n]`.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            match self.node(id).children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(id),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> TimeSeries<f64> {
        TimeSeries::from_values("t", values.to_vec()).unwrap()
    }

    fn cfg(tau: f64, kappa: u64, rule: StopRule) -> BuildConfig<f64> {
        BuildConfig::new(FunctionKind::Constant, tau, kappa, rule).unwrap()
    }

    #[test]
    fn constant_series_is_a_single_node() {
        let t = series(&[4.0; 8]);
        let tree = PlatoTree::build(&t, cfg(0.0, 1, StopRule::TauOrKappa)).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.node(tree.root()).measures.l1, 0.0);
    }

    #[test]
    fn step_series_splits_once() {
        let t = series(&[0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0]);
        let tree = PlatoTree::build(&t, cfg(0.0, 1, StopRule::TauOrKappa)).unwrap();
        assert_eq!(tree.node_count(), 3);
        let (l, r) = tree.node(tree.root()).children.unwrap();
        assert_eq!(tree.node(l).range, IndexRange::new(1, 4).unwrap());
        assert_eq!(tree.node(r).range, IndexRange::new(5, 8).unwrap());
        for id in [l, r] {
            let node = tree.node(id);
            let raw = measure(t.slice(node.range).unwrap(), &node.f).unwrap();
            assert_eq!(node.measures, raw);
            assert_eq!(node.measures.l1, 0.0);
        }
        assert_eq!(tree.node(tree.root()).measures.l1, 40.0);
    }

    #[test]
    fn infinite_tau_stops_at_root() {
        let t = series(&[1.0, 5.0, -2.0, 8.0, 3.0]);
        let tree = PlatoTree::build(&t, cfg(f64::INFINITY, 1, StopRule::TauOnly)).unwrap();
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn kappa_only_splits_down_to_kappa() {
        let t = series(&[2.0; 16]);
        let tree = PlatoTree::build(&t, cfg(0.0, 4, StopRule::KappaOnly)).unwrap();
        for leaf in tree.leaves() {
            let len = tree.node(leaf).range.len();
            assert!(len <= 4, "leaf of length {len}");
        }
        // Under TauOrKappa the zero-L root would stop immediately.
        let tree = PlatoTree::build(&t, cfg(0.0, 4, StopRule::TauOrKappa)).unwrap();
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(BuildConfig::new(FunctionKind::Linear, -1.0, 3, StopRule::TauOnly).is_err());
        assert!(BuildConfig::new(FunctionKind::Linear, f64::NAN, 3, StopRule::TauOnly).is_err());
        assert!(BuildConfig::new(FunctionKind::Linear, 0.0, 0, StopRule::TauOnly).is_err());
        let t = series(&[1.0, 2.0, 3.0, 4.0]);
        let d = BuildConfig::defaults_for(FunctionKind::Constant, &t).unwrap();
        assert!((d.tau - 0.04).abs() < 1e-12);
        assert_eq!(d.kappa, DEFAULT_KAPPA);
    }

    #[test]
    fn from_nodes_rejects_bad_partitions() {
        let f = FunctionDescriptor::Constant { b: 0.0 };
        let m = ErrorMeasures::new(1.0, 1.0, 0.0);
        let r = |a, b| IndexRange::new(a, b).unwrap();
        let c = cfg(0.0, 1, StopRule::TauOnly);
        let ok = vec![
            TreeNode { range: r(1, 4), f, measures: m, children: Some((NodeId(1), NodeId(2))) },
            TreeNode::leaf(r(1, 2), f, m),
            TreeNode::leaf(r(3, 4), f, m),
        ];
        assert!(PlatoTree::from_nodes("x", 4, c, ok.clone()).is_ok());
        let mut gap = ok.clone();
        gap[2].range = r(4, 4);
        assert!(PlatoTree::from_nodes("x", 4, c, gap).is_err());
        let mut orphan = ok.clone();
        orphan.push(TreeNode::leaf(r(1, 1), f, m));
        assert!(PlatoTree::from_nodes("x", 4, c, orphan).is_err());
        assert!(PlatoTree::from_nodes("x", 5, c, ok).is_err());
    }
}

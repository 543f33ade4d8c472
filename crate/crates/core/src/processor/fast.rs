//! Closed-form expansion deltas for the summed shapes statistics queries are
//! made of: one base series, the square of one, or the product of two
//! different ones, each possibly lagged. They agree with the generic focused
//! evaluation up to rounding.

use smallvec::{smallvec, SmallVec};

use crate::compression::FunctionDescriptor;
use crate::query::{PlanSeries, SumSpec};
use crate::scalar::Scalar;
use crate::series::IndexRange;
use crate::tree::TreeNode;

use super::{Delta, Frontiers};

/// A base series read at `i + lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct Lagged {
    pub series: usize,
    pub lag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Shape {
    Base(Lagged),
    Square(Lagged),
    Product(Lagged, Lagged),
    General,
}

fn lagged(ps: &PlanSeries) -> Option<Lagged> {
    match ps {
        PlanSeries::Base { series, .. } => Some(Lagged { series: *series, lag: 0 }),
        PlanSeries::Lag { inner, lag, .. } => lagged(inner).map(|l| Lagged { lag: l.lag + lag, ..l }),
        _ => None,
    }
}

pub(super) fn shape_of(ps: &PlanSeries) -> Shape {
    if let Some(l) = lagged(ps) {
        return Shape::Base(l);
    }
    if let PlanSeries::Times(a, b) = ps {
        if let (Some(x), Some(y)) = (lagged(a), lagged(b)) {
            return match (x == y, x.series == y.series) {
                (true, _) => Shape::Square(x),
                (false, false) => Shape::Product(x, y),
                (false, true) => Shape::General,
            };
        }
    }
    Shape::General
}

/// A frontier node seen in the coordinates of the summed series.
#[derive(Clone, Copy)]
struct View<'a, S> {
    node: &'a TreeNode<S>,
    /// Clipped to the summed series' domain.
    range: IndexRange,
    lag: u64,
}

impl<'a, S: Scalar> View<'a, S> {
    fn of(node: &'a TreeNode<S>, lag: u64, len: u64) -> Option<Self> {
        Some(Self { range: node.range.shift_down_clipped(lag, len)?, node, lag })
    }

    /// The node's function over `sub` as `(c0, c1)`, meaning
    /// `c0 + c1 * (i - sub.start())`.
    fn line_at(&self, sub: IndexRange) -> (S, S) {
        // Stored functions take the 1-based offset inside the node.
        let j = S::of_u64(sub.start() + self.lag + 1 - self.node.range.start());
        match self.node.f {
            FunctionDescriptor::Constant { b } => (b, S::zero()),
            FunctionDescriptor::Linear { a, b } => (a * j + b, a),
        }
    }

    fn sum_over(&self, sub: IndexRange) -> S {
        let (c0, c1) = self.line_at(sub);
        let m = S::of_u64(sub.len());
        c0 * m + c1 * m * (m - S::one()) / S::lit(2.0)
    }

    fn l1(&self) -> S {
        self.node.measures.l1
    }
}

fn product_over<S: Scalar>(x: &View<'_, S>, y: &View<'_, S>, sub: IndexRange) -> S {
    let ((p0, p1), (q0, q1)) = (x.line_at(sub), y.line_at(sub));
    let m = S::of_u64(sub.len());
    let s1 = m * (m - S::one()) / S::lit(2.0);
    let s2 = s1 * (S::lit(2.0) * m - S::one()) / S::lit(3.0);
    p0 * q0 * m + (p0 * q1 + p1 * q0) * s1 + p1 * q1 * s2
}

/// Expansion of `node` of `series` into `children`, or `None` when the sum
/// does not have a closed-form shape.
pub(super) fn delta<S: Scalar>(
    shape: Shape,
    spec: &SumSpec,
    frontiers: &Frontiers<'_, S>,
    series: usize,
    node: &TreeNode<S>,
    children: [&TreeNode<S>; 2],
) -> Option<Delta<S>> {
    let len = spec.series.len();
    let r = spec.range;
    match shape {
        Shape::General => None,
        Shape::Base(l) => {
            debug_assert_eq!(l.series, series);
            let (mut answer, mut other) = (S::zero(), S::zero());
            for (n, sign) in [(node, -S::one()), (children[0], S::one()), (children[1], S::one())] {
                let Some(v) = View::of(n, l.lag, len) else { continue };
                if let Some(sub) = v.range.intersect(&r) {
                    answer = answer + sign * v.sum_over(sub);
                    other = other + sign * v.l1();
                }
            }
            Some(Delta::Shift { answer, other, totals: SmallVec::new() })
        }
        Shape::Square(l) => {
            debug_assert_eq!(l.series, series);
            let (mut answer, mut total) = (S::zero(), S::zero());
            for (n, sign) in [(node, -S::one()), (children[0], S::one()), (children[1], S::one())] {
                let Some(v) = View::of(n, l.lag, len) else { continue };
                if let Some(sub) = v.range.intersect(&r) {
                    answer = answer + sign * product_over(&v, &v, sub);
                    total = total + sign * v.l1() * (n.measures.d_star + n.measures.f_star);
                }
            }
            Some(Delta::Shift { answer, other: S::zero(), totals: smallvec![[total, total]] })
        }
        Shape::Product(a, b) => {
            let (x, y, x_is_a) = if series == a.series { (a, b, true) } else { (b, a, false) };
            let order = |p: [S; 2]| if x_is_a { p } else { [p[1], p[0]] };
            let Some(nv) = View::of(node, x.lag, len) else {
                return Some(Delta::Shift { answer: S::zero(), other: S::zero(), totals: smallvec![[S::zero(); 2]] });
            };
            let kids: SmallVec<[View<'_, S>; 2]> = children.iter().filter_map(|c| View::of(c, x.lag, len)).collect();

            // Partner nodes overlapping the expanded node.
            let mut ys: SmallVec<[View<'_, S>; 8]> = SmallVec::new();
            let tree_y = frontiers.trees[y.series];
            let span = IndexRange::new(nv.range.start() + y.lag, nv.range.end() + y.lag).expect("shifted");
            frontiers.each_in(y.series, span, |id| {
                if let Some(v) = View::of(tree_y.node(id), y.lag, len) {
                    if v.range.overlaps(&nv.range) {
                        ys.push(v);
                    }
                }
            });

            let mut answer = S::zero();
            let mut totals = [S::zero(); 2];
            for yv in &ys {
                if let Some(sub) = nv.range.intersect(&yv.range).and_then(|s| s.intersect(&r)) {
                    answer = answer - product_over(&nv, yv, sub);
                }
                for k in &kids {
                    if let Some(sub) = k.range.intersect(&yv.range).and_then(|s| s.intersect(&r)) {
                        answer = answer + product_over(k, yv, sub);
                    }
                }
            }

            // The expanded node's own charge and its children's, weighted by
            // the partner's maxima.
            let own = |v: &View<'_, S>| {
                let (d, f) = ys
                    .iter()
                    .filter(|yv| yv.range.overlaps(&v.range))
                    .fold((S::zero(), S::zero()), |(d, f), yv| (d.max(yv.node.measures.d_star), f.max(yv.node.measures.f_star)));
                order([v.l1() * f, v.l1() * d])
            };
            if nv.range.overlaps(&r) {
                let w = own(&nv);
                totals = [totals[0] - w[0], totals[1] - w[1]];
            }
            for k in &kids {
                if k.range.overlaps(&r) {
                    let w = own(k);
                    totals = [totals[0] + w[0], totals[1] + w[1]];
                }
            }

            // Partner charges whose weight depends on this node's bounds.
            let Some(hull) = ys.iter().filter(|yv| yv.range.overlaps(&r)).map(|yv| yv.range).reduce(|a, b| a.hull(&b)) else {
                return Some(Delta::Shift { answer, other: S::zero(), totals: smallvec![totals] });
            };
            let tree_x = frontiers.trees[x.series];
            let mut xs: SmallVec<[View<'_, S>; 8]> = SmallVec::new();
            let span = IndexRange::new(hull.start() + x.lag, hull.end() + x.lag).expect("shifted");
            frontiers.each_in(x.series, span, |id| {
                let n = tree_x.node(id);
                if !std::ptr::eq(n, node) {
                    xs.extend(View::of(n, x.lag, len));
                }
            });
            for yv in ys.iter().filter(|yv| yv.range.overlaps(&r)) {
                let (mut d, mut f) = (S::zero(), S::zero());
                for xv in xs.iter().filter(|xv| xv.range.overlaps(&yv.range)) {
                    d = d.max(xv.node.measures.d_star);
                    f = f.max(xv.node.measures.f_star);
                }
                let (d_old, f_old) = (d.max(node.measures.d_star), f.max(node.measures.f_star));
                let (mut d_new, mut f_new) = (d, f);
                for k in kids.iter().filter(|k| k.range.overlaps(&yv.range)) {
                    d_new = d_new.max(k.node.measures.d_star);
                    f_new = f_new.max(k.node.measures.f_star);
                }
                let w = order([yv.l1() * (d_new - d_old), yv.l1() * (f_new - f_old)]);
                totals = [totals[0] + w[0], totals[1] + w[1]];
            }
            Some(Delta::Shift { answer, other: S::zero(), totals: smallvec![totals] })
        }
    }
}

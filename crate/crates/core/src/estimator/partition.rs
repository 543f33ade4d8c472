//! Derived series as aligned pieces plus holistic error charges.
//!
//! A [`Partition`] describes a (possibly derived) series over a contiguous
//! span. `pieces` partition the span; each carries the compression function
//! as a polynomial and bounds on `|d|` and `|f|`. `charges` carry the L1
//! accounting: every charge stands for a nonnegative function supported on
//! its range whose total is at most `l1`, and together they dominate the
//! pointwise residual `|d_i - f(i)|`. Summing the charges that overlap a
//! range therefore bounds the residual mass of that range, and each original
//! segment's `L` is counted exactly once no matter how finely partitions are
//! aligned.

use crate::scalar::{CompensatedSum, Scalar};
use crate::series::{ErrorMeasures, IndexRange};

use super::poly::Poly;
use super::{Estimate, EstimateError};

#[derive(Debug, Clone, PartialEq)]
pub struct Piece<S> {
    pub range: IndexRange,
    /// In `t = i - range.start()`.
    pub poly: Poly<S>,
    pub d_star: S,
    pub f_star: S,
}

impl<S: Scalar> Piece<S> {
    /// The piece restricted to `sub`, which must lie inside it.
    pub fn restrict(&self, sub: IndexRange) -> Self {
        debug_assert!(self.range.covers(&sub));
        Self {
            range: sub,
            poly: self.poly.shift(sub.start() - self.range.start()),
            d_star: self.d_star,
            f_star: self.f_star,
        }
    }

    /// `sum f(i)` over `sub`, which must lie inside the piece.
    pub fn sum_over(&self, sub: IndexRange) -> S {
        let off = self.range.start();
        self.poly.sum_between(sub.start() - off, sub.end() - off)
    }

    pub fn value_at(&self, i: u64) -> S {
        self.poly.eval(S::of_u64(i - self.range.start()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge<S> {
    pub range: IndexRange,
    pub l1: S,
}

/// Which grouping of the product residual a `Times` node uses.
///
/// `d1 d2 - f1 f2 = d1 (d2 - f2) + f2 (d1 - f1)` charges the right operand's
/// residual against the left's `d*` and the left's residual against the
/// right's `f*` (`First`); the mirrored identity gives `Second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimesOption {
    First,
    Second,
}

impl TimesOption {
    pub fn cheaper<S: Scalar>(totals: [S; 2]) -> Self {
        if totals[1] < totals[0] {
            TimesOption::Second
        } else {
            TimesOption::First
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<S> {
    span: Option<IndexRange>,
    pub pieces: Vec<Piece<S>>,
    pub charges: Vec<Charge<S>>,
}

impl<S: Scalar> Partition<S> {
    pub fn empty() -> Self {
        Self { span: None, pieces: Vec::new(), charges: Vec::new() }
    }

    /// Builds a partition from contiguous pieces; fails if they leave gaps.
    pub fn new(pieces: Vec<Piece<S>>, charges: Vec<Charge<S>>) -> Result<Self, EstimateError> {
        let (Some(first), Some(last)) = (pieces.first(), pieces.last()) else {
            return Ok(Self::empty());
        };
        for w in pieces.windows(2) {
            if w[0].range.end() + 1 != w[1].range.start() {
                return Err(EstimateError::NotContiguous);
            }
        }
        let span = IndexRange::new(first.range.start(), last.range.end()).expect("ordered pieces");
        Ok(Self { span: Some(span), pieces, charges })
    }

    /// One piece and one charge per segment, as stored in a tree node.
    pub fn from_segments<'a, I>(segments: I) -> Result<Self, EstimateError>
    where
        I: IntoIterator<Item = (IndexRange, &'a crate::compression::FunctionDescriptor<S>, ErrorMeasures<S>)>,
        S: 'a,
    {
        let mut pieces = Vec::new();
        let mut charges = Vec::new();
        for (range, f, m) in segments {
            pieces.push(Piece { range, poly: Poly::from_descriptor(f), d_star: m.d_star, f_star: m.f_star });
            charges.push(Charge { range, l1: m.l1 });
        }
        Self::new(pieces, charges)
    }

    pub fn series_gen(value: S, len: u64) -> Self {
        let range = IndexRange::full(len);
        Self {
            span: Some(range),
            pieces: vec![Piece { range, poly: Poly::constant(value), d_star: value.abs(), f_star: value.abs() }],
            charges: Vec::new(),
        }
    }

    pub fn span(&self) -> Option<IndexRange> {
        self.span
    }

    /// Sum of all charges: the holistic `L` of the partition.
    pub fn total_l1(&self) -> S {
        self.charges.iter().map(|c| c.l1).collect::<CompensatedSum<S>>().value()
    }

    /// Index of the first piece whose range ends at or after `i`.
    fn first_piece_from(&self, i: u64) -> usize {
        self.pieces.partition_point(|p| p.range.end() < i)
    }

    /// Pieces overlapping `range`, restricted to it.
    pub fn pieces_within(&self, range: IndexRange) -> impl Iterator<Item = (IndexRange, &Piece<S>)> + '_ {
        self.pieces[self.first_piece_from(range.start())..]
            .iter()
            .take_while(move |p| p.range.start() <= range.end())
            .filter_map(move |p| p.range.intersect(&range).map(|r| (r, p)))
    }

    /// The partition restricted to `range` (pieces clipped, charges kept
    /// whole when they overlap).
    pub fn restrict(&self, range: IndexRange) -> Self {
        let Some(span) = self.span.and_then(|s| s.intersect(&range)) else {
            return Self::empty();
        };
        Self {
            span: Some(span),
            pieces: self.pieces_within(span).map(|(r, p)| p.restrict(r)).collect(),
            charges: self.charges.iter().filter(|c| c.range.overlaps(&span)).copied().collect(),
        }
    }
}

/// Sorted union of both partitions' boundaries.
pub fn align<S: Scalar>(a: &Partition<S>, b: &Partition<S>) -> Result<Vec<IndexRange>, EstimateError> {
    let mut out = Vec::new();
    aligned_pairs(a, b, |r, _, _| out.push(r))?;
    Ok(out)
}

/// Calls `f` with every aligned sub-range and the indices of the pieces of
/// `a` and `b` covering it.
fn aligned_pairs<S: Scalar>(
    a: &Partition<S>,
    b: &Partition<S>,
    mut f: impl FnMut(IndexRange, usize, usize),
) -> Result<(), EstimateError> {
    if a.span != b.span {
        return Err(EstimateError::RangeMismatch);
    }
    let Some(span) = a.span else { return Ok(()) };
    let (mut i, mut j, mut s) = (0, 0, span.start());
    while s <= span.end() {
        let (pa, pb) = (&a.pieces[i], &b.pieces[j]);
        let e = pa.range.end().min(pb.range.end());
        f(IndexRange::new(s, e).expect("aligned"), i, j);
        if pa.range.end() == e {
            i += 1;
        }
        if pb.range.end() == e {
            j += 1;
        }
        s = e + 1;
    }
    Ok(())
}

fn combine<S: Scalar>(
    a: &Partition<S>,
    b: &Partition<S>,
    piece: impl Fn(IndexRange, &Poly<S>, &Poly<S>, &Piece<S>, &Piece<S>) -> Piece<S>,
) -> Result<Vec<Piece<S>>, EstimateError> {
    let mut out = Vec::with_capacity(a.pieces.len() + b.pieces.len());
    aligned_pairs(a, b, |r, i, j| {
        let (pa, pb) = (&a.pieces[i], &b.pieces[j]);
        let qa = pa.poly.shift(r.start() - pa.range.start());
        let qb = pb.poly.shift(r.start() - pb.range.start());
        out.push(piece(r, &qa, &qb, pa, pb));
    })?;
    Ok(out)
}

fn additive<S: Scalar>(a: &Partition<S>, b: &Partition<S>, negate: bool) -> Result<Partition<S>, EstimateError> {
    let pieces = combine(a, b, |r, qa, qb, pa, pb| Piece {
        range: r,
        poly: if negate { qa.sub(qb) } else { qa.add(qb) },
        d_star: pa.d_star + pb.d_star,
        f_star: pa.f_star + pb.f_star,
    })?;
    let mut charges = a.charges.clone();
    charges.extend_from_slice(&b.charges);
    Ok(Partition { span: a.span, pieces, charges })
}

pub fn plus<S: Scalar>(a: &Partition<S>, b: &Partition<S>) -> Result<Partition<S>, EstimateError> {
    additive(a, b, false)
}

pub fn minus<S: Scalar>(a: &Partition<S>, b: &Partition<S>) -> Result<Partition<S>, EstimateError> {
    additive(a, b, true)
}

/// Outcome of the option choice at one `Times` node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimesReport<S> {
    pub option: TimesOption,
    /// Total weighted `L` of each option over the charges overlapping the
    /// relevant range.
    pub totals: [S; 2],
}

/// Pointwise product. When `forced` is `None` the option with the smaller
/// total over charges overlapping `relevant` is used.
pub fn times<S: Scalar>(
    a: &Partition<S>,
    b: &Partition<S>,
    relevant: IndexRange,
    forced: Option<TimesOption>,
) -> Result<(Partition<S>, TimesReport<S>), EstimateError> {
    let pieces = combine(a, b, |r, qa, qb, pa, pb| Piece {
        range: r,
        poly: qa.mul(qb),
        d_star: pa.d_star * pb.d_star,
        f_star: pa.f_star * pb.f_star,
    })?;
    // Per charge: the partner's (d*, f*) maxima. b's charges come first.
    let weights = |c: &Charge<S>, partner: &Partition<S>| {
        partner.pieces_within(c.range).fold((S::zero(), S::zero()), |(d, f), (_, p)| (d.max(p.d_star), f.max(p.f_star)))
    };
    let each = |f: &mut dyn FnMut(&Charge<S>, [S; 2])| {
        for c in &b.charges {
            // First charges b's residual against a's d*, a's against b's f*.
            let (d, fs) = weights(c, a);
            f(c, [c.l1 * d, c.l1 * fs]);
        }
        for c in &a.charges {
            let (d, fs) = weights(c, b);
            f(c, [c.l1 * fs, c.l1 * d]);
        }
    };
    let mut totals = [CompensatedSum::new(), CompensatedSum::new()];
    each(&mut |c, l1| {
        if c.range.overlaps(&relevant) {
            totals[0].add(l1[0]);
            totals[1].add(l1[1]);
        }
    });
    let totals = [totals[0].value(), totals[1].value()];
    let option = forced.unwrap_or_else(|| TimesOption::cheaper(totals));
    let mut charges = Vec::with_capacity(a.charges.len() + b.charges.len());
    each(&mut |c, l1| charges.push(Charge { range: c.range, l1: chosen_of(l1, option) }));
    Ok((Partition { span: a.span, pieces, charges }, TimesReport { option, totals }))
}

fn chosen_of<S: Copy>(v: [S; 2], opt: TimesOption) -> S {
    match opt {
        TimesOption::First => v[0],
        TimesOption::Second => v[1],
    }
}

/// `(p_{1+lag}, ..., p_{len+lag})`, re-indexed from 1.
pub fn lag<S: Scalar>(p: &Partition<S>, lag: u64, len: u64) -> Partition<S> {
    let Some(span) = p.span.and_then(|s| s.shift_down_clipped(lag, len)) else {
        return Partition::empty();
    };
    let inner = IndexRange::new(span.start() + lag, span.end() + lag).expect("shifted span");
    let pieces = p
        .pieces_within(inner)
        .map(|(r, piece)| {
            let clipped = piece.restrict(r);
            Piece {
                range: IndexRange::new(r.start() - lag, r.end() - lag).expect("shifted piece"),
                ..clipped
            }
        })
        .collect();
    let charges = p
        .charges
        .iter()
        .filter_map(|c| c.range.shift_down_clipped(lag, len).map(|range| Charge { range, l1: c.l1 }))
        .collect();
    Partition { span: Some(span), pieces, charges }
}

/// Answer is the exact sum of the functions over `range`; error is the total
/// of every charge overlapping it. A charge only partly inside the range
/// still counts in full: nothing in the stored measures says where inside
/// the segment its residual mass sits.
pub fn estimate_sum<S: Scalar>(p: &Partition<S>, range: IndexRange) -> Result<Estimate<S>, EstimateError> {
    if !p.span.is_some_and(|s| s.covers(&range)) {
        return Err(EstimateError::RangeOutOfBounds { range });
    }
    let answer = p.pieces_within(range).map(|(r, piece)| piece.sum_over(r)).collect::<CompensatedSum<S>>().value();
    let error = p
        .charges
        .iter()
        .filter(|c| c.range.overlaps(&range))
        .map(|c| c.l1)
        .collect::<CompensatedSum<S>>()
        .value();
    Ok(Estimate::bounded(answer, error))
}

//! Split-point search.
//!
//! For constants the L1 residual of every prefix and suffix against its own
//! mean comes from two Fenwick trees over value ranks, so a node of length
//! `m` costs `O(m log m)`. Least-squares lines have no such recurrence: short
//! segments are searched exhaustively, long ones evaluate the exact L1 only at
//! candidate split points picked from the closed-form squared error.

use crate::compression::{fit, l1_residual, FunctionKind};
use crate::scalar::{compensated_sum, Scalar};

use super::TreeError;

/// Linear segments up to this length are split by exhaustive L1 search.
pub const EXHAUSTIVE_LINEAR_SPLIT_LIMIT: usize = 1024;

const SSE_CANDIDATES: usize = 48;
const GRID_CANDIDATES: usize = 48;
const REFINE_RADIUS: usize = 8;

/// Returns `(k, l_sum)`: left child is `data[..k]` (local indices `1..=k`),
/// and `l_sum` the summed L1 of both fitted children. Ties go to the
/// smallest `k`.
pub fn best_split<S: Scalar>(data: &[S], kind: FunctionKind) -> Result<(usize, S), TreeError> {
    if data.len() < 2 {
        return Err(TreeError::SegmentTooShort(data.len()));
    }
    Ok(match kind {
        FunctionKind::Constant => constant_split(data),
        FunctionKind::Linear if data.len() <= EXHAUSTIVE_LINEAR_SPLIT_LIMIT => {
            argmin((1..data.len()).map(|k| (k, linear_split_cost(data, k))))
        }
        FunctionKind::Linear => linear_split_candidates(data),
    })
}

fn argmin<S: Scalar>(costs: impl Iterator<Item = (usize, S)>) -> (usize, S) {
    let mut best = (0, S::infinity());
    for (k, c) in costs {
        if c < best.1 || best.0 == 0 {
            best = (k, c);
        }
    }
    best
}

pub(crate) fn linear_split_cost<S: Scalar>(data: &[S], k: usize) -> S {
    let (l, r) = data.split_at(k);
    let fl = fit(FunctionKind::Linear, l).expect("non-empty");
    let fr = fit(FunctionKind::Linear, r).expect("non-empty");
    l1_residual(l, &fl) + l1_residual(r, &fr)
}

struct Fenwick<S> {
    count: Vec<u32>,
    sum: Vec<S>,
}

impl<S: Scalar> Fenwick<S> {
    fn new(n: usize) -> Self {
        Self { count: vec![0; n + 1], sum: vec![S::zero(); n + 1] }
    }

    fn add(&mut self, rank: usize, v: S) {
        let mut i = rank + 1;
        while i < self.count.len() {
            self.count[i] += 1;
            self.sum[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Count and sum over ranks `< r`.
    fn prefix(&self, r: usize) -> (u32, S) {
        let (mut c, mut s) = (0, S::zero());
        let mut i = r;
        while i > 0 {
            c += self.count[i];
            s += self.sum[i];
            i &= i - 1;
        }
        (c, s)
    }
}

/// L1 residual against the mean for every prefix length `1..m`, in order.
fn prefix_l1_against_mean<S: Scalar>(values: &[S], sorted: &[S], rank: &[usize]) -> Vec<S> {
    let mut fw = Fenwick::new(values.len());
    let mut total = S::zero();
    let mut out = Vec::with_capacity(values.len());
    for (k, (&v, &r)) in values.iter().zip(rank).enumerate() {
        fw.add(r, v);
        total += v;
        let cnt = S::of_u64(k as u64 + 1);
        let mean = total / cnt;
        let below = sorted.partition_point(|&x| x < mean);
        let (c_lt, s_lt) = fw.prefix(below);
        let c_lt = S::of_u64(c_lt as u64);
        let l1 = (mean * c_lt - s_lt) + ((total - s_lt) - mean * (cnt - c_lt));
        out.push(l1.max(S::zero()));
    }
    out
}

fn constant_split<S: Scalar>(data: &[S]) -> (usize, S) {
    let m = data.len();
    // Centering keeps the rank-sum differences well conditioned.
    let shift = compensated_sum(data.iter().copied()) / S::of_u64(m as u64);
    let values: Vec<S> = data.iter().map(|&d| d - shift).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp_s(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<S> = order.iter().map(|&i| values[i]).collect();
    let mut rank = vec![0; m];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let prefix = prefix_l1_against_mean(&values, &sorted, &rank);
    let rev_values: Vec<S> = values.iter().rev().copied().collect();
    let rev_rank: Vec<usize> = rank.iter().rev().copied().collect();
    let suffix = prefix_l1_against_mean(&rev_values, &sorted, &rev_rank);
    // Left child has k points, right child m - k.
    argmin((1..m).map(|k| (k, prefix[k - 1] + suffix[m - k - 1])))
}

/// Closed-form least-squares SSE of every prefix (`len` 1..m) of `y`, with the
/// local index `1..=len` as abscissa.
fn prefix_line_sse(y: &[f64]) -> Vec<f64> {
    let (mut sy, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(y.len());
    for (i, &v) in y.iter().enumerate() {
        let x = (i + 1) as f64;
        sy += v;
        syy += v * v;
        sxy += x * v;
        let k = x;
        let x_mean = (k + 1.0) / 2.0;
        let y_mean = sy / k;
        let sxx_c = k * (k * k - 1.0) / 12.0;
        let syy_c = syy - k * y_mean * y_mean;
        let sxy_c = sxy - k * x_mean * y_mean;
        let sse = if sxx_c > 0.0 { syy_c - sxy_c * sxy_c / sxx_c } else { 0.0 };
        out.push(sse.max(0.0));
    }
    out
}

fn linear_split_candidates<S: Scalar>(data: &[S]) -> (usize, S) {
    let m = data.len();
    let shift = compensated_sum(data.iter().copied()).as_f64() / m as f64;
    let y: Vec<f64> = data.iter().map(|d| d.as_f64() - shift).collect();
    let pre = prefix_line_sse(&y);
    let rev: Vec<f64> = y.iter().rev().copied().collect();
    let suf = prefix_line_sse(&rev);
    let mut by_sse: Vec<(f64, usize)> = (1..m).map(|k| (pre[k - 1] + suf[m - k - 1], k)).collect();
    by_sse.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut candidates: Vec<usize> = by_sse.iter().take(SSE_CANDIDATES).map(|&(_, k)| k).collect();
    candidates.extend((1..=GRID_CANDIDATES).map(|j| (j * m / (GRID_CANDIDATES + 1)).clamp(1, m - 1)));
    candidates.sort_unstable();
    candidates.dedup();
    let (k0, _) = argmin(candidates.iter().map(|&k| (k, linear_split_cost(data, k))));
    let lo = k0.saturating_sub(REFINE_RADIUS).max(1);
    let hi = (k0 + REFINE_RADIUS).min(m - 1);
    candidates.extend(lo..=hi);
    candidates.sort_unstable();
    candidates.dedup();
    argmin(candidates.into_iter().map(|k| (k, linear_split_cost(data, k))))
}

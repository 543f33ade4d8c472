//! Polynomials in a piece-local offset `t = i - start` (so `t = 0` is the
//! first index of the piece).

use smallvec::SmallVec;

use crate::compression::FunctionDescriptor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S> {
    coef: SmallVec<[S; 4]>,
}

impl<S: Scalar> Poly<S> {
    pub fn constant(v: S) -> Self {
        Self { coef: SmallVec::from_slice(&[v]) }
    }

    /// `c[0] + c[1] t + c[2] t^2 + ...`
    pub fn from_coefficients(c: &[S]) -> Self {
        let mut p = Self { coef: SmallVec::from_slice(c) };
        if p.coef.is_empty() {
            p.coef.push(S::zero());
        }
        p
    }

    /// Segment functions use the 1-based local index `j = t + 1`.
    pub fn from_descriptor(f: &FunctionDescriptor<S>) -> Self {
        match *f {
            FunctionDescriptor::Constant { b } => Self::constant(b),
            FunctionDescriptor::Linear { a, b } => Self { coef: SmallVec::from_slice(&[a + b, a]) },
        }
    }

    pub fn coefficients(&self) -> &[S] {
        &self.coef
    }

    pub fn degree(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn eval(&self, t: S) -> S {
        self.coef.iter().rev().fold(S::zero(), |acc, &c| acc * t + c)
    }

    /// `q(t) = p(t + d)`.
    pub fn shift(&self, d: u64) -> Self {
        if d == 0 || self.coef.len() == 1 {
            return self.clone();
        }
        let d = S::of_u64(d);
        if let [c0, c1] = self.coef[..] {
            return Self { coef: SmallVec::from_slice(&[c0 + c1 * d, c1]) };
        }
        // Repeated synthetic division by (t - d) yields the Taylor coefficients.
        let mut c = self.coef.clone();
        let n = c.len();
        for k in 0..n {
            for j in (k..n - 1).rev() {
                let hi = c[j + 1];
                c[j] += d * hi;
            }
        }
        Self { coef: c }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        let n = self.coef.len().max(other.coef.len());
        let at = |p: &Self, i: usize| p.coef.get(i).copied().unwrap_or(S::zero());
        Self { coef: (0..n).map(|i| f(at(self, i), at(other, i))).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out: SmallVec<[S; 4]> = SmallVec::from_elem(S::zero(), self.coef.len() + other.coef.len() - 1);
        for (i, &a) in self.coef.iter().enumerate() {
            for (j, &b) in other.coef.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { coef: out }
    }

    /// `sum_{t=0}^{m-1} p(t)`.
    pub fn sum_first(&self, m: u64) -> S {
        if m == 0 {
            return S::zero();
        }
        let sums = power_sums::<S>(m, self.degree());
        self.coef.iter().zip(&sums).map(|(&c, &s)| c * s).sum()
    }

    /// `sum_{t=a}^{b} p(t)` for `a <= b`.
    pub fn sum_between(&self, a: u64, b: u64) -> S {
        self.shift(a).sum_first(b - a + 1)
    }
}

/// `S_k = sum_{t=0}^{m-1} t^k` for `k = 0..=deg`.
fn power_sums<S: Scalar>(m: u64, deg: usize) -> SmallVec<[S; 4]> {
    let mf = S::of_u64(m);
    let one = S::one();
    let two = S::lit(2.0);
    let mut out: SmallVec<[S; 4]> = SmallVec::new();
    out.push(mf);
    if deg >= 1 {
        out.push(mf * (mf - one) / two);
    }
    if deg >= 2 {
        out.push((mf - one) * mf * (two * mf - one) / S::lit(6.0));
    }
    // m^{k+1} = sum_{j=0}^{k} C(k+1, j) S_j
    for k in 3..=deg {
        let mut binom = S::one();
        let mut rest = S::zero();
        for (j, &s) in out.iter().enumerate() {
            rest += binom * s;
            binom = binom * S::of_u64((k + 1 - j) as u64) / S::of_u64(j as u64 + 1);
        }
        out.push((mf.powi(k as i32 + 1) - rest) / S::of_u64(k as u64 + 1));
    }
    out
}

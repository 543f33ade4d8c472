//! Error propagation through arithmetic, as intervals
//! `[answer - error, answer + error]`.
//!
//! For `+`, `-` and scaling by a constant this reduces to the familiar rows
//! (`ea + eb`, `|c| ea`, `ea / |c|`). Products use `|a| eb + |b| ea + ea eb`,
//! which is the hull deviation for any signs. Quotients take the largest
//! corner deviation of the hull; when the denominator interval contains zero
//! the result is unbounded.

use crate::query::{ArithOp, PlanExpr};
use crate::scalar::Scalar;

use super::EstimateError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<S> {
    pub answer: S,
    /// `+inf` marks an unbounded estimate.
    pub error: S,
}

impl<S: Scalar> Estimate<S> {
    pub fn bounded(answer: S, error: S) -> Self {
        debug_assert!(error >= S::zero());
        Self { answer, error }
    }

    pub fn exact(answer: S) -> Self {
        Self { answer, error: S::zero() }
    }

    pub fn unbounded(answer: S) -> Self {
        Self { answer, error: S::infinity() }
    }

    pub fn is_unbounded(&self) -> bool {
        !self.error.is_finite() || !self.answer.is_finite()
    }

    pub fn lower(&self) -> S {
        self.answer - self.error
    }

    pub fn upper(&self) -> S {
        self.answer + self.error
    }

    pub fn contains(&self, value: S) -> bool {
        self.lower() <= value && value <= self.upper()
    }
}

pub fn estimate_arith<S: Scalar>(op: ArithOp, a: Estimate<S>, b: Estimate<S>) -> Estimate<S> {
    match op {
        ArithOp::Add => Estimate { answer: a.answer + b.answer, error: a.error + b.error },
        ArithOp::Sub => Estimate { answer: a.answer - b.answer, error: a.error + b.error },
        ArithOp::Mul => {
            if a.is_unbounded() || b.is_unbounded() {
                return Estimate::unbounded(a.answer * b.answer);
            }
            Estimate {
                answer: a.answer * b.answer,
                error: a.answer.abs() * b.error + b.answer.abs() * a.error + a.error * b.error,
            }
        }
        ArithOp::Div if b.error == S::zero() && b.answer != S::zero() && b.answer.is_finite() => {
            Estimate { answer: a.answer / b.answer, error: a.error / b.answer.abs() }
        }
        ArithOp::Div => {
            if a.is_unbounded() || b.is_unbounded() || (b.lower() <= S::zero() && S::zero() <= b.upper()) {
                return Estimate::unbounded(a.answer / b.answer);
            }
            let answer = a.answer / b.answer;
            let corners = [a.lower() / b.lower(), a.lower() / b.upper(), a.upper() / b.lower(), a.upper() / b.upper()];
            let error = corners.iter().map(|&c| (c - answer).abs()).fold(S::zero(), S::max);
            Estimate { answer, error }
        }
    }
}

/// Square root of an interval. Parts of the interval below zero are dropped;
/// an interval entirely below zero is an error.
pub fn estimate_sqrt<S: Scalar>(x: Estimate<S>) -> Result<Estimate<S>, EstimateError> {
    if x.is_unbounded() {
        return Ok(Estimate::unbounded(x.answer.max(S::zero()).sqrt()));
    }
    if x.upper() < S::zero() {
        return Err(EstimateError::NegativeSqrt);
    }
    let answer = x.answer.max(S::zero()).sqrt();
    let hi = x.upper().sqrt();
    let lo = x.lower().max(S::zero()).sqrt();
    Ok(Estimate { answer, error: (hi - answer).max(answer - lo) })
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// `[left, right]`, each `[[dA/da, dA/dea], [dE/da, dE/dea]]` for the result
/// `(A, E)` of [`estimate_arith`] on bounded operands.
fn arith_partials<S: Scalar>(op: ArithOp, a: Estimate<S>, b: Estimate<S>) -> [[[S; 2]; 2]; 2] {
    let (z, one) = (S::zero(), S::one());
    match op {
        ArithOp::Add => [[[one, z], [z, one]], [[one, z], [z, one]]],
        ArithOp::Sub => [[[one, z], [z, one]], [[-one, z], [z, one]]],
        ArithOp::Mul => [
            [[b.answer, z], [sign(a.answer) * b.error, b.answer.abs() + b.error]],
            [[a.answer, z], [sign(b.answer) * a.error, a.answer.abs() + a.error]],
        ],
        ArithOp::Div if b.error == z => {
            let q = a.answer / b.answer;
            let bb = b.answer * b.answer;
            [
                [[one / b.answer, z], [z, one / b.answer.abs()]],
                [[-q / b.answer, z], [-a.error * sign(b.answer) / bb, a.answer.abs() / bb]],
            ]
        }
        ArithOp::Div => {
            let q = a.answer / b.answer;
            let mut best = (S::neg_infinity(), one, one);
            for s1 in [-one, one] {
                for s2 in [-one, one] {
                    let dev = ((a.answer + s1 * a.error) / (b.answer + s2 * b.error) - q).abs();
                    if dev > best.0 {
                        best = (dev, s1, s2);
                    }
                }
            }
            let (_, s1, s2) = best;
            let d = b.answer + s2 * b.error;
            let c = (a.answer + s1 * a.error) / d;
            let sg = sign(c - q);
            [
                [[one / b.answer, z], [sg * (one / d - one / b.answer), sg * s1 / d]],
                [[-q / b.answer, z], [sg * (q / b.answer - c / d), -sg * s2 * c / d]],
            ]
        }
    }
}

/// `[[dA/dx, dA/dex], [dE/dx, dE/dex]]` for [`estimate_sqrt`].
fn sqrt_partials<S: Scalar>(x: Estimate<S>) -> [[S; 2]; 2] {
    let (z, half) = (S::zero(), S::lit(0.5));
    let answer = x.answer.max(z).sqrt();
    let hi = x.upper().sqrt();
    let lo = x.lower().max(z).sqrt();
    let da = if x.answer > z { half / answer } else { z };
    let dhi = half / hi;
    let dlo = if x.lower() > z { half / lo } else { z };
    if hi - answer >= answer - lo {
        [[da, z], [dhi - da, dhi]]
    } else {
        [[da, z], [da - dlo, dlo]]
    }
}

/// Combines per-`Sum` estimates through the query's arithmetic.
pub fn combine<S: Scalar>(expr: &PlanExpr, sums: &[Estimate<S>]) -> Result<Estimate<S>, EstimateError> {
    Ok(match expr {
        PlanExpr::Number(v) => Estimate::exact(S::lit(*v)),
        PlanExpr::Sum(i) => sums[*i],
        PlanExpr::Arith { op, left, right } => estimate_arith(*op, combine(left, sums)?, combine(right, sums)?),
        PlanExpr::Sqrt(e) => estimate_sqrt(combine(e, sums)?)?,
    })
}

/// Query arithmetic flattened to postfix for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Program<S> {
    ops: Vec<Op<S>>,
    /// Largest stack size while running.
    depth: usize,
    /// Operand positions of each op.
    args: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op<S> {
    Const(S),
    Sum(usize),
    Arith(ArithOp),
    Sqrt,
}

impl<S: Scalar> Program<S> {
    /// `slot` maps each `Sum` slot of the expression to an index into the
    /// estimates passed to [`Program::run`].
    pub fn compile(expr: &PlanExpr, slot: impl Fn(usize) -> usize) -> Self {
        fn walk<S: Scalar>(e: &PlanExpr, slot: &dyn Fn(usize) -> usize, out: &mut Vec<Op<S>>) {
            match e {
                PlanExpr::Number(v) => out.push(Op::Const(S::lit(*v))),
                PlanExpr::Sum(i) => out.push(Op::Sum(slot(*i))),
                PlanExpr::Arith { op, left, right } => {
                    walk(left, slot, out);
                    walk(right, slot, out);
                    let folded = match out[out.len() - 2..] {
                        [Op::Const(a), Op::Const(b)] => Some(estimate_arith(*op, Estimate::exact(a), Estimate::exact(b)))
                            .filter(|e| !e.is_unbounded() && e.error == S::zero()),
                        _ => None,
                    };
                    match folded {
                        Some(e) => {
                            out.truncate(out.len() - 2);
                            out.push(Op::Const(e.answer));
                        }
                        None => out.push(Op::Arith(*op)),
                    }
                }
                PlanExpr::Sqrt(x) => {
                    walk(x, slot, out);
                    out.push(Op::Sqrt);
                }
            }
        }
        let mut ops = Vec::new();
        walk(expr, &slot, &mut ops);
        let mut depth = 0;
        let mut args = Vec::with_capacity(ops.len());
        let mut stack = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            args.push(match op {
                Op::Const(_) | Op::Sum(_) => [i; 2],
                Op::Arith(_) => {
                    let r = stack.pop().expect("well-formed expression");
                    [stack.pop().expect("well-formed expression"), r]
                }
                Op::Sqrt => [stack.pop().expect("well-formed expression"); 2],
            });
            stack.push(i);
            depth = depth.max(stack.len());
        }
        Self { ops, depth, args }
    }

    /// Partial derivatives of the result's error with respect to each
    /// input's answer and error, as `[d/d answer, d/d error]`. `None` when
    /// some intermediate value is unbounded or a derivative is not finite.
    pub fn error_gradient(&self, sums: &[Estimate<S>]) -> Option<Vec<[S; 2]>> {
        let n = self.ops.len();
        let mut vals: Vec<Estimate<S>> = Vec::with_capacity(n);
        for (i, op) in self.ops.iter().enumerate() {
            let [l, r] = self.args[i];
            let v = match *op {
                Op::Const(c) => Estimate::exact(c),
                Op::Sum(k) => sums[k],
                Op::Arith(a) => estimate_arith(a, vals[l], vals[r]),
                Op::Sqrt => estimate_sqrt(vals[l]).ok()?,
            };
            if v.is_unbounded() {
                return None;
            }
            vals.push(v);
        }
        let mut adj = vec![[S::zero(); 2]; n];
        adj[n - 1] = [S::zero(), S::one()];
        let mut grad = vec![[S::zero(); 2]; sums.len()];
        for i in (0..n).rev() {
            let g = adj[i];
            let [l, r] = self.args[i];
            let mut push = |slot: usize, p: &[[S; 2]; 2]| {
                adj[slot][0] = adj[slot][0] + g[0] * p[0][0] + g[1] * p[1][0];
                adj[slot][1] = adj[slot][1] + g[0] * p[0][1] + g[1] * p[1][1];
            };
            match self.ops[i] {
                Op::Const(_) => {}
                Op::Sum(k) => {
                    grad[k][0] = grad[k][0] + g[0];
                    grad[k][1] = grad[k][1] + g[1];
                }
                Op::Arith(a) => {
                    let [pl, pr] = arith_partials(a, vals[l], vals[r]);
                    push(l, &pl);
                    push(r, &pr);
                }
                Op::Sqrt => push(l, &sqrt_partials(vals[l])),
            }
        }
        grad.iter().all(|g| g[0].is_finite() && g[1].is_finite()).then_some(grad)
    }

    /// Same result as [`combine`]; `stack` is scratch space.
    pub fn run(&self, sums: &[Estimate<S>], stack: &mut Vec<Estimate<S>>) -> Result<Estimate<S>, EstimateError> {
        stack.clear();
        stack.resize(self.depth, Estimate::exact(S::zero()));
        let mut top = 0;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[top] = Estimate::exact(c);
                    top += 1;
                }
                Op::Sum(i) => {
                    stack[top] = sums[i];
                    top += 1;
                }
                Op::Arith(a) => {
                    top -= 1;
                    stack[top - 1] = estimate_arith(a, stack[top - 1], stack[top]);
                }
                Op::Sqrt => stack[top - 1] = estimate_sqrt(stack[top - 1])?,
            }
        }
        Ok(stack[0])
    }
}

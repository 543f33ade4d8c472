use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::compression::FunctionKind;
use crate::query::{parse, validate, Catalog, PlanExpr};
use crate::series::TimeSeries;
use crate::tree::{BuildConfig, PlatoTree, StopRule};

fn noisy(rng: &mut ChaCha8Rng, n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.2 + phase).sin() * 3.0 + 1.0 + rng.random_range(-0.3..0.3)).collect()
}

fn full_tree(id: &str, data: &[f64], kind: FunctionKind) -> PlatoTree<f64> {
    let ts = TimeSeries::from_values(id, data.to_vec()).unwrap();
    let cfg = BuildConfig::new(kind, 0.0, 1, StopRule::TauOrKappa).unwrap();
    PlatoTree::build(&ts, cfg).unwrap()
}

/// A random cut through the tree: each node is expanded with probability `p`.
fn random_cut(tree: &PlatoTree<f64>, rng: &mut ChaCha8Rng, p: f64) -> Vec<Segment<f64>> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        match node.children {
            Some((l, r)) if rng.random_bool(p) => {
                stack.push(r);
                stack.push(l);
            }
            _ => out.push(Segment::of_node(node)),
        }
    }
    out
}

/// Direct pointwise evaluation of a plan series.
fn brute(ps: &PlanSeries, data: &[Vec<f64>]) -> Vec<f64> {
    match ps {
        PlanSeries::Base { series, .. } => data[*series].clone(),
        PlanSeries::Gen { value, len } => vec![*value; *len as usize],
        PlanSeries::Plus(a, b) => brute(a, data).iter().zip(brute(b, data)).map(|(x, y)| x + y).collect(),
        PlanSeries::Minus(a, b) => brute(a, data).iter().zip(brute(b, data)).map(|(x, y)| x - y).collect(),
        PlanSeries::Times(a, b) => brute(a, data).iter().zip(brute(b, data)).map(|(x, y)| x * y).collect(),
        PlanSeries::Lag { inner, lag, len } => brute(inner, data)[*lag as usize..(*lag + *len) as usize].to_vec(),
    }
}

fn brute_expr(e: &PlanExpr, sums: &[f64]) -> f64 {
    match e {
        PlanExpr::Number(v) => *v,
        PlanExpr::Sum(i) => sums[*i],
        PlanExpr::Arith { op, left, right } => {
            let (a, b) = (brute_expr(left, sums), brute_expr(right, sums));
            match op {
                crate::query::ArithOp::Add => a + b,
                crate::query::ArithOp::Sub => a - b,
                crate::query::ArithOp::Mul => a * b,
                crate::query::ArithOp::Div => a / b,
            }
        }
        PlanExpr::Sqrt(x) => brute_expr(x, sums).sqrt(),
    }
}

fn exact(plan: &QueryPlan, data: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let sums: Vec<f64> = plan
        .sums
        .iter()
        .map(|s| {
            let v = brute(&s.series, data);
            v[s.range.start() as usize - 1..s.range.end() as usize].iter().sum()
        })
        .collect();
    let total = brute_expr(&plan.expr, &sums);
    (sums, total)
}

const QUERIES: &[&str] = &[
    "Sum(T1, 1, n)",
    "Sum(T1, 5, 40)",
    "Sum(Times(T1, T2), 1, n)",
    "Sum(Times(Minus(T1, SeriesGen(1.5, n)), T2), 3, n - 3)",
    "Sum(Times(Times(T1, T2), Plus(T1, SeriesGen(-2, n))), 1, n)",
    "Sum(Lag(T2, 3, n - 3), 1, n - 3)",
    "Sum(Times(Lag(T1, 0, n - 2), Lag(T2, 2, n - 2)), 1, n - 2)",
    "mean(T1)",
    "variance(T2)",
    "covariance(T1, T2)",
    "correlation(T1, T2)",
    "cross_correlation(T1, T3, 3)",
    "cross_correlation(T1, T3, 0)",
];

fn setup(seed: u64, kind: FunctionKind) -> (Vec<Vec<f64>>, Vec<PlatoTree<f64>>, Catalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = vec![noisy(&mut rng, 64, 0.0), noisy(&mut rng, 64, 1.0), noisy(&mut rng, 70, 2.0)];
    let trees = data.iter().enumerate().map(|(i, d)| full_tree(&format!("T{}", i + 1), d, kind)).collect();
    let catalog: Catalog = data.iter().enumerate().map(|(i, d)| (format!("T{}", i + 1), d.len() as u64)).collect();
    (data, trees, catalog)
}

/// Reorders per-series items (indexed by `T1, T2, ...`) into plan order.
fn pick<T: Clone>(plan: &QueryPlan, items: &[T]) -> Vec<T> {
    plan.series.iter().map(|id| items[id.trim_start_matches('T').parse::<usize>().unwrap() - 1].clone()).collect()
}

#[test]
fn estimates_contain_exact_answers_on_random_cuts() {
    for (seed, kind) in [(1, FunctionKind::Constant), (2, FunctionKind::Linear), (3, FunctionKind::Linear)] {
        let (data, trees, catalog) = setup(seed, kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for q in QUERIES {
            let plan = validate(&parse(q).unwrap(), &catalog).unwrap();
            let (sums, total) = exact(&plan, &pick(&plan, &data));
            for p in [0.0, 0.3, 0.6, 0.9, 1.0] {
                let src = SegmentLists { series: pick(&plan, &trees).iter().map(|t| random_cut(t, &mut rng, p)).collect() };
                let est = estimate_query::<f64, _>(&plan, &src).unwrap();
                for (s, want) in est.sums.iter().zip(&sums) {
                    let slack = 1e-9 * want.abs().max(1.0);
                    assert!((s.answer - want).abs() <= s.error + slack, "{q} p={p}: {s:?} vs {want}");
                }
                if !est.estimate.is_unbounded() {
                    let slack = 1e-9 * total.abs().max(1.0);
                    assert!(
                        est.estimate.lower() - slack <= total && total <= est.estimate.upper() + slack,
                        "{q} p={p}: {:?} vs {total}",
                        est.estimate
                    );
                }
            }
        }
    }
}

#[test]
fn full_expansion_of_exact_leaves_is_exact() {
    let (data, trees, catalog) = setup(4, FunctionKind::Linear);
    for q in ["Sum(T1, 1, n)", "covariance(T1, T2)"] {
        let plan = validate(&parse(q).unwrap(), &catalog).unwrap();
        let src = SegmentLists {
            series: pick(&plan, &trees).iter().map(|t| t.leaves().iter().map(|&l| Segment::of_node(t.node(l))).collect()).collect(),
        };
        let est = estimate_query::<f64, _>(&plan, &src).unwrap();
        let (_, total) = exact(&plan, &pick(&plan, &data));
        assert!(est.estimate.error < 1e-9, "{q}: {:?}", est.estimate);
        assert!((est.estimate.answer - total).abs() < 1e-8);
    }
}

#[test]
fn each_segment_is_charged_once() {
    let (_, trees, catalog) = setup(5, FunctionKind::Constant);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cut = random_cut(&trees[0], &mut rng, 0.7);
    let total: f64 = cut.iter().map(|s| s.measures.l1).sum();
    let src = SegmentLists { series: vec![cut.clone(), cut] };
    let plan = validate(&parse("Sum(Plus(T1, SeriesGen(3, n)), 1, n)").unwrap(), &catalog).unwrap();
    let est = estimate_query::<f64, _>(&plan, &src).unwrap();
    assert!((est.estimate.error - total).abs() < 1e-12);
}

#[test]
fn times_uses_the_cheaper_option_over_the_sum_range() {
    let (_, trees, catalog) = setup(6, FunctionKind::Linear);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let plan = validate(&parse("Sum(Times(T1, T2), 10, 50)").unwrap(), &catalog).unwrap();
    let src = SegmentLists { series: pick(&plan, &trees).iter().map(|t| random_cut(t, &mut rng, 0.5)).collect() };
    let spec = &plan.sums[0];
    let decided = evaluate_sum::<f64, _>(spec, &src, Options::Decide, None).unwrap();
    for opt in [TimesOption::First, TimesOption::Second] {
        let forced = evaluate_sum::<f64, _>(spec, &src, Options::Forced(&[opt]), None).unwrap();
        assert!(decided.error <= forced.error + 1e-12);
        assert_eq!(decided.answer, forced.answer);
    }
}

/// Evaluations restricted to one node's neighbourhood reproduce the change
/// of a full evaluation when that node is split.
#[test]
fn focused_deltas_match_full_reevaluation() {
    let (_, trees, catalog) = setup(7, FunctionKind::Linear);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    for q in QUERIES {
        let plan = validate(&parse(q).unwrap(), &catalog).unwrap();
        for _ in 0..6 {
            let ptrees = pick(&plan, &trees);
            let cuts: Vec<Vec<Segment<f64>>> = ptrees.iter().map(|t| random_cut(t, &mut rng, 0.5)).collect();
            let s = rng.random_range(0..plan.series.len());
            let tree = &ptrees[s];
            // Pick an expandable segment of series s.
            let Some(pos) = cuts[s].iter().position(|seg| {
                tree.nodes().iter().any(|n| n.range == seg.range && n.children.is_some())
            }) else {
                continue;
            };
            let node = tree.nodes().iter().find(|n| n.range == cuts[s][pos].range).unwrap();
            let (l, r) = node.children.unwrap();
            let mut after = cuts.clone();
            after[s].splice(pos..=pos, [Segment::of_node(tree.node(l)), Segment::of_node(tree.node(r))]);
            let before_src = SegmentLists { series: cuts };
            let after_src = SegmentLists { series: after };
            for spec in &plan.sums {
                if !spec.series.uses(s) {
                    continue;
                }
                let full_before = evaluate_sum::<f64, _>(spec, &before_src, Options::Decide, None).unwrap();
                let opts = full_before.options();
                let full_after = evaluate_sum::<f64, _>(spec, &after_src, Options::Forced(&opts), None).unwrap();
                let mut occ = Vec::new();
                base_occurrences(&spec.series, 0, &mut occ);
                let focus = focus_for(&occ, s, node.range, &before_src);
                let fb = evaluate_sum::<f64, _>(spec, &before_src, Options::Forced(&opts), Some(focus)).unwrap();
                let fa = evaluate_sum::<f64, _>(spec, &after_src, Options::Forced(&opts), Some(focus)).unwrap();
                checked += 1;
                let tol = 1e-9 * full_before.answer.abs().max(full_before.error).max(1.0);
                assert!(
                    ((full_after.answer - full_before.answer) - (fa.answer - fb.answer)).abs() <= tol,
                    "{q}: answer delta"
                );
                assert!(((full_after.error - full_before.error) - (fa.error - fb.error)).abs() <= tol, "{q}: error delta");
                for (k, (a, b)) in full_after.times.iter().zip(&full_before.times).enumerate() {
                    for o in 0..2 {
                        let d_full = a.totals[o] - b.totals[o];
                        let d_focus = fa.times[k].totals[o] - fb.times[k].totals[o];
                        assert!((d_full - d_focus).abs() <= tol, "{q}: totals delta");
                    }
                }
            }
        }
    }
    assert!(checked > 30, "{checked}");
}

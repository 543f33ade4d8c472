//! End-to-end acceptance checks, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines always reach stdout.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use plato_core::bench::{self, SweepConfig};
use plato_core::query::{expand_macro, parse, validate, Catalog, Expr, MacroKind, StatisticMacro};
use plato_core::synth::{correlated_pair, SmoothConfig};
use plato_core::{
    answer, evaluate_exact, measure, BuildConfig, Budget, ErrorMeasures, EstimateError, FunctionDescriptor,
    FunctionKind, IndexRange, Navigator, NodeId, OracleError, PlatoTree, ProcessError, QueryPlan, Status, StopRule,
    TimeSeries, TreeError, TreeNode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("soundness", soundness),
        ("incremental-update equivalence", incremental),
        ("tightness", tightness),
        ("greedy optimality", greedy_optimality),
        ("non-optimality witness", witness),
        ("compression ratio", compression_ratio),
        ("speedup", speedup),
        ("budget monotonicity", monotonicity),
        ("format stability", format_stability),
        ("parser", parser),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

fn r(a: u64, b: u64) -> IndexRange {
    IndexRange::new(a, b).unwrap()
}

fn catalog_of(series: &[TimeSeries<f64>]) -> Catalog {
    series.iter().map(|t| (t.id().to_string(), t.len())).collect()
}

fn plan_for(q: &str, series: &[TimeSeries<f64>]) -> QueryPlan {
    validate(&parse(q).unwrap(), &catalog_of(series)).unwrap()
}

// 1 and 2: random workloads.

struct Trials {
    trials: usize,
    estimates_checked: u64,
    soundness_violations: Vec<String>,
    incremental_checked: u64,
    incremental_violations: Vec<String>,
    /// Frontiers where the two errors differ by more than 1e-9 of their own
    /// size but not of the largest error seen: rounding residue around zero.
    near_zero: u64,
    worst_gap: f64,
    /// Trials whose exact answer is undefined (division by zero or a
    /// negative radicand); the estimator must then be unbounded or fail.
    undefined: usize,
}

fn random_config<R: Rng>(rng: &mut R, series: &TimeSeries<f64>) -> BuildConfig<f64> {
    let kind = if rng.random_bool(0.5) { FunctionKind::Constant } else { FunctionKind::Linear };
    let default_tau = BuildConfig::defaults_for(kind, series).unwrap().tau;
    let tau = match rng.random_range(0..3) {
        0 => 0.0,
        1 => default_tau,
        _ => default_tau * rng.random_range(0.1..10.0),
    };
    let kappa = rng.random_range(1..=64);
    let rule = [StopRule::TauOnly, StopRule::KappaOnly, StopRule::TauOrKappa][rng.random_range(0..3)];
    BuildConfig::new(kind, tau, kappa, rule).unwrap()
}

fn run_trials() -> &'static Trials {
    static TRIALS: std::sync::OnceLock<Trials> = std::sync::OnceLock::new();
    TRIALS.get_or_init(|| {
        let mut out = Trials {
            trials: 1000,
            estimates_checked: 0,
            soundness_violations: Vec::new(),
            incremental_checked: 0,
            incremental_violations: Vec::new(),
            near_zero: 0,
            worst_gap: 0.0,
            undefined: 0,
        };
        for trial in 0..out.trials {
            one_trial(trial as u64, &mut out);
        }
        out
    })
}

fn sound(exact: f64, answer: f64, error: f64) -> bool {
    (exact - answer).abs() <= error + 1e-9 * answer.abs().max(1.0)
}

fn one_trial(trial: u64, out: &mut Trials) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ trial);
    let n = rng.random_range(8..=512u64);
    let extra = rng.random_range(1..=16u64);
    let series: Vec<TimeSeries<f64>> = [("T1", n), ("T2", n), ("T3", n + extra)]
        .into_iter()
        .map(|(id, len)| {
            let mut cfg = SmoothConfig::standard(len as usize, rng.random());
            cfg.noise = rng.random_range(0.0..0.1);
            cfg.offset = rng.random_range(-2.0..2.0);
            cfg.series(id)
        })
        .collect();
    let trees: Vec<PlatoTree<f64>> = series
        .iter()
        .map(|s| {
            let cfg = random_config(&mut rng, s);
            PlatoTree::build(s, cfg).unwrap()
        })
        .collect();
    let catalog = catalog_of(&series);
    let gen = common::QueryGen::new(&mut rng, n, extra);
    let plan = (0..200)
        .find_map(|_| validate(&gen.query(&mut rng, 5), &catalog).ok())
        .expect("generator yields a valid query");
    let tag = |what: &str| format!("trial {trial} `{}`: {what}", plan.source);

    let exact = evaluate_exact(&plan, series.as_slice());
    let budget = match rng.random_range(0..20) {
        0..=8 => None, // relative to the exact answer, chosen below
        9..=12 => Some(Budget::Error(0.0)),
        13..=15 => Some(Budget::Error(f64::INFINITY)),
        _ => Some(Budget::Time(Duration::from_micros(rng.random_range(200..3000)))),
    };
    let budget = budget.unwrap_or_else(|| {
        let scale = exact.as_ref().map(|v| v.abs()).unwrap_or(1.0).max(1e-6);
        Budget::Error(rng.random_range(0.001..0.5) * scale)
    });

    let undefined = |e: &ProcessError| matches!(e, ProcessError::Estimate(EstimateError::NegativeSqrt));
    match &exact {
        Err(OracleError::DivisionByZero) | Err(OracleError::NegativeSqrt) => out.undefined += 1,
        Err(e) => {
            out.soundness_violations.push(tag(&format!("oracle failed: {e}")));
            return;
        }
        Ok(_) => {}
    }

    // Walk the frontier exactly as the budgeted run would, checking every
    // intermediate estimate.
    let mut nav = match Navigator::new(&plan, trees.as_slice()) {
        Ok(nav) => nav,
        Err(e) if undefined(&e) && exact.is_err() => return,
        Err(e) => {
            out.soundness_violations.push(tag(&format!("navigator failed: {e}")));
            return;
        }
    };
    // Largest finite error seen so far; the root's unless it is unbounded.
    let mut root_error: f64 = 0.0;
    loop {
        let inc = nav.estimate();
        if inc.error.is_finite() {
            root_error = root_error.max(inc.error);
        }
        match nav.recompute() {
            Ok(full) => {
                let full = full.estimate;
                out.incremental_checked += 1;
                let same = if inc.is_unbounded() || full.is_unbounded() {
                    inc.is_unbounded() == full.is_unbounded()
                } else {
                    let gap = (inc.error - full.error).abs();
                    let own = inc.error.abs().max(full.error.abs());
                    let scale = own.max(root_error);
                    if gap > 1e-9 * own && gap <= 1e-9 * scale {
                        out.near_zero += 1;
                    }
                    if scale > 0.0 {
                        out.worst_gap = out.worst_gap.max(gap / scale);
                    }
                    gap <= 1e-9 * scale
                };
                if !same {
                    out.incremental_violations.push(tag(&format!(
                        "after {} expansions: incremental {:e} vs recomputed {:e}",
                        nav.expansions(),
                        inc.error,
                        full.error
                    )));
                }
            }
            Err(e) => out.incremental_violations.push(tag(&format!("recompute failed: {e}"))),
        }
        if let Ok(v) = exact {
            out.estimates_checked += 1;
            if !inc.is_unbounded() && !sound(v, inc.answer, inc.error) {
                out.soundness_violations.push(tag(&format!(
                    "after {} expansions: exact {v} outside {} ± {}",
                    nav.expansions(),
                    inc.answer,
                    inc.error
                )));
            }
        }
        if let Budget::Error(max) = budget {
            if !inc.is_unbounded() && inc.error <= max {
                break;
            }
        }
        match nav.step() {
            Ok(Some(_)) => {}
            Ok(None) => break,
            Err(e) if undefined(&e) && exact.is_err() => return,
            Err(e) => {
                out.soundness_violations.push(tag(&format!("step failed: {e}")));
                return;
            }
        }
    }

    // The returned result.
    match answer(&plan, trees.as_slice(), budget) {
        Ok(res) => {
            if let Ok(v) = exact {
                out.estimates_checked += 1;
                if res.error.is_finite() && !sound(v, res.answer, res.error) {
                    out.soundness_violations
                        .push(tag(&format!("result: exact {v} outside {} ± {}", res.answer, res.error)));
                }
            }
            if let Budget::Error(max) = budget {
                if res.status == Status::BudgetMet && res.error > max {
                    out.soundness_violations.push(tag(&format!("BudgetMet with {} > {max}", res.error)));
                }
                if res.nodes_accessed != nav.nodes_accessed() {
                    out.soundness_violations.push(tag(&format!(
                        "result read {} nodes, walk read {}",
                        res.nodes_accessed,
                        nav.nodes_accessed()
                    )));
                }
            }
        }
        Err(e) if undefined(&e) && exact.is_err() => {}
        Err(e) => out.soundness_violations.push(tag(&format!("answer failed: {e}"))),
    }
}

fn report(violations: &[String], checked: u64, what: &str) -> Outcome {
    if violations.is_empty() {
        Ok(format!("{checked} {what}, 0 violations"))
    } else {
        Err(format!("{} violations of {checked} {what}; first: {}", violations.len(), violations[0]))
    }
}

fn soundness() -> Outcome {
    let t = run_trials();
    report(&t.soundness_violations, t.estimates_checked, "estimates")
        .map(|s| format!("{} trials, {s} ({} with undefined exact answers)", t.trials, t.undefined))
}

fn incremental() -> Outcome {
    let t = run_trials();
    report(&t.incremental_violations, t.incremental_checked, "frontiers compared").map(|s| {
        format!(
            "{s}; worst gap {:.1e} of the largest error; {} near-zero errors differ only by rounding residue",
            t.worst_gap, t.near_zero
        )
    })
}

// 3: the bound equals the true error when all residuals share a sign.

/// Random partition tree over `data` whose functions lie strictly below the
/// data they summarize.
fn below_data_tree<R: Rng>(rng: &mut R, id: &str, data: &[f64], linear: bool) -> PlatoTree<f64> {
    fn grow<R: Rng>(rng: &mut R, data: &[f64], range: IndexRange, linear: bool, nodes: &mut Vec<TreeNode<f64>>) -> usize {
        let seg = &data[(range.start() - 1) as usize..range.end() as usize];
        let gap = rng.random_range(0.5..2.0);
        let f = if linear {
            let a = rng.random_range(-0.05..0.05);
            let lowest = seg.iter().enumerate().map(|(j, x)| x - a * (j + 1) as f64).fold(f64::INFINITY, f64::min);
            FunctionDescriptor::Linear { a, b: lowest - gap }
        } else {
            FunctionDescriptor::Constant { b: seg.iter().copied().fold(f64::INFINITY, f64::min) - gap }
        };
        let id = nodes.len();
        nodes.push(TreeNode::leaf(range, f, measure(seg, &f).unwrap()));
        if range.len() > 1 && rng.random_bool(0.8) {
            let mid = rng.random_range(range.start()..range.end());
            let left = grow(rng, data, r(range.start(), mid), linear, nodes);
            let right = grow(rng, data, r(mid + 1, range.end()), linear, nodes);
            nodes[id].children = Some((NodeId(left), NodeId(right)));
        }
        id
    }
    let mut nodes = Vec::new();
    grow(rng, data, IndexRange::full(data.len() as u64), linear, &mut nodes);
    let cfg = BuildConfig::new(if linear { FunctionKind::Linear } else { FunctionKind::Constant }, 0.0, 1, StopRule::TauOrKappa)
        .unwrap();
    PlatoTree::from_nodes(id, data.len() as u64, cfg, nodes).unwrap()
}

fn tightness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for instance in 0..100 {
        let n = rng.random_range(2..=300);
        let mut cfg = SmoothConfig::standard(n, rng.random());
        cfg.noise = 0.1;
        cfg.offset = rng.random_range(-5.0..5.0);
        let series = cfg.series::<f64>("T");
        let tree = below_data_tree(&mut rng, "T", series.values(), instance % 2 == 1);
        let plan = plan_for("Sum(T, 1, n)", std::slice::from_ref(&series));
        let exact = evaluate_exact(&plan, std::slice::from_ref(&series)).unwrap();
        let mut nav = Navigator::new(&plan, std::slice::from_ref(&tree)).unwrap();
        loop {
            let est = nav.estimate();
            let truth = (exact - est.answer).abs();
            let rel = (est.error - truth).abs() / truth.max(est.error);
            worst = worst.max(rel);
            if rel > 1e-12 {
                return Err(format!(
                    "instance {instance} after {} expansions: bound {:e}, true error {:e}",
                    nav.expansions(),
                    est.error,
                    truth
                ));
            }
            checked += 1;
            if nav.step().unwrap().is_none() {
                break;
            }
        }
    }
    Ok(format!("100 instances, {checked} frontiers, worst relative gap {worst:.1e}"))
}

// 4: greedy is optimal on fine-error-reduction trees.

/// A tree with integer reductions that never grow with depth, as
/// `(tree, internal nodes as (node, parent), reduction per node)`.
struct FineTree {
    tree: PlatoTree<f64>,
    /// `(node, parent, reduction)` for every internal node.
    internal: Vec<(usize, Option<usize>, f64)>,
}

fn fine_tree<R: Rng>(rng: &mut R, id: &str, internal: usize) -> FineTree {
    // Pre-order nodes as (range placeholder, l1, children).
    struct Raw {
        l1: f64,
        children: Option<(usize, usize)>,
        width: u64,
    }
    fn grow<R: Rng>(
        rng: &mut R,
        internal: usize,
        parent: Option<usize>,
        cap: u32,
        raw: &mut Vec<Raw>,
        out: &mut Vec<(usize, Option<usize>, f64)>,
    ) -> usize {
        let id = raw.len();
        raw.push(Raw { l1: 0.0, children: None, width: 0 });
        if internal == 0 {
            raw[id].l1 = rng.random_range(0..=3) as f64;
            raw[id].width = rng.random_range(1..=3);
            return id;
        }
        let reduction = rng.random_range(0..=cap);
        let left_share = rng.random_range(0..internal);
        let l = grow(rng, left_share, Some(id), reduction, raw, out);
        let r = grow(rng, internal - 1 - left_share, Some(id), reduction, raw, out);
        raw[id].children = Some((l, r));
        raw[id].l1 = raw[l].l1 + raw[r].l1 + reduction as f64;
        raw[id].width = raw[l].width + raw[r].width;
        out.push((id, parent, reduction as f64));
        id
    }
    let mut raw = Vec::new();
    let mut internal_nodes = Vec::new();
    grow(rng, internal, None, 20, &mut raw, &mut internal_nodes);
    // Ranges from widths, in pre-order.
    let mut ranges = vec![r(1, 1); raw.len()];
    let mut stack = vec![(0usize, 1u64)];
    while let Some((i, start)) = stack.pop() {
        ranges[i] = r(start, start + raw[i].width - 1);
        if let Some((a, b)) = raw[i].children {
            stack.push((a, start));
            stack.push((b, start + raw[a].width));
        }
    }
    let nodes = raw
        .iter()
        .zip(&ranges)
        .map(|(x, &range)| TreeNode {
            range,
            f: FunctionDescriptor::Constant { b: 0.0 },
            measures: ErrorMeasures::new(x.l1, 1.0, 0.0),
            children: x.children.map(|(a, b)| (NodeId(a), NodeId(b))),
        })
        .collect();
    let cfg = BuildConfig::new(FunctionKind::Constant, 0.0, 1, StopRule::TauOrKappa).unwrap();
    FineTree { tree: PlatoTree::from_nodes(id, raw[0].width, cfg, nodes).unwrap(), internal: internal_nodes }
}

/// `(error reduction, nodes expanded)` for every top-down expansion set.
fn expansion_sets(t: &FineTree) -> Vec<(f64, u64)> {
    let k = t.internal.len();
    let index: HashMap<usize, usize> = t.internal.iter().enumerate().map(|(i, &(node, _, _))| (node, i)).collect();
    (0u32..1 << k)
        .filter(|mask| {
            t.internal.iter().enumerate().all(|(i, &(_, parent, _))| {
                mask & (1 << i) == 0 || parent.is_none_or(|p| mask & (1 << index[&p]) != 0)
            })
        })
        .map(|mask| {
            let red = t.internal.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, x)| x.2).sum();
            (red, mask.count_ones() as u64)
        })
        .collect()
}

fn greedy_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for instance in 0..200 {
        let two = instance % 2 == 1;
        let trees: Vec<FineTree> = (0..if two { 2 } else { 1 })
            .map(|i| {
                let internal = rng.random_range(0..=5);
                fine_tree(&mut rng, &format!("T{}", i + 1), internal)
            })
            .collect();
        if trees.iter().any(|t| t.tree.node_count() > 12) {
            return Err(format!("instance {instance}: generator produced more than 12 nodes"));
        }
        let catalog: Catalog = trees.iter().map(|t| (t.tree.series_id().to_string(), t.tree.len())).collect();
        let query =
            trees.iter().map(|t| format!("Sum({}, 1, {})", t.tree.series_id(), t.tree.len())).collect::<Vec<_>>().join(" + ");
        let plan = validate(&parse(&query).unwrap(), &catalog).unwrap();
        let root_error: f64 = trees.iter().map(|t| t.tree.node(NodeId(0)).measures.l1).sum();

        // Every combination of per-tree expansion sets.
        let mut combos: Vec<(f64, u64)> = vec![(0.0, 0)];
        for t in &trees {
            let sets = expansion_sets(t);
            combos = combos.iter().flat_map(|&(ra, ea)| sets.iter().map(move |&(rb, eb)| (ra + rb, ea + eb))).collect();
        }
        let lowest = combos.iter().map(|c| root_error - c.0).fold(f64::INFINITY, f64::min);
        let budget = rng.random_range(lowest as u64..=root_error as u64) as f64;
        let fewest = combos.iter().filter(|c| root_error - c.0 <= budget).map(|c| c.1).min().unwrap();
        let optimal_nodes = trees.len() as u64 + 2 * fewest;

        let refs: Vec<&PlatoTree<f64>> = trees.iter().map(|t| &t.tree).collect();
        let res = answer(&plan, refs.as_slice(), Budget::Error(budget)).unwrap();
        if res.status != Status::BudgetMet || res.nodes_accessed != optimal_nodes {
            return Err(format!(
                "instance {instance} `{query}` budget {budget}: greedy read {} nodes ({}), optimum {optimal_nodes}",
                res.nodes_accessed, res.status
            ));
        }
    }
    Ok("200 trees (100 single, 100 paired), greedy matched the exhaustive minimum in all".into())
}

// 5: a hidden high-reduction node defeats greedy.

fn witness() -> Outcome {
    let h: u32 = 5;
    let unit = 1.0 / f64::from(1u32 << h);
    // Full tree with 2^(h-1) leaves of one point each; the shaded node is the
    // rightmost internal node on the deepest internal level.
    let leaves = 1u64 << (h - 1);
    let mut nodes: Vec<TreeNode<f64>> = Vec::new();
    let mut shaded = None;
    fn grow(range: IndexRange, depth: u32, h: u32, nodes: &mut Vec<TreeNode<f64>>, shaded: &mut Option<usize>, n: u64, unit: f64) -> usize {
        let id = nodes.len();
        nodes.push(TreeNode::leaf(range, FunctionDescriptor::Constant { b: 0.0 }, ErrorMeasures::new(0.0, 1.0, 0.0)));
        if depth + 1 < h {
            let mid = range.start() + range.len() / 2 - 1;
            let l = grow(r(range.start(), mid), depth + 1, h, nodes, shaded, n, unit);
            let rt = grow(r(mid + 1, range.end()), depth + 1, h, nodes, shaded, n, unit);
            let is_shaded = depth + 2 == h && range.end() == n;
            if is_shaded {
                *shaded = Some(id);
            }
            let reduction = if is_shaded { f64::from(h + 1) } else { unit };
            let l1 = nodes[l].measures.l1 + nodes[rt].measures.l1 + reduction;
            nodes[id].measures = ErrorMeasures::new(l1, 1.0, 0.0);
            nodes[id].children = Some((NodeId(l), NodeId(rt)));
        }
        id
    }
    grow(IndexRange::full(leaves), 0, h, &mut nodes, &mut shaded, leaves, unit);
    let shaded = shaded.expect("shaded node placed");
    let root_l1 = nodes[0].measures.l1;
    let cfg = BuildConfig::new(FunctionKind::Constant, 0.0, 1, StopRule::TauOrKappa).unwrap();
    let t1 = PlatoTree::from_nodes("T1", leaves, cfg, nodes).unwrap();
    let t2 = PlatoTree::from_nodes(
        "T2",
        leaves,
        cfg,
        vec![TreeNode::leaf(
            IndexRange::full(leaves),
            FunctionDescriptor::Constant { b: 0.0 },
            ErrorMeasures::new(f64::from(2 * h) - root_l1, 1.0, 0.0),
        )],
    )
    .unwrap();
    let trees = [t1, t2];
    let catalog: Catalog = [("T1".to_string(), leaves), ("T2".to_string(), leaves)].into_iter().collect();
    let plan = validate(&parse("Sum(T1, 1, n) + Sum(T2, 1, n)").unwrap(), &catalog).unwrap();
    let budget = f64::from(h - 1);

    let root = answer(&plan, &trees, Budget::Error(f64::INFINITY)).unwrap();
    if root.error != f64::from(2 * h) {
        return Err(format!("root error {} instead of {}", root.error, 2 * h));
    }
    let greedy = answer(&plan, &trees, Budget::Error(budget)).unwrap();

    // The direct path: the shaded node's ancestors, then the node itself.
    let mut path = vec![shaded];
    let mut cur = shaded;
    while cur != 0 {
        cur = (0..trees[0].node_count()).find(|&p| trees[0].node(NodeId(p)).children.is_some_and(|(a, b)| a.0 == cur || b.0 == cur)).unwrap();
        path.push(cur);
    }
    path.reverse();
    let mut nav = Navigator::new(&plan, &trees).unwrap();
    for &p in &path {
        nav.expand(0, NodeId(p)).unwrap();
    }
    let direct = nav.nodes_accessed();
    let direct_error = nav.estimate().error;
    if direct_error > budget {
        return Err(format!("direct path ends at {direct_error} > {budget}"));
    }
    if greedy.status == Status::BudgetMet && greedy.nodes_accessed > direct {
        Ok(format!(
            "height {h}: greedy read {} nodes, the direct path {direct} (budget {budget}, errors {} and {direct_error})",
            greedy.nodes_accessed, greedy.error
        ))
    } else {
        Err(format!("greedy read {} nodes ({}), direct path {direct}", greedy.nodes_accessed, greedy.status))
    }
}

// 6: tree size against raw CSV size.

fn compression_ratio() -> Outcome {
    let series = SmoothConfig::standard(100_000, 20240601).series::<f64>("S");
    let mut csv = Vec::new();
    series.write_csv(&mut csv).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, limit) in [(FunctionKind::Constant, 0.05), (FunctionKind::Linear, 0.10)] {
        let tree = PlatoTree::build(&series, BuildConfig::defaults_for(kind, &series).unwrap()).unwrap();
        let bytes = tree.to_bytes().len();
        let ratio = bytes as f64 / csv.len() as f64;
        ok &= ratio <= limit;
        parts.push(format!(
            "{kind:?}: {} nodes, {bytes} B / {} B = {:.2}% (limit {:.0}%)",
            tree.node_count(),
            csv.len(),
            ratio * 100.0,
            limit * 100.0
        ));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 7 and 8: the correlated 100k pair.

struct Pair {
    series: [TimeSeries<f64>; 2],
    trees: [PlatoTree<f64>; 2],
    plan: QueryPlan,
}

fn pair() -> &'static Pair {
    static PAIR: std::sync::OnceLock<Pair> = std::sync::OnceLock::new();
    PAIR.get_or_init(|| {
        let (a, b) = correlated_pair::<f64>(100_000, 7);
        let cfg = BuildConfig::new(FunctionKind::Linear, 0.0, 32, StopRule::TauOrKappa).unwrap();
        let trees = [PlatoTree::build(&a, cfg).unwrap(), PlatoTree::build(&b, cfg).unwrap()];
        let series = [a, b];
        let plan = plan_for("correlation(T1, T2)", &series);
        Pair { series, trees, plan }
    })
}

fn speedup() -> Outcome {
    let p = pair();
    let config = SweepConfig { fractions: vec![0.05], repeats: 9 };
    let sweep = bench::sweep(&p.plan, &p.series, &p.trees, &config).map_err(|e| e.to_string())?;
    let row = &sweep.rows[0];
    let res = &row.result;
    let ops = bench::data_touching_ops(res.nodes_accessed, FunctionKind::Linear);
    let ratio = sweep.raw_points as f64 / ops as f64;
    let detail = format!(
        "budget {:.4} ({}), eps {:.4}, {} nodes = {ops} coefficients vs {} points ({ratio:.0}x fewer), approx {:.3} ms vs exact {:.3} ms",
        row.budget,
        res.status,
        res.error,
        res.nodes_accessed,
        sweep.raw_points,
        row.approx_ms(),
        sweep.exact_ms()
    );
    let sound = (sweep.exact - res.answer).abs() <= res.error;
    if res.status == Status::BudgetMet && sound && ratio >= 5.0 && row.approx < sweep.exact_time {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn monotonicity() -> Outcome {
    let p = pair();
    let sweep = bench::sweep(&p.plan, &p.series, &p.trees, &SweepConfig { repeats: 3, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let rows: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("{:.0}%: {} nodes, eps {:.4} <= {:.4} {}", r.fraction * 100.0, r.result.nodes_accessed, r.result.error, r.budget, r.result.status))
        .collect();
    let detail = rows.join("; ");
    if bench::is_monotone(&sweep) && sweep.rows.len() == 5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 9: golden files.

fn format_stability() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let series = TimeSeries::<f64>::read_csv("golden", std::fs::File::open(dir.join("golden.csv")).unwrap()).unwrap();
    let mut checked = Vec::new();
    for name in ["golden_paa.plato", "golden_plr.plato"] {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        let tree = PlatoTree::<f64>::from_bytes(&bytes).map_err(|e| format!("{name}: {e}"))?;
        if tree.to_bytes() != bytes {
            return Err(format!("{name} does not re-serialize bit-exactly"));
        }
        let rebuilt = PlatoTree::build(&series, *tree.config()).unwrap();
        if rebuilt.to_bytes() != bytes {
            return Err(format!("{name} differs from a fresh build of golden.csv"));
        }
        let mut doctored = bytes.clone();
        doctored[4..6].copy_from_slice(&(plato_core::tree::FORMAT_VERSION + 1).to_le_bytes());
        match PlatoTree::<f64>::from_bytes(&doctored) {
            Err(TreeError::VersionMismatch { .. }) => {}
            other => return Err(format!("{name} with a bumped version: {other:?}")),
        }
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        if !matches!(PlatoTree::<f64>::from_bytes(&bad_magic), Err(TreeError::VersionMismatch { .. })) {
            return Err(format!("{name} with a bad magic number was accepted"));
        }
        checked.push(format!("{name} ({} nodes, {} B)", tree.node_count(), bytes.len()));
    }
    Ok(format!("{} round-trip and rebuild bit-exactly; doctored headers rejected", checked.join(", ")))
}

// 10: printing and macro expansion.

fn parser() -> Outcome {
    for (i, e) in common::samples(&common::arbitrary_expr(6), 500, 10).into_iter().enumerate() {
        let text = e.to_string();
        if parse(&text).as_ref() != Ok(&e) {
            return Err(format!("sample {i} does not round-trip: {text}"));
        }
    }
    let (n, l) = (10u64, 3u64);
    let catalog: Catalog = [("T1".to_string(), n), ("T2".to_string(), n), ("T3".to_string(), n + l)].into_iter().collect();
    let var = |t: &str, s: &str| format!("(Sum(Times({t},{t}),1,{n}) - {s}*{s}/{n})");
    let s1 = format!("Sum(T1,1,{n})");
    let s2 = format!("Sum(T2,1,{n})");
    let lagged = format!("Lag(T3,{l},{n})");
    let s3 = format!("Sum(T3,{},{})", 1 + l, n + l);
    let table: [(MacroKind, &[&str], Option<u64>, String); 5] = [
        (MacroKind::Mean, &["T1"], None, format!("Sum(T1,1,{n}) / {n}")),
        (MacroKind::Variance, &["T1"], None, format!("Sum(Times(T1,T1),1,{n}) - {s1}*{s1}/{n}")),
        (
            MacroKind::Covariance,
            &["T1", "T2"],
            None,
            format!("Sum(Times(T1,T2),1,{n})/({n}-1) - {s1}*{s2}/({n}*({n}-1))"),
        ),
        (
            MacroKind::Correlation,
            &["T1", "T2"],
            None,
            format!("(Sum(Times(T1,T2),1,{n}) - 1/{n}*{s1}*{s2}) / Sqrt({}*{})", var("T1", &s1), var("T2", &s2)),
        ),
        (
            MacroKind::CrossCorrelation,
            &["T1", "T3"],
            Some(l),
            format!(
                "(Sum(Times(T1,{lagged}),1,{n}) - 1/{n}*{s1}*{s3}) / Sqrt({}*{})",
                var("T1", &s1),
                var(&lagged, &s3)
            ),
        ),
    ];
    for (kind, series, lag, text) in table {
        let m = StatisticMacro { kind, series: series.iter().map(|s| s.to_string()).collect(), lag };
        let got = expand_macro(&m, &catalog).map_err(|e| e.to_string())?;
        let want: Expr = parse(&text).unwrap();
        if got != want {
            return Err(format!("{m} expands to `{got}`, expected `{want}`"));
        }
    }
    Ok("500 random trees round-trip; 5 macro expansions match their definitions".into())
}

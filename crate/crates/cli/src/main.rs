//! `plato`: build trees over CSV series, answer queries within error or time
//! budgets, and sweep budgets against the exact evaluator.

mod output;
mod workspace;

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use plato_core::bench::{self, SweepConfig, DEFAULT_FRACTIONS};
use plato_core::oracle::evaluate_exact;
use plato_core::query::{parse, validate, QueryPlan};
use plato_core::synth::SmoothConfig;
use plato_core::tree::DEFAULT_KAPPA;
use plato_core::{
    answer, answer_progressive, BuildConfig, Budget, EstimateError, PlatoTree, ProcessError, Status, TimeSeries,
};

use output::{Field, Line};
use workspace::{Compression, ConfigEntry, Entry, Stop, Workspace};

#[derive(Parser)]
#[command(name = "plato", version, about = "Approximate time series queries with guaranteed error bounds")]
struct Cli {
    /// Workspace holding `series/`, `trees/` and `catalog.json`.
    #[arg(long, global = true, env = "PLATO_WORKSPACE", default_value = ".")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest CSV series and build their trees.
    Build(BuildArgs),
    /// Answer a query from the trees, or exactly with `--exact`.
    Query(QueryArgs),
    /// Sweep relative error budgets and emit CSV timings.
    Bench(BenchArgs),
    /// Write a synthetic smooth series as CSV.
    Gen(GenArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// `index,value` or `timestamp,value` CSV; repeat to build several
    /// series in parallel.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "paa")]
    compression: Compression,
    /// Defaults to 1% of the root segment's `L`.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: u64,
    #[arg(long, value_enum, default_value = "either")]
    stop_rule: Stop,
    /// Tree file; defaults to `trees/<id>.plato`. Single input only.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Series id; defaults to the input's file stem. Single input only.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("budget").args(["error_budget", "time_budget_ms"]).multiple(false)))]
struct QueryArgs {
    #[arg(long)]
    query: String,
    #[arg(long)]
    error_budget: Option<f64>,
    #[arg(long)]
    time_budget_ms: Option<f64>,
    /// Print every refinement step.
    #[arg(long)]
    progressive: bool,
    /// Evaluate over the raw series instead.
    #[arg(long, conflicts_with_all = ["progressive", "verify"])]
    exact: bool,
    /// Also evaluate exactly and check every printed bound.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    query: String,
    /// Error budgets as fractions of the exact answer's magnitude.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
    budgets: Vec<f64>,
    /// Timings are the minimum over this many runs.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Radians added to every component's phase.
    #[arg(long, default_value_t = 0.0)]
    phase_shift: f64,
    /// Defaults to `--seed`.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Noise standard deviation relative to the signal's.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long)]
    out: PathBuf,
}

/// An error and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 2;
const DATA: u8 = 3;
const INVARIANT: u8 = 4;

trait Classify<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: u8, error: anyhow::Error) -> Result<T, Failure> {
    Err(Failure { code, error })
}

fn process_failure(e: ProcessError) -> Failure {
    let code = match &e {
        ProcessError::InvalidBudget(_) => USAGE,
        ProcessError::UnknownSeries(_)
        | ProcessError::LengthMismatch { .. }
        | ProcessError::Estimate(EstimateError::NegativeSqrt) => DATA,
        _ => INVARIANT,
    };
    Failure { code, error: e.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Build(args) => build(&cli.workspace, args),
        Command::Query(args) => query(&cli.workspace, args),
        Command::Bench(args) => bench_cmd(&cli.workspace, args),
        Command::Gen(args) => gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn write_series(series: &TimeSeries<f64>, path: &Path) -> Result<(), Failure> {
    let file = fs::File::create(path).with_context(|| format!("writing {}", path.display())).or_exit(DATA)?;
    let mut out = BufWriter::new(file);
    series.write_csv(&mut out).or_exit(DATA)?;
    out.flush().with_context(|| format!("writing {}", path.display())).or_exit(DATA)
}

// build

struct Built {
    id: String,
    series: TimeSeries<f64>,
    tree: PlatoTree<f64>,
    raw_bytes: u64,
}

fn build_one(input: &Path, id: String, args: &BuildArgs) -> Result<Built, Failure> {
    let raw_bytes = fs::metadata(input).with_context(|| format!("reading {}", input.display())).or_exit(DATA)?.len();
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display())).or_exit(DATA)?;
    let series = TimeSeries::<f64>::read_csv(id.clone(), file)
        .with_context(|| format!("reading {}", input.display()))
        .or_exit(DATA)?;
    let kind = args.compression.into();
    let config = match args.tau {
        Some(tau) => BuildConfig::new(kind, tau, args.kappa, args.stop_rule.into()).or_exit(USAGE)?,
        None => {
            let d = BuildConfig::defaults_for(kind, &series).or_exit(DATA)?;
            BuildConfig::new(kind, d.tau, args.kappa, args.stop_rule.into()).or_exit(USAGE)?
        }
    };
    let tree = PlatoTree::build(&series, config).or_exit(DATA)?;
    Ok(Built { id, series, tree, raw_bytes })
}

fn build(root: &Path, args: BuildArgs) -> Result<(), Failure> {
    if args.inputs.len() > 1 && (args.out.is_some() || args.id.is_some()) {
        return fail(USAGE, anyhow!("--out and --id need exactly one --input"));
    }
    let mut ws = Workspace::open(root).or_exit(DATA)?;
    let mut ids = Vec::new();
    for input in &args.inputs {
        let id = match &args.id {
            Some(id) => id.clone(),
            None => input
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
                .ok_or_else(|| anyhow!("cannot derive a series id from {}", input.display()))
                .or_exit(USAGE)?,
        };
        if ids.contains(&id) {
            return fail(USAGE, anyhow!("series id `{id}` given twice"));
        }
        ids.push(id);
    }

    // One worker per input.
    let built: Vec<Result<Built, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = args
            .inputs
            .iter()
            .zip(&ids)
            .map(|(input, id)| {
                let args = &args;
                s.spawn(move || build_one(input, id.clone(), args))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("build worker panicked")).collect()
    });

    for b in built {
        let b = b?;
        let series_rel = PathBuf::from("series").join(format!("{}.csv", b.id));
        let tree_rel = args.out.clone().unwrap_or_else(|| PathBuf::from("trees").join(format!("{}.plato", b.id)));
        let series_path = ws.resolve(&series_rel);
        let tree_path = ws.resolve(&tree_rel);
        for dir in [series_path.parent(), tree_path.parent()].into_iter().flatten() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).or_exit(DATA)?;
        }
        write_series(&b.series, &series_path)?;
        b.tree.save(&tree_path).with_context(|| format!("writing {}", tree_path.display())).or_exit(DATA)?;
        let tree_bytes = b.tree.serialized_len() as u64;
        ws.catalog.series.insert(
            b.id.clone(),
            Entry {
                length: b.series.len(),
                series: series_rel,
                tree: tree_rel,
                config: ConfigEntry::from(b.tree.config()),
                node_count: b.tree.node_count(),
                tree_bytes,
                raw_bytes: b.raw_bytes,
            },
        );
        Line::new()
            .with("series", Field::Text(b.id))
            .with("length", Field::Int(b.series.len()))
            .with("node_count", Field::Int(b.tree.node_count() as u64))
            .with("tree_bytes", Field::Int(tree_bytes))
            .with("raw_bytes", Field::Int(b.raw_bytes))
            .with("ratio", Field::Num(tree_bytes as f64 / b.raw_bytes.max(1) as f64))
            .print(false);
    }
    ws.save().or_exit(DATA)
}

// query

fn plan_of(ws: &Workspace, text: &str) -> Result<QueryPlan, Failure> {
    let expr = parse(text).or_exit(USAGE)?;
    validate(&expr, &ws.query_catalog()).or_exit(USAGE)
}

fn load_trees(ws: &Workspace, plan: &QueryPlan) -> Result<Vec<PlatoTree<f64>>, Failure> {
    plan.series.iter().map(|id| ws.load_tree(id).or_exit(DATA)).collect()
}

fn load_series(ws: &Workspace, plan: &QueryPlan) -> Result<Vec<TimeSeries<f64>>, Failure> {
    plan.series.iter().map(|id| ws.load_series(id).or_exit(DATA)).collect()
}

fn exact_of(plan: &QueryPlan, series: &[TimeSeries<f64>]) -> Result<(f64, Duration), Failure> {
    let started = Instant::now();
    let v = evaluate_exact(plan, series).or_exit(DATA)?;
    Ok((v, started.elapsed()))
}

/// Slack for rounding in the soundness check.
fn within(exact: f64, answer: f64, error: f64) -> bool {
    (exact - answer).abs() <= error + 1e-9 * answer.abs().max(1.0)
}

fn query(root: &Path, args: QueryArgs) -> Result<(), Failure> {
    let ws = Workspace::open(root).or_exit(DATA)?;
    let plan = plan_of(&ws, &args.query)?;

    if args.exact {
        if args.error_budget.is_some() || args.time_budget_ms.is_some() {
            return fail(USAGE, anyhow!("--exact takes no budget"));
        }
        let series = load_series(&ws, &plan)?;
        let (v, took) = exact_of(&plan, &series)?;
        Line::new()
            .with("answer", Field::Num(v))
            .with("error", Field::Num(0.0))
            .with("status", Field::Text("Exact".into()))
            .with("points_read", Field::Int(bench::exact_points(&plan)))
            .with("elapsed_ms", Field::Num(ms(took)))
            .print(args.json);
        return Ok(());
    }

    let budget = match (args.error_budget, args.time_budget_ms) {
        (Some(e), None) => Budget::Error(e),
        (None, Some(t)) if t.is_finite() && t > 0.0 => Budget::Time(Duration::from_secs_f64(t / 1e3)),
        (None, Some(t)) => return fail(USAGE, anyhow!("--time-budget-ms must be positive, got {t}")),
        _ => return fail(USAGE, anyhow!("give exactly one of --error-budget and --time-budget-ms")),
    };
    let trees = load_trees(&ws, &plan)?;
    let exact = if args.verify {
        let series = load_series(&ws, &plan)?;
        Some(exact_of(&plan, &series)?.0)
    } else {
        None
    };
    let check = |answer: f64, error: f64| -> Result<(), Failure> {
        match exact {
            Some(v) if error.is_finite() && !within(v, answer, error) => {
                fail(INVARIANT, anyhow!("bound violated: exact answer {v} lies outside {answer} ± {error}"))
            }
            _ => Ok(()),
        }
    };
    let with_exact = |line: Line| match exact {
        Some(v) => line.with("exact", Field::Num(v)).with("verified", Field::Bool(true)),
        None => line,
    };

    if !args.progressive {
        let res = answer(&plan, trees.as_slice(), budget).map_err(process_failure)?;
        check(res.answer, res.error)?;
        with_exact(
            Line::new()
                .with("answer", Field::Num(res.answer))
                .with("error", Field::Num(res.error))
                .with("status", Field::Text(res.status.to_string()))
                .with("nodes_accessed", Field::Int(res.nodes_accessed))
                .with("elapsed_ms", Field::Num(ms(res.elapsed))),
        )
        .print(args.json);
        return Ok(());
    }

    match budget {
        Budget::Error(e) if e.is_nan() || e < 0.0 => return fail(USAGE, anyhow!("error budget {e} must be nonnegative")),
        _ => {}
    }
    let mut violation = None;
    let last = answer_progressive(&plan, trees.as_slice(), |p| {
        let est = p.estimate;
        if violation.is_none() {
            violation = check(est.answer, est.error).err();
        }
        Line::new()
            .with("expansions", Field::Int(p.expansions))
            .with("answer", Field::Num(est.answer))
            .with("error", Field::Num(est.error))
            .with("nodes_accessed", Field::Int(p.nodes_accessed))
            .with("elapsed_ms", Field::Num(ms(p.elapsed)))
            .print(args.json);
        let done = match budget {
            Budget::Error(max) => !est.is_unbounded() && est.error <= max,
            Budget::Time(limit) => p.elapsed >= limit,
        };
        if done || violation.is_some() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .map_err(process_failure)?;
    if let Some(v) = violation {
        return Err(v);
    }
    let est = last.estimate;
    let status = match budget {
        _ if last.exhausted && est.is_unbounded() => Status::Unbounded,
        Budget::Error(max) if !est.is_unbounded() && est.error <= max => Status::BudgetMet,
        Budget::Error(_) if last.exhausted => Status::BudgetInfeasible,
        Budget::Time(_) if last.exhausted => Status::BudgetMet,
        Budget::Time(_) => Status::TimeExpired,
        Budget::Error(_) => Status::Unbounded,
    };
    with_exact(
        Line::new()
            .with("answer", Field::Num(est.answer))
            .with("error", Field::Num(est.error))
            .with("status", Field::Text(status.to_string()))
            .with("nodes_accessed", Field::Int(last.nodes_accessed))
            .with("elapsed_ms", Field::Num(ms(last.elapsed))),
    )
    .print(args.json);
    Ok(())
}

// bench

fn bench_cmd(root: &Path, args: BenchArgs) -> Result<(), Failure> {
    if args.budgets.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return fail(USAGE, anyhow!("budgets must be nonnegative fractions"));
    }
    let ws = Workspace::open(root).or_exit(DATA)?;
    let plan = plan_of(&ws, &args.query)?;
    let trees = load_trees(&ws, &plan)?;
    let series = load_series(&ws, &plan)?;
    let config = SweepConfig { fractions: args.budgets, repeats: args.repeats.max(1) };
    let sweep = bench::sweep(&plan, series.as_slice(), trees.as_slice(), &config).map_err(|e| match e {
        bench::BenchError::Process(p) => process_failure(p),
        other => Failure { code: DATA, error: other.into() },
    })?;
    let csv = sweep.to_csv();
    match args.out {
        Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display())).or_exit(DATA),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

// gen

fn gen(args: GenArgs) -> Result<(), Failure> {
    if args.len == 0 {
        return fail(USAGE, anyhow!("--len must be positive"));
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return fail(USAGE, anyhow!("--noise must be nonnegative"));
    }
    let mut cfg = SmoothConfig::standard(args.len, args.seed);
    if args.phase_shift != 0.0 || args.noise_seed.is_some() {
        cfg = cfg.phase_shifted(args.phase_shift, args.noise_seed.unwrap_or(args.seed));
    }
    cfg.noise = args.noise;
    cfg.offset = args.offset;
    let id = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
    let series = cfg.series::<f64>(id);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).or_exit(DATA)?;
    }
    write_series(&series, &args.out)?;
    Line::new()
        .with("out", Field::Text(args.out.display().to_string()))
        .with("length", Field::Int(args.len as u64))
        .print(false);
    Ok(())
}

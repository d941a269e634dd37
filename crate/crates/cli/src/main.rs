//! `noma-coc`: scenario generation, solving, datasets, training, evaluation
//! and benchmarks for NOMA cell outage compensation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noma_coc::baseline::EnumerationBudget;
use noma_coc::dataset::{audit, generate_dataset, read_jsonl, split, write_jsonl, DatasetConfig};
use noma_coc::domain::{
    AssociationMap, CompensationScope, Mode, PowerSolution, Scenario, ScenarioConfig, SubchannelPlan, SystemParams,
};
use noma_coc::metrics::{
    evaluate_scheme, min_se_shortfalls, report_for, runtime_bench, summarize, EmpiricalCdf, EvalContext, Scheme,
    Timing,
};
use noma_coc::solver::{solve_cell, InfeasibilityCertificate, Objective, SolverConfig};
use noma_coc::surrogate::{load_model, save_model, train, DecayMode, LabeledSample, TrainConfig};
use noma_coc::units::dbm_to_linear;

/// Relative `--out` paths resolve against this directory when set.
const OUT_DIR_ENV: &str = "NOMA_COC_OUT_DIR";

#[derive(Parser)]
#[command(name = "noma-coc", version, about = "NOMA cell outage compensation toolkit")]
struct Cli {
    /// Worker threads for parallel scenario and sample processing.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded scenario and write it as JSON.
    Generate(GenerateArgs),
    /// Associate failed users and allocate power for one scenario.
    Solve(SolveArgs),
    /// Generate a labeled corpus, or split one.
    Dataset(DatasetArgs),
    /// Train the power-allocation surrogate.
    Train(TrainArgs),
    /// Evaluate a scheme over scenarios, or score saved solutions.
    Eval(EvalArgs),
    /// Time association, power allocation and the exhaustive baseline.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Isolated,
    Interference,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Isolated => Mode::Isolated,
            ModeArg::Interference => Mode::Interference,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PlanArg {
    None,
    FullReuse,
    Disjoint,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScopeArg {
    HostClusters,
    AllClusters,
}

#[derive(Args, Clone, Serialize)]
struct ScenarioArgs {
    /// Compensating base stations.
    #[arg(long, default_value_t = 3)]
    cells: usize,
    /// Connected users per compensating cell.
    #[arg(long, default_value_t = 12)]
    users: usize,
    /// Users of the failed cell.
    #[arg(long, default_value_t = 4)]
    failed: usize,
    /// Users per NOMA cluster.
    #[arg(long, default_value_t = 2)]
    cluster_size: usize,
    /// Subchannel plan across cells.
    #[arg(long, value_enum, default_value = "none")]
    plan: PlanArg,
    /// Clusters re-optimized in a host cell.
    #[arg(long, value_enum, default_value = "host-clusters")]
    scope: ScopeArg,
    /// Interference threshold in dBm (interference mode).
    #[arg(long, allow_negative_numbers = true)]
    i_max_dbm: Option<f64>,
    /// Minimum SE of every served user, bit/s/Hz.
    #[arg(long)]
    s_min: Option<f64>,
}

impl ScenarioArgs {
    fn config(&self) -> ScenarioConfig {
        let mut params = SystemParams {
            cluster_size: self.cluster_size,
            scope: match self.scope {
                ScopeArg::HostClusters => CompensationScope::HostClusters,
                ScopeArg::AllClusters => CompensationScope::AllClusters,
            },
            ..SystemParams::default()
        };
        if let Some(i) = self.i_max_dbm {
            params.i_max = dbm_to_linear(noma_coc::units::PowerDbm(i)).mw();
        }
        if let Some(s) = self.s_min {
            params.s_min = s;
        }
        ScenarioConfig {
            cells: self.cells,
            users_per_cell: self.users,
            failed: self.failed,
            params,
            plan: match self.plan {
                PlanArg::None => SubchannelPlan::None,
                PlanArg::FullReuse => SubchannelPlan::FullReuse,
                PlanArg::Disjoint => SubchannelPlan::Disjoint,
            },
        }
    }
}

#[derive(Args, Clone, Serialize)]
struct SolverArgs {
    /// Outer duality-gap tolerance of the barrier method.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Newton iteration cap per solve.
    #[arg(long)]
    solver_max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(t) = self.solver_tol {
            c.outer_tol = t;
        }
        if let Some(m) = self.solver_max_iter {
            c.max_iter = m;
        }
        c
    }
}

#[derive(Args, Clone, Serialize)]
struct BudgetArgs {
    /// Cap on associations the exhaustive baseline may evaluate.
    #[arg(long, default_value_t = 1_000_000)]
    budget_assoc: u64,
    /// Wall-time cap of the exhaustive baseline, seconds.
    #[arg(long, default_value_t = 3600.0)]
    budget_seconds: f64,
}

impl BudgetArgs {
    fn budget(&self) -> EnumerationBudget {
        EnumerationBudget {
            max_associations: self.budget_assoc,
            max_wall_time: self.budget_seconds,
        }
    }
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PaArg {
    Solver,
    Dnn,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "isolated")]
    mode: ModeArg,
    /// Power allocation: exact solver or trained surrogate.
    #[arg(long, value_enum, default_value = "solver")]
    pa: PaArg,
    /// Surrogate model file, required with `--pa dnn`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Exhaustive association instead of the greedy heuristic.
    #[arg(long)]
    optimal: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Write per-cell barrier iteration traces to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct DatasetArgs {
    #[command(subcommand)]
    action: Option<DatasetAction>,
    #[command(flatten)]
    generate: DatasetGenArgs,
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Split a corpus into train, validation and test files.
    Split(SplitArgs),
}

#[derive(Args, Serialize)]
struct DatasetGenArgs {
    /// Number of labeled samples.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "isolated")]
    mode: ModeArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.jsonl, val.jsonl and test.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DecayArg {
    Beta1,
    LearningRate,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training split, or a full corpus when `--val` is absent.
    #[arg(long)]
    dataset: PathBuf,
    /// Validation split; without it the corpus is split 70/15/15.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    decay: f64,
    /// How the decay rate is applied.
    #[arg(long, value_enum, default_value = "beta1")]
    decay_mode: DecayArg,
    /// Permuted copies per training sample (at most 8).
    #[arg(long, default_value_t = 0)]
    augment: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training curves and test statistics.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long, default_value = "lc_noc")]
    scheme: String,
    /// Scenario file or directory of scenario files.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Saved `solve` outputs to score instead of running a scheme.
    #[arg(long, num_args = 1..)]
    solution: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "isolated")]
    mode: ModeArg,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test split for the surrogate's min-SE error distribution.
    #[arg(long)]
    test_split: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    /// Sweep over one size parameter, e.g. `failed=4,8,12`.
    #[arg(long, default_value = "failed=4,8,12")]
    sweep: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "isolated")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure that maps to a dedicated exit code.
#[derive(Debug)]
enum Exit {
    Infeasible(Vec<InfeasibilityCertificate>),
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exit::Infeasible(c) => write!(f, "{} cell(s) infeasible", c.len()),
        }
    }
}

impl std::error::Error for Exit {}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let path = out_path(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn scenario_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

#[derive(Serialize)]
struct Artifact<'a, C: Serialize, T: Serialize> {
    command: &'a str,
    config: &'a C,
    #[serde(flatten)]
    body: T,
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let scenario = args.scenario.config().build(args.seed)?;
    let path = write_json(&args.out, &scenario)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct SolveOutput {
    scheme: Scheme,
    mode: Mode,
    assoc: AssociationMap,
    solution: PowerSolution,
    infeasible: Vec<InfeasibilityCertificate>,
    report: noma_coc::metrics::MetricsReport,
}

fn solve(args: &SolveArgs) -> Result<()> {
    let scenario = read_scenario(&args.scenario)?;
    let model = match (&args.pa, &args.model) {
        (PaArg::Dnn, Some(p)) => Some(load_model(p).with_context(|| format!("loading model {}", p.display()))?),
        (PaArg::Dnn, None) => bail!(noma_coc::Error::Config("--pa dnn needs --model".into())),
        _ => None,
    };
    let scheme = match (args.optimal, args.pa) {
        (true, PaArg::Dnn) => bail!(noma_coc::Error::Config("--optimal uses the exact solver; drop --pa dnn".into())),
        (true, PaArg::Solver) => Scheme::OptNoc,
        (false, PaArg::Solver) => Scheme::LcNoc,
        (false, PaArg::Dnn) => Scheme::LcNocDnn,
    };
    let ctx = EvalContext {
        mode: args.mode.into(),
        solver: args.solver.config(),
        model: model.as_ref(),
        budget: args.budget.budget(),
    };
    let ev = evaluate_scheme(&scenario, scheme, &ctx)?;
    if let Some(trace_path) = &args.trace {
        let pre = noma_coc::solver::pre_outage_network(&scenario, ctx.mode, &ctx.solver)?;
        let mut traces = Vec::new();
        for (ci, cell) in scenario.cells.iter().enumerate() {
            if ev.assoc.entries.values().any(|s| s.bs == cell.bs_id) {
                let inst = scenario.compensation_instance(ci, &ev.assoc, &pre[ci], ctx.mode)?;
                let sol = solve_cell(&inst, Objective::FailedSum, &ctx.solver, true)?;
                traces.push(serde_json::json!({ "bs_id": cell.bs_id, "stats": sol.stats, "trace": sol.trace }));
            }
        }
        write_json(trace_path, &traces)?;
    }
    let out = SolveOutput {
        scheme,
        mode: ctx.mode,
        assoc: ev.assoc,
        solution: ev.solution,
        infeasible: ev.infeasible,
        report: ev.report,
    };
    let path = write_json(
        &args.out,
        &Artifact {
            command: "solve",
            config: args,
            body: &out,
        },
    )?;
    eprintln!("wrote {}", path.display());
    if !out.infeasible.is_empty() {
        return Err(Exit::Infeasible(out.infeasible).into());
    }
    Ok(())
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad ratios {s:?}"))?;
    match v.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!(noma_coc::Error::Config(format!("expected three ratios, got {s:?}"))),
    }
}

fn dataset(args: &DatasetArgs) -> Result<()> {
    if let Some(DatasetAction::Split(s)) = &args.action {
        let samples: Vec<LabeledSample> = read_jsonl(&s.input)?;
        let parts = split(&samples, parse_ratios(&s.ratios)?, s.seed)?;
        let dir = out_path(&s.out_dir);
        fs::create_dir_all(&dir)?;
        for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
            write_jsonl(&dir.join(format!("{name}.jsonl")), part)?;
        }
        write_json(
            &dir.join("split.json"),
            &serde_json::json!({
                "config": s,
                "counts": [parts.train.len(), parts.val.len(), parts.test.len()],
            }),
        )?;
        println!("{} / {} / {}", parts.train.len(), parts.val.len(), parts.test.len());
        return Ok(());
    }
    let g = &args.generate;
    let Some(out) = &g.out else {
        bail!(noma_coc::Error::Config("dataset generation needs --out".into()));
    };
    let cfg = DatasetConfig {
        scenario: g.scenario.config(),
        mode: g.mode.into(),
        solver: g.solver.config(),
    };
    let (samples, stats) = generate_dataset(&cfg, g.n, g.seed)?;
    let bad = audit(&samples, 1e-6);
    if !bad.is_empty() {
        bail!(noma_coc::Error::Internal(format!("{} samples fail the constraint audit", bad.len())));
    }
    let path = out_path(out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_jsonl(&path, &samples)?;
    let mut meta = path.clone().into_os_string();
    meta.push(".meta.json");
    write_json(
        Path::new(&meta),
        &serde_json::json!({ "config": cfg, "n": g.n, "seed": g.seed, "stats": stats }),
    )?;
    println!(
        "{} samples from {} scenarios ({} infeasible) -> {}",
        stats.samples,
        stats.scenarios,
        stats.infeasible_scenarios,
        path.display()
    );
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let data: Vec<LabeledSample> = read_jsonl(&args.dataset)?;
    let (train_set, val_set, test_set) = match &args.val {
        Some(v) => (data, read_jsonl(v)?, Vec::new()),
        None => {
            let s = split(&data, [0.7, 0.15, 0.15], args.seed)?;
            (s.train, s.val, s.test)
        }
    };
    let cfg = TrainConfig {
        batch_size: args.batch,
        learning_rate: args.lr,
        decay_rate: args.decay,
        decay_mode: match args.decay_mode {
            DecayArg::Beta1 => DecayMode::Beta1,
            DecayArg::LearningRate => DecayMode::LearningRate,
        },
        epochs: args.epochs,
        seed: args.seed,
        augment: args.augment,
        ..TrainConfig::default()
    };
    let (model, report) = train(&train_set, &val_set, &cfg)?;
    let path = out_path(&args.out);
    save_model(&model, &path)?;
    let mut test = serde_json::Value::Null;
    if !test_set.is_empty() {
        let mut errs = Vec::new();
        for s in &test_set {
            errs.extend(min_se_shortfalls(&s.meta.instance, &model.predict(&s.meta.instance)?, true));
        }
        let cdf = EmpiricalCdf::new(errs);
        test = serde_json::json!({
            "samples": test_set.len(),
            "loss": noma_coc::surrogate::evaluate_loss(&model, &test_set),
            "min_se_error_below_0.01": cdf.fraction_below(0.01),
        });
    }
    println!(
        "best epoch {} validation loss {:.3e} in {:.1}s -> {}",
        report.best_epoch,
        report.val_loss[report.best_epoch],
        report.seconds,
        path.display()
    );
    if let Some(r) = &args.report {
        write_json(
            r,
            &Artifact {
                command: "train",
                config: args,
                body: serde_json::json!({ "train": report, "test": test }),
            },
        )?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let scheme: Scheme = args.scheme.parse()?;
    let mode: Mode = args.mode.into();
    let model = args.model.as_deref().map(load_model).transpose()?;
    let mut reports = Vec::new();
    if !args.solution.is_empty() {
        let scenario_path = args
            .scenarios
            .as_ref()
            .context("scoring saved solutions needs --scenarios pointing at their scenario")?;
        let scenario = read_scenario(scenario_path)?;
        for p in &args.solution {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p)?)?;
            let out: SolveOutput = serde_json::from_value(v).with_context(|| format!("parsing {}", p.display()))?;
            reports.push(report_for(&scenario, out.scheme, &out.assoc, &out.solution, out.mode, Timing::default())?);
        }
    } else {
        let dir = args.scenarios.as_ref().context("--scenarios is required")?;
        let ctx = EvalContext {
            mode,
            solver: args.solver.config(),
            model: model.as_ref(),
            budget: args.budget.budget(),
        };
        for f in scenario_files(dir)? {
            reports.push(evaluate_scheme(&read_scenario(&f)?, scheme, &ctx)?.report);
        }
    }
    let mut test_cdf = None;
    if let (Some(m), Some(t)) = (&model, &args.test_split) {
        let samples: Vec<LabeledSample> = read_jsonl(t)?;
        let mut errs = Vec::new();
        for s in &samples {
            errs.extend(min_se_shortfalls(&s.meta.instance, &m.predict(&s.meta.instance)?, true));
        }
        let cdf = EmpiricalCdf::new(errs);
        test_cdf = Some(serde_json::json!({ "below_0.01": cdf.fraction_below(0.01), "points": cdf.points() }));
    }
    let summary = summarize(&reports);
    let cdf = noma_coc::metrics::violation_cdf(&reports);
    let path = write_json(
        &args.out,
        &Artifact {
            command: "eval",
            config: args,
            body: serde_json::json!({
                "summary": summary,
                "min_se_error_below_0.01": cdf.fraction_below(0.01),
                "test_split": test_cdf,
                "reports": reports,
            }),
        },
    )?;
    if let Some(s) = summary {
        println!(
            "{} scenarios: avg failed SE {:.3}, avg all-user SE {:.3}, Jain {:.4}",
            s.scenarios, s.avg_failed_se, s.avg_all_se, s.mean_jain
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let (key, values) = args
        .sweep
        .split_once('=')
        .with_context(|| format!("sweep must look like failed=4,8,12, got {:?}", args.sweep))?;
    let values: Vec<usize> = values
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad sweep values in {:?}", args.sweep))?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    let mut scenarios = Vec::new();
    for v in values {
        let mut s = args.scenario.clone();
        match key {
            "failed" => s.failed = v,
            "users" => s.users = v,
            "cells" => s.cells = v,
            other => bail!(noma_coc::Error::Config(format!("cannot sweep {other:?}; use failed, users or cells"))),
        }
        scenarios.push(s.config().build(args.seed)?);
    }
    let ctx = EvalContext {
        mode: args.mode.into(),
        solver: args.solver.config(),
        model: model.as_ref(),
        budget: args.budget.budget(),
    };
    let rows = runtime_bench(&scenarios, args.reps, &ctx)?;
    for r in &rows {
        println!(
            "L={} U^f={}: association {:.3e}s solver {:.3e}s dnn {} opt {:.3e}s{} ({} associations)",
            r.clusters,
            r.failed,
            r.association,
            r.solver,
            r.dnn.map_or("-".into(), |d| format!("{d:.3e}s")),
            r.opt_seconds,
            if r.opt_extrapolated { " extrapolated" } else { "" },
            r.opt_associations
        );
    }
    write_json(
        &args.out,
        &Artifact {
            command: "bench",
            config: args,
            body: serde_json::json!({ "rows": rows }),
        },
    )?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .ok();
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(Exit::Infeasible(certs)) = e.downcast_ref::<Exit>() {
                println!("{}", serde_json::to_string_pretty(certs).unwrap_or_default());
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
            match e.downcast_ref::<noma_coc::Error>() {
                Some(noma_coc::Error::Infeasible(cert)) => {
                    println!("{}", serde_json::to_string_pretty(cert).unwrap_or_default());
                    eprintln!("error: {e:#}");
                    ExitCode::from(3)
                }
                Some(noma_coc::Error::BudgetExceeded { .. }) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(4)
                }
                Some(noma_coc::Error::Config(_)) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
                _ => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
    }
}

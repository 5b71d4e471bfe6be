//! Command-line interface. Progress and results go to standard output as
//! one JSON object per line; diagnostics go to standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::config::{Archetype, RunConfig, SweepManifest};
use super::distill::{export_distill, write_distill};
use super::record::{load_run_log, write_run_log};
use super::report::{aggregate, load_records, render_csv, render_curves_svg, render_table};
use super::run::{assignments_in_domain, load_or_generate, run_sweep};
use super::taskdoc::{read_task_doc, write_task_dir};
use super::{write_atomic, HarnessError};
use crate::benchgen::{generate, BenchmarkKind, GenParams, Topology};
use crate::dcop::{global_cost, Assignment};
use crate::model::{AdapterKind, TaskKind};

#[derive(Parser, Debug)]
#[command(name = "vldcop", version, about = "Instruction-driven DCOP benchmarks and agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate task documents, instruction files and charts.
    Gen(GenArgs),
    /// Run one configuration or a sweep manifest.
    Run(RunArgs),
    /// Aggregate run logs into tables and cost-curve plots.
    Report(ReportArgs),
    /// Export captured prompts and ground-truth answers as JSONL.
    ExportDistill(DistillArgs),
    /// Re-check the invariants of task documents and run logs.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value = "ldgc")]
    pub bench: BenchmarkKind,
    #[arg(long, default_value = "random")]
    pub topology: Topology,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 23)]
    pub m: usize,
    /// Colors or slots (default 4, or 8 for ldms).
    #[arg(long)]
    pub domain: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generate this many consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    /// Leave the ground-truth blocks out of the instructions.
    #[arg(long)]
    pub no_machine_blocks: bool,
    #[arg(long, default_value = "tasks")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML run configuration or sweep manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bench: Option<BenchmarkKind>,
    #[arg(long)]
    pub archetype: Option<Archetype>,
    /// scripted, noisy or remote.
    #[arg(long)]
    pub adapter: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub domain: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub run_seed: Option<u64>,
    #[arg(long)]
    pub drop: Option<f64>,
    #[arg(long)]
    pub delay: Option<usize>,
    #[arg(long)]
    pub capture: bool,
    /// Run on this task document instead of generating one.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory containing run logs.
    pub runs: PathBuf,
    /// Output directory (default: the runs directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    /// Directory containing run logs with captured prompts.
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Task kinds to keep (repeatable); all when omitted.
    #[arg(long = "kind")]
    pub kinds: Vec<String>,
    /// Emit exactly this many pairs.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Task documents (.toml), run logs (.jsonl) or directories of them.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

fn emit(v: serde_json::Value) {
    println!("{v}");
}

fn run_configs(args: &RunArgs) -> Result<Vec<RunConfig>, HarnessError> {
    let mut manifest = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            SweepManifest::parse(&text)?
        }
        None => SweepManifest { base: RunConfig::default(), sweep: Default::default() },
    };
    let b = &mut manifest.base;
    if let Some(v) = args.bench {
        b.benchmark = v;
    }
    if let Some(v) = args.archetype {
        b.archetype = v;
    }
    if let Some(kind) = &args.adapter {
        b.adapter.kind = match kind.as_str() {
            "scripted" => AdapterKind::Scripted,
            "noisy" => AdapterKind::Noisy,
            "remote" => AdapterKind::Remote,
            other => return Err(HarnessError::Config(format!("unknown adapter '{other}'"))),
        };
    }
    if let Some(v) = args.noise {
        b.adapter.noise = v;
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => {$(if let Some(v) = $arg { b.$field = v; })*};
    }
    set!(n <- args.n, m <- args.m, instance_seed <- args.seed, run_seed <- args.run_seed, drop <- args.drop, max_delay <- args.delay);
    if args.domain.is_some() {
        b.domain = args.domain;
    }
    if args.iterations.is_some() {
        b.iterations = args.iterations;
    }
    if args.epsilon.is_some() {
        b.epsilon = args.epsilon;
    }
    if args.task.is_some() {
        b.task_file = args.task.clone();
    }
    if args.capture {
        b.capture_prompts = true;
    }
    if let Some(out) = &args.out {
        b.output_dir = out.clone();
    }
    manifest.expand()
}

fn cmd_gen(a: &GenArgs) -> Result<bool, HarnessError> {
    let domain = a.domain.unwrap_or(if a.bench == BenchmarkKind::Ldms { 8 } else { 4 });
    for seed in a.seed..a.seed + a.count {
        let mut p = GenParams::new(a.bench, a.n, a.m, domain, seed);
        p.topology = a.topology;
        p.machine_blocks = !a.no_machine_blocks;
        let task = generate(&p)?;
        let written = write_task_dir(&task, &a.out)?;
        emit(json!({"event": "task-written", "task": task.name, "files": written.len(), "dir": a.out.join(&task.name)}));
    }
    Ok(true)
}

fn cmd_run(a: &RunArgs) -> Result<bool, HarnessError> {
    let configs = run_configs(a)?;
    emit(json!({"event": "sweep-started", "runs": configs.len()}));
    let go = || run_sweep(&configs, &|line| println!("{line}"));
    let results = match a.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(go),
        None => go(),
    };
    let failed = results.iter().filter(|r| r.as_ref().map_or(true, |(rec, _)| rec.failed())).count();
    emit(json!({"event": "sweep-finished", "runs": results.len(), "failed": failed}));
    Ok(failed == 0)
}

fn cmd_report(a: &ReportArgs) -> Result<bool, HarnessError> {
    let records = load_records(&a.runs)?;
    let out = a.out.clone().unwrap_or_else(|| a.runs.clone());
    let kinds: std::collections::BTreeSet<BenchmarkKind> = records.iter().map(|r| r.config.benchmark).collect();
    if kinds.is_empty() {
        return Err(HarnessError::Data(format!("no run logs under {}", a.runs.display())));
    }
    for kind in kinds {
        let subset: Vec<_> = records.iter().filter(|r| r.config.benchmark == kind).cloned().collect();
        let rows = aggregate(&subset)?;
        let base = out.join(format!("report-{}", kind.as_str()));
        let table = render_table(&rows);
        write_atomic(&base.with_extension("txt"), &table)?;
        write_atomic(&base.with_extension("csv"), &render_csv(&rows))?;
        write_atomic(&base.with_extension("svg"), &render_curves_svg(&rows))?;
        print!("{table}");
        emit(json!({"event": "report-written", "benchmark": kind, "rows": rows.len(), "base": base}));
    }
    Ok(true)
}

fn cmd_distill(a: &DistillArgs) -> Result<bool, HarnessError> {
    let kinds = a
        .kinds
        .iter()
        .map(|k| TaskKind::parse(k).ok_or_else(|| HarnessError::Config(format!("unknown task kind '{k}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    let records = load_records(&a.runs)?;
    let pairs = export_distill(&records, &kinds, a.limit, a.dedup)?;
    write_distill(&pairs, &a.out)?;
    emit(json!({"event": "distill-written", "pairs": pairs.len(), "path": a.out}));
    Ok(true)
}

fn validate_run(path: &Path) -> Result<(), HarnessError> {
    let rec = load_run_log(path)?;
    rec.validate()?;
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    if write_run_log(&rec) != text {
        return Err(HarnessError::Data(format!("{}: log does not round-trip", path.display())));
    }
    let task = load_or_generate(&rec.config)?;
    if task.name != rec.task {
        return Err(HarnessError::Data(format!("{}: task {} regenerates as {}", path.display(), rec.task, task.name)));
    }
    if !assignments_in_domain(&task, &rec) {
        return Err(HarnessError::Data(format!("{}: assignment outside the domains", path.display())));
    }
    for it in &rec.iterations {
        let cost = global_cost(&task.instance, &Assignment::complete(it.assignment.clone()))?;
        if cost != it.cost {
            return Err(HarnessError::Data(format!("{}: cost at t={} is {cost}, log says {}", path.display(), it.t, it.cost)));
        }
    }
    Ok(())
}

fn collect_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut stack = vec![p.clone()];
            while let Some(d) = stack.pop() {
                for e in std::fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
                    let q = e.map_err(|e| HarnessError::io(&d, e))?.path();
                    if q.is_dir() {
                        stack.push(q);
                    } else if q.extension().is_some_and(|x| x == "jsonl" || x == "toml") {
                        out.push(q);
                    }
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_validate(a: &ValidateArgs) -> Result<bool, HarnessError> {
    let mut ok = true;
    for p in collect_paths(&a.paths)? {
        let result = match p.extension().and_then(|e| e.to_str()) {
            Some("toml") => read_task_doc(&p).map(|_| ()),
            Some("jsonl") => validate_run(&p),
            _ => Err(HarnessError::Config(format!("{}: expected a .toml task or .jsonl run log", p.display()))),
        };
        match result {
            Ok(()) => emit(json!({"event": "valid", "path": p})),
            Err(e) => {
                ok = false;
                emit(json!({"event": "invalid", "path": p, "error": e.to_string()}));
            }
        }
    }
    Ok(ok)
}

/// Runs a parsed command; `Ok(false)` means some run or check failed.
pub fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::ExportDistill(a) => cmd_distill(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            emit(json!({"event": "error", "error": e.to_string()}));
            ExitCode::from(2)
        }
    }
}


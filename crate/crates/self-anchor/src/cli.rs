//! Operator surface behind the `anchor` binary.
//!
//! Configuration precedence: command-line flags override the JSON config
//! file (`--config`), which overrides the `ANCHOR_BACKEND_URL` environment
//! variable. Exit codes: 0 success, 1 usage/config/data error, 2 backend
//! error, 3 completed without an answer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::backend::{Backend, RemoteBackend, RemoteConfig, StubBackend};
use crate::error::{Error, Result};
use crate::eval::analysis::{
    chain_lengths, performance_gain, summarize, task_complexity, write_summary_csv,
    ComplexityOptions, SummaryReport,
};
use crate::eval::prompts::structured_prompt;
use crate::eval::runner::{evaluate_items, EvalOptions};
use crate::eval::{load_dataset, load_records, write_records, EvalRecord, Method};
use crate::orchestrator::{generate, TraceStatus};
use crate::steering::{AnchorMode, MeanKind, SelectionPolicy, SteeringConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_NO_ANSWER: i32 = 3;

pub const BACKEND_URL_ENV: &str = "ANCHOR_BACKEND_URL";

#[derive(Parser, Debug)]
#[command(name = "anchor", version, about = "Anchored decoding and its evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the generation-running subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct SharedFlags {
    /// Backend: stub:<fixture.json> or remote:<base url>
    #[arg(long)]
    backend: Option<String>,
    /// Base steering strength (omega)
    #[arg(long)]
    omega: Option<f64>,
    /// Confidence mean: harmonic | geometric | arithmetic
    #[arg(long)]
    mean: Option<String>,
    /// Anchoring mode: current | all-prior | question-only | none
    #[arg(long)]
    anchor_mode: Option<String>,
    /// Step budget
    #[arg(long)]
    max_steps: Option<usize>,
    /// Token budget
    #[arg(long)]
    max_new_tokens: Option<usize>,
    /// Sampling temperature; omitted means greedy decoding
    #[arg(long)]
    temperature: Option<f64>,
    /// Seed for all randomness
    #[arg(long)]
    seed: Option<u64>,
    /// Mask token id override (defaults to the backend-declared one)
    #[arg(long)]
    mask_token: Option<u32>,
    /// JSON config file; flags override it, it overrides ANCHOR_BACKEND_URL
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one anchored generation and print the answer and per-step omega
    Run {
        question: String,
        /// Write the trace JSON here
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        shared: SharedFlags,
    },
    /// Evaluate a JSONL dataset with one method
    Eval {
        dataset: PathBuf,
        /// cot | ps_plus | re2 | self_anchor | self_anchor_no_steer
        #[arg(long)]
        method: String,
        /// Results JSONL path (summary files are written alongside)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate up to N items concurrently
        #[arg(long)]
        jobs: Option<usize>,
        /// Directory for per-item trace files
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        shared: SharedFlags,
    },
    /// Reports over results files
    Analyze {
        /// Results JSONL files (gains expects exactly two, arm A then arm B)
        results: Vec<PathBuf>,
        /// complexity | gains | chains | throughput
        #[arg(long)]
        report: String,
        /// Output base path; <out>.csv and <out>.json are written
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate with each confidence mean and merge the summaries
    AblateMeans {
        dataset: PathBuf,
        /// Output base path
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        shared: SharedFlags,
    },
}

/// JSON config file schema; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    backend: Option<String>,
    omega: Option<f64>,
    mean: Option<String>,
    anchor_mode: Option<String>,
    max_steps: Option<usize>,
    max_new_tokens: Option<usize>,
    temperature: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    mask_token: Option<u32>,
}

/// Which backend to talk to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Stub(PathBuf),
    Remote(String),
}

impl BackendChoice {
    fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix("stub:") {
            Ok(BackendChoice::Stub(PathBuf::from(path)))
        } else if let Some(url) = spec.strip_prefix("remote:") {
            Ok(BackendChoice::Remote(url.to_string()))
        } else {
            Err(Error::Config(format!(
                "backend must be `stub:<fixture.json>` or `remote:<base url>`, got `{spec}`"
            )))
        }
    }
}

/// Fully resolved configuration for a command.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub backend: BackendChoice,
    pub steering: SteeringConfig,
    pub jobs: usize,
}

/// Applies flag > file > environment precedence.
pub fn resolve_config(shared: &SharedFlags, jobs_flag: Option<usize>) -> Result<ResolvedConfig> {
    let file: FileConfig = match &shared.config {
        Some(path) => {
            let data = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&data)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let backend_spec = shared.backend.clone().or_else(|| file.backend.clone());
    let backend = match backend_spec {
        Some(spec) => BackendChoice::parse(&spec)?,
        None => match std::env::var(BACKEND_URL_ENV) {
            Ok(url) if !url.is_empty() => BackendChoice::Remote(url),
            _ => {
                return Err(Error::Config(format!(
                    "no backend selected: pass --backend stub:<fixture.json> or \
                     --backend remote:<url>, or set {BACKEND_URL_ENV}"
                )))
            }
        },
    };

    let mut steering = SteeringConfig::default();
    if let Some(omega) = shared.omega.or(file.omega) {
        steering.omega_base = omega;
    }
    if let Some(mean) = shared.mean.clone().or_else(|| file.mean.clone()) {
        steering.mean_kind = mean.parse::<MeanKind>()?;
    }
    if let Some(mode) = shared.anchor_mode.clone().or_else(|| file.anchor_mode.clone()) {
        steering.anchor_mode = mode.parse::<AnchorMode>()?;
    }
    if let Some(max_steps) = shared.max_steps.or(file.max_steps) {
        steering.budget.max_steps = max_steps;
    }
    if let Some(max_new_tokens) = shared.max_new_tokens.or(file.max_new_tokens) {
        steering.budget.max_new_tokens = max_new_tokens;
    }
    if let Some(tau) = shared.temperature.or(file.temperature) {
        steering.selection = SelectionPolicy::Temperature { tau };
    }
    if let Some(seed) = shared.seed.or(file.seed) {
        steering.seed = seed;
    }
    if let Some(mask) = shared.mask_token.or(file.mask_token) {
        steering.mask_token = Some(mask);
    }
    steering.validate()?;

    let jobs = jobs_flag.or(file.jobs).unwrap_or(1).max(1);
    Ok(ResolvedConfig { backend, steering, jobs })
}

pub fn make_backend(choice: &BackendChoice) -> Result<Box<dyn Backend>> {
    match choice {
        BackendChoice::Stub(path) => Ok(Box::new(StubBackend::from_path(path)?)),
        BackendChoice::Remote(url) => {
            Ok(Box::new(RemoteBackend::connect(RemoteConfig::new(url.clone()))?))
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Backend(_) | Error::Tokenization(_) => EXIT_BACKEND,
        _ => EXIT_USAGE,
    }
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code_for(err)
}

/// Parses arguments and dispatches; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { question, trace, shared } => cmd_run(&question, trace.as_deref(), &shared),
        Command::Eval { dataset, method, out, jobs, trace, shared } => {
            cmd_eval(&dataset, &method, out.as_deref(), jobs, trace, &shared)
        }
        Command::Analyze { results, report, out } => cmd_analyze(&results, &report, out.as_deref()),
        Command::AblateMeans { dataset, out, jobs, trace, shared } => {
            cmd_ablate_means(&dataset, out.as_deref(), jobs, trace, &shared)
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_run(question: &str, trace_path: Option<&Path>, shared: &SharedFlags) -> i32 {
    let resolved = match resolve_config(shared, None) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let backend = match make_backend(&resolved.backend) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    let rendered = match structured_prompt(question) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let output =
        match generate(&rendered.parts, &rendered.template, &resolved.steering, backend.as_ref()) {
            Ok(o) => o,
            Err(e) => return fail(&e),
        };

    for step in &output.trace.steps {
        let phase = serde_json::to_string(&step.phase).unwrap_or_default().replace('"', "");
        println!("step {} {}: omega={:.4} text={:?}", step.index, phase, step.omega_used, step.text);
    }
    match &output.trace.final_answer {
        Some(answer) => println!("final answer: {answer}"),
        None => println!("final answer: (none; status {:?})", output.trace.status),
    }

    if let Some(path) = trace_path {
        let json = match serde_json::to_string_pretty(&output.trace) {
            Ok(j) => j,
            Err(e) => return fail(&Error::Json(e)),
        };
        if let Err(e) = std::fs::write(path, json) {
            return fail(&Error::Io(e));
        }
    }

    match output.trace.status {
        TraceStatus::Answered => EXIT_OK,
        TraceStatus::BackendError => EXIT_BACKEND,
        TraceStatus::NoAnswer | TraceStatus::Truncated => EXIT_NO_ANSWER,
    }
}

fn summary_paths(out: &Path) -> (PathBuf, PathBuf) {
    let base = out.with_extension("");
    (
        PathBuf::from(format!("{}.summary.csv", base.display())),
        PathBuf::from(format!("{}.summary.json", base.display())),
    )
}

fn write_summary(report: &SummaryReport, out: &Path) -> Result<()> {
    let (csv_path, json_path) = summary_paths(out);
    write_summary_csv(report, &csv_path)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn eval_pass(
    dataset: &Path,
    method: Method,
    resolved: &ResolvedConfig,
    trace_dir: Option<PathBuf>,
) -> Result<(Vec<EvalRecord>, BTreeMap<String, String>)> {
    let items = load_dataset(dataset)?;
    let suites: BTreeMap<String, String> =
        items.iter().map(|i| (i.id.clone(), i.suite.clone())).collect();
    let backend = make_backend(&resolved.backend)?;
    let options = EvalOptions {
        method,
        steering: resolved.steering.clone(),
        jobs: resolved.jobs,
        trace_dir,
    };
    let records = evaluate_items(&items, backend.as_ref(), &options)?;
    Ok((records, suites))
}

fn cmd_eval(
    dataset: &Path,
    method: &str,
    out: Option<&Path>,
    jobs: Option<usize>,
    trace_dir: Option<PathBuf>,
    shared: &SharedFlags,
) -> i32 {
    let method: Method = match method.parse() {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };
    let resolved = match resolve_config(shared, jobs) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("results.jsonl"));

    let (records, suites) = match eval_pass(dataset, method, &resolved, trace_dir) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = write_records(&out, &records) {
        return fail(&e);
    }
    let report = match summarize(&records, &suites) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = write_summary(&report, &out) {
        return fail(&e);
    }
    let correct = records.iter().filter(|r| r.correct).count();
    println!(
        "{} items, {} correct ({:.1}%), results in {}",
        records.len(),
        correct,
        100.0 * correct as f64 / records.len().max(1) as f64,
        out.display()
    );
    EXIT_OK
}

fn cmd_analyze(results: &[PathBuf], report: &str, out: Option<&Path>) -> i32 {
    if results.is_empty() {
        return fail(&Error::Config("analyze needs at least one results file".into()));
    }
    let mut per_file: Vec<Vec<EvalRecord>> = Vec::new();
    for path in results {
        match load_records(path) {
            Ok(records) => per_file.push(records),
            Err(e) => return fail(&e),
        }
    }
    let all: Vec<EvalRecord> = per_file.iter().flatten().cloned().collect();
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("report"));
    let csv_path = PathBuf::from(format!("{}.csv", out.display()));
    let json_path = PathBuf::from(format!("{}.json", out.display()));

    let result: Result<()> = match report {
        "complexity" => task_complexity(&all, ComplexityOptions::default()).and_then(|map| {
            let mut writer = csv::Writer::from_path(&csv_path)?;
            writer.write_record(["item_id", "complexity"])?;
            for (id, c) in &map {
                writer.write_record([id.as_str(), &format!("{c}")])?;
            }
            writer.flush()?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&map)?)?;
            Ok(())
        }),
        "gains" => {
            if per_file.len() != 2 {
                return fail(&Error::Config(
                    "gains needs exactly two results files (arm A, arm B)".into(),
                ));
            }
            task_complexity(&all, ComplexityOptions::default())
                .and_then(|complexity| performance_gain(&per_file[0], &per_file[1], &complexity, 6))
                .and_then(|report| {
                    let mut writer = csv::Writer::from_path(&csv_path)?;
                    writer.write_record([
                        "complexity_lo",
                        "complexity_hi",
                        "n",
                        "min",
                        "q1",
                        "median",
                        "q3",
                        "mean",
                        "max",
                    ])?;
                    for b in &report.buckets {
                        writer.write_record([
                            format!("{:.4}", b.complexity_lo),
                            format!("{:.4}", b.complexity_hi),
                            b.n.to_string(),
                            format!("{}", b.min),
                            format!("{}", b.q1),
                            format!("{}", b.median),
                            format!("{}", b.q3),
                            format!("{}", b.mean),
                            format!("{}", b.max),
                        ])?;
                    }
                    writer.flush()?;
                    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
                    Ok(())
                })
        }
        "chains" => chain_lengths(&all).and_then(|rows| {
            let mut writer = csv::Writer::from_path(&csv_path)?;
            writer.write_record(["method", "model", "n", "mean_chain_length", "min", "max"])?;
            for r in &rows {
                writer.write_record([
                    r.method.clone(),
                    r.model.clone(),
                    r.n.to_string(),
                    format!("{:.2}", r.mean_chain_length),
                    r.min.to_string(),
                    r.max.to_string(),
                ])?;
            }
            writer.flush()?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&rows)?)?;
            Ok(())
        }),
        "throughput" => crate::eval::analysis::throughput(&all).and_then(|rows| {
            let mut writer = csv::Writer::from_path(&csv_path)?;
            writer.write_record(["model", "method", "total_tokens", "total_seconds", "tokens_per_sec"])?;
            for r in &rows {
                writer.write_record([
                    r.model.clone(),
                    r.method.clone(),
                    r.total_tokens.to_string(),
                    format!("{}", r.total_seconds),
                    format!("{:.2}", r.tokens_per_sec),
                ])?;
            }
            writer.flush()?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&rows)?)?;
            Ok(())
        }),
        other => {
            return fail(&Error::Config(format!(
                "unknown report `{other}`; expected complexity | gains | chains | throughput"
            )))
        }
    };

    match result {
        Ok(()) => {
            println!("wrote {} and {}", csv_path.display(), json_path.display());
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

fn cmd_ablate_means(
    dataset: &Path,
    out: Option<&Path>,
    jobs: Option<usize>,
    trace_dir: Option<PathBuf>,
    shared: &SharedFlags,
) -> i32 {
    let resolved = match resolve_config(shared, jobs) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let base = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("ablate"));

    let mut merged_csv: Vec<(String, SummaryReport)> = Vec::new();
    for mean in MeanKind::ALL {
        let mut arm = resolved.clone();
        arm.steering.mean_kind = mean;
        let arm_trace = trace_dir.as_ref().map(|d| d.join(mean.name()));
        let (records, suites) = match eval_pass(dataset, Method::SelfAnchor, &arm, arm_trace) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let arm_out = PathBuf::from(format!("{}.{}.jsonl", base.display(), mean.name()));
        if let Err(e) = write_records(&arm_out, &records) {
            return fail(&e);
        }
        match summarize(&records, &suites) {
            Ok(report) => merged_csv.push((mean.name().to_string(), report)),
            Err(e) => return fail(&e),
        }
        println!("mean {}: results in {}", mean.name(), arm_out.display());
    }

    let csv_path = PathBuf::from(format!("{}.means.csv", base.display()));
    let json_path = PathBuf::from(format!("{}.means.json", base.display()));
    let write = || -> Result<()> {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        writer.write_record([
            "mean",
            "suite",
            "method",
            "model",
            "n",
            "accuracy",
            "mean_chain_length",
            "tokens_per_sec",
        ])?;
        for (mean, report) in &merged_csv {
            for row in &report.rows {
                writer.write_record([
                    mean.clone(),
                    row.suite.clone(),
                    row.method.clone(),
                    row.model.clone(),
                    row.n.to_string(),
                    format!("{:.4}", row.accuracy),
                    format!("{:.2}", row.mean_chain_length),
                    format!("{:.2}", row.tokens_per_sec),
                ])?;
            }
        }
        writer.flush()?;
        let json: BTreeMap<&str, &SummaryReport> =
            merged_csv.iter().map(|(m, r)| (m.as_str(), r)).collect();
        std::fs::write(&json_path, serde_json::to_string_pretty(&json)?)?;
        Ok(())
    };
    match write() {
        Ok(()) => {
            println!("wrote {} and {}", csv_path.display(), json_path.display());
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

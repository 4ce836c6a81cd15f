//! The `atomr` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 backend
//! failure, 3 I/O failure.

use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::backend::{
    Backend, CacheBackend, CacheEntry, CacheMode, CallTag, HttpBackend, HttpConfig, Message, Script, ScriptedBackend,
};
use crate::bench::oracle::oracle_backend;
use crate::bench::runner::{default_workers, run_benchmark, BenchOptions, Strategy};
use crate::bench::score::score;
use crate::bench::task::{load_tasks, parse_task_line, write_tasks, TaskFormat};
use crate::bench::{gen_puzzle, Task};
use crate::checker::CheckerMode;
use crate::metrics::{
    deserialize_trace, serialize_trace, sft_jsonl, to_sft_records, trace_stats, SftFilter, SftOptions, TraceDoc,
    TraceEvaluation,
};
use crate::model::{chain_label, Problem};
use crate::prompts::PromptCatalog;
use crate::session::{run_session, SessionConfig, SessionError, SessionEvent};
use crate::sop::{load_sops, SopRegistry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Backend(anyhow::Error),
    #[error("{0:#}")]
    Io(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Backend(_) => EXIT_BACKEND,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{msg}"))
}

trait IoContext<T> {
    fn io(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T, E: std::error::Error + Send + Sync + 'static> IoContext<T> for Result<T, E> {
    fn io(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.with_context(what).map_err(CliError::Io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    Scripted,
    Replay,
    /// Answers from task gold; for harness checks.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheArg {
    Record,
    Replay,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Ar,
    SinglePass,
}

#[derive(Debug, Parser)]
#[command(name = "atomr", version, about = "Atomic reasoning engine and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem: a task record (JSON) or plain text.
    Solve {
        file: Option<PathBuf>,
        #[arg(long)]
        stdin: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a task suite and write a report.
    Bench {
        suite: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<TaskFormat>,
        /// Keep one trace file per trial.
        #[arg(long)]
        traces: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Export SFT records from a directory of traces.
    Synth {
        traces: PathBuf,
        #[arg(long, default_value = "correct-only", value_parser = parse_filter)]
        filter: SftFilter,
        #[arg(long)]
        max_chars: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a trace as a tree of chains.
    Inspect { trace: PathBuf },
    /// Generate a suite of unique-solution logic-grid puzzles.
    Genpuzzles {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        houses: usize,
        #[arg(long, default_value_t = 3)]
        attributes: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Write the suite here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<TaskFormat, String> {
    s.parse()
}

fn parse_filter(s: &str) -> Result<SftFilter, String> {
    s.parse()
}

fn parse_checker(s: &str) -> Result<CheckerMode, String> {
    s.parse()
}

/// Flags shared by `solve` and `bench`. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Response script for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long, value_parser = parse_checker)]
    pub checker: Option<CheckerMode>,
    #[arg(long)]
    pub sop_dir: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub cache: Option<CacheArg>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Root for run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    backend: Option<BackendKind>,
    base_url: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    script: Option<PathBuf>,
    max_rounds: Option<usize>,
    checker: Option<String>,
    sop_dir: Option<PathBuf>,
    prompt_dir: Option<PathBuf>,
    cache: Option<CacheArg>,
    cache_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    workers: Option<usize>,
    strategy: Option<StrategyArg>,
    session: Option<SessionConfig>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub http: HttpConfig,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub session: SessionConfig,
    pub sop_dir: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub cache: CacheArg,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub trials: usize,
    pub workers: usize,
    pub strategy: StrategyArg,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
        let file: FileConfig = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).io(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let mut session = file.session.unwrap_or_default();
        if let Some(r) = args.max_rounds.or(file.max_rounds) {
            session.router.max_rounds = r;
        }
        let file_checker = file.checker.as_deref().map(parse_checker).transpose().map_err(usage)?;
        if let Some(c) = args.checker.or(file_checker) {
            session.checker.mode = c;
        }
        session.router.validate().map_err(usage)?;
        let mut http = HttpConfig::default();
        if let Some(u) = args.base_url.clone().or(file.base_url) {
            http.base_url = u;
        }
        if let Some(k) = args.api_key_env.clone().or(file.api_key_env) {
            http.api_key_env = k;
        }
        let model = args.model.clone().or(file.model);
        if let Some(m) = &model {
            http.model = m.clone();
        }
        let out = args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("runs"));
        let trials = args.trials.or(file.trials).unwrap_or(3);
        if trials == 0 {
            return Err(usage("--trials must be at least 1"));
        }
        let cfg = RunConfig {
            backend: args.backend.or(file.backend).unwrap_or(BackendKind::Http),
            http,
            model,
            script: args.script.clone().or(file.script),
            session,
            sop_dir: args.sop_dir.clone().or(file.sop_dir),
            prompt_dir: args.prompt_dir.clone().or(file.prompt_dir),
            cache: args.cache.or(file.cache).unwrap_or(CacheArg::Off),
            cache_dir: args.cache_dir.clone().or(file.cache_dir).unwrap_or_else(|| out.join("cache")),
            out,
            trials,
            workers: args.workers.or(file.workers).unwrap_or_else(default_workers).max(1),
            strategy: args.strategy.or(file.strategy).unwrap_or(StrategyArg::Ar),
        };
        for (flag, p) in [("--sop-dir", &cfg.sop_dir), ("--prompt-dir", &cfg.prompt_dir)] {
            if let Some(p) = p {
                if !p.is_dir() {
                    return Err(CliError::Io(anyhow!("{flag} {} is not a directory", p.display())));
                }
            }
        }
        if cfg.backend == BackendKind::Scripted && cfg.script.is_none() {
            return Err(usage("--backend scripted needs --script"));
        }
        Ok(cfg)
    }

    fn sops(&self) -> Result<SopRegistry, CliError> {
        match &self.sop_dir {
            Some(d) => load_sops(d).map_err(|e| match e {
                crate::sop::SopError::Io { .. } => CliError::Io(e.into()),
                other => CliError::Usage(other.into()),
            }),
            None => Ok(SopRegistry::builtin()),
        }
    }

    fn prompts(&self) -> Result<PromptCatalog, CliError> {
        match &self.prompt_dir {
            Some(d) => PromptCatalog::with_overrides(d).map_err(|e| match e {
                crate::prompts::TemplateError::Io { .. } => CliError::Io(e.into()),
                other => CliError::Usage(other.into()),
            }),
            None => Ok(PromptCatalog::builtin()),
        }
    }

    /// Builds the backend, wrapped in a record/replay cache when requested.
    pub fn backend(&self, tasks: &[Task]) -> Result<Arc<dyn Backend>, CliError> {
        let base: Arc<dyn Backend> = match self.backend {
            BackendKind::Http => Arc::new(HttpBackend::new(self.http.clone()).map_err(|e| CliError::Backend(e.into()))?),
            BackendKind::Scripted => {
                let path = self.script.as_ref().ok_or_else(|| usage("--backend scripted needs --script"))?;
                let script = Script::load(path).io(|| format!("reading script {}", path.display()))?;
                let mut b = ScriptedBackend::from_script(script);
                if let Some(m) = &self.model {
                    b = b.with_model(m.clone());
                }
                Arc::new(b)
            }
            BackendKind::Replay => {
                let model = match &self.model {
                    Some(m) => m.clone(),
                    None => recorded_model(&self.cache_dir)?,
                };
                return Ok(Arc::new(CacheBackend::replay_only(&self.cache_dir, model)));
            }
            BackendKind::Oracle => {
                if tasks.is_empty() {
                    return Err(usage("--backend oracle needs task records with gold answers"));
                }
                Arc::new(oracle_backend(tasks))
            }
        };
        let mode = match self.cache {
            CacheArg::Off => return Ok(base),
            CacheArg::Record => CacheMode::Record,
            CacheArg::Replay => CacheMode::Replay,
        };
        let cache = CacheBackend::new(base, mode, &self.cache_dir).io(|| format!("creating cache dir {}", self.cache_dir.display()))?;
        Ok(Arc::new(cache))
    }
}

/// Model name stored in the first entry of a replay cache.
fn recorded_model(dir: &Path) -> Result<String, CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .io(|| format!("reading cache dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    let first = entries
        .first()
        .ok_or_else(|| CliError::Io(anyhow!("cache dir {} has no entries", dir.display())))?;
    let text = std::fs::read_to_string(first).io(|| format!("reading {}", first.display()))?;
    let entry: CacheEntry =
        serde_json::from_str(&text).map_err(|e| CliError::Io(anyhow!("corrupt cache entry {}: {e}", first.display())))?;
    Ok(entry.request.model)
}

/// Creates `<root>/<command>-<timestamp>` (with a numeric suffix on collision).
pub fn run_dir(root: &Path, command: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(root).io(|| format!("creating {}", root.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = root.join(format!("{command}-{stamp}"));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    std::fs::create_dir_all(&dir).io(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).io(|| format!("writing {}", path.display()))
}

/// Writes one line to stdout. A closed pipe (`atomr ... | head`) is not an error.
fn emit(text: impl std::fmt::Display) -> Result<(), CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(anyhow!("writing to stdout: {e}"))),
        _ => Ok(()),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn session_error(e: &SessionError) -> CliError {
    match e {
        SessionError::Backend(_) | SessionError::EmptyCompletion => CliError::Backend(anyhow!("{e}")),
        SessionError::Config(_) => usage(e),
        _ => CliError::Backend(anyhow!("{e}")),
    }
}

fn read_problem(file: Option<&Path>, stdin: bool) -> Result<(Problem, Option<Task>), CliError> {
    let text = match (file, stdin) {
        (Some(_), true) => return Err(usage("give a problem file or --stdin, not both")),
        (None, false) => return Err(usage("give a problem file or --stdin")),
        (Some(p), false) => std::fs::read_to_string(p).io(|| format!("reading problem {}", p.display()))?,
        (None, true) => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).io(|| "reading stdin".into())?;
            s
        }
    };
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        let task = parse_task_line(trimmed, None, "cli").map_err(|(_, m)| usage(format!("task record: {m}")))?;
        return Ok((task.problem(), Some(task)));
    }
    if trimmed.is_empty() {
        return Err(usage("problem text is empty"));
    }
    Ok((Problem::free_text(trimmed), None))
}

fn cmd_solve(file: Option<&Path>, stdin: bool, run: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let (problem, task) = read_problem(file, stdin)?;
    let tasks: Vec<Task> = task.iter().cloned().collect();
    let backend = cfg.backend(&tasks)?;
    let prompts = cfg.prompts()?;
    let sops = cfg.sops()?;
    let dir = run_dir(&cfg.out, "solve")?;

    if cfg.strategy == StrategyArg::SinglePass {
        let request = cfg
            .session
            .sampling
            .request(CallTag::Solve, vec![Message::user(problem.statement.clone())]);
        let res = backend.complete(&request).map_err(|e| CliError::Backend(e.into()))?;
        write(&dir.join("answer.txt"), &format!("{}\n", res.text.trim()))?;
        if let Some(t) = &task {
            eprintln!("verdict: {}", serde_json::to_string(&score(t, &res.text)).unwrap_or_default());
        }
        emit(res.text.trim())?;
        return Ok(());
    }

    let mut hook = |tree: &crate::model::AtomicTree, e: &SessionEvent| match e {
        SessionEvent::Decided(d) => log::info!("round {}: {d:?}", tree.round_count() + 1),
        SessionEvent::Triaged { domain } => log::info!("triage: {domain}"),
        _ => {}
    };
    let result = run_session(problem, &cfg.session, backend.as_ref(), &prompts, &sops, &mut [&mut hook]);
    match result {
        Ok(out) => {
            let evaluation = task.as_ref().map(|t| {
                let v = score(t, &out.answer.text);
                eprintln!("verdict: correct={} partial={:.3}", v.correct, v.partial);
                TraceEvaluation {
                    suite: t.suite.clone(),
                    correct: v.correct,
                    partial: v.partial,
                }
            });
            let stats = trace_stats(&out.tree);
            write(&dir.join("trace.json"), &serialize_trace(&TraceDoc::new(out.tree, evaluation)))?;
            write(&dir.join("stats.json"), &to_json(&stats))?;
            write(&dir.join("answer.txt"), &format!("{}\n", out.answer.text))?;
            eprintln!(
                "rounds={} chains={} revisions={} run dir: {}",
                stats.rounds,
                stats.chains,
                stats.revisions,
                dir.display()
            );
            emit(out.answer.text)?;
            Ok(())
        }
        Err(fail) => {
            if let Some(tree) = fail.tree {
                write(&dir.join("trace.json"), &serialize_trace(&TraceDoc::new(*tree, None)))?;
            }
            Err(session_error(&fail.error))
        }
    }
}

fn cmd_bench(suite: &Path, format: Option<TaskFormat>, traces: bool, run: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let loaded = load_tasks(suite, format).map_err(|e| match e {
        crate::bench::task::LoadError::Io { .. } => CliError::Io(e.into()),
        other => CliError::Usage(other.into()),
    })?;
    let backend = cfg.backend(&loaded.tasks)?;
    let prompts = cfg.prompts()?;
    let sops = cfg.sops()?;
    let dir = run_dir(&cfg.out, "bench")?;
    let strategy = match cfg.strategy {
        StrategyArg::Ar => Strategy::Ar(Box::new(cfg.session.clone())),
        StrategyArg::SinglePass => Strategy::SinglePass(cfg.session.sampling),
    };
    let suite_name = suite
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "suite".into());
    let opts = BenchOptions {
        trials: cfg.trials,
        workers: cfg.workers,
        keep_traces: traces,
        prompts: &prompts,
        sops: &sops,
    };
    let report = run_benchmark(&suite_name, &loaded.tasks, &strategy, backend.as_ref(), &opts).map_err(usage)?;
    write(&dir.join("report.json"), &to_json(&report))?;
    if !loaded.rejects.is_empty() {
        write(&dir.join("rejects.json"), &to_json(&loaded.rejects))?;
    }
    if traces {
        let tdir = dir.join("traces");
        std::fs::create_dir_all(&tdir).io(|| format!("creating {}", tdir.display()))?;
        for item in &report.items {
            for t in &item.trials {
                let Some(tree) = &t.trace else { continue };
                let eval = TraceEvaluation {
                    suite: suite_name.clone(),
                    correct: t.verdict.correct,
                    partial: t.verdict.partial,
                };
                let name = format!("{}-t{}.json", sanitize(&item.task_id), t.trial);
                write(&tdir.join(name), &serialize_trace(&TraceDoc::new(tree.clone(), Some(eval))))?;
            }
        }
    }
    let a = &report.aggregates;
    for (split, m) in &a.by_split {
        emit(format_args!("{split}: {m:.3}"))?;
    }
    emit(format_args!("overall: {:.3}", a.overall))?;
    eprintln!(
        "{} tasks x {} trials, {} rejects, {} backend failures, run dir: {}",
        report.items.len(),
        report.trials,
        loaded.rejects.len(),
        a.failures,
        dir.display()
    );
    let total = report.items.len() * report.trials;
    if a.failures == total {
        return Err(CliError::Backend(anyhow!("every trial failed at the backend")));
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    Ok(())
}

fn cmd_synth(traces: &Path, filter: SftFilter, max_chars: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let mut files = Vec::new();
    collect_json(traces, &mut files).io(|| format!("reading {}", traces.display()))?;
    files.sort();
    let mut docs = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).io(|| format!("reading {}", f.display()))?;
        match deserialize_trace(&text) {
            Ok(d) => docs.push(d),
            Err(e) if text.contains(crate::metrics::TRACE_FORMAT) => log::warn!("skipping {}: {e}", f.display()),
            Err(e) => log::debug!("skipping {}: {e}", f.display()),
        }
    }
    let records = to_sft_records(
        &docs,
        SftOptions {
            filter,
            max_reasoning_chars: max_chars,
        },
    );
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("runs"));
    let dir = run_dir(&root, "synth")?;
    let path = dir.join("sft.jsonl");
    write(&path, &sft_jsonl(&records))?;
    emit(format_args!("{} records from {} traces -> {}", records.len(), docs.len(), path.display()))?;
    Ok(())
}

/// Human-readable listing of a trace: chains with status and branch point,
/// then each step with its check verdicts.
pub fn inspect_text(doc: &TraceDoc) -> String {
    let tree = &doc.tree;
    let mut s = format!("problem: {}\n", tree.problem().id);
    for c in tree.chains() {
        s.push_str(&format!("{} [{}]", chain_label(c), c.status));
        if let Some(bp) = c.parent {
            let step = tree.inherited_len(bp.chain) + bp.index + 1;
            s.push_str(&format!(" replaces Step {step} of Chain {}", bp.chain.0 + 1));
        }
        s.push('\n');
        for id in &c.node_ids {
            let Some(n) = tree.node(*id) else { continue };
            let step = tree.step_label(*id).unwrap_or(0);
            let checks: Vec<String> = n
                .check_reports
                .iter()
                .map(|r| {
                    if r.is_error() {
                        let kinds: Vec<&str> = r.kinds.iter().map(|k| k.name()).collect();
                        format!("error({})", kinds.join(", "))
                    } else {
                        "ok".into()
                    }
                })
                .collect();
            s.push_str(&format!("  Step {step}: {}", n.action.label()));
            if !checks.is_empty() {
                s.push_str(&format!(" [check: {}]", checks.join(" -> ")));
            }
            if n.revised() {
                s.push_str(&format!(" (revised x{})", n.revisions));
            }
            s.push('\n');
        }
        if let Some(sum) = &c.summary {
            let first = sum.lines().next().unwrap_or("");
            s.push_str(&format!("  summary: {first}\n"));
        }
    }
    match tree.terminated() {
        Some(t) => s.push_str(&format!("terminated: {:?}\nanswer: {}\n", t.mode, t.final_answer)),
        None => s.push_str("not terminated\n"),
    }
    if let Some(e) = &doc.evaluation {
        s.push_str(&format!("evaluation: correct={} partial={:.3}\n", e.correct, e.partial));
    }
    s
}

fn cmd_inspect(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).io(|| format!("reading {}", path.display()))?;
    let doc = deserialize_trace(&text).map_err(|e| CliError::Io(anyhow!("{}: {e}", path.display())))?;
    emit(inspect_text(&doc).trim_end())?;
    Ok(())
}

fn cmd_genpuzzles(seed: u64, houses: usize, attributes: usize, count: usize, output: Option<&Path>) -> Result<(), CliError> {
    let tasks = (0..count as u64)
        .map(|k| gen_puzzle(seed + k, houses, attributes).map(|p| p.task))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    match output {
        Some(p) => {
            write_tasks(p, &tasks).io(|| format!("writing {}", p.display()))?;
            eprintln!("{} puzzles -> {}", tasks.len(), p.display());
        }
        None => {
            for t in &tasks {
                emit(serde_json::to_string(&t.to_record()).expect("records serialize"))?;
            }
        }
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { file, stdin, run } => cmd_solve(file.as_deref(), stdin, &run),
        Command::Bench { suite, format, traces, run } => cmd_bench(&suite, format, traces, &run),
        Command::Synth {
            traces,
            filter,
            max_chars,
            out,
        } => cmd_synth(&traces, filter, max_chars, out.as_deref()),
        Command::Inspect { trace } => cmd_inspect(&trace),
        Command::Genpuzzles {
            seed,
            houses,
            attributes,
            count,
            output,
        } => cmd_genpuzzles(seed, houses, attributes, count, output.as_deref()),
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

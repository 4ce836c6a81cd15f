//! Multi-trial suite execution and aggregation.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::score::{score, Failure, Verdict};
use super::task::Task;
use crate::backend::{Backend, CallTag, Message};
use crate::engine::Sampling;
use crate::model::{AtomicTree, Usage};
use crate::prompts::PromptCatalog;
use crate::session::{run_session, SessionConfig};
use crate::sop::SopRegistry;

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Ar(Box<SessionConfig>),
    /// One solver call carrying only the problem statement.
    SinglePass(Sampling),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ar(_) => "ar",
            Strategy::SinglePass(_) => "single-pass",
        }
    }
}

pub struct BenchOptions<'a> {
    pub trials: usize,
    pub workers: usize,
    /// Keep each AR trace in the report (not serialized).
    pub keep_traces: bool,
    pub prompts: &'a PromptCatalog,
    pub sops: &'a SopRegistry,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub verdict: Verdict,
    pub rounds: usize,
    pub usage: Usage,
    pub final_text: String,
    #[serde(skip)]
    pub trace: Option<AtomicTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub task_id: String,
    pub split: Option<super::task::Split>,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean success over every (task, trial) pair.
    pub overall: f64,
    pub by_split: BTreeMap<String, f64>,
    /// Success rate of each trial across the suite.
    pub per_trial: Vec<f64>,
    pub mean_partial: f64,
    pub failures: usize,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: String,
    pub strategy: String,
    pub model: String,
    pub trials: usize,
    pub items: Vec<ItemResult>,
    pub aggregates: Aggregates,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("no tasks to run")]
    NoTasks,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn indicator(v: &Verdict) -> f64 {
    if v.correct {
        1.0
    } else {
        0.0
    }
}

pub fn compute_aggregates(items: &[ItemResult], trials: usize) -> Aggregates {
    let all = || items.iter().flat_map(|i| i.trials.iter());
    let mut splits: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for item in items {
        if let Some(s) = item.split {
            splits
                .entry(s.to_string())
                .or_default()
                .extend(item.trials.iter().map(|t| indicator(&t.verdict)));
        }
    }
    let mut usage = Usage::default();
    for t in all() {
        usage.calls += t.usage.calls;
        usage.prompt_tokens += t.usage.prompt_tokens;
        usage.completion_tokens += t.usage.completion_tokens;
        usage.latency_ms += t.usage.latency_ms;
    }
    Aggregates {
        overall: mean(all().map(|t| indicator(&t.verdict))),
        by_split: splits.into_iter().map(|(k, v)| (k, mean(v))).collect(),
        per_trial: (0..trials)
            .map(|k| mean(all().filter(|t| t.trial == k).map(|t| indicator(&t.verdict))))
            .collect(),
        mean_partial: mean(all().map(|t| t.verdict.partial)),
        failures: all().filter(|t| matches!(t.verdict.failure, Some(Failure::Backend(_)))).count(),
        usage,
    }
}

impl BenchReport {
    /// Whether the stored aggregates match a recomputation from the verdicts.
    pub fn aggregates_consistent(&self) -> bool {
        let fresh = compute_aggregates(&self.items, self.trials);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let a = &self.aggregates;
        close(a.overall, fresh.overall)
            && close(a.mean_partial, fresh.mean_partial)
            && a.by_split.len() == fresh.by_split.len()
            && a.by_split.iter().all(|(k, v)| fresh.by_split.get(k).is_some_and(|f| close(*v, *f)))
            && a.per_trial.len() == fresh.per_trial.len()
            && a.per_trial.iter().zip(&fresh.per_trial).all(|(x, y)| close(*x, *y))
            && a.failures == fresh.failures
            && a.usage == fresh.usage
    }

    pub fn traces(&self) -> impl Iterator<Item = (&str, usize, &AtomicTree)> {
        self.items.iter().flat_map(|i| {
            i.trials
                .iter()
                .filter_map(move |t| t.trace.as_ref().map(|tr| (i.task_id.as_str(), t.trial, tr)))
        })
    }
}

fn run_trial(task: &Task, trial: usize, strategy: &Strategy, backend: &dyn Backend, opts: &BenchOptions) -> TrialResult {
    match strategy {
        Strategy::Ar(config) => match run_session(task.problem(), config, backend, opts.prompts, opts.sops, &mut []) {
            Ok(out) => TrialResult {
                trial,
                verdict: score(task, &out.answer.text),
                rounds: out.tree.round_count(),
                usage: out.tree.usage(),
                final_text: out.answer.text,
                trace: opts.keep_traces.then_some(out.tree),
            },
            Err(fail) => {
                log::warn!("task {} trial {trial}: {}", task.id, fail.error);
                let tree = fail.tree.map(|t| *t);
                TrialResult {
                    trial,
                    verdict: Verdict::failed(Failure::Backend(fail.error.to_string())),
                    rounds: tree.as_ref().map_or(0, AtomicTree::round_count),
                    usage: tree.as_ref().map(AtomicTree::usage).unwrap_or_default(),
                    final_text: String::new(),
                    trace: if opts.keep_traces { tree } else { None },
                }
            }
        },
        Strategy::SinglePass(sampling) => {
            let request = sampling.request(CallTag::Solve, vec![Message::user(task.statement.clone())]);
            match backend.complete(&request) {
                Ok(res) => TrialResult {
                    trial,
                    verdict: score(task, &res.text),
                    rounds: 1,
                    usage: Usage {
                        calls: 1,
                        prompt_tokens: res.usage.prompt_tokens,
                        completion_tokens: res.usage.completion_tokens,
                        latency_ms: res.latency_ms,
                    },
                    final_text: res.text,
                    trace: None,
                },
                Err(e) => {
                    log::warn!("task {} trial {trial}: {e}", task.id);
                    TrialResult {
                        trial,
                        verdict: Verdict::failed(Failure::Backend(e.to_string())),
                        rounds: 0,
                        usage: Usage::default(),
                        final_text: String::new(),
                        trace: None,
                    }
                }
            }
        }
    }
}

/// Runs every task `trials` times. Tasks are spread over a worker pool;
/// the trials of one task run in order on one worker.
pub fn run_benchmark(
    suite: &str,
    tasks: &[Task],
    strategy: &Strategy,
    backend: &dyn Backend,
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if opts.trials == 0 {
        return Err(BenchError::NoTrials);
    }
    if tasks.is_empty() {
        return Err(BenchError::NoTasks);
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<ItemResult>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let workers = opts.workers.clamp(1, tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let trials = (0..opts.trials)
                    .map(|k| run_trial(task, k, strategy, backend, opts))
                    .collect();
                *slots[i].lock().unwrap() = Some(ItemResult {
                    task_id: task.id.clone(),
                    split: task.split,
                    trials,
                });
            });
        }
    });
    let items: Vec<ItemResult> = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every task slot is filled"))
        .collect();
    let aggregates = compute_aggregates(&items, opts.trials);
    Ok(BenchReport {
        suite: suite.to_string(),
        strategy: strategy.name().to_string(),
        model: backend.model().to_string(),
        trials: opts.trials,
        items,
        aggregates,
    })
}

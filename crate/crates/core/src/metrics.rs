//! Entropy diagnostics, trace statistics, trace documents and SFT export.
//!
//! Entropies are in bits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checker::Verdict as CheckVerdict;
use crate::model::{AtomicAction, AtomicTree};

pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("per-action entropy must be finite and non-negative, got {0}")]
    NegativeEntropy(f64),
}

fn check_probabilities(ps: &[f64]) -> Result<(), MetricsError> {
    if ps.is_empty() {
        return Err(MetricsError::InvalidDistribution("no outcomes".into()));
    }
    if let Some(p) = ps.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(MetricsError::InvalidDistribution(format!("probability {p}")));
    }
    let sum: f64 = ps.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(MetricsError::InvalidDistribution(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// A distribution over labeled outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    outcomes: Vec<(String, f64)>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<(String, f64)>) -> Result<Self, MetricsError> {
        let ps: Vec<f64> = outcomes.iter().map(|(_, p)| *p).collect();
        check_probabilities(&ps)?;
        Ok(DiscreteDistribution { outcomes })
    }

    pub fn uniform(k: usize) -> Result<Self, MetricsError> {
        Self::new((0..k).map(|i| (i.to_string(), 1.0 / k as f64)).collect())
    }

    /// Empirical frequencies of `samples`.
    pub fn from_samples<S: AsRef<str>>(samples: &[S]) -> Result<Self, MetricsError> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in samples {
            *counts.entry(s.as_ref()).or_default() += 1;
        }
        let n = samples.len() as f64;
        Self::new(counts.into_iter().map(|(k, c)| (k.to_string(), c as f64 / n)).collect())
    }

    pub fn outcomes(&self) -> &[(String, f64)] {
        &self.outcomes
    }
}

/// `-Σ p log₂ p`, with `0 · log 0 = 0`.
pub fn entropy(dist: &DiscreteDistribution) -> f64 {
    entropy_bits(dist.outcomes.iter().map(|(_, p)| *p))
}

fn entropy_bits(ps: impl Iterator<Item = f64>) -> f64 {
    let h: f64 = ps.filter(|p| *p > 0.0).map(|p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Entropy of a bare probability vector.
pub fn entropy_of(ps: &[f64]) -> Result<f64, MetricsError> {
    check_probabilities(ps)?;
    Ok(entropy_bits(ps.iter().copied()))
}

/// `Σ_j r_j E_j`: the entropy of a step, weighted by how likely each action
/// is to be chosen there.
pub fn weighted_step_entropy(row: &[f64], action_entropies: &[f64]) -> Result<f64, MetricsError> {
    if row.len() != action_entropies.len() {
        return Err(MetricsError::DimensionMismatch {
            left: row.len(),
            right: action_entropies.len(),
        });
    }
    check_probabilities(row)?;
    if let Some(e) = action_entropies.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(MetricsError::NegativeEntropy(*e));
    }
    Ok(row.iter().zip(action_entropies).map(|(r, e)| r * e).sum())
}

pub const ACTION_COUNT: usize = 6;

/// Per-step action selection probabilities; row `i` is step `i + 1`, column
/// `j` is `AtomicAction::ALL[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSelectionProfile {
    rows: Vec<[f64; ACTION_COUNT]>,
}

impl ActionSelectionProfile {
    pub fn new(rows: Vec<[f64; ACTION_COUNT]>) -> Result<Self, MetricsError> {
        for r in &rows {
            check_probabilities(r)?;
        }
        Ok(ActionSelectionProfile { rows })
    }

    /// Frequencies of the action taken at each step along the final path of
    /// every trace. Steps no trace reaches are omitted.
    pub fn from_traces(trees: &[AtomicTree]) -> Self {
        let mut counts: Vec<[usize; ACTION_COUNT]> = Vec::new();
        for t in trees {
            for (i, id) in t.active_path().iter().enumerate() {
                let Some(n) = t.node(*id) else { continue };
                if counts.len() <= i {
                    counts.resize(i + 1, [0; ACTION_COUNT]);
                }
                counts[i][n.action.index()] += 1;
            }
        }
        let rows = counts
            .into_iter()
            .map(|c| {
                let total: usize = c.iter().sum();
                c.map(|x| x as f64 / total as f64)
            })
            .collect();
        ActionSelectionProfile { rows }
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn actions(&self) -> usize {
        ACTION_COUNT
    }

    pub fn row(&self, step: usize) -> Option<&[f64; ACTION_COUNT]> {
        self.rows.get(step)
    }

    /// Weighted entropy of every step.
    pub fn weighted_entropies(&self, action_entropies: &[f64]) -> Result<Vec<f64>, MetricsError> {
        self.rows
            .iter()
            .map(|r| weighted_step_entropy(r, action_entropies))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStats {
    pub rounds: usize,
    /// Keyed by action key; all six actions are always present.
    pub actions: BTreeMap<String, usize>,
    /// Chains holding at least one node of their own.
    pub chains: usize,
    pub backtracks: usize,
    pub checks: usize,
    pub check_errors: usize,
    pub revisions: usize,
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Sum of backend call latencies.
    pub wall_time_ms: u64,
}

pub fn trace_stats(tree: &AtomicTree) -> TraceStats {
    let mut actions: BTreeMap<String, usize> = AtomicAction::ALL.iter().map(|a| (a.key().to_string(), 0)).collect();
    for n in tree.nodes() {
        *actions.entry(n.action.key().to_string()).or_default() += 1;
    }
    let usage = tree.usage();
    TraceStats {
        rounds: tree.round_count(),
        actions,
        chains: tree.chains().iter().filter(|c| !c.node_ids.is_empty()).count(),
        backtracks: tree.chains().len().saturating_sub(1),
        checks: tree.nodes().iter().map(|n| n.check_reports.len()).sum(),
        check_errors: tree
            .nodes()
            .iter()
            .flat_map(|n| &n.check_reports)
            .filter(|r| r.verdict == CheckVerdict::Error)
            .count(),
        revisions: tree.nodes().iter().map(|n| n.revisions as usize).sum(),
        calls: usage.calls,
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        wall_time_ms: usage.latency_ms,
    }
}

pub const TRACE_FORMAT: &str = "atomic-trace/1";

/// Scoring attached to a trace by the benchmark harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvaluation {
    pub suite: String,
    pub correct: bool,
    pub partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDoc {
    pub format: String,
    pub tree: AtomicTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<TraceEvaluation>,
}

impl TraceDoc {
    pub fn new(tree: AtomicTree, evaluation: Option<TraceEvaluation>) -> Self {
        TraceDoc {
            format: TRACE_FORMAT.into(),
            tree,
            evaluation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported trace format `{0}`")]
    Format(String),
    #[error("trace violates tree invariants: {0}")]
    Invalid(String),
}

/// Pretty-printed JSON with fields in declaration order and a trailing
/// newline. Equal documents serialize to identical bytes.
pub fn serialize_trace(doc: &TraceDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("trace documents always serialize");
    s.push('\n');
    s
}

pub fn deserialize_trace(text: &str) -> Result<TraceDoc, TraceParseError> {
    let doc: TraceDoc = serde_json::from_str(text).map_err(|e| TraceParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format != TRACE_FORMAT {
        return Err(TraceParseError::Format(doc.format));
    }
    doc.tree.validate().map_err(TraceParseError::Invalid)?;
    Ok(doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftFilter {
    All,
    #[default]
    CorrectOnly,
}

impl std::str::FromStr for SftFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "all" => Ok(SftFilter::All),
            "correct_only" | "correct" => Ok(SftFilter::CorrectOnly),
            other => Err(format!("unknown filter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SftOptions {
    pub filter: SftFilter,
    /// Drop records whose reasoning exceeds this many characters.
    pub max_reasoning_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMeta {
    pub suite: String,
    pub rounds: usize,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub reasoning: String,
    pub answer: String,
    pub meta: SftMeta,
}

/// `Step k (<action>): <content>` for each node on the final path.
pub fn linearize(tree: &AtomicTree) -> String {
    tree.active_path()
        .iter()
        .enumerate()
        .filter_map(|(i, id)| tree.node(*id).map(|n| format!("Step {} ({}): {}", i + 1, n.action.label(), n.content.trim())))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds SFT records from terminated traces. Traces without an answer or
/// reasoning are skipped; under `CorrectOnly` so are traces not scored
/// correct.
pub fn to_sft_records(docs: &[TraceDoc], opts: SftOptions) -> Vec<SftRecord> {
    docs.iter()
        .filter_map(|d| {
            let correct = d.evaluation.as_ref().map(|e| e.correct);
            if opts.filter == SftFilter::CorrectOnly && correct != Some(true) {
                return None;
            }
            let answer = d.tree.terminated()?.final_answer.trim().to_string();
            let reasoning = linearize(&d.tree);
            let instruction = d.tree.problem().statement.trim().to_string();
            if answer.is_empty() || reasoning.is_empty() || instruction.is_empty() {
                return None;
            }
            if opts.max_reasoning_chars.is_some_and(|m| reasoning.chars().count() > m) {
                return None;
            }
            Some(SftRecord {
                instruction,
                reasoning,
                answer,
                meta: SftMeta {
                    suite: d.evaluation.as_ref().map(|e| e.suite.clone()).unwrap_or_default(),
                    rounds: d.tree.round_count(),
                    correct,
                },
            })
        })
        .collect()
}

/// One JSON record per line.
pub fn sft_jsonl(records: &[SftRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

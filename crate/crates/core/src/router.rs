//! Cognitive routing: decides each round whether to extend the active chain,
//! backtrack to an earlier step, or stop.
//!
//! Engine rules, highest priority first:
//! 1. round cap reached: terminate (passive)
//! 2. last step is a summary: backtrack once after the first summary when
//!    configured and the chain cap allows, otherwise terminate (solved)
//! 3. last step generated hypotheses: verify them
//! 4. a finish proposal on an unverified path: verify first
//! 5. otherwise the routing agent's proposal, with a fallback when its reply
//!    cannot be parsed after one re-ask

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CallTag};
use crate::engine::CallContext;
use crate::model::{
    render_tree, squash, AtomicAction, AtomicTree, ChainId, NodeId, NoteKind, TerminationMode, TreeError,
};
use crate::prompts::TemplateName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BacktrackReason {
    IncorrectContent,
    KeyNode,
    UnexploredBranch,
}

impl fmt::Display for BacktrackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BacktrackReason::IncorrectContent => "incorrect content",
            BacktrackReason::KeyNode => "key node",
            BacktrackReason::UnexploredBranch => "unexplored branch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum RoutingDecision {
    Extend { action: AtomicAction, guidance: String },
    Backtrack { target: NodeId, reason: BacktrackReason },
    Terminate { mode: TerminationMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub max_rounds: usize,
    pub force_verify_on_first_finish: bool,
    pub max_chains: usize,
    pub backtrack_after_summary: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            max_rounds: 12,
            force_verify_on_first_finish: true,
            max_chains: 4,
            backtrack_after_summary: true,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds < 2 {
            return Err(format!("max_rounds must be at least 2, got {}", self.max_rounds));
        }
        if self.max_chains < 1 {
            return Err("max_chains must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RouterError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("active path has no nodes to backtrack to")]
    NoBacktrackCandidate,
}

/// What the routing agent asked for, before engine rules apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    Action(AtomicAction),
    Terminate,
    Backtrack,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRoute {
    pub proposal: Proposal,
    pub guidance: Option<String>,
}

fn action_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*(?:next\s+)?action[\s*_]*[:：][\s*_]*(.+?)\s*$").unwrap())
}

fn guidance_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*guidance[\s*_]*[:：][\s*_]*").unwrap())
}

fn parse_proposal(value: &str) -> Option<Proposal> {
    match squash(value).as_str() {
        "TERMINATE" | "TERMINATION" | "STOP" => Some(Proposal::Terminate),
        "BACKTRACK" | "BACKTRACKING" => Some(Proposal::Backtrack),
        _ => value.parse().ok().map(Proposal::Action),
    }
}

/// Text after the last `GUIDANCE:` marker, up to a later `ACTION:` line.
pub fn parse_guidance(text: &str) -> Option<String> {
    let m = guidance_re().find_iter(text).last()?;
    let tail = &text[m.end()..];
    let end = action_line_re().find(tail).map_or(tail.len(), |a| a.start());
    let g = tail[..end].trim();
    (!g.is_empty()).then(|| g.to_string())
}

/// Reads the `ACTION:` / `GUIDANCE:` footer of a routing reply.
pub fn parse_routing(text: &str) -> Option<ParsedRoute> {
    let cap = action_line_re().captures_iter(text).last()?;
    let proposal = parse_proposal(&cap[1])?;
    Some(ParsedRoute {
        proposal,
        guidance: parse_guidance(text),
    })
}

/// Generic instruction used when the routing agent gives none.
pub fn default_guidance(action: AtomicAction) -> &'static str {
    match action {
        AtomicAction::PremiseDiscovery => {
            "Extract every condition, constraint and requested output from the problem statement and restate each precisely."
        }
        AtomicAction::PremiseRetrieval => {
            "Restate the facts and earlier conclusions relevant to the next open sub-problem."
        }
        AtomicAction::PremiseSummarization => {
            "Summarize what has been established so far, what has been ruled out and what remains open."
        }
        AtomicAction::HypothesisGeneration => {
            "Propose candidate answers for the next open sub-problem, one per line starting with \"Hypothesis <k>:\", marked as unverified."
        }
        AtomicAction::HypothesisVerification => {
            "Check each pending hypothesis against every premise and earlier conclusion, and state whether it is confirmed or rejected."
        }
        AtomicAction::SummaryFinished => "Write the final answer in the required format from the verified conclusions.",
    }
}

const ROUTING_REMINDER: &str = "Your reply did not end with a valid footer. Reply again and end with `ACTION: <action name>` and `GUIDANCE: <instructions>` lines.";
const BACKTRACK_REMINDER: &str = "Your reply did not name a target. Reply again and end with `TARGET: Step <k>` and `REASON: <incorrect content | key node | unexplored branch>` lines.";

fn routing_messages(tree: &AtomicTree, schedule: &str, ctx: &CallContext) -> Vec<crate::backend::Message> {
    let rendered = render_tree(tree, ctx.render_budget);
    let schedule = if schedule.trim().is_empty() {
        String::new()
    } else {
        format!("4. Domain-specific scheduling hints: {}\n", schedule.trim())
    };
    ctx.prompts.render(
        TemplateName::Routing,
        &[("problem", &tree.problem().statement), ("tree", &rendered), ("schedule", &schedule)],
    )
}

/// True when some verification follows the last hypothesis generation on
/// the active path.
pub fn path_is_verified(tree: &AtomicTree) -> bool {
    let actions: Vec<AtomicAction> = tree
        .active_path()
        .iter()
        .filter_map(|id| tree.node(*id).map(|n| n.action))
        .collect();
    match actions.iter().rposition(|a| *a == AtomicAction::HypothesisGeneration) {
        Some(i) => actions[i + 1..].contains(&AtomicAction::HypothesisVerification),
        None => false,
    }
}

fn summary_count(tree: &AtomicTree) -> usize {
    tree.nodes()
        .iter()
        .filter(|n| n.action == AtomicAction::SummaryFinished)
        .count()
}

/// Action to run instead of a finish on an unverified path.
fn verification_step(tree: &AtomicTree) -> AtomicAction {
    if tree.path_has_hypothesis() {
        AtomicAction::HypothesisVerification
    } else {
        AtomicAction::HypothesisGeneration
    }
}

fn extend(action: AtomicAction, guidance: Option<String>) -> RoutingDecision {
    RoutingDecision::Extend {
        action,
        guidance: guidance
            .filter(|g| !g.trim().is_empty())
            .unwrap_or_else(|| default_guidance(action).to_string()),
    }
}

fn backtrack_or_stop(tree: &mut AtomicTree, config: &RouterConfig, ctx: &CallContext) -> Result<RoutingDecision, RouterError> {
    if tree.chains().len() >= config.max_chains {
        tree.note(NoteKind::BranchCapReached, format!("{} chains; terminating", tree.chains().len()));
        return Ok(RoutingDecision::Terminate { mode: TerminationMode::PassiveLimit });
    }
    let (target, reason) = select_backtrack_target(tree, ctx)?;
    Ok(RoutingDecision::Backtrack { target, reason })
}

/// Decides the next move. `schedule` carries SOP scheduling hints for the
/// routing prompt.
pub fn decide(
    tree: &mut AtomicTree,
    config: &RouterConfig,
    schedule: &str,
    ctx: &CallContext,
) -> Result<RoutingDecision, RouterError> {
    if tree.is_terminated() {
        return Err(TreeError::Terminated.into());
    }
    if tree.round_count() >= config.max_rounds {
        return Ok(RoutingDecision::Terminate { mode: TerminationMode::PassiveLimit });
    }
    let last = tree.last_active_node().map(|n| n.action);

    if last == Some(AtomicAction::SummaryFinished) {
        if config.backtrack_after_summary && summary_count(tree) == 1 && tree.chains().len() < config.max_chains {
            let (target, reason) = select_backtrack_target(tree, ctx)?;
            return Ok(RoutingDecision::Backtrack { target, reason });
        }
        return Ok(RoutingDecision::Terminate { mode: TerminationMode::ActiveSolved });
    }

    if last == Some(AtomicAction::HypothesisGeneration) {
        let messages = routing_messages(tree, schedule, ctx);
        let reply = ctx.call(tree, CallTag::Routing, messages)?;
        return Ok(extend(AtomicAction::HypothesisVerification, parse_guidance(&reply)));
    }

    let messages = routing_messages(tree, schedule, ctx);
    let (parsed, _) = ctx.ask(tree, CallTag::Routing, messages, ROUTING_REMINDER, parse_routing)?;
    let Some(route) = parsed else {
        tree.note(NoteKind::RouterFallback, "unparseable routing reply");
        return Ok(extend(AtomicAction::PremiseSummarization, None));
    };

    let unverified = !path_is_verified(tree);
    match route.proposal {
        Proposal::Action(AtomicAction::SummaryFinished) | Proposal::Terminate
            if unverified && config.force_verify_on_first_finish =>
        {
            let action = verification_step(tree);
            tree.note(NoteKind::ActionCoerced, format!("finish on unverified path became {}", action.label()));
            Ok(extend(action, None))
        }
        Proposal::Terminate => Ok(RoutingDecision::Terminate { mode: TerminationMode::ActiveSolved }),
        Proposal::Action(AtomicAction::HypothesisVerification) if !tree.path_has_hypothesis() => {
            tree.note(NoteKind::ActionCoerced, "verification without hypothesis became generation");
            Ok(extend(AtomicAction::HypothesisGeneration, None))
        }
        Proposal::Action(action) => Ok(extend(action, route.guidance)),
        Proposal::Backtrack if tree.active_path().is_empty() => {
            tree.note(NoteKind::ActionCoerced, "backtrack on empty path became premise discovery");
            Ok(extend(AtomicAction::PremiseDiscovery, None))
        }
        Proposal::Backtrack => backtrack_or_stop(tree, config, ctx),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetSpec {
    pub chain: Option<usize>,
    pub step: usize,
    pub reason: Option<BacktrackReason>,
}

fn target_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[\s>#*_\-]*target[\s*_]*[:：][\s*_]*(?:\[?\s*chain\s*(\d+)\s*\]?\s*[,/]?\s*)?(?:step|node)?\s*(\d+)").unwrap()
    })
}

fn reason_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*reason[\s*_]*[:：][\s*_]*(.+)$").unwrap())
}

pub fn parse_reason(s: &str) -> Option<BacktrackReason> {
    let s = s.to_ascii_lowercase();
    if s.contains("incorrect") || s.contains("error") || s.contains("wrong") {
        Some(BacktrackReason::IncorrectContent)
    } else if s.contains("unexplored") || s.contains("branch") {
        Some(BacktrackReason::UnexploredBranch)
    } else if s.contains("key") {
        Some(BacktrackReason::KeyNode)
    } else {
        None
    }
}

/// Reads the `TARGET:` / `REASON:` footer of a backtracking reply.
pub fn parse_backtrack(text: &str) -> Option<TargetSpec> {
    let cap = target_re().captures_iter(text).last()?;
    let step = cap[2].parse().ok()?;
    let chain = cap.get(1).and_then(|c| c.as_str().parse().ok());
    let reason = reason_re()
        .captures_iter(text)
        .last()
        .and_then(|r| parse_reason(&r[1]));
    Some(TargetSpec { chain, step, reason })
}

fn resolve_target(tree: &AtomicTree, spec: &TargetSpec) -> Option<NodeId> {
    if spec.step == 0 {
        return None;
    }
    let path = tree.active_path();
    let node = match spec.chain {
        Some(c) if c >= 1 => {
            let chain_path = tree.path_of(ChainId(c as u32 - 1));
            *chain_path.get(spec.step - 1)?
        }
        _ => *path.get(spec.step - 1)?,
    };
    path.contains(&node).then_some(node)
}

/// Deepest hypothesis generation on the active path, else its last node.
pub fn fallback_target(tree: &AtomicTree) -> Option<NodeId> {
    let path = tree.active_path();
    path.iter()
        .rev()
        .find(|id| tree.node(**id).is_some_and(|n| n.action == AtomicAction::HypothesisGeneration))
        .or(path.last())
        .copied()
}

/// Asks the routing agent where to branch from. Off-path or unparseable
/// answers fall back to [`fallback_target`].
pub fn select_backtrack_target(
    tree: &mut AtomicTree,
    ctx: &CallContext,
) -> Result<(NodeId, BacktrackReason), RouterError> {
    let fallback = fallback_target(tree).ok_or(RouterError::NoBacktrackCandidate)?;
    let rendered = render_tree(tree, ctx.render_budget);
    let mut chain = String::new();
    for id in tree.active_path() {
        let n = tree.node(id).expect("path nodes exist");
        let label = tree.step_label(id).unwrap_or(0);
        let first_line = n.content.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let excerpt: String = first_line.chars().take(160).collect();
        chain.push_str(&format!("Step {label}: {} - {excerpt}\n", n.action.label()));
    }
    let messages = ctx.prompts.render(
        TemplateName::Backtrack,
        &[("problem", &tree.problem().statement), ("tree", &rendered), ("chain", chain.trim_end())],
    );
    let (parsed, _) = ctx.ask(tree, CallTag::Backtrack, messages, BACKTRACK_REMINDER, parse_backtrack)?;
    match parsed.and_then(|spec| resolve_target(tree, &spec).map(|n| (n, spec.reason))) {
        Some((node, reason)) => Ok((node, reason.unwrap_or(BacktrackReason::KeyNode))),
        None => {
            tree.note(NoteKind::BacktrackFallback, format!("falling back to {fallback}"));
            Ok((fallback, BacktrackReason::KeyNode))
        }
    }
}

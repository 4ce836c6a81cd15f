//! Step checker: category-specific error taxonomy, verdict parsing and the
//! bounded check/revise loop.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CallTag};
use crate::engine::CallContext;
use crate::model::{
    render_tree, squash, ActionCategory, AtomicAction, AtomicTree, NodeFlags, NodeId, NoteKind, TreeError,
};
use crate::prompts::TemplateName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ContentConflict,
    LogicalContradiction,
    ExpressionInconsistency,
    CalculationError,
    CommonSenseError,
    RecapitulationError,
    IgnoringOfPremises,
    MisusingOfPremises,
    ConclusionError,
    ResultOmission,
    ResultsInconsistency,
    JudgmentError,
    SortingError,
}

const PREMISE_KINDS: [ErrorKind; 3] = [
    ErrorKind::ContentConflict,
    ErrorKind::LogicalContradiction,
    ErrorKind::ExpressionInconsistency,
];

const REASONING_KINDS: [ErrorKind; 6] = [
    ErrorKind::CalculationError,
    ErrorKind::CommonSenseError,
    ErrorKind::RecapitulationError,
    ErrorKind::IgnoringOfPremises,
    ErrorKind::MisusingOfPremises,
    ErrorKind::ConclusionError,
];

const ENDING_KINDS: [ErrorKind; 4] = [
    ErrorKind::ResultOmission,
    ErrorKind::ResultsInconsistency,
    ErrorKind::JudgmentError,
    ErrorKind::SortingError,
];

impl ErrorKind {
    pub const ALL: [ErrorKind; 13] = [
        ErrorKind::ContentConflict,
        ErrorKind::LogicalContradiction,
        ErrorKind::ExpressionInconsistency,
        ErrorKind::CalculationError,
        ErrorKind::CommonSenseError,
        ErrorKind::RecapitulationError,
        ErrorKind::IgnoringOfPremises,
        ErrorKind::MisusingOfPremises,
        ErrorKind::ConclusionError,
        ErrorKind::ResultOmission,
        ErrorKind::ResultsInconsistency,
        ErrorKind::JudgmentError,
        ErrorKind::SortingError,
    ];

    pub fn category(self) -> ActionCategory {
        if PREMISE_KINDS.contains(&self) {
            ActionCategory::Premise
        } else if REASONING_KINDS.contains(&self) {
            ActionCategory::Reasoning
        } else {
            ActionCategory::Ending
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::ContentConflict => "Content Conflict",
            ErrorKind::LogicalContradiction => "Logical Contradiction",
            ErrorKind::ExpressionInconsistency => "Expression Inconsistency",
            ErrorKind::CalculationError => "Calculation Error",
            ErrorKind::CommonSenseError => "Common Sense Error",
            ErrorKind::RecapitulationError => "Recapitulation Error",
            ErrorKind::IgnoringOfPremises => "Ignoring of Premises",
            ErrorKind::MisusingOfPremises => "Misusing of Premises",
            ErrorKind::ConclusionError => "Conclusion Error",
            ErrorKind::ResultOmission => "Result Omission",
            ErrorKind::ResultsInconsistency => "Results Inconsistency",
            ErrorKind::JudgmentError => "Judgment Error",
            ErrorKind::SortingError => "Sorting Error",
        }
    }

    /// What the error is and how to look for it; injected into checker prompts.
    pub fn definition(self) -> &'static str {
        match self {
            ErrorKind::ContentConflict => {
                "A stated premise disagrees with the problem statement. Check: compare every extracted fact against the original wording."
            }
            ErrorKind::LogicalContradiction => {
                "A step contradicts an earlier step or does not follow from it. Check: walk the steps in order and confirm each follows from what came before, especially under conditions."
            }
            ErrorKind::ExpressionInconsistency => {
                "An expression, symbol, unit or value changes meaning between steps. Check: compare rewritten expressions in adjacent steps and confirm substitutions are exact."
            }
            ErrorKind::CalculationError => {
                "Arithmetic or transcription mistakes between consecutive results. Check: redo each calculation and confirm intermediate values are carried over unchanged."
            }
            ErrorKind::CommonSenseError => {
                "A claim violates basic common knowledge, such as a wrong numeric comparison. Check: test conclusions against elementary facts."
            }
            ErrorKind::RecapitulationError => {
                "Content is restated redundantly without adding anything. Check: look for repeated statements."
            }
            ErrorKind::IgnoringOfPremises => {
                "A constraint or case from the premises is left out. Check: confirm every constraint was applied."
            }
            ErrorKind::MisusingOfPremises => {
                "A premise is misread, altered or attached to the wrong entity. Check: compare each statement with the premise it relies on."
            }
            ErrorKind::ConclusionError => {
                "A conclusion is not supported by the preceding steps or conflicts with a premise. Check: trace each conclusion back to its evidence."
            }
            ErrorKind::ResultOmission => {
                "A required result is missing from the final step. Check: confirm every requested output is stated explicitly."
            }
            ErrorKind::ResultsInconsistency => {
                "The result is stated differently in different places. Check: compare all statements of the result."
            }
            ErrorKind::JudgmentError => {
                "The final judgment departs abruptly from the established reasoning. Check: confirm the final answer matches the conclusions reached before it."
            }
            ErrorKind::SortingError => {
                "A reported position or order does not match the ordering derived earlier. Check: re-sort the sequence as the question requires and compare positions one by one."
            }
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = kind_key(s);
        ErrorKind::ALL
            .into_iter()
            .find(|k| kind_key(k.name()) == key)
            .ok_or_else(|| s.to_string())
    }
}

/// Word-level normalization so plural and spelling variants compare equal.
fn kind_key(s: &str) -> String {
    s.split(|c: char| !c.is_alphanumeric())
        .map(squash)
        .filter(|w| !w.is_empty() && w != "OF")
        .map(|w| match w.as_str() {
            "ERRORS" => "ERROR".to_string(),
            "INCONSISTENCIES" => "INCONSISTENCY".to_string(),
            "JUDGEMENT" => "JUDGMENT".to_string(),
            "PREMISE" => "PREMISES".to_string(),
            _ => w,
        })
        .collect()
}

/// Error kinds the checker examines for an action.
pub fn applicable_errors(action: AtomicAction) -> &'static [ErrorKind] {
    match action.category() {
        ActionCategory::Premise => &PREMISE_KINDS,
        ActionCategory::Reasoning => &REASONING_KINDS,
        ActionCategory::Ending => &ENDING_KINDS,
    }
}

/// Kind assigned to an error verdict that names no recognizable kind.
pub fn default_kind(category: ActionCategory) -> ErrorKind {
    match category {
        ActionCategory::Premise => ErrorKind::ContentConflict,
        ActionCategory::Reasoning => ErrorKind::ConclusionError,
        ActionCategory::Ending => ErrorKind::JudgmentError,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoError,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub kinds: Vec<ErrorKind>,
    pub rationale: String,
    pub suggestion: Option<String>,
}

impl CheckReport {
    pub fn no_error(rationale: impl Into<String>) -> Self {
        CheckReport {
            verdict: Verdict::NoError,
            kinds: Vec::new(),
            rationale: rationale.into(),
            suggestion: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.verdict == Verdict::Error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckerMode {
    #[default]
    Every,
    ReasoningOnly,
    EndingOnly,
    Off,
}

impl CheckerMode {
    pub fn applies_to(self, action: AtomicAction) -> bool {
        match self {
            CheckerMode::Every => true,
            CheckerMode::ReasoningOnly => action.category() == ActionCategory::Reasoning,
            CheckerMode::EndingOnly => action.category() == ActionCategory::Ending,
            CheckerMode::Off => false,
        }
    }
}

impl std::str::FromStr for CheckerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "every" => Ok(CheckerMode::Every),
            "reasoning-only" => Ok(CheckerMode::ReasoningOnly),
            "ending-only" => Ok(CheckerMode::EndingOnly),
            "off" => Ok(CheckerMode::Off),
            other => Err(format!("unknown checker mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerConfig {
    pub mode: CheckerMode,
    pub max_revisions: u32,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            mode: CheckerMode::Every,
            max_revisions: 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("revision requested for a report without an error verdict")]
    NothingToRevise,
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*check[\s_]*results?[\s*_]*[:：\-–=][\s*_]*(.*)$").unwrap())
}

fn kinds_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*error[\s_]*types?[\s*_]*(?:\([^)]*\))?[\s*_]*[:：\-–=][\s*_]*(.*)$").unwrap())
}

fn suggestion_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>#*_\-]*suggestions?[\s*_]*[:：\-–=][\s*_]*").unwrap())
}

fn classify_verdict(rest: &str) -> Option<Verdict> {
    let s = rest.to_ascii_lowercase();
    let s = s.trim_matches(|c: char| !c.is_alphanumeric());
    if s.is_empty() {
        return None;
    }
    if s.starts_with("no error") || s.starts_with("no errors") || s.starts_with("none") || s.starts_with("correct") || s.starts_with("pass") {
        return Some(Verdict::NoError);
    }
    if s.contains("error") || s.starts_with("incorrect") || s.starts_with("fail") {
        return Some(Verdict::Error);
    }
    None
}

fn parse_kinds(text: &str) -> Vec<ErrorKind> {
    let mut kinds = Vec::new();
    for cap in kinds_re().captures_iter(text) {
        for piece in cap[1].split([',', ';', '/', '|', '&']).flat_map(|p| p.split(" and ")) {
            let piece = piece.trim_matches(|c: char| !c.is_alphanumeric());
            if let Ok(k) = piece.parse::<ErrorKind>() {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        }
    }
    kinds
}

/// Parses a checker reply. The last `Check Result:` line decides the
/// verdict; `None` when no such line carries a recognizable verdict.
pub fn parse_check(text: &str, action: AtomicAction) -> Option<CheckReport> {
    let m = verdict_re().captures_iter(text).last()?;
    let verdict = classify_verdict(&m[1])?;
    let whole = m.get(0).unwrap();
    let before = text[..whole.start()].trim();
    let rationale = if before.is_empty() { text.trim() } else { before }.to_string();
    if verdict == Verdict::NoError {
        return Some(CheckReport::no_error(rationale));
    }
    let mut kinds = parse_kinds(text);
    if kinds.is_empty() {
        kinds.push(default_kind(action.category()));
    }
    let suggestion = match suggestion_re().find_iter(text).last() {
        Some(s) => {
            let tail = &text[s.end()..];
            strip_tag_lines(tail)
        }
        None => strip_tag_lines(&text[whole.end()..]),
    };
    Some(CheckReport {
        verdict,
        kinds,
        rationale,
        suggestion,
    })
}

fn strip_tag_lines(s: &str) -> Option<String> {
    let kept: Vec<&str> = s
        .lines()
        .filter(|l| !kinds_re().is_match(l) && !verdict_re().is_match(l))
        .collect();
    let out = kept.join("\n").trim().to_string();
    (!out.is_empty()).then_some(out)
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 14] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
        "thirteen",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

/// Bullet list of the applicable error kinds with their checking methods.
pub fn error_catalog_text(action: AtomicAction) -> String {
    applicable_errors(action)
        .iter()
        .map(|k| format!("- **{}:** {}\n", k.name(), k.definition()))
        .collect()
}

const CHECK_REMINDER: &str = "Your reply did not include a verdict line. Reply again and end with a line `Check Result: There is an error` or `Check Result: No error`, followed by `Error Types:` and `Suggestion:` lines.";

fn node_context(tree: &AtomicTree, node: NodeId, budget: usize) -> Result<(AtomicAction, String, String), TreeError> {
    let n = tree.node(node).ok_or(TreeError::UnknownNode(node))?;
    let step = tree.step_label(node).unwrap_or(0);
    Ok((
        n.action,
        format!("Step {step}: {}", n.action.label()),
        render_tree(tree, budget),
    ))
}

/// Runs the checker on one node. Unparseable replies are re-asked once and
/// then fail open to a no-error report, noted in the trace.
pub fn check(tree: &mut AtomicTree, node: NodeId, ctx: &CallContext) -> Result<CheckReport, CheckError> {
    let (action, step, rendered) = node_context(tree, node, ctx.render_budget)?;
    let content = tree.node(node).map(|n| n.content.clone()).unwrap_or_default();
    let errors = error_catalog_text(action);
    let count = number_word(applicable_errors(action).len());
    let messages = ctx.prompts.render(
        TemplateName::Checker,
        &[
            ("problem", &tree.problem().statement),
            ("tree", &rendered),
            ("action", &step),
            ("content", &content),
            ("errors", &errors),
            ("error_count", &count),
        ],
    );
    let (parsed, _) = ctx.ask(tree, CallTag::Check, messages, CHECK_REMINDER, |t| parse_check(t, action))?;
    Ok(match parsed {
        Some(r) => r,
        None => {
            log::warn!("checker output for {node} unparseable; failing open");
            tree.note(NoteKind::CheckerFailOpen, format!("{node}: unparseable checker output"));
            CheckReport::no_error("unparseable")
        }
    })
}

/// Rewrites a node's content from an error report.
pub fn revise(tree: &mut AtomicTree, node: NodeId, report: &CheckReport, ctx: &CallContext) -> Result<(), CheckError> {
    if !report.is_error() {
        return Err(CheckError::NothingToRevise);
    }
    let n = tree.node(node).ok_or(TreeError::UnknownNode(node))?;
    let step = format!("Step {}: {}", tree.step_label(node).unwrap_or(0), n.action.label());
    let content = n.content.clone();
    let kinds: Vec<&str> = report.kinds.iter().map(|k| k.name()).collect();
    let rationale = format!("Error types: {}\n\n{}", kinds.join(", "), report.rationale);
    let suggestion = report.suggestion.clone().unwrap_or_else(|| "Correct the error described above.".into());
    let messages = ctx.prompts.render(
        TemplateName::Revise,
        &[
            ("problem", &tree.problem().statement),
            ("action", &step),
            ("content", &content),
            ("rationale", &rationale),
            ("suggestion", &suggestion),
        ],
    );
    let mut revised = ctx.call(tree, CallTag::Revise, messages.clone())?;
    if revised.trim().is_empty() {
        revised = ctx.call(tree, CallTag::Revise, messages)?;
    }
    if revised.trim().is_empty() {
        // keep the original content rather than blanking the node
        tree.note(NoteKind::RevisionCapReached, format!("{node}: empty revision ignored"));
        return Ok(());
    }
    tree.apply_revision(node, revised.trim())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOutcome {
    pub checks: u32,
    pub revisions: u32,
    pub unresolved: bool,
}

/// check → revise → re-check, with at most `max_revisions` revisions. A node
/// still in error after the last allowed revision is accepted and flagged.
pub fn check_and_revise(
    tree: &mut AtomicTree,
    node: NodeId,
    config: &CheckerConfig,
    ctx: &CallContext,
) -> Result<CheckOutcome, CheckError> {
    let mut outcome = CheckOutcome { checks: 0, revisions: 0, unresolved: false };
    let action = tree.node(node).ok_or(TreeError::UnknownNode(node))?.action;
    if !config.mode.applies_to(action) {
        return Ok(outcome);
    }
    loop {
        let report = check(tree, node, ctx)?;
        outcome.checks += 1;
        tree.record_check(node, report.clone())?;
        if !report.is_error() {
            return Ok(outcome);
        }
        if outcome.revisions >= config.max_revisions {
            let flags = NodeFlags {
                unresolved_check: true,
                ..tree.node(node).map(|n| n.flags).unwrap_or_default()
            };
            tree.set_flags(node, flags)?;
            tree.note(NoteKind::RevisionCapReached, format!("{node}: accepted after {} revisions", outcome.revisions));
            outcome.unresolved = true;
            return Ok(outcome);
        }
        revise(tree, node, &report, ctx)?;
        outcome.revisions += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_exact() {
        let mut all: Vec<ErrorKind> = AtomicAction::ALL
            .iter()
            .filter(|a| matches!(a, AtomicAction::PremiseDiscovery | AtomicAction::HypothesisGeneration | AtomicAction::SummaryFinished))
            .flat_map(|a| applicable_errors(*a).iter().copied())
            .collect();
        all.sort();
        assert_eq!(all, ErrorKind::ALL.to_vec());
        for k in ErrorKind::ALL {
            for a in AtomicAction::ALL {
                assert_eq!(applicable_errors(a).contains(&k), k.category() == a.category());
            }
        }
    }

    #[test]
    fn kind_names_parse() {
        for k in ErrorKind::ALL {
            assert_eq!(k.name().parse::<ErrorKind>(), Ok(k));
        }
        assert_eq!("Conclusion Errors".parse(), Ok(ErrorKind::ConclusionError));
        assert_eq!("Expression Inconsistencies".parse(), Ok(ErrorKind::ExpressionInconsistency));
        assert_eq!("sorting_error".parse(), Ok(ErrorKind::SortingError));
        assert_eq!("Ignoring Premises".parse(), Ok(ErrorKind::IgnoringOfPremises));
        assert_eq!("Judgement Error".parse(), Ok(ErrorKind::JudgmentError));
        assert!("Guesswork".parse::<ErrorKind>().is_err());
    }

    #[test]
    fn parses_error_with_tags_and_suggestion() {
        let text = "Analysis...\n**Check Result: There is an error.**\nError Types: Sorting Error\nSuggestion: swap them";
        let r = parse_check(text, AtomicAction::HypothesisVerification).unwrap();
        assert_eq!(r.verdict, Verdict::Error);
        assert_eq!(r.kinds, vec![ErrorKind::SortingError]);
        assert_eq!(r.suggestion.as_deref(), Some("swap them"));
        assert_eq!(r.rationale, "Analysis...");
    }

    #[test]
    fn category_default_when_untagged() {
        let r = parse_check("Check Result: There is an error", AtomicAction::HypothesisGeneration).unwrap();
        assert_eq!(r.kinds, vec![ErrorKind::ConclusionError]);
        let r = parse_check("Check Result: There is an error", AtomicAction::SummaryFinished).unwrap();
        assert_eq!(r.kinds, vec![ErrorKind::JudgmentError]);
    }

    #[test]
    fn no_verdict_is_unparseable() {
        assert!(parse_check("looks fine to me", AtomicAction::PremiseDiscovery).is_none());
        assert!(parse_check("Check Result: maybe", AtomicAction::PremiseDiscovery).is_none());
    }
}

//! Executes atomic actions against the solver backend and produces the
//! final answer.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CallTag, CompletionRequest};
use crate::bench::extract::{extract_mcq, extract_numeric, parse_grid};
use crate::engine::CallContext;
use crate::model::{
    render_tree, AnswerSchema, AtomicAction, AtomicTree, ChainId, NodeFlags, NodeId, StructuredAnswer,
    TerminationMode, TreeError,
};
use crate::prompts::TemplateName;

/// Messages plus sampling parameters for one call.
pub type PromptBundle = CompletionRequest;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("backend returned an empty completion twice")]
    EmptyCompletion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub extracted: Option<StructuredAnswer>,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?mi)^[\s>#*_\-]*(?:\d+[.)]\s*)?[*_]*hypothesis\s*\d+[*_]*\s*[:：]").unwrap())
}

/// Whether `content` has at least one `Hypothesis <k>:` line.
pub fn has_hypothesis_marker(content: &str) -> bool {
    marker_re().is_match(content)
}

/// Builds the solver request: system rules, then the problem, the rendered
/// tree, the router's guidance and (when non-empty) the SOP block.
pub fn build_expansion_prompt(
    tree: &AtomicTree,
    action: AtomicAction,
    guidance: &str,
    sop_block: &str,
    ctx: &CallContext,
) -> PromptBundle {
    let rendered = render_tree(tree, ctx.render_budget);
    let step = format!("Step {}: {}", tree.active_path().len() + 1, action.label());
    let messages = ctx.prompts.render(
        TemplateName::Solver,
        &[
            ("problem", &tree.problem().statement),
            ("tree", &rendered),
            ("action", &step),
            ("guidance", guidance),
            ("sop", sop_block),
        ],
    );
    ctx.sampling.request(CallTag::Solve, messages)
}

/// Runs one action and appends the resulting node to the active chain.
pub fn execute(
    tree: &mut AtomicTree,
    action: AtomicAction,
    guidance: &str,
    sop_block: &str,
    ctx: &CallContext,
) -> Result<NodeId, ExecError> {
    if tree.is_terminated() {
        return Err(TreeError::Terminated.into());
    }
    if action == AtomicAction::HypothesisVerification && !tree.path_has_hypothesis() {
        return Err(TreeError::MissingHypothesis.into());
    }
    let request = build_expansion_prompt(tree, action, guidance, sop_block, ctx);
    let mut content = ctx.call(tree, CallTag::Solve, request.messages.clone())?;
    if content.trim().is_empty() {
        content = ctx.call(tree, CallTag::Solve, request.messages)?;
    }
    if content.trim().is_empty() {
        return Err(ExecError::EmptyCompletion);
    }
    let id = tree.append_node(action, guidance, content.trim())?;
    if action == AtomicAction::HypothesisGeneration && !has_hypothesis_marker(content.trim()) {
        tree.set_flags(
            id,
            NodeFlags {
                missing_hypothesis_marker: true,
                ..NodeFlags::default()
            },
        )?;
    }
    Ok(id)
}

/// The answer-format instruction for a schema.
pub fn answer_format(schema: &AnswerSchema) -> String {
    match schema {
        AnswerSchema::FreeText => "State the final answer clearly.".into(),
        AnswerSchema::MultipleChoice { .. } => {
            "Your final answer should follow this format: \"The correct answer is (insert answer here)\", with the option letter in the parentheses.".into()
        }
        AnswerSchema::Grid(g) => {
            let names: Vec<&str> = g.attributes.iter().map(|a| a.name.as_str()).collect();
            let shape = match names.split_first() {
                Some((first, rest)) if !rest.is_empty() => format!("<{first}> (<{}>)", rest.join(">, <")),
                Some((first, _)) => format!("<{first}>"),
                None => String::new(),
            };
            format!(
                "End with a block that starts with the line \"Solution:\" followed by one line per house, \"- House k: {shape}\", for houses 1 to {}.",
                g.houses
            )
        }
        AnswerSchema::Numeric => "End with the final value written as \\boxed{value}.".into(),
    }
}

/// Structured answer pulled from `text` according to the schema.
pub fn extract_answer(schema: &AnswerSchema, text: &str) -> Option<StructuredAnswer> {
    match schema {
        AnswerSchema::FreeText => None,
        AnswerSchema::MultipleChoice { options } => extract_mcq(text, options)
            .ok()
            .map(|c| StructuredAnswer::Choice(c.to_string())),
        AnswerSchema::Grid(g) => {
            let grid = parse_grid(text, g);
            (grid.filled() > 0).then_some(StructuredAnswer::Grid(grid))
        }
        AnswerSchema::Numeric => extract_numeric(text).ok().map(StructuredAnswer::Numeric),
    }
}

const EMPTY_ANSWER: &str = "No answer could be produced.";

/// One summarizing call over the whole tree, then schema-specific extraction.
pub fn finalize(tree: &mut AtomicTree, mode: TerminationMode, ctx: &CallContext) -> Result<FinalAnswer, BackendError> {
    let rendered = render_tree(tree, ctx.render_budget);
    let format = answer_format(&tree.problem().answer_schema);
    let note = match mode {
        TerminationMode::ActiveSolved => "",
        TerminationMode::PassiveLimit => {
            "The reasoning was stopped by its round limit and may be incomplete; give your best answer from what it established."
        }
    };
    let messages = ctx.prompts.render(
        TemplateName::Summarize,
        &[
            ("problem", &tree.problem().statement),
            ("tree", &rendered),
            ("answer_format", &format),
            ("mode_note", note),
        ],
    );
    let mut text = ctx.call(tree, CallTag::Summarize, messages.clone())?;
    if text.trim().is_empty() {
        text = ctx.call(tree, CallTag::Summarize, messages)?;
    }
    let text = match text.trim() {
        "" => EMPTY_ANSWER.to_string(),
        t => t.to_string(),
    };
    let extracted = extract_answer(&tree.problem().answer_schema, &text);
    Ok(FinalAnswer { text, extracted })
}

/// Step listing of a chain's own nodes, used by compression and backtracking.
pub fn chain_steps(tree: &AtomicTree, chain: ChainId, max_chars_per_step: Option<usize>) -> String {
    let Some(c) = tree.chain(chain) else {
        return String::new();
    };
    let mut out = String::new();
    for id in &c.node_ids {
        let Some(n) = tree.node(*id) else { continue };
        let step = tree.step_label(*id).unwrap_or(0);
        let body = match max_chars_per_step {
            Some(max) if n.content.chars().count() > max => {
                let cut: String = n.content.chars().take(max).collect();
                format!("{cut}...")
            }
            _ => n.content.clone(),
        };
        out.push_str(&format!("Step {step}: {}\n{body}\n\n", n.action.label()));
    }
    out.trim_end().to_string()
}

/// Compresses a chain that has left Active status into its summary.
pub fn compress_chain(tree: &mut AtomicTree, chain: ChainId, ctx: &CallContext) -> Result<(), ExecError> {
    let steps = chain_steps(tree, chain, None);
    if steps.is_empty() {
        return Ok(());
    }
    let messages = ctx.prompts.render(
        TemplateName::Compress,
        &[("problem", &tree.problem().statement), ("chain", &steps)],
    );
    let summary = ctx.call(tree, CallTag::Compress, messages)?;
    if !summary.trim().is_empty() {
        tree.set_chain_summary(chain, summary.trim())?;
    }
    Ok(())
}

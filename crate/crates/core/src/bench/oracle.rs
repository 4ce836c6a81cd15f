//! Deterministic backends that answer from task gold, for harness checks.

use super::extract::format_grid_solution;
use super::task::Task;
use crate::backend::{BackendError, CallTag, CompletionRequest, FnBackend};
use crate::model::StructuredAnswer;

/// The gold answer written in the format the extractors expect.
pub fn format_gold(gold: &StructuredAnswer) -> String {
    match gold {
        StructuredAnswer::Choice(c) => format!("The correct answer is ({c})."),
        StructuredAnswer::Grid(g) => format_grid_solution(g),
        StructuredAnswer::Numeric(v) => format!("The answer is \\boxed{{{v}}}."),
    }
}

fn corrupt(gold: &StructuredAnswer, options: usize) -> StructuredAnswer {
    match gold {
        StructuredAnswer::Choice(c) => {
            let i = (c.as_bytes().first().copied().unwrap_or(b'A') - b'A') as usize;
            let next = (b'A' + ((i + 1) % options.max(2)) as u8) as char;
            StructuredAnswer::Choice(next.to_string())
        }
        StructuredAnswer::Grid(g) => {
            let mut g = g.clone();
            if g.cells.len() >= 2 {
                let last = g.cells[0].len().saturating_sub(1);
                let tmp = g.cells[0][last].take();
                g.cells[0][last] = g.cells[1][last].take();
                g.cells[1][last] = tmp;
            }
            StructuredAnswer::Grid(g)
        }
        StructuredAnswer::Numeric(v) => StructuredAnswer::Numeric(format!("{v}1")),
    }
}

fn lookup<'a>(answers: &'a [(String, String)], request: &CompletionRequest) -> Option<&'a str> {
    let text = request.joined();
    answers
        .iter()
        .filter(|(statement, _)| text.contains(statement.as_str()))
        .max_by_key(|(statement, _)| statement.len())
        .map(|(_, a)| a.as_str())
}

fn scripted_solver(name: &str, answers: Vec<(String, String)>) -> FnBackend {
    FnBackend::new(name, move |req: &CompletionRequest| {
        Ok(match req.tag {
            CallTag::Routing => "ACTION: SUMMARY<FINISHED>\nGUIDANCE: Conclude from the established assignment.".into(),
            CallTag::Backtrack => "No earlier step needs revisiting.".into(),
            CallTag::Check => "The step is consistent with every clue.\nCheck Result: No error.".into(),
            CallTag::Compress => "The chain derived a complete assignment.".into(),
            CallTag::Triage => "DOMAIN: default".into(),
            CallTag::Solve | CallTag::Summarize | CallTag::Revise => {
                let answer = lookup(&answers, req)
                    .ok_or_else(|| BackendError::Malformed("no known task statement in request".into()))?;
                if req.tag == CallTag::Solve {
                    format!("Hypothesis 1: the following assignment satisfies every condition.\n\n{answer}")
                } else {
                    answer.to_string()
                }
            }
        })
    })
}

/// Answers every solver call with the gold answer of the task whose
/// statement appears in the prompt. Routing always proposes finishing, so an
/// AR session runs generation, verification and summary on two chains.
pub fn oracle_backend(tasks: &[Task]) -> FnBackend {
    let answers = tasks.iter().map(|t| (t.statement.clone(), format_gold(&t.gold))).collect();
    scripted_solver("oracle", answers)
}

/// Like [`oracle_backend`], but tasks whose index is a multiple of
/// `corrupt_every` get a wrong answer.
pub fn lossy_backend(tasks: &[Task], corrupt_every: usize) -> FnBackend {
    let every = corrupt_every.max(1);
    let answers = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let options = match &t.schema {
                crate::model::AnswerSchema::MultipleChoice { options } => options.len(),
                _ => 0,
            };
            let gold = if i % every == 0 { corrupt(&t.gold, options) } else { t.gold.clone() };
            (t.statement.clone(), format_gold(&gold))
        })
        .collect();
    scripted_solver("lossy", answers)
}

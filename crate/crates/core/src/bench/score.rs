//! Scoring final answers against gold.

use serde::{Deserialize, Serialize};

use super::extract::{normalize_token, numeric_equal};
use super::task::Task;
use crate::executor::extract_answer;
use crate::model::StructuredAnswer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Failure {
    NoAnswerFound,
    SchemaMismatch,
    /// The run for this trial aborted before producing an answer.
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    /// Fraction of gold grid cells matched; 1.0 or 0.0 for other kinds.
    pub partial: f64,
    pub extracted: Option<StructuredAnswer>,
    pub failure: Option<Failure>,
}

impl Verdict {
    pub fn failed(failure: Failure) -> Self {
        Verdict {
            correct: false,
            partial: 0.0,
            extracted: None,
            failure: Some(failure),
        }
    }
}

/// Extracts an answer from `final_text` and scores it.
pub fn score(task: &Task, final_text: &str) -> Verdict {
    let extracted = extract_answer(&task.schema, final_text);
    score_extracted(task, extracted)
}

/// Scores an already-extracted answer.
///
/// Grid scoring is strict: every gold cell counts, and a missing cell is a
/// wrong cell.
pub fn score_extracted(task: &Task, extracted: Option<StructuredAnswer>) -> Verdict {
    let Some(answer) = extracted else {
        return Verdict::failed(Failure::NoAnswerFound);
    };
    let partial = match (&task.gold, &answer) {
        (StructuredAnswer::Choice(g), StructuredAnswer::Choice(a)) => {
            if g.eq_ignore_ascii_case(a) {
                1.0
            } else {
                0.0
            }
        }
        (StructuredAnswer::Numeric(g), StructuredAnswer::Numeric(a)) => {
            if numeric_equal(g, a) {
                1.0
            } else {
                0.0
            }
        }
        (StructuredAnswer::Grid(g), StructuredAnswer::Grid(a)) => {
            let total: usize = g.cells.iter().map(Vec::len).sum();
            let hits = g
                .cells
                .iter()
                .enumerate()
                .flat_map(|(h, row)| row.iter().enumerate().map(move |(c, v)| (h, c, v)))
                .filter(|&(h, c, v)| match (v, a.get(h, c)) {
                    (Some(gv), Some(av)) => normalize_token(gv) == normalize_token(av),
                    _ => false,
                })
                .count();
            if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            }
        }
        _ => {
            return Verdict {
                correct: false,
                partial: 0.0,
                extracted: Some(answer),
                failure: Some(Failure::SchemaMismatch),
            }
        }
    };
    Verdict {
        correct: partial == 1.0,
        partial,
        extracted: Some(answer),
        failure: None,
    }
}

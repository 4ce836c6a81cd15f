//! Benchmark tasks and their line-delimited JSON file format.
//!
//! One record per line:
//!
//! ```text
//! {"kind":"mcq","id":"q1","statement":"...","options":["...","..."],"gold":"A"}
//! {"kind":"grid","id":"g1","statement":"...","houses":3,
//!  "attributes":[{"name":"Name","values":["..."]}],"gold":[["..."],["..."],["..."]],"clues":[...]}
//! {"kind":"numeric","id":"n1","statement":"...","gold":"3/4"}
//! ```
//!
//! `suite` and `split` (`easy` / `hard`) are optional on every record. Grid
//! gold lists one row per house, values in attribute order.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::puzzle::{validate_clues, Clue};
use crate::model::{AnswerSchema, Attribute, Grid, GridSchema, Problem, StructuredAnswer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Easy,
    Hard,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Easy => "easy",
            Split::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFormat {
    Mcq,
    Grid,
    Numeric,
}

impl FromStr for TaskFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mcq" => Ok(TaskFormat::Mcq),
            "grid" => Ok(TaskFormat::Grid),
            "numeric" => Ok(TaskFormat::Numeric),
            other => Err(format!("unknown task format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub suite: String,
    pub split: Option<Split>,
    pub statement: String,
    pub schema: AnswerSchema,
    pub gold: StructuredAnswer,
    /// Structured clues for grid tasks; empty when the suite does not ship them.
    pub clues: Vec<Clue>,
}

impl Task {
    pub fn format(&self) -> Option<TaskFormat> {
        match self.schema {
            AnswerSchema::MultipleChoice { .. } => Some(TaskFormat::Mcq),
            AnswerSchema::Grid(_) => Some(TaskFormat::Grid),
            AnswerSchema::Numeric => Some(TaskFormat::Numeric),
            AnswerSchema::FreeText => None,
        }
    }

    pub fn problem(&self) -> Problem {
        Problem::new(self.id.clone(), self.statement.clone(), self.schema.clone())
    }

    /// Checks that the gold answer conforms to the schema.
    pub fn validate(&self) -> Result<(), String> {
        if self.statement.trim().is_empty() {
            return Err("empty statement".into());
        }
        self.schema.validate()?;
        match (&self.schema, &self.gold) {
            (AnswerSchema::MultipleChoice { options }, StructuredAnswer::Choice(l)) => {
                let ok = l.len() == 1 && l.chars().all(|c| c.is_ascii_uppercase()) && ((l.as_bytes()[0] - b'A') as usize) < options.len();
                if !ok {
                    return Err(format!("gold `{l}` is not one of the {} option letters", options.len()));
                }
            }
            (AnswerSchema::Grid(g), StructuredAnswer::Grid(grid)) => {
                if grid.cells.len() != g.houses {
                    return Err(format!("gold has {} rows for {} houses", grid.cells.len(), g.houses));
                }
                for (h, row) in grid.cells.iter().enumerate() {
                    if row.len() != g.attributes.len() {
                        return Err(format!("gold row {} has {} cells, expected {}", h + 1, row.len(), g.attributes.len()));
                    }
                    for (a, cell) in row.iter().enumerate() {
                        let Some(v) = cell else {
                            return Err(format!("gold cell house {} / {} is missing", h + 1, g.attributes[a].name));
                        };
                        if g.value_index(a, v).is_none() {
                            return Err(format!("gold value `{v}` not in vocabulary of `{}`", g.attributes[a].name));
                        }
                    }
                }
                validate_clues(g, &self.clues).map_err(|e| e.to_string())?;
            }
            (AnswerSchema::Numeric, StructuredAnswer::Numeric(v)) => {
                if v.trim().is_empty() {
                    return Err("empty numeric gold".into());
                }
            }
            _ => return Err("gold kind does not match schema".into()),
        }
        Ok(())
    }

    pub fn to_record(&self) -> TaskRecord {
        let mut r = TaskRecord {
            kind: self.format().unwrap_or(TaskFormat::Numeric),
            id: self.id.clone(),
            suite: Some(self.suite.clone()),
            split: self.split,
            statement: self.statement.clone(),
            options: None,
            houses: None,
            attributes: None,
            gold: serde_json::Value::Null,
            clues: Vec::new(),
        };
        if let AnswerSchema::MultipleChoice { options } = &self.schema {
            r.options = Some(options.clone());
        }
        if let AnswerSchema::Grid(g) = &self.schema {
            r.houses = Some(g.houses);
            r.attributes = Some(g.attributes.clone());
            r.clues = self.clues.clone();
        }
        r.gold = match &self.gold {
            StructuredAnswer::Choice(c) | StructuredAnswer::Numeric(c) => serde_json::Value::String(c.clone()),
            StructuredAnswer::Grid(g) => serde_json::to_value(&g.cells).unwrap_or_default(),
        };
        r
    }
}

/// The on-disk shape of one task line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub kind: TaskFormat,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub houses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<Attribute>>,
    pub gold: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clues: Vec<Clue>,
}

impl TaskRecord {
    fn into_task(self, default_suite: &str) -> Result<Task, String> {
        let gold_str = || match &self.gold {
            serde_json::Value::String(s) => Ok(s.trim().to_string()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(format!("gold must be a string, got {other}")),
        };
        let (schema, gold) = match self.kind {
            TaskFormat::Mcq => {
                let options = self.options.clone().ok_or("mcq record needs `options`")?;
                let g = gold_str()?.trim_matches(|c| c == '(' || c == ')').to_ascii_uppercase();
                (AnswerSchema::MultipleChoice { options }, StructuredAnswer::Choice(g))
            }
            TaskFormat::Grid => {
                let houses = self.houses.ok_or("grid record needs `houses`")?;
                let attributes = self.attributes.clone().ok_or("grid record needs `attributes`")?;
                let cells: Vec<Vec<Option<String>>> =
                    serde_json::from_value(self.gold.clone()).map_err(|e| format!("grid gold: {e}"))?;
                (
                    AnswerSchema::Grid(GridSchema { houses, attributes }),
                    StructuredAnswer::Grid(Grid { cells }),
                )
            }
            TaskFormat::Numeric => (AnswerSchema::Numeric, StructuredAnswer::Numeric(gold_str()?)),
        };
        let task = Task {
            id: self.id,
            suite: self.suite.unwrap_or_else(|| default_suite.to_string()),
            split: self.split,
            statement: self.statement,
            schema,
            gold,
            clues: self.clues,
        };
        task.validate()?;
        Ok(task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Not a JSON record of the expected shape.
    Parse,
    /// Well-formed, but gold, schema and kind disagree.
    SchemaMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: RejectReason,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedSuite {
    pub tasks: Vec<Task>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no valid tasks ({rejects} rejected lines)")]
    EmptySuite { path: PathBuf, rejects: usize },
}

/// Parses one task line; `format` restricts the accepted kind.
pub fn parse_task_line(line: &str, format: Option<TaskFormat>, default_suite: &str) -> Result<Task, (RejectReason, String)> {
    let record: TaskRecord = serde_json::from_str(line).map_err(|e| (RejectReason::Parse, e.to_string()))?;
    if let Some(f) = format {
        if record.kind != f {
            return Err((RejectReason::SchemaMismatch, format!("record kind {:?} but suite format is {f:?}", record.kind)));
        }
    }
    record.into_task(default_suite).map_err(|m| (RejectReason::SchemaMismatch, m))
}

/// Loads a suite. Blank lines and lines starting with `#` are skipped;
/// malformed lines are reported in `rejects`.
pub fn load_tasks(path: &Path, format: Option<TaskFormat>) -> Result<LoadedSuite, LoadError> {
    let io = |source| LoadError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let default_suite = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "suite".into());
    let mut tasks = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_task_line(trimmed, format, &default_suite) {
            Ok(t) => tasks.push(t),
            Err((reason, message)) => {
                log::warn!("{}:{}: rejected ({reason:?}): {message}", path.display(), i + 1);
                rejects.push(Reject { line: i + 1, reason, message });
            }
        }
    }
    if tasks.is_empty() {
        return Err(LoadError::EmptySuite {
            path: path.to_path_buf(),
            rejects: rejects.len(),
        });
    }
    Ok(LoadedSuite { tasks, rejects })
}

pub fn write_tasks(path: &Path, tasks: &[Task]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in tasks {
        serde_json::to_writer(&mut f, &t.to_record())?;
        writeln!(f)?;
    }
    f.flush()
}

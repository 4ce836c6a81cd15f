//! Prompt templates.
//!
//! A template file holds a system part and a user part separated by a line
//! reading `=== user ===`. Placeholders are written `{{name}}`; each template
//! accepts a fixed set of names and rejects any other at load time.
//! Substitution is single-pass, so placeholder-like text inside substituted
//! values is left alone.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::backend::Message;

pub const USER_SEPARATOR: &str = "=== user ===";

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {name}: missing `{USER_SEPARATOR}` separator line")]
    MissingSeparator { name: &'static str },
    #[error("template {name}: unknown placeholder {{{{{placeholder}}}}}")]
    UnknownPlaceholder { name: &'static str, placeholder: String },
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateName {
    Routing,
    Solver,
    Backtrack,
    Checker,
    Revise,
    Compress,
    Summarize,
    Triage,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        TemplateName::Routing,
        TemplateName::Solver,
        TemplateName::Backtrack,
        TemplateName::Checker,
        TemplateName::Revise,
        TemplateName::Compress,
        TemplateName::Summarize,
        TemplateName::Triage,
    ];

    pub fn key(self) -> &'static str {
        match self {
            TemplateName::Routing => "routing",
            TemplateName::Solver => "solver",
            TemplateName::Backtrack => "backtrack",
            TemplateName::Checker => "checker",
            TemplateName::Revise => "revise",
            TemplateName::Compress => "compress",
            TemplateName::Summarize => "summarize",
            TemplateName::Triage => "triage",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.key())
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Routing => &["problem", "tree", "schedule"],
            TemplateName::Solver => &["problem", "tree", "guidance", "sop", "action"],
            TemplateName::Backtrack => &["problem", "tree", "chain"],
            TemplateName::Checker => &["problem", "tree", "action", "content", "errors", "error_count"],
            TemplateName::Revise => &["problem", "action", "content", "rationale", "suggestion"],
            TemplateName::Compress => &["problem", "chain"],
            TemplateName::Summarize => &["problem", "tree", "answer_format", "mode_note"],
            TemplateName::Triage => &["problem", "labels"],
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateName::Routing => include_str!("../templates/routing.txt"),
            TemplateName::Solver => include_str!("../templates/solver.txt"),
            TemplateName::Backtrack => include_str!("../templates/backtrack.txt"),
            TemplateName::Checker => include_str!("../templates/checker.txt"),
            TemplateName::Revise => include_str!("../templates/revise.txt"),
            TemplateName::Compress => include_str!("../templates/compress.txt"),
            TemplateName::Summarize => include_str!("../templates/summarize.txt"),
            TemplateName::Triage => include_str!("../templates/triage.txt"),
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: TemplateName,
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn parse(name: TemplateName, text: &str) -> Result<Template, TemplateError> {
        let text = text.replace("\r\n", "\n");
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut seen = false;
        for line in text.lines() {
            if !seen && line.trim() == USER_SEPARATOR {
                seen = true;
            } else if seen {
                user.push(line);
            } else {
                system.push(line);
            }
        }
        if !seen {
            return Err(TemplateError::MissingSeparator { name: name.key() });
        }
        let t = Template {
            name,
            system: system.join("\n").trim_end().to_string(),
            user: user.join("\n").trim_end().to_string(),
        };
        for part in [&t.system, &t.user] {
            for cap in placeholder_re().captures_iter(part) {
                let p = &cap[1];
                if !name.placeholders().contains(&p) {
                    return Err(TemplateError::UnknownPlaceholder {
                        name: name.key(),
                        placeholder: p.to_string(),
                    });
                }
            }
        }
        Ok(t)
    }

    /// Substitutes `vars`; placeholders without a value become empty.
    pub fn render(&self, vars: &[(&str, &str)]) -> Vec<Message> {
        let lookup: BTreeMap<&str, &str> = vars.iter().copied().collect();
        let fill = |s: &str| {
            placeholder_re()
                .replace_all(s, |c: &regex::Captures| {
                    lookup.get(&c[1]).copied().unwrap_or("").to_string()
                })
                .into_owned()
        };
        vec![Message::system(fill(&self.system)), Message::user(fill(&self.user))]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalog {
    templates: BTreeMap<TemplateName, Template>,
}

impl PromptCatalog {
    /// The templates compiled into the library.
    pub fn builtin() -> PromptCatalog {
        let templates = TemplateName::ALL
            .iter()
            .map(|&n| (n, Template::parse(n, n.builtin_text()).expect("builtin template is valid")))
            .collect();
        PromptCatalog { templates }
    }

    /// Builtins, with any `<name>.txt` present in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<PromptCatalog, TemplateError> {
        let mut catalog = Self::builtin();
        for name in TemplateName::ALL {
            let path = dir.join(name.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            catalog.templates.insert(name, Template::parse(name, &text)?);
        }
        Ok(catalog)
    }

    pub fn get(&self, name: TemplateName) -> &Template {
        &self.templates[&name]
    }

    pub fn render(&self, name: TemplateName, vars: &[(&str, &str)]) -> Vec<Message> {
        self.get(name).render(vars)
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

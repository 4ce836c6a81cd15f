//! Standard operating procedures: per-domain action strategies, scheduling
//! hints and worked examples, selected by triage.
//!
//! File grammar (`.sop`, UTF-8):
//! - a line whose first character is `#` is a comment
//! - `[meta]`, `[schedule]`, `[action:<name>]` and `[example]` open sections
//! - `[meta]` and `[example]` hold `key = value` lines; `\n` in a value is a newline
//! - `[schedule]` and `[action:...]` bodies are free text, trimmed
//! - `[meta]` keys: `domain` (required), `description`, `keywords` (comma separated)
//! - `[example]` keys: `problem`, `step` (both required)

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{CallTag, TokenUsage};
use crate::engine::CallContext;
use crate::model::{AtomicAction, Problem};
use crate::prompts::TemplateName;

pub const DEFAULT_DOMAIN: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SopExample {
    pub problem_excerpt: String,
    pub worked_step: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sop {
    pub domain: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub action_strategies: BTreeMap<AtomicAction, String>,
    pub scheduling_hints: String,
    pub examples: Vec<SopExample>,
}

#[derive(Debug, thiserror::Error)]
pub enum SopError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("no SOP with domain `default` found")]
    MissingDefault,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Meta,
    Schedule,
    Action(AtomicAction),
    Example,
}

impl Sop {
    pub fn parse(file: &str, text: &str) -> Result<Sop, SopError> {
        let err = |line: usize, message: String| SopError::Parse {
            file: file.to_string(),
            line,
            message,
        };
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut schedule = Vec::new();
        let mut actions: BTreeMap<AtomicAction, Vec<&str>> = BTreeMap::new();
        let mut examples: Vec<(usize, BTreeMap<String, String>)> = Vec::new();
        let mut section = Section::None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.starts_with('#') {
                continue;
            }
            let trimmed = raw.trim();
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                let name = &trimmed[1..trimmed.len() - 1];
                section = match name {
                    "meta" => Section::Meta,
                    "schedule" => Section::Schedule,
                    "example" => {
                        examples.push((line_no, BTreeMap::new()));
                        Section::Example
                    }
                    _ => match name.strip_prefix("action:") {
                        Some(key) => {
                            let action = parse_action_key(key)
                                .ok_or_else(|| err(line_no, format!("unknown action `{key}`")))?;
                            if actions.insert(action, Vec::new()).is_some() {
                                return Err(err(line_no, format!("duplicate section for action `{key}`")));
                            }
                            Section::Action(action)
                        }
                        None => return Err(err(line_no, format!("unknown section `[{name}]`"))),
                    },
                };
                continue;
            }
            match section {
                Section::None => {
                    if !trimmed.is_empty() {
                        return Err(err(line_no, "text before the first section".into()));
                    }
                }
                Section::Schedule => schedule.push(raw),
                Section::Action(a) => actions.get_mut(&a).expect("section opened").push(raw),
                Section::Meta | Section::Example => {
                    if trimmed.is_empty() {
                        continue;
                    }
                    let (k, v) = trimmed
                        .split_once('=')
                        .ok_or_else(|| err(line_no, "expected `key = value`".into()))?;
                    let k = k.trim().to_string();
                    let v = v.trim().replace("\\n", "\n");
                    let allowed: &[&str] = if section == Section::Meta {
                        &["domain", "description", "keywords"]
                    } else {
                        &["problem", "step"]
                    };
                    if !allowed.contains(&k.as_str()) {
                        return Err(err(line_no, format!("unknown key `{k}`")));
                    }
                    let target = if section == Section::Meta {
                        &mut meta
                    } else {
                        &mut examples.last_mut().expect("section opened").1
                    };
                    target.insert(k, v);
                }
            }
        }

        let domain = meta.get("domain").cloned().unwrap_or_default();
        if domain.is_empty() {
            return Err(err(1, "missing `domain` in [meta]".into()));
        }
        let examples = examples
            .into_iter()
            .map(|(line, mut kv)| {
                match (kv.remove("problem"), kv.remove("step")) {
                    (Some(p), Some(s)) => Ok(SopExample {
                        problem_excerpt: p,
                        worked_step: s,
                    }),
                    _ => Err(err(line, "example needs both `problem` and `step`".into())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sop {
            domain,
            description: meta.get("description").cloned().unwrap_or_default(),
            keywords: meta
                .get("keywords")
                .map(|k| {
                    k.split(',')
                        .map(|w| w.trim().to_lowercase())
                        .filter(|w| !w.is_empty())
                        .collect()
                })
                .unwrap_or_default(),
            action_strategies: actions
                .into_iter()
                .map(|(a, lines)| (a, lines.join("\n").trim().to_string()))
                .filter(|(_, t)| !t.is_empty())
                .collect(),
            scheduling_hints: schedule.join("\n").trim().to_string(),
            examples,
        })
    }

    /// The strategy text loaded for `action`, if any.
    pub fn sop_guidance(&self, action: AtomicAction) -> Option<&str> {
        self.action_strategies.get(&action).map(String::as_str)
    }
}

fn parse_action_key(key: &str) -> Option<AtomicAction> {
    let key = key.trim();
    AtomicAction::ALL
        .into_iter()
        .find(|a| a.key() == key)
        .or_else(|| key.parse().ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SopRegistry {
    sops: BTreeMap<String, Sop>,
}

impl SopRegistry {
    pub fn from_sops(sops: impl IntoIterator<Item = Sop>) -> Result<SopRegistry, SopError> {
        let mut map = BTreeMap::new();
        for sop in sops {
            if map.contains_key(&sop.domain) {
                log::warn!("duplicate SOP domain `{}`; the later definition wins", sop.domain);
            }
            map.insert(sop.domain.clone(), sop);
        }
        if !map.contains_key(DEFAULT_DOMAIN) {
            return Err(SopError::MissingDefault);
        }
        Ok(SopRegistry { sops: map })
    }

    /// The three procedures compiled into the library.
    pub fn builtin() -> SopRegistry {
        let files = [
            ("default.sop", include_str!("../sops/default.sop")),
            ("science-problem.sop", include_str!("../sops/science-problem.sop")),
            ("logical-reasoning.sop", include_str!("../sops/logical-reasoning.sop")),
        ];
        let sops = files
            .iter()
            .map(|(f, t)| Sop::parse(f, t).expect("builtin SOP parses"));
        Self::from_sops(sops).expect("builtin SOPs include default")
    }

    /// A registry holding only the builtin default procedure.
    pub fn default_only() -> SopRegistry {
        let sop = Sop::parse("default.sop", include_str!("../sops/default.sop")).expect("builtin SOP parses");
        Self::from_sops([sop]).expect("default present")
    }

    pub fn len(&self) -> usize {
        self.sops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sops.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.sops.keys().map(String::as_str).collect()
    }

    pub fn get(&self, domain: &str) -> Option<&Sop> {
        self.sops.get(domain)
    }

    pub fn default_sop(&self) -> &Sop {
        &self.sops[DEFAULT_DOMAIN]
    }

    /// The domain's SOP, or the default one for unknown domains.
    pub fn resolve(&self, domain: &str) -> &Sop {
        self.get(domain).unwrap_or_else(|| self.default_sop())
    }

    /// Strategy for `action` under `domain`, falling back to the default SOP.
    pub fn guidance_for(&self, domain: &str, action: AtomicAction) -> Option<&str> {
        self.resolve(domain)
            .sop_guidance(action)
            .or_else(|| self.default_sop().sop_guidance(action))
    }
}

/// Loads every `*.sop` file in `dir`, in file-name order.
pub fn load_sops(dir: &Path) -> Result<SopRegistry, SopError> {
    let io = |source| SopError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "sop"))
        .collect();
    paths.sort();
    let mut sops = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|source| SopError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        sops.push(Sop::parse(&name, &text)?);
    }
    SopRegistry::from_sops(sops)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triage {
    pub domain: String,
    /// Usage of the classification call, when one was made.
    pub call: Option<(TokenUsage, u64)>,
}

fn keyword_hits(statement: &str, keyword: &str) -> usize {
    let hay = statement.to_lowercase();
    let alnum_start = keyword.chars().next().is_some_and(char::is_alphanumeric);
    let alnum_end = keyword.chars().last().is_some_and(char::is_alphanumeric);
    hay.match_indices(keyword)
        .filter(|(i, m)| {
            let before = hay[..*i].chars().next_back();
            let after = hay[i + m.len()..].chars().next();
            !(alnum_start && before.is_some_and(char::is_alphanumeric))
                && !(alnum_end && after.is_some_and(char::is_alphanumeric))
        })
        .count()
}

/// Keyword stage of triage: the domain whose keywords hit most distinct
/// times, or `None` on a tie or no hits.
pub fn triage_by_keywords(statement: &str, registry: &SopRegistry) -> Option<String> {
    let mut scores: Vec<(usize, &str)> = registry
        .sops
        .values()
        .filter(|s| s.domain != DEFAULT_DOMAIN)
        .map(|s| {
            let score = s.keywords.iter().filter(|k| keyword_hits(statement, k) > 0).count();
            (score, s.domain.as_str())
        })
        .filter(|(score, _)| *score > 0)
        .collect();
    scores.sort_by(|a, b| b.0.cmp(&a.0));
    match scores.as_slice() {
        [] => None,
        [(_, d)] => Some(d.to_string()),
        [(a, d), (b, _), ..] if a > b => Some(d.to_string()),
        _ => None,
    }
}

fn parse_domain_reply(text: &str, registry: &SopRegistry) -> Option<String> {
    let labels = registry.labels();
    for line in text.lines().rev() {
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().trim_matches('*').eq_ignore_ascii_case("domain") {
                let v = v.trim().trim_matches(|c: char| c == '*' || c == '`' || c == '.' || c == '"');
                if let Some(l) = labels.iter().find(|l| l.eq_ignore_ascii_case(v)) {
                    return Some(l.to_string());
                }
            }
        }
    }
    let t = text.trim().trim_matches(|c: char| !c.is_alphanumeric() && c != '-');
    labels
        .iter()
        .find(|l| l.eq_ignore_ascii_case(t))
        .map(|l| l.to_string())
}

/// Picks the SOP domain for a problem: an explicit registered domain hint,
/// then keywords, then (when a backend is given) one classification call,
/// then `default`. Backend failures fall back to `default`.
pub fn triage(problem: &Problem, registry: &SopRegistry, ctx: Option<&CallContext>) -> Triage {
    let done = |d: &str| Triage { domain: d.to_string(), call: None };
    if let Some(hint) = problem.domain_hint.as_deref() {
        if registry.get(hint).is_some() {
            return done(hint);
        }
    }
    if let Some(d) = triage_by_keywords(&problem.statement, registry) {
        return done(&d);
    }
    let Some(ctx) = ctx else {
        return done(DEFAULT_DOMAIN);
    };
    let labels = registry.labels().join(", ");
    let messages = ctx.prompts.render(
        TemplateName::Triage,
        &[("problem", &problem.statement), ("labels", &labels)],
    );
    let request = ctx.sampling.request(CallTag::Triage, messages);
    match ctx.backend.complete(&request) {
        Ok(r) => Triage {
            domain: parse_domain_reply(&r.text, registry).unwrap_or_else(|| DEFAULT_DOMAIN.to_string()),
            call: Some((r.usage, r.latency_ms)),
        },
        Err(e) => {
            log::warn!("triage call failed ({e}); using default SOP");
            done(DEFAULT_DOMAIN)
        }
    }
}

/// Block appended to solver prompts: the domain strategy for the action
/// plus any worked examples. Empty when there is nothing to add.
pub fn sop_block(registry: &SopRegistry, domain: &str, action: AtomicAction) -> String {
    let Some(strategy) = registry.guidance_for(domain, action) else {
        return String::new();
    };
    let mut out = format!("\n# Strategy for this action\n{strategy}\n");
    let examples = &registry.resolve(domain).examples;
    if !examples.is_empty() {
        out.push_str("\n# Worked examples\n");
        for e in examples {
            out.push_str(&format!("Problem: {}\nStep: {}\n", e.problem_excerpt, e.worked_step));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry() {
        let r = SopRegistry::builtin();
        assert_eq!(r.labels(), vec!["default", "logical-reasoning", "science-problem"]);
        for a in AtomicAction::ALL {
            assert!(r.default_sop().sop_guidance(a).is_some(), "{a}");
        }
    }

    #[test]
    fn rejects_unknown_action_and_section() {
        let e = Sop::parse("x.sop", "[meta]\ndomain = d\n[action:guesswork]\nfoo").unwrap_err();
        assert!(matches!(e, SopError::Parse { line: 3, .. }), "{e}");
        let e = Sop::parse("x.sop", "[meta]\ndomain = d\n[bogus]\n").unwrap_err();
        assert!(matches!(e, SopError::Parse { line: 3, .. }));
        let ok = Sop::parse("x.sop", "[meta]\ndomain = d\n[action:hypothesis_generation]\nfoo\n").unwrap();
        assert_eq!(ok.sop_guidance(AtomicAction::HypothesisGeneration), Some("foo"));
    }

    #[test]
    fn missing_domain_and_default() {
        assert!(Sop::parse("x.sop", "[schedule]\nhi").is_err());
        let s = Sop::parse("x.sop", "[meta]\ndomain = other\n").unwrap();
        assert!(matches!(SopRegistry::from_sops([s]), Err(SopError::MissingDefault)));
    }

    #[test]
    fn keyword_boundaries() {
        assert_eq!(keyword_hits("the mass is 2 kg", "kg"), 1);
        assert_eq!(keyword_hits("backgammon", "kg"), 0);
        assert_eq!(keyword_hits("∫ x dx = ?", "∫"), 1);
    }

    #[test]
    fn triage_rules() {
        let r = SopRegistry::builtin();
        let p = |s: &str| Problem::free_text(s);
        assert_eq!(triage(&p("∫ x dx = ?"), &r, None).domain, "science-problem");
        assert_eq!(triage(&p("There are 3 houses. Clues: ..."), &r, None).domain, "logical-reasoning");
        assert_eq!(triage(&p("Write a poem."), &r, None).domain, "default");
    }
}

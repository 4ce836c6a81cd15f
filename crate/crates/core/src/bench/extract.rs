//! Answer extraction from free text.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use regex::Regex;

use crate::model::{Grid, GridSchema};

/// Lower-cases, maps `-`/`_` to spaces, strips surrounding punctuation and
/// markup, and collapses whitespace. No aliasing beyond that.
pub fn normalize_token(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .flat_map(char::to_lowercase)
        .collect();
    let trimmed = mapped.trim_matches(|c: char| !c.is_alphanumeric());
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no answer found")]
pub struct NoAnswerFound;

fn mcq_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)the\s+correct\s+answer\s+is\s*:?\s*[*_]*\s*\(\s*([a-z])\s*\)").unwrap()
    })
}

fn paren_letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^A-Za-z0-9])\(([A-Z])\)").unwrap())
}

/// Option letter chosen in `text`: the last `The correct answer is (L)`
/// (any case, optional bold), else the last standalone `(L)`.
pub fn extract_mcq(text: &str, options: &[String]) -> Result<char, NoAnswerFound> {
    let valid = |c: char| (c as usize).checked_sub('A' as usize).is_some_and(|i| i < options.len());
    let primary = mcq_re()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next().map(|ch| ch.to_ascii_uppercase()))
        .filter(|c| valid(*c))
        .last();
    if let Some(c) = primary {
        return Ok(c);
    }
    paren_letter_re()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next())
        .filter(|c| valid(*c))
        .last()
        .ok_or(NoAnswerFound)
}

fn solution_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)solution\s*[*_]*\s*:").unwrap())
}

fn house_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s>*_\-|#]*house\s*(\d+)[\s*_]*[:\-–|][\s*_]*(.*)$").unwrap())
}

/// Reads the last `Solution:` block into a grid. Each `House k:` line is split
/// on `, ( ) [ ] ; | :` and every token is matched exactly (after
/// normalization) against the schema vocabulary; tokens that match nothing
/// or more than one attribute are ignored.
pub fn parse_grid(text: &str, schema: &GridSchema) -> Grid {
    let mut grid = Grid::empty(schema);
    let Some(start) = solution_re().find_iter(text).last() else {
        return grid;
    };
    let block = &text[start.end()..];
    let mut seen = vec![false; schema.houses];
    for cap in house_re().captures_iter(block) {
        let Ok(k) = cap[1].parse::<usize>() else { continue };
        if k == 0 || k > schema.houses || seen[k - 1] {
            continue;
        }
        seen[k - 1] = true;
        for token in cap[2].split([',', '(', ')', '[', ']', ';', '|', ':']) {
            let t = normalize_token(token);
            if t.is_empty() {
                continue;
            }
            let hits: Vec<(usize, &String)> = schema
                .attributes
                .iter()
                .enumerate()
                .flat_map(|(a, attr)| attr.values.iter().map(move |v| (a, v)))
                .filter(|(_, v)| normalize_token(v) == t)
                .collect();
            if let [(a, v)] = hits.as_slice() {
                if grid.cells[k - 1][*a].is_none() {
                    grid.cells[k - 1][*a] = Some((*v).clone());
                }
            }
        }
    }
    grid
}

/// Renders a grid as a `Solution:` block: `- House k: first (rest, ...)`.
pub fn format_grid_solution(grid: &Grid) -> String {
    let mut out = String::from("Solution:\n");
    for (h, row) in grid.cells.iter().enumerate() {
        let vals: Vec<&str> = row.iter().map(|c| c.as_deref().unwrap_or("?")).collect();
        match vals.split_first() {
            Some((first, rest)) if !rest.is_empty() => {
                out.push_str(&format!("- House {}: {} ({})\n", h + 1, first, rest.join(", ")));
            }
            Some((first, _)) => out.push_str(&format!("- House {}: {}\n", h + 1, first)),
            None => out.push_str(&format!("- House {}:\n", h + 1)),
        }
    }
    out
}

fn boxed_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\\boxed\s*\{([^{}]*)\}").unwrap())
}

fn answer_is_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)answer\s+is\s*:?\s*[*_$]*\s*([-+]?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+)?)").unwrap()
    })
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?\d+(?:\.\d+)?(?:\s*/\s*\d+)?").unwrap())
}

/// The numeric answer in `text`: last `\boxed{...}`, else the last
/// `answer is N`, else the last number.
pub fn extract_numeric(text: &str) -> Result<String, NoAnswerFound> {
    if let Some(c) = boxed_re().captures_iter(text).last() {
        let v = normalize_numeric(&c[1]);
        if !v.is_empty() {
            return Ok(v);
        }
    }
    if let Some(c) = answer_is_re().captures_iter(text).last() {
        return Ok(normalize_numeric(&c[1]));
    }
    number_re()
        .find_iter(text)
        .last()
        .map(|m| normalize_numeric(m.as_str()))
        .ok_or(NoAnswerFound)
}

/// Strips whitespace, `\boxed{}` and `$` markers, a leading `+`, and
/// trailing fractional zeros.
pub fn normalize_numeric(s: &str) -> String {
    let mut t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    loop {
        let before = t.clone();
        if let Some(inner) = t.strip_prefix("\\boxed{").and_then(|r| r.strip_suffix('}')) {
            t = inner.to_string();
        }
        t = t.trim_matches('$').to_string();
        if t == before {
            break;
        }
    }
    if let Some(rest) = t.strip_prefix('+') {
        t = rest.to_string();
    }
    if t.contains('.') && !t.contains('/') && t.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-') {
        t = t.trim_end_matches('0').trim_end_matches('.').to_string();
        if t.is_empty() || t == "-" {
            t.push('0');
        }
    }
    if t == "-0" {
        t = "0".into();
    }
    t
}

/// Exact rational value of a decimal or fraction literal.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = normalize_numeric(s).replace(',', "");
    if let Some((n, d)) = s.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        return (!d.is_zero()).then(|| n / d);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.as_str()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    let mut den = BigInt::one();
    for _ in 0..frac.len() {
        den *= 10;
    }
    let v = BigRational::new(num, den);
    Some(if neg { -v } else { v })
}

/// Equality after normalization, or as exact rationals when both parse.
pub fn numeric_equal(a: &str, b: &str) -> bool {
    let (na, nb) = (normalize_numeric(a), normalize_numeric(b));
    if na == nb {
        return true;
    }
    matches!((parse_rational(&na), parse_rational(&nb)), (Some(x), Some(y)) if x == y)
}

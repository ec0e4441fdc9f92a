//! Deterministic offline backend.
//!
//! Every reply is a pure function of `(prompt, schema)`. For test cases the
//! stub reads the input types, the cache summary and the focus bullets back
//! out of the generation prompt:
//!
//! * it emits the first `batch_size` tuples of the boundary-value product
//!   (integer 0, 1, -1, large positive, large negative; string "", "a", a
//!   long string; char 'a', 'Z', '0'; floats likewise) not already listed in
//!   the cache summary;
//! * each focus bullet's integer literals are placed, in order, into the
//!   numeric input slots of a base tuple.
//!
//! For refinements it looks at the source lines around the gaps. The branch
//! rule echoes the comparison constants of the gap's condition, prefixed by
//! the constants of the enclosing guards, together with their neighbours.
//! The line rule only names qualitative patterns (negative, zero, large,
//! matching strings) and never carries a numeric literal in its bullets.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::backend::{BackendError, CompletionBackend, SchemaId};
use super::feedback::AgentPromptSections;
use crate::model::InputKind;
use crate::prompt::{CACHE_LABEL, FOCUS_HEADING};

/// Upper bound on literal-derived cases in one reply.
const MAX_FOCUS_CASES: usize = 128;
const MAX_BRANCH_BULLETS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    /// Fresh boundary tuples plus focus-literal cases.
    Boundary,
    /// The same first batch on every call, whatever the prompt says.
    Constant,
    /// Every fresh tuple is paired with a repeat of an earlier one.
    HalfDuplicate,
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    mode: StubMode,
    batch_size: usize,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new(StubMode::Boundary, 8)
    }
}

impl StubBackend {
    pub fn new(mode: StubMode, batch_size: usize) -> Self {
        Self { mode, batch_size }
    }

    pub fn mode(&self) -> StubMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn test_cases(&self, prompt: &str) -> Vec<Vec<String>> {
        let view = GeneratorView::parse(prompt);
        let space = BoundarySpace::new(&view.kinds);
        match self.mode {
            StubMode::Constant => space.iter().take(self.batch_size).collect(),
            StubMode::Boundary => {
                let mut out = space.fresh(&view.cached_keys, self.batch_size);
                out.extend(focus_cases(&view.kinds, &view.focus_bullets));
                out
            }
            StubMode::HalfDuplicate => {
                let fresh = space.fresh(&view.cached_keys, self.batch_size);
                let recent: Vec<&Vec<String>> = view.cached.iter().rev().collect();
                let mut out = Vec::with_capacity(fresh.len() * 2);
                for (i, tuple) in fresh.iter().enumerate() {
                    out.push(tuple.clone());
                    out.push(recent.get(i).map_or_else(|| tuple.clone(), |t| (*t).clone()));
                }
                out
            }
        }
    }
}

impl CompletionBackend for StubBackend {
    fn model_id(&self) -> &str {
        "stub"
    }

    fn send(&self, prompt: &str, schema: SchemaId) -> Result<String, BackendError> {
        let value = match schema {
            SchemaId::TestCases => json!({ "test_cases": self.test_cases(prompt) }),
            SchemaId::Refinement => {
                let sections = AgentPromptSections::parse(prompt).unwrap_or(AgentPromptSections {
                    missing_lines: Vec::new(),
                    missing_branches: Vec::new(),
                    source_lines: Vec::new(),
                });
                let (explanation, patterns, refinements) = if sections.missing_branches.is_empty() {
                    line_rule(&sections)
                } else {
                    branch_rule(&sections)
                };
                json!({
                    "gap_explanation": explanation,
                    "input_patterns": patterns,
                    "prompt_refinements": refinements,
                })
            }
        };
        Ok(value.to_string())
    }
}

/// What the stub can read back from a generation prompt.
#[derive(Debug, Default)]
struct GeneratorView {
    kinds: Vec<InputKind>,
    cached: Vec<Vec<String>>,
    cached_keys: HashSet<Vec<String>>,
    focus_bullets: Vec<String>,
}

static INPUT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*Input #\d+: expects (\w+)\s*$").unwrap());

impl GeneratorView {
    fn parse(prompt: &str) -> Self {
        let mut view = GeneratorView::default();
        let types_at = prompt.rfind("Detailed input types (in order):").unwrap_or(0);
        let cache_at = prompt.rfind(CACHE_LABEL);
        let types_end = cache_at.unwrap_or(prompt.len()).max(types_at);
        view.kinds = INPUT_LINE
            .captures_iter(&prompt[types_at..types_end])
            .filter_map(|c| InputKind::parse(&c[1]))
            .collect();

        if let Some(at) = cache_at {
            let line = prompt[at + CACHE_LABEL.len()..].lines().next().unwrap_or("");
            view.cached = parse_cache_line(line);
            view.cached_keys = view.cached.iter().cloned().collect();
        }

        if let Some(at) = prompt.rfind(FOCUS_HEADING) {
            view.focus_bullets = prompt[at..]
                .lines()
                .filter_map(|l| l.strip_prefix("- "))
                .map(str::to_owned)
                .collect();
        }
        view
    }
}

/// Inverse of the cache summary rendering: `(a, b), (c, d)`.
fn parse_cache_line(line: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut rest = line.trim();
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let close = after.find("), (").or_else(|| after.rfind(')'));
        let Some(close) = close else { break };
        let body = &after[..close];
        rest = &after[close + 1..];
        if body.starts_with('+') && body.ends_with(" older") {
            continue;
        }
        if body.is_empty() {
            out.push(Vec::new());
        } else {
            out.push(body.split(", ").map(str::to_owned).collect());
        }
    }
    out
}

fn boundary_values(kind: InputKind) -> Vec<String> {
    let v: &[&str] = match kind {
        InputKind::Integer => &["0", "1", "-1", "2147483647", "-2147483648"],
        InputKind::Float => &["0.0", "1.5", "-1.5", "1e308", "-1e308"],
        InputKind::String => &["", "a", LONG_STRING.as_str()],
        InputKind::Char => &["a", "Z", "0"],
    };
    v.iter().map(|s| s.to_string()).collect()
}

static LONG_STRING: LazyLock<String> = LazyLock::new(|| "Z".repeat(128));

/// Cartesian product of the per-slot boundary values, last slot fastest.
struct BoundarySpace {
    slots: Vec<Vec<String>>,
}

impl BoundarySpace {
    fn new(kinds: &[InputKind]) -> Self {
        Self {
            slots: kinds.iter().map(|&k| boundary_values(k)).collect(),
        }
    }

    fn iter(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        let size: u128 = self.slots.iter().map(|s| s.len() as u128).product();
        (0..size).map(move |mut index| {
            let mut tuple = vec![String::new(); self.slots.len()];
            for (slot, values) in self.slots.iter().enumerate().rev() {
                let radix = values.len() as u128;
                tuple[slot] = values[(index % radix) as usize].clone();
                index /= radix;
            }
            tuple
        })
    }

    fn fresh(&self, cached: &HashSet<Vec<String>>, n: usize) -> Vec<Vec<String>> {
        self.iter().filter(|t| !cached.contains(t)).take(n).collect()
    }

    fn base(&self) -> Vec<String> {
        self.slots.iter().map(|v| v[0].clone()).collect()
    }
}

/// Standalone integer literals, in order of appearance.
fn integer_literals(text: &str) -> Vec<i64> {
    static LIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+").unwrap());
    let bytes = text.as_bytes();
    LIT.find_iter(text)
        .filter(|m| {
            let before = m.start().checked_sub(1).map(|i| bytes[i]);
            let after = bytes.get(m.end()).copied();
            let glued = |b: Option<u8>| b.is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.');
            !glued(before) && !glued(after)
        })
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}

/// Places each bullet's literals into the numeric slots, preserving order,
/// over every increasing choice of slots.
fn focus_cases(kinds: &[InputKind], bullets: &[String]) -> Vec<Vec<String>> {
    let numeric: Vec<usize> = kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| k.is_numeric())
        .map(|(i, _)| i)
        .collect();
    if numeric.is_empty() {
        return Vec::new();
    }
    let base = BoundarySpace::new(kinds).base();
    let mut out = Vec::new();
    for bullet in bullets {
        let mut lits = integer_literals(bullet);
        if lits.is_empty() {
            continue;
        }
        if lits.len() > numeric.len() {
            lits.drain(..lits.len() - numeric.len());
        }
        for chosen in combinations(&numeric, lits.len()) {
            let mut tuple = base.clone();
            for (&slot, lit) in chosen.iter().zip(&lits) {
                tuple[slot] = lit.to_string();
            }
            out.push(tuple);
            if out.len() >= MAX_FOCUS_CASES {
                return out;
            }
        }
    }
    out
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn indent(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

static GUARD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\}\s*)?(?:if|elif|else\s+if|while|for|switch|case)\b").unwrap());

/// Conditional lines enclosing `line` (1-based), outermost first.
fn enclosing_guards(source: &[String], line: u32) -> Vec<usize> {
    let idx = (line as usize).saturating_sub(1);
    let Some(current) = source.get(idx) else {
        return Vec::new();
    };
    let mut level = indent(current);
    let mut guards = Vec::new();
    for i in (0..idx).rev() {
        let text = &source[i];
        if text.trim().is_empty() || text.trim_start().starts_with('}') && !GUARD.is_match(text) {
            continue;
        }
        let ind = indent(text);
        if ind < level {
            if GUARD.is_match(text) {
                guards.push(i);
            }
            level = ind;
            if level == 0 {
                break;
            }
        }
    }
    guards.reverse();
    guards
}

/// Integer constants a condition compares against.
fn comparison_constants(line: &str) -> Vec<i64> {
    static CMP: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"(?:==|!=|<=|>=|<|>)\s*\(?\s*(-?\d+)\b|\b(-?\d+)\s*\)?\s*(?:==|!=|<=|>=|<|>)").unwrap()
    });
    CMP.captures_iter(line)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)))
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}

fn source_line(sections: &AgentPromptSections, line: u32) -> &str {
    sections
        .source_lines
        .get((line as usize).saturating_sub(1))
        .map_or("", String::as_str)
}

fn branch_rule(sections: &AgentPromptSections) -> (String, Vec<String>, Vec<String>) {
    let mut lines: Vec<u32> = sections.missing_branches.iter().map(|g| g.line).collect();
    lines.dedup();
    let mut patterns = Vec::new();
    let mut refinements = Vec::new();
    for &line in &lines {
        let text = source_line(sections, line).trim();
        patterns.push(text.to_owned());
        let prefix: Vec<i64> = enclosing_guards(&sections.source_lines, line)
            .into_iter()
            .filter_map(|i| comparison_constants(&sections.source_lines[i]).first().copied())
            .collect();
        for c in comparison_constants(text) {
            for v in [c, c.saturating_sub(1), c.saturating_add(1)] {
                let values: Vec<String> = prefix.iter().chain(std::iter::once(&v)).map(i64::to_string).collect();
                refinements.push(format!(
                    "Include a test case whose numeric inputs take the values {} in this order",
                    values.join(", ")
                ));
            }
        }
    }
    if refinements.is_empty() {
        refinements.push("Choose complementary inputs that flip each listed condition to its untaken outcome".into());
    }
    let mut seen = HashSet::new();
    refinements.retain(|r| seen.insert(r.clone()));
    refinements.truncate(MAX_BRANCH_BULLETS);
    let explanation = format!(
        "Conditions with an untaken outcome: {}",
        patterns.iter().map(|p| format!("`{p}`")).collect::<Vec<_>>().join("; ")
    );
    (explanation, patterns, refinements)
}

fn line_rule(sections: &AgentPromptSections) -> (String, Vec<String>, Vec<String>) {
    let mut hints: Vec<(&str, &str)> = Vec::new();
    for &line in &sections.missing_lines {
        for guard in enclosing_guards(&sections.source_lines, line) {
            let cond = sections.source_lines[guard].as_str();
            let consts = comparison_constants(cond);
            if consts.iter().any(|&c| c < 0) || cond.contains("< 0") || cond.contains("<0") {
                hints.push(("negative values", "Include negative values for the inputs the guarding conditions test"));
            }
            if consts.contains(&0) && (cond.contains("==") || cond.contains("!=")) {
                hints.push(("zero", "Include zero for the inputs the guarding conditions test"));
            }
            if consts.iter().any(|&c| c >= 1000) && cond.contains('>') {
                hints.push(("large values", "Include very large positive values"));
            }
            if cond.contains('"') || cond.contains('\'') {
                hints.push(("matching strings", "Include strings that exactly match the literals the program compares against"));
            }
            if cond.contains('%') {
                hints.push(("divisibility", "Include both multiples and non-multiples for the modulo checks"));
            }
            if consts.iter().any(|&c| c != 0) && cond.contains("==") {
                hints.push(("exact constants", "Include values equal to the constants used in the guarding equality checks"));
            }
        }
    }
    let mut seen = HashSet::new();
    hints.retain(|h| seen.insert(*h));
    if hints.is_empty() {
        hints.push(("guard satisfaction", "Vary the inputs so that the conditions guarding the unexecuted lines hold"));
    }
    let explanation = format!(
        "{} source line(s) were never executed because their guarding conditions never held",
        sections.missing_lines.len()
    );
    let patterns = hints.iter().map(|(p, _)| p.to_string()).collect();
    let refinements = hints.iter().map(|(_, r)| r.to_string()).collect();
    (explanation, patterns, refinements)
}

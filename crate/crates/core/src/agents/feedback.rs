//! Prompts for the line and branch feedback agents.
//!
//! Gap lists come first, then the numbered source, then the generator prompt
//! under revision, so the fixed sections can be located before any
//! user-controlled text.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::model::BranchGap;

const REFINEMENT_SCHEMA: &str = r#"{"gap_explanation": "<one or two sentences>", "input_patterns": ["<input pattern>", ...], "prompt_refinements": ["<instruction for the test generator>", ...]}"#;

const SOURCE_OPEN: &str = "<source>\n";
const SOURCE_CLOSE: &str = "</source>\n\n<current_prompt>\n";
const PROMPT_CLOSE: &str = "\n</current_prompt>\n\nRespond with only a JSON object";

pub fn line_feedback_prompt(source: &str, missing_lines: &BTreeSet<u32>, current_prompt: &str) -> String {
    let lines: Vec<String> = missing_lines.iter().map(u32::to_string).collect();
    let mut p = String::new();
    p.push_str(
        "You are the Line Feedback Agent of a coverage-driven test generator.\n\
         The source lines listed below were never executed by any generated test.\n\
         Explain why, identify the input patterns that would execute them, and write \
         prompt refinements that steer the test generator toward those patterns.\n\n",
    );
    let _ = writeln!(p, "<missing_lines>\n{}\n</missing_lines>\n", lines.join(", "));
    push_common(&mut p, source, current_prompt);
    p
}

pub fn branch_feedback_prompt(source: &str, missing_branches: &[BranchGap], current_prompt: &str) -> String {
    let mut p = String::new();
    p.push_str(
        "You are the Branch Feedback Agent of a coverage-driven test generator.\n\
         The conditional outcome arms listed below were never taken. For each condition, \
         infer the input constraints that flip it to the missing outcome and compute concrete \
         complementary input values. Write prompt refinements that make the test generator \
         produce them.\n\n",
    );
    p.push_str("<missing_branches>\n");
    for g in missing_branches {
        let _ = writeln!(p, "line {} arm {}", g.line, g.branch_id);
    }
    p.push_str("</missing_branches>\n\n");
    push_common(&mut p, source, current_prompt);
    p
}

fn push_common(p: &mut String, source: &str, current_prompt: &str) {
    p.push_str(SOURCE_OPEN);
    for (i, line) in source.lines().enumerate() {
        let _ = writeln!(p, "{:>5}| {}", i + 1, line);
    }
    p.push_str(SOURCE_CLOSE);
    p.push_str(current_prompt);
    p.push_str(PROMPT_CLOSE);
    let _ = writeln!(p, " of the form {REFINEMENT_SCHEMA}.");
}

/// Sections recovered from a feedback agent prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPromptSections {
    pub missing_lines: Vec<u32>,
    pub missing_branches: Vec<BranchGap>,
    /// Source lines, index 0 is line 1.
    pub source_lines: Vec<String>,
}

impl AgentPromptSections {
    pub fn parse(prompt: &str) -> Option<Self> {
        let mut missing_lines = Vec::new();
        let mut missing_branches = Vec::new();
        if let Some(body) = between(prompt, "<missing_lines>\n", "\n</missing_lines>") {
            missing_lines = body
                .split(',')
                .filter_map(|s| s.trim().parse().ok())
                .collect();
        } else {
            let body = between(prompt, "<missing_branches>\n", "</missing_branches>")?;
            for line in body.lines() {
                let mut w = line.split_whitespace();
                if let (Some("line"), Some(l), Some("arm"), Some(a)) = (w.next(), w.next(), w.next(), w.next()) {
                    missing_branches.push(BranchGap::missing(l.parse().ok()?, a.parse().ok()?));
                }
            }
        }
        let source = between(prompt, SOURCE_OPEN, SOURCE_CLOSE)?;
        let source_lines = source
            .lines()
            .map(|l| l.split_once("| ").map_or("", |(_, code)| code).to_owned())
            .collect();
        Some(Self {
            missing_lines,
            missing_branches,
            source_lines,
        })
    }
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(&text[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "int main() {\n  if (x == 42) {\n    hit();\n  }\n}";

    #[test]
    fn line_prompt_round_trips_sections() {
        let p = line_feedback_prompt(SRC, &BTreeSet::from([3, 4]), "GEN PROMPT");
        assert!(p.contains("GEN PROMPT"));
        assert!(p.contains("\"prompt_refinements\""));
        let s = AgentPromptSections::parse(&p).unwrap();
        assert_eq!(s.missing_lines, [3, 4]);
        assert!(s.missing_branches.is_empty());
        assert_eq!(s.source_lines[1], "  if (x == 42) {");
        assert_eq!(s.source_lines.len(), 5);
    }

    #[test]
    fn branch_prompt_round_trips_sections() {
        let gaps = [BranchGap::missing(2, 0), BranchGap::missing(2, 1)];
        let p = branch_feedback_prompt(SRC, &gaps, "GEN");
        let s = AgentPromptSections::parse(&p).unwrap();
        assert_eq!(s.missing_branches, gaps);
        assert!(s.missing_lines.is_empty());
    }

    #[test]
    fn generator_prompts_are_not_agent_prompts() {
        assert!(AgentPromptSections::parse("Generate diverse test values").is_none());
    }
}

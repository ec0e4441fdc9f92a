//! Generation prompt: the baseline template plus a single replaceable
//! "Additional Focus Areas" section built from the feedback agents' output.

use std::fmt;

use crate::agents::FeedbackRefinement;
use crate::model::{InputSignature, TargetLanguage};

pub const FOCUS_HEADING: &str = "Additional Focus Areas:";
pub const CACHE_LABEL: &str = "Previously generated values:";

const HEADER: &str = "Generate diverse test values for the following program.";
const INSTRUCTIONS: &str = "Include diverse cases: boundary chars, negative integers, large extremes.\n\
Output format must be a JSON object with a \"test_cases\" key containing a list of lists.\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub base_text: String,
    pub input_section: String,
    pub cache_section: String,
    pub focus_section: Option<String>,
    /// Number of values each generated case must carry.
    pub arity: usize,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(
            self.base_text.len() + self.input_section.len() + self.cache_section.len() + 256,
        );
        out.push_str(&self.base_text);
        out.push_str(&self.input_section);
        out.push_str(INSTRUCTIONS);
        out.push_str(&self.cache_section);
        if let Some(focus) = &self.focus_section {
            out.push('\n');
            out.push_str(focus);
        }
        out
    }

    /// Same prompt with the focus section dropped.
    pub fn baseline(&self) -> PromptBundle {
        PromptBundle {
            focus_section: None,
            ..self.clone()
        }
    }
}

impl fmt::Display for PromptBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn build_baseline_prompt(
    sig: &InputSignature,
    source: &str,
    cache_summary: &str,
) -> PromptBundle {
    let mut base_text = String::new();
    base_text.push_str(HEADER);
    base_text.push('\n');
    if !source.is_empty() {
        let fence = fence_for(source);
        let tag = match sig.target_language() {
            TargetLanguage::C => "c",
            TargetLanguage::Python => "python",
        };
        base_text.push_str(&format!("{fence}{tag}\n{}", source));
        if !source.ends_with('\n') {
            base_text.push('\n');
        }
        base_text.push_str(&fence);
        base_text.push('\n');
    }

    let mut input_section = format!(
        "IMPORTANT: This program calls input exactly {} times.\nDetailed input types (in order):\n",
        sig.count()
    );
    for (i, kind) in sig.kinds().iter().enumerate() {
        input_section.push_str(&format!("  Input #{}: expects {}\n", i + 1, kind));
    }

    PromptBundle {
        base_text,
        input_section,
        cache_section: format!("{CACHE_LABEL} {cache_summary}\n"),
        focus_section: None,
        arity: sig.count(),
    }
}

/// A backtick fence longer than any run of backticks inside `source`.
fn fence_for(source: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in source.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat(longest.max(2) + 1)
}

/// Replaces any previous focus section with one built from the given
/// refinements, line agent first.
pub fn merge_refinements(
    base: &PromptBundle,
    line_fb: Option<&FeedbackRefinement>,
    branch_fb: Option<&FeedbackRefinement>,
) -> PromptBundle {
    let parts: Vec<(&str, &FeedbackRefinement)> = [("Line coverage", line_fb), ("Branch coverage", branch_fb)]
        .into_iter()
        .filter_map(|(label, fb)| fb.map(|fb| (label, fb)))
        .collect();
    if parts.is_empty() {
        return base.baseline();
    }
    let mut focus = String::from(FOCUS_HEADING);
    focus.push('\n');
    for (label, fb) in parts {
        focus.push_str(&format!("{label}: {}\n", one_line(&fb.gap_explanation)));
        for r in &fb.prompt_refinements {
            focus.push_str("- ");
            focus.push_str(&one_line(r));
            focus.push('\n');
        }
    }
    PromptBundle {
        focus_section: Some(focus),
        ..base.clone()
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Origin;
    use crate::model::InputKind;

    fn sig(kinds: &[InputKind]) -> InputSignature {
        InputSignature::new(kinds.to_vec(), TargetLanguage::Python)
    }

    fn fb(origin: Origin, refinements: &[&str]) -> FeedbackRefinement {
        FeedbackRefinement {
            origin,
            gap_explanation: "gap".into(),
            input_patterns: vec![],
            prompt_refinements: refinements.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn baseline_lists_inputs_in_order() {
        let p = build_baseline_prompt(&sig(&[InputKind::Integer, InputKind::String]), "x = 1\n", "");
        let text = p.render();
        assert!(text.contains("calls input exactly 2 times"));
        let first = text.find("Input #1: expects integer").unwrap();
        let second = text.find("Input #2: expects string").unwrap();
        assert!(first < second);
        assert!(text.contains("boundary chars, negative integers, large extremes"));
        assert!(text.contains("Output format must be a JSON object with a \"test_cases\" key"));
        assert!(text.ends_with("Previously generated values: \n"));
        assert!(text.contains("```python\nx = 1\n```"));
        assert_eq!(p.arity, 2);
    }

    #[test]
    fn empty_signature() {
        let text = build_baseline_prompt(&sig(&[]), "", "").render();
        assert!(text.contains("exactly 0 times"));
        assert!(!text.contains("Input #"));
    }

    #[test]
    fn cache_summary_rendered() {
        let text = build_baseline_prompt(&sig(&[InputKind::Integer]), "", "(1, a)").render();
        let at = text.find(CACHE_LABEL).unwrap();
        assert!(text[at..].contains("(1, a)"));
    }

    #[test]
    fn merge_without_refinements_is_identity() {
        let base = build_baseline_prompt(&sig(&[InputKind::Integer]), "src", "(1)");
        let merged = merge_refinements(&base, None, None);
        assert_eq!(merged.render(), base.render());
        assert!(merged.focus_section.is_none());
    }

    #[test]
    fn merge_orders_line_then_branch() {
        let base = build_baseline_prompt(&sig(&[InputKind::Integer]), "src", "");
        let line = fb(Origin::Line, &["use negative n"]);
        let branch = fb(Origin::Branch, &["force flag=0"]);
        let text = merge_refinements(&base, Some(&line), Some(&branch)).render();
        assert_eq!(text.matches("Additional Focus Areas").count(), 1);
        let a = text.find("- use negative n").unwrap();
        let b = text.find("- force flag=0").unwrap();
        assert!(text.find(FOCUS_HEADING).unwrap() < a && a < b);
    }

    #[test]
    fn merge_replaces_previous_focus() {
        let base = build_baseline_prompt(&sig(&[InputKind::Integer]), "src", "");
        let line = fb(Origin::Line, &["one"]);
        let branch = fb(Origin::Branch, &["two"]);
        let once = merge_refinements(&base, Some(&line), Some(&branch));
        let twice = merge_refinements(&once, Some(&line), Some(&branch));
        assert_eq!(once.render(), twice.render());
        assert_eq!(twice.render().matches(FOCUS_HEADING).count(), 1);

        let other = fb(Origin::Branch, &["three"]);
        let replaced = merge_refinements(&once, None, Some(&other)).render();
        assert!(!replaced.contains("- one"));
        assert!(replaced.contains("- three"));
    }

    #[test]
    fn multiline_refinements_stay_single_bullets() {
        let base = build_baseline_prompt(&sig(&[]), "", "");
        let line = fb(Origin::Line, &["a\nb"]);
        let text = merge_refinements(&base, Some(&line), None).render();
        assert!(text.contains("- a b\n"));
    }

    #[test]
    fn fence_outgrows_source_backticks() {
        let p = build_baseline_prompt(&sig(&[]), "s = '````'\n", "");
        assert!(p.base_text.contains("`````python"));
    }

    #[test]
    fn prompt_grows_linearly_with_cache() {
        let s = sig(&[InputKind::Integer]);
        let render = |n: usize| {
            let summary = (0..n).map(|i| format!("({:03})", i)).collect::<Vec<_>>().join(", ");
            build_baseline_prompt(&s, "src", &summary).render().len()
        };
        let base = render(0);
        assert_eq!(render(100) - base, 100 * 5 + 99 * 2);
    }
}

use std::collections::{BTreeMap, BTreeSet};

use super::{quote, CoverageError};
use crate::model::{BranchGap, CoverageReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineCount {
    NotExecutable,
    Never,
    Executed,
}

/// Parses the annotated text gcov writes with branch output enabled
/// (`gcov -b`, with or without `-c`).
pub fn parse_gcov(report_text: &str) -> Result<CoverageReport, CoverageError> {
    let mut lines: BTreeMap<u32, bool> = BTreeMap::new();
    let mut total_branches = 0u32;
    let mut taken_branches = 0u32;
    let mut gaps = Vec::new();
    let mut current_line: Option<u32> = None;

    for raw in report_text.lines() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with("------") {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("branch") {
            let (id, taken) = parse_branch(rest).ok_or_else(|| bad_line(raw))?;
            let line = current_line.ok_or_else(|| {
                CoverageError::Parse(format!("branch annotation before any source line: {:?}", quote(raw)))
            })?;
            total_branches += 1;
            if taken {
                taken_branches += 1;
            } else {
                gaps.push(BranchGap::missing(line, id));
            }
            continue;
        }
        if ["call", "function", "unconditional", "condition"]
            .iter()
            .any(|p| trimmed.starts_with(p))
        {
            continue;
        }

        let mut fields = raw.splitn(3, ':');
        let (Some(count), Some(lineno)) = (fields.next(), fields.next()) else {
            // instantiation headers such as `_Z3fooi:` have nothing after the colon
            if trimmed.ends_with(':') {
                continue;
            }
            return Err(bad_line(raw));
        };
        if fields.next().is_none() && trimmed.ends_with(':') {
            continue;
        }
        let lineno = lineno.trim();
        if lineno.contains("-block") {
            continue;
        }
        let lineno: u32 = lineno.parse().map_err(|_| bad_line(raw))?;
        let count = parse_count(count.trim()).ok_or_else(|| bad_line(raw))?;
        if lineno == 0 {
            continue;
        }
        current_line = Some(lineno);
        match count {
            LineCount::NotExecutable => {}
            LineCount::Never => {
                lines.entry(lineno).or_insert(false);
            }
            LineCount::Executed => {
                lines.insert(lineno, true);
            }
        }
    }

    let executed: BTreeSet<u32> = lines.iter().filter(|(_, &hit)| hit).map(|(&l, _)| l).collect();
    let missing: BTreeSet<u32> = lines.iter().filter(|(_, &hit)| !hit).map(|(&l, _)| l).collect();
    Ok(CoverageReport::new(executed, missing, total_branches, taken_branches, gaps)?)
}

fn bad_line(raw: &str) -> CoverageError {
    CoverageError::Parse(format!("unrecognized gcov line: {:?}", quote(raw)))
}

fn parse_count(field: &str) -> Option<LineCount> {
    match field {
        "-" => return Some(LineCount::NotExecutable),
        "#####" | "=====" | "$$$$$" | "%%%%%" => return Some(LineCount::Never),
        _ => {}
    }
    let digits = field.strip_suffix('*').unwrap_or(field);
    if positive_or_zero(digits)? {
        Some(LineCount::Executed)
    } else {
        Some(LineCount::Never)
    }
}

/// Returns Some(true) for a positive count, Some(false) for zero. Accepts the
/// human-readable suffixes gcov prints with `-H` (`1.2k`, `3M`).
fn positive_or_zero(field: &str) -> Option<bool> {
    if field.is_empty() {
        return None;
    }
    let number = field.trim_end_matches(|c: char| "kMGTPEZY".contains(c));
    if number.len() + 1 < field.len() {
        return None;
    }
    let value: f64 = if number.chars().all(|c| c.is_ascii_digit() || c == '.') {
        number.parse().ok()?
    } else {
        return None;
    };
    Some(value > 0.0)
}

/// `  N taken X[%] [(fallthrough)]` or `  N never executed`.
fn parse_branch(rest: &str) -> Option<(u32, bool)> {
    let mut words = rest.split_whitespace();
    let id: u32 = words.next()?.parse().ok()?;
    match words.next()? {
        "taken" => {
            let amount = words.next()?;
            let amount = amount.strip_suffix('%').unwrap_or(amount);
            Some((id, positive_or_zero(amount)?))
        }
        "never" => (words.next()? == "executed").then_some((id, false)),
        _ => None,
    }
}

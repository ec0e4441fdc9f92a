use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::CoverageError;
use crate::model::{BranchGap, CoverageReport};

#[derive(Debug, Deserialize)]
struct Export {
    files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, Deserialize)]
struct FileEntry {
    executed_lines: Vec<u32>,
    missing_lines: Vec<u32>,
    summary: Summary,
    #[serde(default)]
    executed_branches: Vec<(i64, i64)>,
    #[serde(default)]
    missing_branches: Vec<(i64, i64)>,
}

#[derive(Debug, Deserialize)]
struct Summary {
    #[serde(default)]
    num_branches: u32,
    #[serde(default)]
    covered_branches: u32,
}

/// Parses a coverage.py JSON export (`coverage json`) holding exactly one
/// measured file.
pub fn parse_dynamic_coverage(report: &str) -> Result<CoverageReport, CoverageError> {
    parse_dynamic_coverage_for(report, None)
}

/// Like [`parse_dynamic_coverage`], selecting the file whose key ends with
/// `file_suffix` when the export measured several.
pub fn parse_dynamic_coverage_for(
    report: &str,
    file_suffix: Option<&str>,
) -> Result<CoverageReport, CoverageError> {
    let export: Export = serde_json::from_str(report)
        .map_err(|e| CoverageError::Parse(format!("coverage export schema mismatch: {e}")))?;
    let mut candidates: Vec<(&String, &FileEntry)> = export
        .files
        .iter()
        .filter(|(name, _)| file_suffix.is_none_or(|s| name.ends_with(s)))
        .collect();
    let entry = match candidates.len() {
        0 if export.files.is_empty() => return Ok(CoverageReport::empty()),
        0 => {
            return Err(CoverageError::Parse(format!(
                "no measured file matches {:?}",
                file_suffix.unwrap_or_default()
            )))
        }
        1 => candidates.pop().unwrap().1,
        n => {
            return Err(CoverageError::Parse(format!(
                "export covers {n} files; select one explicitly"
            )))
        }
    };

    let executed: BTreeSet<u32> = entry.executed_lines.iter().copied().collect();
    let missing: BTreeSet<u32> = entry.missing_lines.iter().copied().collect();
    let total = entry.summary.num_branches;
    let taken = entry.summary.covered_branches;
    if taken > total || (total - taken) as usize != entry.missing_branches.len() {
        return Err(CoverageError::Parse(format!(
            "branch counters ({taken}/{total}) disagree with {} missing arcs",
            entry.missing_branches.len()
        )));
    }

    // arm id: rank of the arc's destination among all arcs leaving that line
    let mut arcs: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for &(from, to) in entry.executed_branches.iter().chain(&entry.missing_branches) {
        arcs.entry(from).or_default().push(to);
    }
    for dests in arcs.values_mut() {
        dests.sort_unstable();
        dests.dedup();
    }
    let mut gaps = Vec::with_capacity(entry.missing_branches.len());
    for &(from, to) in &entry.missing_branches {
        let line = u32::try_from(from)
            .map_err(|_| CoverageError::Parse(format!("branch source line {from} is not a source line")))?;
        let arm = arcs[&from].binary_search(&to).expect("arc registered above");
        gaps.push(BranchGap::missing(line, arm as u32));
    }
    Ok(CoverageReport::new(executed, missing, total, taken, gaps)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn export(file: &str) -> String {
        format!(r#"{{"meta": {{"format": 3}}, "files": {{"build/t.py": {file}}}}}"#)
    }

    #[test]
    fn lines_map_directly() {
        let text = export(
            r#"{"executed_lines": [1, 2, 4], "missing_lines": [3],
                "summary": {"num_branches": 0, "covered_branches": 0},
                "executed_branches": [], "missing_branches": []}"#,
        );
        let r = parse_dynamic_coverage(&text).unwrap();
        assert_eq!(r.line_coverage(), 75.0);
        assert_eq!(r.branch_coverage(), 100.0);
    }

    #[test]
    fn all_branches_covered() {
        let text = export(
            r#"{"executed_lines": [1], "missing_lines": [],
                "summary": {"num_branches": 6, "covered_branches": 6},
                "executed_branches": [[1,2],[1,3],[4,5],[4,6],[7,8],[7,-1]], "missing_branches": []}"#,
        );
        let r = parse_dynamic_coverage(&text).unwrap();
        assert_eq!(r.branch_coverage(), 100.0);
        assert!(r.missing_branches().is_empty());
    }

    #[test]
    fn true_arm_only() {
        // if on line 2: true arm to line 3 taken, false arm to line 5 missing
        let text = export(
            r#"{"executed_lines": [1, 2, 3, 6], "missing_lines": [5],
                "summary": {"num_branches": 2, "covered_branches": 1},
                "executed_branches": [[2, 3]], "missing_branches": [[2, 5]]}"#,
        );
        let r = parse_dynamic_coverage(&text).unwrap();
        assert_eq!(r.missing_branches(), &[BranchGap::missing(2, 1)]);
        assert_eq!(r.branch_coverage(), 50.0);
    }

    #[test]
    fn exit_arcs_rank_first() {
        let text = export(
            r#"{"executed_lines": [6, 7], "missing_lines": [],
                "summary": {"num_branches": 2, "covered_branches": 1},
                "executed_branches": [[6, 7]], "missing_branches": [[6, -1]]}"#,
        );
        let r = parse_dynamic_coverage(&text).unwrap();
        assert_eq!(r.missing_branches(), &[BranchGap::missing(6, 0)]);
    }

    #[test]
    fn schema_errors() {
        assert!(parse_dynamic_coverage("{}").is_err());
        assert!(parse_dynamic_coverage("not json").is_err());
        let bad_counts = export(
            r#"{"executed_lines": [], "missing_lines": [],
                "summary": {"num_branches": 2, "covered_branches": 0},
                "missing_branches": [[1, 2]]}"#,
        );
        assert!(parse_dynamic_coverage(&bad_counts).is_err());
    }

    #[test]
    fn file_selection() {
        let entry = r#"{"executed_lines": [1], "missing_lines": [], "summary": {}}"#;
        let text = format!(r#"{{"files": {{"a.py": {entry}, "b.py": {entry}}}}}"#);
        assert!(parse_dynamic_coverage(&text).is_err());
        assert!(parse_dynamic_coverage_for(&text, Some("b.py")).is_ok());
        assert!(parse_dynamic_coverage_for(&text, Some("c.py")).is_err());
        assert_eq!(parse_dynamic_coverage(r#"{"files": {}}"#).unwrap(), CoverageReport::empty());
    }
}

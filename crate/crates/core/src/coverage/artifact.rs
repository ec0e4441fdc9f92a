use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::CoverageError;
use crate::model::{format_pct, BranchGap, CoverageReport};

#[derive(Serialize)]
struct ArtifactOut<'a> {
    executed_lines: &'a BTreeSet<u32>,
    missing_lines: &'a BTreeSet<u32>,
    missing_branches: &'a [BranchGap],
    total_branches: u32,
    taken_branches: u32,
    line_coverage: Box<RawValue>,
    branch_coverage: Box<RawValue>,
    total_coverage: Box<RawValue>,
}

#[derive(Deserialize)]
struct ArtifactIn {
    executed_lines: BTreeSet<u32>,
    missing_lines: BTreeSet<u32>,
    missing_branches: Vec<BranchGap>,
    total_branches: u32,
    taken_branches: u32,
}

fn two_decimals(value: f64) -> Box<RawValue> {
    RawValue::from_string(format_pct(value)).expect("fixed-point number is valid JSON")
}

/// JSON artifact text; percentages rendered with exactly two decimals.
pub fn render_artifact(report: &CoverageReport) -> String {
    let out = ArtifactOut {
        executed_lines: report.executed_lines(),
        missing_lines: report.missing_lines(),
        missing_branches: report.missing_branches(),
        total_branches: report.total_branches(),
        taken_branches: report.taken_branches(),
        line_coverage: two_decimals(report.line_coverage()),
        branch_coverage: two_decimals(report.branch_coverage()),
        total_coverage: two_decimals(report.total_coverage()),
    };
    let mut text = serde_json::to_string_pretty(&out).expect("artifact serializes");
    text.push('\n');
    text
}

pub fn emit_artifact(report: &CoverageReport, path: &Path) -> Result<(), CoverageError> {
    let persist = |source| CoverageError::Persist {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(persist)?;
    }
    fs::write(path, render_artifact(report)).map_err(persist)
}

/// Rebuilds a report from an artifact. Percentages are recomputed from the
/// raw sets and counters, not read back from their rounded rendering.
pub fn parse_artifact(text: &str) -> Result<CoverageReport, CoverageError> {
    let a: ArtifactIn = serde_json::from_str(text)
        .map_err(|e| CoverageError::Parse(format!("coverage artifact schema mismatch: {e}")))?;
    Ok(CoverageReport::new(
        a.executed_lines,
        a.missing_lines,
        a.total_branches,
        a.taken_branches,
        a.missing_branches,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(executed: &[u32], missing: &[u32], total: u32, gaps: &[(u32, u32)]) -> CoverageReport {
        CoverageReport::new(
            executed.iter().copied().collect(),
            missing.iter().copied().collect(),
            total,
            total - gaps.len() as u32,
            gaps.iter().map(|&(l, b)| BranchGap::missing(l, b)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn total_rendered_with_two_decimals() {
        let r = report(&[1, 2, 3, 4, 5, 6, 7, 8], &[9, 10], 4, &[(3, 1)]);
        let text = render_artifact(&r);
        assert!(text.contains("\"total_coverage\": 77.50"), "{text}");
        assert!(text.contains("\"line_coverage\": 80.00"));
        assert!(text.contains("\"branch_coverage\": 75.00"));
        assert!(text.contains("\"branch_id\": 1"));
    }

    #[test]
    fn empty_program() {
        let text = render_artifact(&CoverageReport::empty());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["executed_lines"], serde_json::json!([]));
        assert_eq!(v["missing_branches"], serde_json::json!([]));
        assert!(text.contains("\"line_coverage\": 100.00"));
        assert!(text.contains("\"branch_coverage\": 100.00"));
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coverage/iter_0.json");
        let r = report(&[3, 1, 2], &[7], 3, &[(2, 0)]);
        emit_artifact(&r, &path).unwrap();
        let back = parse_artifact(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["executed_lines"], serde_json::json!([1, 2, 3]));
    }

    #[test]
    fn write_failure_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, "").unwrap();
        let target = file.join("x.json");
        match emit_artifact(&CoverageReport::empty(), &target) {
            Err(CoverageError::Persist { path, .. }) => assert!(path.starts_with(&file)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_artifact() {
        assert!(parse_artifact("{\"executed_lines\": []}").is_err());
        let inconsistent = r#"{"executed_lines":[1],"missing_lines":[1],"missing_branches":[],
            "total_branches":0,"taken_branches":0}"#;
        assert!(matches!(parse_artifact(inconsistent), Err(CoverageError::Model(_))));
    }
}

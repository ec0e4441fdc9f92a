//! Shared domain types: input signatures, test cases, normalized coverage
//! reports and loop configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

/// Primitive type of a single stdin read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Integer,
    Float,
    String,
    Char,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InputKind::Integer => "integer",
            InputKind::Float => "float",
            InputKind::String => "string",
            InputKind::Char => "char",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "integer" => Some(InputKind::Integer),
            "float" => Some(InputKind::Float),
            "string" => Some(InputKind::String),
            "char" => Some(InputKind::Char),
            _ => None,
        }
    }

    /// Whether an integer literal can be fed to a read of this kind.
    pub fn is_numeric(self) -> bool {
        matches!(self, InputKind::Integer | InputKind::Float)
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetLanguage {
    C,
    Python,
}

impl TargetLanguage {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetLanguage::C => "c",
            TargetLanguage::Python => "python",
        }
    }

    /// Info string used for fenced source blocks in prompts.
    pub fn fence_tag(self) -> &'static str {
        self.as_str()
    }
}

impl fmt::Display for TargetLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number and ordered primitive types of a program's stdin reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSignature {
    kinds: Vec<InputKind>,
    target_language: TargetLanguage,
}

impl InputSignature {
    pub fn new(kinds: Vec<InputKind>, target_language: TargetLanguage) -> Self {
        Self {
            kinds,
            target_language,
        }
    }

    pub fn count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[InputKind] {
        &self.kinds
    }

    pub fn target_language(&self) -> TargetLanguage {
        self.target_language
    }
}

/// One ordered list of stdin lines fed to a single execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TestCase {
    values: Vec<String>,
}

impl TestCase {
    /// Fails when any value spans more than one line.
    pub fn new<I, S>(values: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if let Some(bad) = values.iter().find(|v| v.contains('\n') || v.contains('\r')) {
            return Err(ModelError::ContractViolation(format!(
                "test value {bad:?} spans more than one line"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Bytes written to the child's stdin: every value followed by LF.
    pub fn stdin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in &self.values {
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        out
    }
}

impl TryFrom<Vec<String>> for TestCase {
    type Error = ModelError;

    fn try_from(values: Vec<String>) -> Result<Self, Self::Error> {
        TestCase::new(values)
    }
}

impl From<TestCase> for Vec<String> {
    fn from(tc: TestCase) -> Self {
        tc.values
    }
}

/// A never-taken outcome arm of a conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchGap {
    pub line: u32,
    pub branch_id: u32,
    pub taken: bool,
}

impl BranchGap {
    pub fn missing(line: u32, branch_id: u32) -> Self {
        Self {
            line,
            branch_id,
            taken: false,
        }
    }
}

/// Normalized line and branch coverage of one target.
///
/// Percentages are derived from the raw sets and counters at construction
/// and kept unrounded. A target with no measurable lines (or no branches)
/// reports 100 for that metric since there is nothing left to cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    executed_lines: BTreeSet<u32>,
    missing_lines: BTreeSet<u32>,
    total_branches: u32,
    taken_branches: u32,
    missing_branches: Vec<BranchGap>,
    line_coverage: f64,
    branch_coverage: f64,
}

impl CoverageReport {
    pub fn new(
        executed_lines: BTreeSet<u32>,
        missing_lines: BTreeSet<u32>,
        total_branches: u32,
        taken_branches: u32,
        mut missing_branches: Vec<BranchGap>,
    ) -> Result<Self, ModelError> {
        if let Some(line) = executed_lines.intersection(&missing_lines).next() {
            return Err(ModelError::ContractViolation(format!(
                "line {line} is both executed and missing"
            )));
        }
        if taken_branches > total_branches {
            return Err(ModelError::ContractViolation(format!(
                "taken branches {taken_branches} exceed total {total_branches}"
            )));
        }
        if missing_branches.iter().any(|g| g.taken) {
            return Err(ModelError::ContractViolation(
                "missing branch list contains a taken arm".into(),
            ));
        }
        if missing_branches.len() as u64 != u64::from(total_branches - taken_branches) {
            return Err(ModelError::ContractViolation(format!(
                "{} branch gaps but {} untaken arms",
                missing_branches.len(),
                total_branches - taken_branches
            )));
        }
        missing_branches.sort();

        let line_total = executed_lines.len() + missing_lines.len();
        let line_coverage = if line_total == 0 {
            100.0
        } else {
            100.0 * executed_lines.len() as f64 / line_total as f64
        };
        let branch_coverage = if total_branches == 0 {
            100.0
        } else {
            100.0 * f64::from(taken_branches) / f64::from(total_branches)
        };
        Ok(Self {
            executed_lines,
            missing_lines,
            total_branches,
            taken_branches,
            missing_branches,
            line_coverage,
            branch_coverage,
        })
    }

    /// Report for a target with nothing measurable.
    pub fn empty() -> Self {
        Self::new(BTreeSet::new(), BTreeSet::new(), 0, 0, Vec::new())
            .expect("empty report is valid")
    }

    pub fn executed_lines(&self) -> &BTreeSet<u32> {
        &self.executed_lines
    }

    pub fn missing_lines(&self) -> &BTreeSet<u32> {
        &self.missing_lines
    }

    pub fn total_branches(&self) -> u32 {
        self.total_branches
    }

    pub fn taken_branches(&self) -> u32 {
        self.taken_branches
    }

    pub fn missing_branches(&self) -> &[BranchGap] {
        &self.missing_branches
    }

    pub fn line_coverage(&self) -> f64 {
        self.line_coverage
    }

    pub fn branch_coverage(&self) -> f64 {
        self.branch_coverage
    }

    pub fn total_coverage(&self) -> f64 {
        total_coverage(self.line_coverage, self.branch_coverage)
            .expect("stored percentages are within range")
    }

    pub fn has_gaps(&self) -> bool {
        !self.missing_lines.is_empty() || !self.missing_branches.is_empty()
    }
}

fn check_percentage(name: &str, value: f64) -> Result<(), ModelError> {
    if value.is_nan() || !(0.0..=100.0).contains(&value) {
        return Err(ModelError::ContractViolation(format!(
            "{name} {value} outside [0, 100]"
        )));
    }
    Ok(())
}

/// Mean of line and branch coverage.
pub fn total_coverage(line_pct: f64, branch_pct: f64) -> Result<f64, ModelError> {
    check_percentage("line coverage", line_pct)?;
    check_percentage("branch coverage", branch_pct)?;
    Ok((line_pct + branch_pct) / 2.0)
}

/// Two-decimal rendering used by every emitted report.
pub fn format_pct(value: f64) -> String {
    format!("{value:.2}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Http,
}

/// Which feedback agents run between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    Dual,
    Line,
    Branch,
    None,
}

impl FeedbackMode {
    pub fn line_enabled(self) -> bool {
        matches!(self, FeedbackMode::Dual | FeedbackMode::Line)
    }

    pub fn branch_enabled(self) -> bool {
        matches!(self, FeedbackMode::Dual | FeedbackMode::Branch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub threshold: f64,
    pub k_max: u32,
    #[serde(with = "duration_secs")]
    pub per_test_timeout: Duration,
    pub backend: BackendKind,
    pub model_id: String,
    pub workdir: PathBuf,
    pub bound: Option<String>,
    pub feedback: FeedbackMode,
    /// Most recent cache entries rendered into the generation prompt.
    pub cache_prompt_limit: usize,
    /// Completion URL for the http backend.
    pub endpoint: Option<String>,
    /// Wire adapter name for the http backend.
    pub endpoint_profile: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threshold: 90.0,
            k_max: 10,
            per_test_timeout: Duration::from_secs(5),
            backend: BackendKind::Stub,
            model_id: "stub".into(),
            workdir: PathBuf::from("covloop-work"),
            bound: None,
            feedback: FeedbackMode::Dual,
            cache_prompt_limit: 200,
            endpoint: None,
            endpoint_profile: "openai".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.threshold > 0.0 && self.threshold <= 100.0) {
            return Err(ModelError::ContractViolation(format!(
                "threshold {} outside (0, 100]",
                self.threshold
            )));
        }
        if self.k_max < 1 {
            return Err(ModelError::ContractViolation("k_max must be at least 1".into()));
        }
        if self.per_test_timeout.is_zero() {
            return Err(ModelError::ContractViolation("per-test timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Telemetry for one pass of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u32,
    /// Cases returned by the generator, before filtering.
    pub generated: usize,
    pub novel_tests: usize,
    pub duplicates: usize,
    pub line_coverage: f64,
    pub branch_coverage: f64,
    pub total_coverage: f64,
    pub duration: f64,
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lines(v: &[u32]) -> BTreeSet<u32> {
        v.iter().copied().collect()
    }

    #[test]
    fn total_coverage_examples() {
        // Mpals1-B10-cil bound 1: branch 37.50, line 60.00.
        assert_eq!(total_coverage(60.0, 37.5).unwrap(), 48.75);
        assert_eq!(total_coverage(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(total_coverage(100.0, 100.0).unwrap(), 100.0);
    }

    #[test]
    fn total_coverage_rejects_out_of_range() {
        assert!(total_coverage(100.01, 0.0).is_err());
        assert!(total_coverage(0.0, -1.0).is_err());
        assert!(total_coverage(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn degenerate_reports_are_fully_covered() {
        let r = CoverageReport::empty();
        assert_eq!(r.line_coverage(), 100.0);
        assert_eq!(r.branch_coverage(), 100.0);
        assert!(!r.has_gaps());
    }

    #[test]
    fn report_rejects_inconsistent_parts() {
        assert!(CoverageReport::new(lines(&[1, 2]), lines(&[2]), 0, 0, vec![]).is_err());
        assert!(CoverageReport::new(lines(&[1]), lines(&[]), 2, 3, vec![]).is_err());
        assert!(CoverageReport::new(lines(&[1]), lines(&[]), 2, 1, vec![]).is_err());
        let taken = BranchGap {
            line: 1,
            branch_id: 0,
            taken: true,
        };
        assert!(CoverageReport::new(lines(&[1]), lines(&[]), 2, 1, vec![taken]).is_err());
    }

    #[test]
    fn report_percentages() {
        let r = CoverageReport::new(
            lines(&[1, 2, 3, 4, 5, 6, 7, 8]),
            lines(&[9, 10]),
            4,
            3,
            vec![BranchGap::missing(5, 1)],
        )
        .unwrap();
        assert_eq!(r.line_coverage(), 80.0);
        assert_eq!(r.branch_coverage(), 75.0);
        assert_eq!(r.total_coverage(), 77.5);
    }

    #[test]
    fn test_case_rejects_multiline_values() {
        assert!(TestCase::new(["a\nb"]).is_err());
        assert_eq!(TestCase::new(["5", "hello"]).unwrap().stdin_bytes(), b"5\nhello\n");
        assert!(TestCase::new(Vec::<String>::new()).unwrap().stdin_bytes().is_empty());
    }

    #[test]
    fn run_config_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.threshold, 90.0);
        assert_eq!(c.k_max, 10);
        assert_eq!(c.per_test_timeout, Duration::from_secs(5));
        c.validate().unwrap();
        let bad = RunConfig {
            threshold: 0.0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            k_max: 0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn total_coverage_symmetric_and_bounded(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let t = total_coverage(a, b).unwrap();
            prop_assert_eq!(t, total_coverage(b, a).unwrap());
            prop_assert!(t >= a.min(b) && t <= a.max(b));
        }

        #[test]
        fn percentages_recomputable(
            executed in proptest::collection::btree_set(0u32..200, 0..40),
            missing in proptest::collection::btree_set(200u32..400, 0..40),
            total in 0u32..50,
            frac in 0.0f64..=1.0,
        ) {
            let taken = (f64::from(total) * frac).floor() as u32;
            let gaps = (0..total - taken).map(|i| BranchGap::missing(i, 0)).collect();
            let r = CoverageReport::new(executed.clone(), missing.clone(), total, taken, gaps).unwrap();
            let denom = executed.len() + missing.len();
            if denom > 0 {
                let expect = 100.0 * executed.len() as f64 / denom as f64;
                prop_assert!((r.line_coverage() - expect).abs() < 1e-9);
            }
            if total > 0 {
                let expect = 100.0 * f64::from(taken) / f64::from(total);
                prop_assert!((r.branch_coverage() - expect).abs() < 1e-9);
            }
            prop_assert_eq!(r.missing_branches().len() as u32, total - taken);
        }
    }
}

//! Normalization of raw tool output into [`CoverageReport`]s and the JSON
//! coverage artifact.

mod artifact;
mod dynamic;
mod gcov;

use std::path::PathBuf;

use thiserror::Error;

pub use artifact::{emit_artifact, parse_artifact, render_artifact};
pub use dynamic::{parse_dynamic_coverage, parse_dynamic_coverage_for};
pub use gcov::parse_gcov;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("inconsistent coverage data: {0}")]
    Model(#[from] ModelError),
    #[error("failed to write {path}: {source}")]
    Persist {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// First 50 characters of an offending input line, for error messages.
fn quote(line: &str) -> String {
    line.chars().take(50).collect()
}

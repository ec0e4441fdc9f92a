//! Redundancy prevention cache: duplicate filtering of generated test cases
//! by canonical key, persistence of novel cases, and prompt summaries.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::TestCase;

#[derive(Debug, Error)]
#[error("failed to write {path}: {source}")]
pub struct PersistError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// Ordered tuple of trimmed input values. `"01"` and `"1"` stay distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalKey(Vec<String>);

impl CanonicalKey {
    pub fn values(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(", "))
    }
}

pub fn canonical_key(tc: &TestCase) -> CanonicalKey {
    CanonicalKey(tc.values().iter().map(|v| v.trim().to_owned()).collect())
}

#[derive(Debug, Default, Clone)]
pub struct TestSuiteCache {
    keys: HashSet<CanonicalKey>,
    ordered: Vec<TestCase>,
}

impl TestSuiteCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    pub fn contains(&self, tc: &TestCase) -> bool {
        self.keys.contains(&canonical_key(tc))
    }

    pub fn contains_key(&self, key: &CanonicalKey) -> bool {
        self.keys.contains(key)
    }

    /// Insertion-ordered novel cases.
    pub fn cases(&self) -> &[TestCase] {
        &self.ordered
    }

    /// Appends `tc` and returns true when its key is unseen; otherwise leaves
    /// the cache untouched.
    pub fn insert_if_novel(&mut self, tc: TestCase) -> bool {
        if self.keys.insert(canonical_key(&tc)) {
            self.ordered.push(tc);
            true
        } else {
            false
        }
    }

    /// Writes every case from `since_index` on as `test_<NNNN>.txt`, one
    /// value per line.
    pub fn persist_novel(&self, dir: &Path, since_index: usize) -> Result<Vec<PathBuf>, PersistError> {
        if since_index >= self.ordered.len() {
            return Ok(Vec::new());
        }
        fs::create_dir_all(dir).map_err(|source| PersistError {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::with_capacity(self.ordered.len() - since_index);
        for (index, tc) in self.ordered.iter().enumerate().skip(since_index) {
            let path = dir.join(format!("test_{index:04}.txt"));
            fs::write(&path, tc.stdin_bytes()).map_err(|source| PersistError {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }

    /// Comma-separated keys of the most recent `limit` cases; older ones are
    /// collapsed into a leading `(+N older)` marker.
    pub fn summary_for_prompt(&self, limit: usize) -> String {
        let skipped = self.ordered.len().saturating_sub(limit);
        let mut parts: Vec<String> = Vec::with_capacity(limit.min(self.ordered.len()) + 1);
        if skipped > 0 {
            parts.push(format!("(+{skipped} older)"));
        }
        parts.extend(self.ordered[skipped..].iter().map(|tc| canonical_key(tc).to_string()));
        parts.join(", ")
    }
}

//! Benchmark runs over a directory of targets.
//!
//! Sources directly under the directory take the configured bound label;
//! sources one level down take the subdirectory name as their bound.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::thread;

use thiserror::Error;

use crate::agents::CompletionBackend;
use crate::driver::{run_loop_with, RunResult};
use crate::harness::Toolchain;
use crate::model::{format_pct, RunConfig};

pub const REPORT_COLUMNS: [&str; 5] = ["program", "bound", "branch_coverage", "line_coverage", "execution_time_sec"];
pub const CURVE_COLUMNS: [&str; 5] = ["program", "bound", "k", "line", "branch"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchTarget {
    pub program: String,
    pub bound: String,
    pub path: PathBuf,
}

#[derive(Debug)]
pub struct BenchRow {
    pub target: BenchTarget,
    pub outcome: Result<RunResult, String>,
}

impl BenchRow {
    /// Report cells in [`REPORT_COLUMNS`] order.
    pub fn cells(&self) -> [String; 5] {
        let t = &self.target;
        match &self.outcome {
            Ok(r) => [
                t.program.clone(),
                t.bound.clone(),
                format_pct(r.final_report.branch_coverage()),
                format_pct(r.final_report.line_coverage()),
                format!("{:.2}", r.total_duration.as_secs_f64()),
            ],
            Err(_) => [
                t.program.clone(),
                t.bound.clone(),
                "ERROR".into(),
                "ERROR".into(),
                "ERROR".into(),
            ],
        }
    }
}

/// Compares runs of digits by value, everything else bytewise.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, x), (true, y)) => {
                let (tx, ty) = (x.trim_start_matches('0'), y.trim_start_matches('0'));
                tx.len().cmp(&ty.len()).then_with(|| tx.cmp(ty)).then_with(|| x.len().cmp(&y.len()))
            }
            ((_, x), (_, y)) => x.cmp(y),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len())
}

fn is_target(path: &Path) -> bool {
    path.is_file() && matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "py"))
}

fn sort_targets(targets: &mut [BenchTarget]) {
    targets.sort_by(|a, b| natural_cmp(&a.program, &b.program).then_with(|| natural_cmp(&a.bound, &b.bound)));
}

pub fn discover_targets(dir: &Path, default_bound: &str) -> Result<Vec<BenchTarget>, BenchError> {
    let read = |d: &Path| -> Result<Vec<PathBuf>, BenchError> {
        let entries = fs::read_dir(d).map_err(|source| BenchError::Io {
            path: d.to_path_buf(),
            source,
        })?;
        Ok(entries.filter_map(|e| e.ok().map(|e| e.path())).collect())
    };
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut targets = Vec::new();
    for entry in read(dir)? {
        if is_target(&entry) {
            targets.push(BenchTarget {
                program: name(&entry),
                bound: default_bound.to_owned(),
                path: entry,
            });
        } else if entry.is_dir() {
            for inner in read(&entry)?.into_iter().filter(|p| is_target(p)) {
                targets.push(BenchTarget {
                    program: name(&inner),
                    bound: name(&entry),
                    path: inner,
                });
            }
        }
    }
    sort_targets(&mut targets);
    Ok(targets)
}

fn workdir_for(out: &Path, t: &BenchTarget) -> PathBuf {
    let bound = if t.bound.is_empty() { "_" } else { &t.bound };
    out.join("runs").join(bound).join(&t.program)
}

/// Runs every target with up to `jobs` drivers at once and writes
/// `report.csv`, `report.md` and `curves.csv` into `out`.
pub fn bench_run(
    dir: &Path,
    config: &RunConfig,
    jobs: usize,
    out: &Path,
    backend: &dyn CompletionBackend,
    toolchain: &Toolchain,
) -> Result<Vec<BenchRow>, BenchError> {
    let targets = discover_targets(dir, config.bound.as_deref().unwrap_or(""))?;
    fs::create_dir_all(out).map_err(|source| BenchError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BenchRow>>> = Mutex::new((0..targets.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..jobs.clamp(1, targets.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                let Some(target) = targets.get(i) else { break };
                let cfg = RunConfig {
                    workdir: workdir_for(out, target),
                    bound: (!target.bound.is_empty()).then(|| target.bound.clone()),
                    ..config.clone()
                };
                let outcome = run_loop_with(&cfg, &target.path, backend, toolchain).map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    log::error!("{}: {e}", target.path.display());
                }
                slots.lock().unwrap()[i] = Some(BenchRow {
                    target: target.clone(),
                    outcome,
                });
            });
        }
    });
    let rows: Vec<BenchRow> = slots.into_inner().unwrap().into_iter().flatten().collect();
    write_reports(&rows, out)?;
    Ok(rows)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, BenchError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_reports(rows: &[BenchRow], out: &Path) -> Result<(), BenchError> {
    let report = out.join("report.csv");
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BenchError::Csv { path, source }
    };
    let mut w = csv_writer(&report)?;
    w.write_record(REPORT_COLUMNS).map_err(csv_err(&report))?;
    for row in rows {
        w.write_record(row.cells()).map_err(csv_err(&report))?;
    }
    w.flush().map_err(|e| csv_err(&report)(e.into()))?;

    let curves = out.join("curves.csv");
    let mut w = csv_writer(&curves)?;
    w.write_record(CURVE_COLUMNS).map_err(csv_err(&curves))?;
    for row in rows {
        let Ok(r) = &row.outcome else { continue };
        for it in &r.iterations {
            w.write_record([
                row.target.program.clone(),
                row.target.bound.clone(),
                it.k.to_string(),
                format_pct(it.line_coverage),
                format_pct(it.branch_coverage),
            ])
            .map_err(csv_err(&curves))?;
        }
    }
    w.flush().map_err(|e| csv_err(&curves)(e.into()))?;

    let md = out.join("report.md");
    fs::write(&md, render_markdown(rows)).map_err(|source| BenchError::Io { path: md, source })
}

pub fn render_markdown(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", REPORT_COLUMNS.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
    for row in rows {
        let cells = row.cells().map(|c| c.replace('|', "\\|"));
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    let failures: Vec<&BenchRow> = rows.iter().filter(|r| r.outcome.is_err()).collect();
    if !failures.is_empty() {
        s.push_str("\nErrors:\n\n");
        for row in failures {
            let msg = row.outcome.as_ref().err().map_or("", |m| m.lines().next().unwrap_or(""));
            let _ = writeln!(s, "- {} ({}): {}", row.target.program, row.target.bound, msg);
        }
    }
    s
}

//! The k-step loop for one target: generate, filter, execute, evaluate,
//! feed back, merge.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::agents::{
    branch_feedback, generate_tests, line_feedback, parse_and_filter, AgentError, CompletionBackend,
    EndpointProfile, FeedbackRefinement, HttpBackend, StubBackend,
};
use crate::analyzer::{detect_language, extract_input_signature, AnalyzerError};
use crate::cache::TestSuiteCache;
use crate::coverage::emit_artifact;
use crate::harness::{measure, prepare_target, run_test, HarnessError, PreparedTarget, Toolchain};
use crate::model::{
    duration_secs, BackendKind, BranchGap, CoverageReport, IterationRecord, ModelError, RunConfig,
    TargetLanguage,
};
use crate::prompt::{build_baseline_prompt, merge_refinements, PromptBundle};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ModelError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ThresholdMet,
    KMaxReached,
    BackendFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ThresholdMet => "threshold_met",
            Termination::KMaxReached => "k_max_reached",
            Termination::BackendFailure => "backend_failure",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub program: PathBuf,
    pub language: TargetLanguage,
    pub bound: Option<String>,
    pub final_report: CoverageReport,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    /// Backend error that ended the run, if any.
    pub failure: Option<String>,
    #[serde(with = "duration_secs")]
    pub total_duration: Duration,
    /// Test processes started over the whole run.
    pub executions: usize,
    pub cache_size: usize,
    /// Two consecutive iterations without novel cases and with unchanged gaps.
    pub stagnation: bool,
    pub warnings: Vec<String>,
}

/// Builds the backend named by `config`.
pub fn backend_from_config(config: &RunConfig) -> Result<Box<dyn CompletionBackend>, AgentError> {
    match config.backend {
        BackendKind::Stub => Ok(Box::new(StubBackend::default())),
        BackendKind::Http => {
            let endpoint = config
                .endpoint
                .as_deref()
                .ok_or_else(|| AgentError::Config("http backend needs an endpoint".into()))?;
            let profile: EndpointProfile = config.endpoint_profile.parse().map_err(AgentError::Config)?;
            Ok(Box::new(HttpBackend::from_env(endpoint, &config.model_id, profile)?))
        }
    }
}

pub fn run_loop(config: &RunConfig, source_path: &Path) -> Result<RunResult, DriverError> {
    config.validate()?;
    let backend = backend_from_config(config)?;
    run_loop_with(config, source_path, backend.as_ref(), &Toolchain::default())
}

/// Gaps that decide stagnation.
fn gaps(report: &CoverageReport) -> (BTreeSet<u32>, Vec<BranchGap>) {
    (report.missing_lines().clone(), report.missing_branches().to_vec())
}

pub fn run_loop_with(
    config: &RunConfig,
    source_path: &Path,
    backend: &dyn CompletionBackend,
    toolchain: &Toolchain,
) -> Result<RunResult, DriverError> {
    config.validate()?;
    let started = Instant::now();
    let language = detect_language(source_path)?;
    let source = fs::read_to_string(source_path).map_err(io_err(source_path))?;
    let analysis = extract_input_signature(&source, language);
    let warnings: Vec<String> = analysis.warnings.iter().map(ToString::to_string).collect();
    for w in &warnings {
        log::warn!("{}: {w}", source_path.display());
    }
    let sig = analysis.signature;
    let target = prepare_target(source_path, language, &config.workdir, toolchain)?;

    let mut cache = TestSuiteCache::new();
    let mut refinements: (Option<FeedbackRefinement>, Option<FeedbackRefinement>) = (None, None);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut report: Option<CoverageReport> = None;
    let mut termination = Termination::KMaxReached;
    let mut failure = None;
    let mut executions = 0;
    let mut idle_streak = 0;
    let mut stagnation = false;

    for k in 0..config.k_max {
        let iter_start = Instant::now();
        let base = build_baseline_prompt(&sig, &source, &cache.summary_for_prompt(config.cache_prompt_limit));
        let prompt = merge_refinements(&base, refinements.0.as_ref(), refinements.1.as_ref());
        let rendered = prompt.render();
        let prompt_path = target.prompt_dir().join(format!("iter_{k}.txt"));
        fs::write(&prompt_path, &rendered).map_err(io_err(&prompt_path))?;

        let generation = match generate_tests(backend, &prompt) {
            Ok(g) => g,
            Err(e) => {
                termination = Termination::BackendFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        let novel = parse_and_filter(&generation.response, prompt.arity, &cache);
        let since = cache.len();
        for tc in &novel {
            cache.insert_if_novel(tc.clone());
        }
        cache
            .persist_novel(&target.testcase_dir(), since)
            .map_err(|e| DriverError::Io {
                path: e.path.clone(),
                source: e.source,
            })?;
        for tc in &novel {
            let outcome = run_test(&target, tc, config.per_test_timeout)?;
            executions += 1;
            if outcome.timed_out {
                log::warn!("test {:?} timed out after {:?}", tc.values(), config.per_test_timeout);
            }
        }

        let current = measure(&target)?;
        emit_artifact(&current, &target.coverage_dir().join(format!("iter_{k}.json")))
            .map_err(HarnessError::from)?;

        if novel.is_empty() && report.as_ref().is_some_and(|prev| gaps(prev) == gaps(&current)) {
            idle_streak += 1;
        } else if novel.is_empty() && report.is_none() {
            idle_streak = 1;
        } else {
            idle_streak = 0;
        }
        stagnation |= idle_streak >= 2;

        let mut record = IterationRecord {
            k,
            generated: generation.cases.len(),
            novel_tests: novel.len(),
            duplicates: generation.cases.len() - novel.len(),
            line_coverage: current.line_coverage(),
            branch_coverage: current.branch_coverage(),
            total_coverage: current.total_coverage(),
            duration: 0.0,
        };
        let met = current.total_coverage() >= config.threshold;
        let last = k + 1 == config.k_max;
        let missing_lines = current.missing_lines().clone();
        let missing_branches = current.missing_branches().to_vec();
        report = Some(current);

        if met {
            termination = Termination::ThresholdMet;
        } else if !last {
            match feedback(backend, config, &source, &missing_lines, &missing_branches, &rendered) {
                Ok(r) => refinements = r,
                Err(e) => {
                    termination = Termination::BackendFailure;
                    failure = Some(e.to_string());
                }
            }
        }
        record.duration = iter_start.elapsed().as_secs_f64();
        log::info!(
            "k={k} novel={} line={:.2} branch={:.2} total={:.2}",
            record.novel_tests,
            record.line_coverage,
            record.branch_coverage,
            record.total_coverage
        );
        iterations.push(record);
        if met || termination == Termination::BackendFailure {
            break;
        }
    }

    let final_report = match report {
        Some(r) => r,
        None => measure(&target)?,
    };
    let result = RunResult {
        program: source_path.to_path_buf(),
        language,
        bound: config.bound.clone(),
        final_report,
        iterations,
        termination,
        failure,
        total_duration: started.elapsed(),
        executions,
        cache_size: cache.len(),
        stagnation,
        warnings,
    };
    write_result(&target, &result)?;
    Ok(result)
}

/// Line and branch feedback for one iteration, concurrently, each only
/// when enabled and its gap set is non-empty.
fn feedback(
    backend: &dyn CompletionBackend,
    config: &RunConfig,
    source: &str,
    missing_lines: &BTreeSet<u32>,
    missing_branches: &[BranchGap],
    current_prompt: &str,
) -> Result<(Option<FeedbackRefinement>, Option<FeedbackRefinement>), AgentError> {
    let want_line = config.feedback.line_enabled() && !missing_lines.is_empty();
    let want_branch = config.feedback.branch_enabled() && !missing_branches.is_empty();
    thread::scope(|s| {
        let line = want_line.then(|| s.spawn(|| line_feedback(backend, source, missing_lines, current_prompt)));
        let branch = want_branch.then(|| s.spawn(|| branch_feedback(backend, source, missing_branches, current_prompt)));
        let join = |h: Option<thread::ScopedJoinHandle<'_, Result<FeedbackRefinement, AgentError>>>| {
            h.map(|h| h.join().expect("feedback thread panicked")).transpose()
        };
        let line = join(line);
        let branch = join(branch);
        Ok((line?, branch?))
    })
}

/// `result.json` text.
pub fn result_json(result: &RunResult) -> Result<String, serde_json::Error> {
    serde_json::to_string_pretty(result).map(|t| t + "\n")
}

fn write_result(target: &PreparedTarget, result: &RunResult) -> Result<(), DriverError> {
    let path = target.workdir.join("result.json");
    let text = result_json(result).expect("run result serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

/// The generation prompt rendered for iteration `k` of a finished run.
pub fn saved_prompt(workdir: &Path, k: u32) -> std::io::Result<String> {
    fs::read_to_string(workdir.join("prompts").join(format!("iter_{k}.txt")))
}

/// Baseline prompt for `source_path`, as iteration 0 would render it.
pub fn baseline_for(source_path: &Path) -> Result<PromptBundle, DriverError> {
    let language = detect_language(source_path)?;
    let source = fs::read_to_string(source_path).map_err(io_err(source_path))?;
    let sig = extract_input_signature(&source, language).signature;
    Ok(build_baseline_prompt(&sig, &source, ""))
}

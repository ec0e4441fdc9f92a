//! Instrumented builds and per-test execution.
//!
//! Workdir layout:
//!
//! ```text
//! <workdir>/
//!   build/        target copy, objects, .gcno/.gcda, gcov output
//!   coverage/     coverage.py data store and rc file, per-iteration artifacts
//!   TestCases/    persisted novel inputs
//!   prompts/      rendered generation prompts
//!   manifest.json tool paths, versions and flags
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::coverage::{parse_dynamic_coverage_for, parse_gcov, CoverageError};
use crate::model::{CoverageReport, TargetLanguage, TestCase};

pub const C_COMPILE_FLAGS: &[&str] = &["-fprofile-arcs", "-ftest-coverage", "-O0", "-g"];
pub const C_LINK_FLAGS: &[&str] = &["--coverage", "-lm"];
pub const GCOV_FLAGS: &[&str] = &["-b", "-c"];
pub const COVERAGE_RUN_FLAGS: &[&str] = &["run", "-a", "--branch"];

/// Bytes kept from each of stdout and stderr.
const OUTPUT_CAP: usize = 1 << 20;

const SUBDIRS: [&str; 4] = ["build", "coverage", "TestCases", "prompts"];
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("required tool `{tool}` is unavailable: {detail}")]
    MissingToolchain { tool: String, detail: String },
    #[error("compilation failed:\n{diagnostics}")]
    CompileError { diagnostics: String },
    #[error("failed to spawn {what}: {source}")]
    SpawnError {
        what: String,
        #[source]
        source: io::Error,
    },
    #[error("`{tool}` failed: {stderr}")]
    ToolInvocationError { tool: String, stderr: String },
    #[error("workdir {path} is not empty and was not created by covloop")]
    ForeignWorkdir { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// External executables, by name or path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    pub cc: String,
    pub gcov: String,
    pub python: String,
}

impl Default for Toolchain {
    fn default() -> Self {
        Self {
            cc: "gcc".into(),
            gcov: "gcov".into(),
            python: "python3".into(),
        }
    }
}

impl Toolchain {
    /// Version banners of the tools `language` needs; fails on the first
    /// one that cannot be run.
    pub fn check(&self, language: TargetLanguage) -> Result<Vec<(String, String)>, HarnessError> {
        let probes: Vec<(&str, Vec<&str>)> = match language {
            TargetLanguage::C => vec![(&self.cc, vec!["--version"]), (&self.gcov, vec!["--version"])],
            TargetLanguage::Python => vec![
                (&self.python, vec!["--version"]),
                (&self.python, vec!["-m", "coverage", "--version"]),
            ],
        };
        probes
            .into_iter()
            .map(|(tool, args)| {
                let label = if args.len() > 1 { format!("{tool} -m coverage") } else { tool.to_owned() };
                let out = Command::new(tool)
                    .args(&args)
                    .stdin(Stdio::null())
                    .output()
                    .map_err(|e| HarnessError::MissingToolchain {
                        tool: label.clone(),
                        detail: e.to_string(),
                    })?;
                if !out.status.success() {
                    return Err(HarnessError::MissingToolchain {
                        tool: label,
                        detail: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
                    });
                }
                let text = if out.stdout.is_empty() { &out.stderr } else { &out.stdout };
                let banner = String::from_utf8_lossy(text).lines().next().unwrap_or("").to_owned();
                Ok((label, banner))
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    language: &'a str,
    source: &'a Path,
    tools: &'a Toolchain,
    versions: Vec<(String, String)>,
    compile_flags: &'a [&'a str],
    link_flags: &'a [&'a str],
    gcov_flags: &'a [&'a str],
    coverage_run_flags: &'a [&'a str],
    created: String,
}

#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub language: TargetLanguage,
    pub workdir: PathBuf,
    pub executable_or_script: PathBuf,
    pub instrumentation_artifacts: Vec<PathBuf>,
    toolchain: Toolchain,
    source_name: String,
}

impl PreparedTarget {
    pub fn build_dir(&self) -> PathBuf {
        self.workdir.join("build")
    }

    pub fn coverage_dir(&self) -> PathBuf {
        self.workdir.join("coverage")
    }

    pub fn testcase_dir(&self) -> PathBuf {
        self.workdir.join("TestCases")
    }

    pub fn prompt_dir(&self) -> PathBuf {
        self.workdir.join("prompts")
    }

    fn rc_file(&self) -> PathBuf {
        self.coverage_dir().join("coveragerc")
    }
}

/// Creates the workdir layout. A workdir left by an earlier run is reset; any
/// other non-empty directory is refused.
pub fn init_workdir(workdir: &Path) -> Result<(), HarnessError> {
    if workdir.exists() {
        let mut entries = fs::read_dir(workdir).map_err(io_err(workdir))?;
        if entries.next().is_some() {
            if !workdir.join(MANIFEST).is_file() {
                return Err(HarnessError::ForeignWorkdir {
                    path: workdir.to_path_buf(),
                });
            }
            for sub in SUBDIRS {
                let dir = workdir.join(sub);
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
                }
            }
        }
    }
    for sub in SUBDIRS {
        let dir = workdir.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    Ok(())
}

fn run_tool(mut cmd: Command, tool: &str) -> Result<Output, HarnessError> {
    let out = cmd.stdin(Stdio::null()).output().map_err(|e| HarnessError::SpawnError {
        what: tool.to_owned(),
        source: e,
    })?;
    Ok(out)
}

fn tool_failure(tool: &str, out: &Output) -> HarnessError {
    HarnessError::ToolInvocationError {
        tool: tool.to_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
    }
}

/// Instruments `source_path` inside `workdir`.
pub fn prepare_target(
    source_path: &Path,
    language: TargetLanguage,
    workdir: &Path,
    toolchain: &Toolchain,
) -> Result<PreparedTarget, HarnessError> {
    let versions = toolchain.check(language)?;
    init_workdir(workdir)?;
    let workdir = fs::canonicalize(workdir).map_err(io_err(workdir))?;
    let build = workdir.join("build");
    let source_name = source_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| HarnessError::Io {
            path: source_path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::InvalidInput, "source path has no UTF-8 file name"),
        })?
        .to_owned();
    let copy = build.join(&source_name);
    fs::copy(source_path, &copy).map_err(io_err(source_path))?;
    let stem = Path::new(&source_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("target")
        .to_owned();

    let mut target = PreparedTarget {
        language,
        workdir: workdir.clone(),
        executable_or_script: copy.clone(),
        instrumentation_artifacts: Vec::new(),
        toolchain: toolchain.clone(),
        source_name: source_name.clone(),
    };

    match language {
        TargetLanguage::C => {
            let object = format!("{stem}.o");
            let mut compile = Command::new(&toolchain.cc);
            compile.current_dir(&build).args(C_COMPILE_FLAGS).args(["-c", &source_name, "-o", &object]);
            let out = run_tool(compile, &toolchain.cc)?;
            if !out.status.success() {
                return Err(HarnessError::CompileError {
                    diagnostics: String::from_utf8_lossy(&out.stderr).into_owned(),
                });
            }
            let mut link = Command::new(&toolchain.cc);
            link.current_dir(&build).args([&object, "-o", &stem]).args(C_LINK_FLAGS);
            let out = run_tool(link, &toolchain.cc)?;
            if !out.status.success() {
                return Err(HarnessError::CompileError {
                    diagnostics: String::from_utf8_lossy(&out.stderr).into_owned(),
                });
            }
            target.executable_or_script = build.join(&stem);
            target.instrumentation_artifacts = vec![build.join(format!("{stem}.gcno"))];
        }
        TargetLanguage::Python => {
            let rc = target.rc_file();
            let data = target.coverage_dir().join(".coverage");
            let rc_text = format!(
                "[run]\nbranch = True\ndata_file = {}\nsource =\n    {}\n",
                data.display(),
                build.display()
            );
            fs::write(&rc, rc_text).map_err(io_err(&rc))?;
            // an empty data store, so reports before any run list the target at zero
            let mut init = Command::new(&toolchain.python);
            init.current_dir(&build).args([
                "-c",
                "import sys, coverage\nc = coverage.Coverage(config_file=sys.argv[1])\nc.start()\nc.stop()\nc.save()",
            ]);
            init.arg(&rc);
            let out = run_tool(init, &toolchain.python)?;
            if !out.status.success() {
                return Err(tool_failure("coverage", &out));
            }
            target.instrumentation_artifacts = vec![rc, data];
        }
    }

    let manifest = Manifest {
        language: language.as_str(),
        source: source_path,
        tools: toolchain,
        versions,
        compile_flags: C_COMPILE_FLAGS,
        link_flags: C_LINK_FLAGS,
        gcov_flags: GCOV_FLAGS,
        coverage_run_flags: COVERAGE_RUN_FLAGS,
        created: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
    };
    let path = workdir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitKind {
    Code(i32),
    Signal(i32),
}

impl From<ExitStatus> for ExitKind {
    fn from(s: ExitStatus) -> Self {
        match (s.code(), s.signal()) {
            (Some(c), _) => ExitKind::Code(c),
            (None, Some(sig)) => ExitKind::Signal(sig),
            (None, None) => ExitKind::Code(-1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub exit_status: ExitKind,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub duration: Duration,
}

impl ExecutionOutcome {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_status == ExitKind::Code(0)
    }
}

fn capture<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut pipe) = pipe {
            let mut chunk = [0u8; 8192];
            loop {
                match pipe.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        let room = OUTPUT_CAP.saturating_sub(buf.len());
                        buf.extend_from_slice(&chunk[..n.min(room)]);
                    }
                }
            }
        }
        buf
    })
}

fn kill_group(child: &mut Child) {
    // the child leads its own process group
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Runs one test case: values on stdin, one per line, then EOF.
pub fn run_test(target: &PreparedTarget, tc: &TestCase, timeout: Duration) -> Result<ExecutionOutcome, HarnessError> {
    let mut cmd = match target.language {
        TargetLanguage::C => Command::new(&target.executable_or_script),
        TargetLanguage::Python => {
            let mut c = Command::new(&target.toolchain.python);
            c.args(["-m", "coverage"])
                .args(COVERAGE_RUN_FLAGS)
                .arg(format!("--rcfile={}", target.rc_file().display()))
                .arg(&target.source_name);
            c
        }
    };
    cmd.current_dir(target.build_dir())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| HarnessError::SpawnError {
        what: target.executable_or_script.display().to_string(),
        source: e,
    })?;
    let stdout = capture(child.stdout.take());
    let stderr = capture(child.stderr.take());
    let input = tc.stdin_bytes();
    let writer = child.stdin.take().map(|mut pipe| {
        thread::spawn(move || {
            // a program may exit without reading everything
            let _ = pipe.write_all(&input);
        })
    });

    let waited = child.wait_timeout(timeout).map_err(io_err(&target.executable_or_script))?;
    let (status, timed_out) = match waited {
        Some(status) => (status, false),
        None => {
            kill_group(&mut child);
            (child.wait().map_err(io_err(&target.executable_or_script))?, true)
        }
    };
    let duration = start.elapsed();
    if let Some(w) = writer {
        let _ = w.join();
    }
    Ok(ExecutionOutcome {
        exit_status: status.into(),
        timed_out,
        stdout: stdout.join().unwrap_or_default(),
        stderr: stderr.join().unwrap_or_default(),
        duration,
    })
}

/// Raw tool output, before normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawCoverage {
    Gcov(String),
    Dynamic { export: String, file: String },
}

impl RawCoverage {
    pub fn text(&self) -> &str {
        match self {
            RawCoverage::Gcov(t) => t,
            RawCoverage::Dynamic { export, .. } => export,
        }
    }

    pub fn parse(&self) -> Result<CoverageReport, CoverageError> {
        match self {
            RawCoverage::Gcov(t) => parse_gcov(t),
            RawCoverage::Dynamic { export, file } => parse_dynamic_coverage_for(export, Some(file)),
        }
    }
}

/// Cumulative coverage of every run so far.
pub fn collect_raw_coverage(target: &PreparedTarget) -> Result<RawCoverage, HarnessError> {
    let build = target.build_dir();
    match target.language {
        TargetLanguage::C => {
            let tool = &target.toolchain.gcov;
            let mut cmd = Command::new(tool);
            cmd.current_dir(&build).args(GCOV_FLAGS).arg(&target.source_name);
            let out = run_tool(cmd, tool)?;
            let report = build.join(format!("{}.gcov", target.source_name));
            if !out.status.success() || !report.is_file() {
                return Err(tool_failure(tool, &out));
            }
            let text = fs::read_to_string(&report).map_err(io_err(&report))?;
            Ok(RawCoverage::Gcov(text))
        }
        TargetLanguage::Python => {
            let json = target.coverage_dir().join("report.json");
            let mut cmd = Command::new(&target.toolchain.python);
            cmd.current_dir(&build)
                .args(["-m", "coverage", "json", "-q"])
                .arg(format!("--rcfile={}", target.rc_file().display()))
                .arg("-o")
                .arg(&json);
            let out = run_tool(cmd, "coverage json")?;
            if !out.status.success() {
                return Err(tool_failure("coverage json", &out));
            }
            let export = fs::read_to_string(&json).map_err(io_err(&json))?;
            Ok(RawCoverage::Dynamic {
                export,
                file: target.source_name.clone(),
            })
        }
    }
}

/// [`collect_raw_coverage`] followed by parsing.
pub fn measure(target: &PreparedTarget) -> Result<CoverageReport, HarnessError> {
    Ok(collect_raw_coverage(target)?.parse()?)
}

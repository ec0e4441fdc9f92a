use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use covloop::bench::bench_run;
use covloop::driver::{backend_from_config, run_loop, RunResult, Termination};
use covloop::harness::Toolchain;
use covloop::model::{format_pct, BackendKind, FeedbackMode, RunConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_K_MAX: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "covloop", version, about = "Coverage-feedback test input generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the loop on one C or Python program.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Run every program in a directory and write reports.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        opts: Options,
        /// Targets run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Stub,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum Feedback {
    Dual,
    Line,
    Branch,
    None,
}

#[derive(Args)]
struct Options {
    /// Total coverage percentage that ends the loop.
    #[arg(long, default_value_t = 90.0)]
    threshold: f64,
    #[arg(long, default_value_t = 10)]
    max_iters: u32,
    /// Per-test timeout, e.g. 5s or 500ms.
    #[arg(long, default_value = "5s", value_parser = humantime::parse_duration)]
    timeout: Duration,
    #[arg(long, value_enum, default_value_t = Backend::Stub)]
    backend: Backend,
    #[arg(long, default_value = "stub")]
    model: String,
    /// Working directory (run) or report directory (bench).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bound label passed through to reports.
    #[arg(long)]
    bound: Option<String>,
    #[arg(long, value_enum, default_value_t = Feedback::Dual)]
    feedback: Feedback,
    /// Completion URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Wire format of the http endpoint: openai, gemini or raw.
    #[arg(long, default_value = "openai")]
    profile: String,
}

impl Options {
    fn config(&self, workdir: PathBuf) -> RunConfig {
        RunConfig {
            threshold: self.threshold,
            k_max: self.max_iters,
            per_test_timeout: self.timeout,
            backend: match self.backend {
                Backend::Stub => BackendKind::Stub,
                Backend::Http => BackendKind::Http,
            },
            model_id: self.model.clone(),
            workdir,
            bound: self.bound.clone(),
            feedback: match self.feedback {
                Feedback::Dual => FeedbackMode::Dual,
                Feedback::Line => FeedbackMode::Line,
                Feedback::Branch => FeedbackMode::Branch,
                Feedback::None => FeedbackMode::None,
            },
            endpoint: self.endpoint.clone(),
            endpoint_profile: self.profile.clone(),
            ..RunConfig::default()
        }
    }
}

fn print_summary(r: &RunResult, workdir: &Path) {
    let report = &r.final_report;
    println!("program:         {}", r.program.display());
    println!("termination:     {}", r.termination.as_str());
    println!("iterations:      {}", r.iterations.len());
    println!("line coverage:   {}", format_pct(report.line_coverage()));
    println!("branch coverage: {}", format_pct(report.branch_coverage()));
    println!("total coverage:  {}", format_pct(report.total_coverage()));
    println!("tests:           {}", r.cache_size);
    println!("duration:        {:.2}s", r.total_duration.as_secs_f64());
    println!("workdir:         {}", workdir.display());
    if let Some(f) = &r.failure {
        println!("failure:         {f}");
    }
}

fn cmd_run(file: &Path, opts: &Options) -> u8 {
    if !file.is_file() {
        eprintln!("error: {} is not a readable file", file.display());
        return EXIT_ERROR;
    }
    let stem = file.file_stem().map_or_else(|| "target".into(), |s| s.to_string_lossy().into_owned());
    let workdir = opts.out.clone().unwrap_or_else(|| PathBuf::from("covloop-work").join(stem));
    let config = opts.config(workdir.clone());
    match run_loop(&config, file) {
        Ok(r) => {
            print_summary(&r, &workdir);
            match r.termination {
                Termination::ThresholdMet => 0,
                Termination::KMaxReached => EXIT_K_MAX,
                Termination::BackendFailure => EXIT_ERROR,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn cmd_bench(dir: &Path, opts: &Options, jobs: usize) -> u8 {
    if !dir.is_dir() {
        eprintln!("error: {} is not a directory", dir.display());
        return EXIT_ERROR;
    }
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from("covloop-bench"));
    let config = opts.config(out.clone());
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    let backend = match backend_from_config(&config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match bench_run(dir, &config, jobs, &out, backend.as_ref(), &Toolchain::default()) {
        Ok(rows) => {
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} targets, {failed} failed; reports in {}", rows.len(), out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_help());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    ExitCode::from(match &cli.command {
        Command::Run { file, opts } => cmd_run(file, opts),
        Command::Bench { dir, opts, jobs } => cmd_bench(dir, opts, *jobs),
    })
}

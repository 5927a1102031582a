use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use geoharness::agents::{Paradigm, DEFAULT_RETRY_BUDGET};
use geoharness::harness::{
    emit_report, load_registry, metric_cells, read_rows, run_suite, score_offline, JudgeConfig, JudgeSpec, ModelSpec,
    RunConfig, METRIC_COLUMNS,
};
use geoharness::judge::DEFAULT_REPEATS;
use geoharness::sandbox::{Limits, WorkspaceSnapshot};
use geoharness::trajectory::parse_task_spec;

#[derive(Parser)]
#[command(name = "harness", version, about = "Closed-loop evaluation of tool-using agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a paradigm over a task suite and write results.csv and summary.md.
    Run(RunArgs),
    /// Re-score a recorded trajectory against its workspace.
    Score {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
        /// Tool manifest (defaults to the built-in pack).
        #[arg(long)]
        tools: Option<PathBuf>,
    },
    /// Render the markdown report for a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// base, react, plan-solve, or plan-react.
    #[arg(long)]
    paradigm: Paradigm,
    /// scripted, gold, or http:<model>.
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    no_judge: bool,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    judge_repeats: usize,
    /// mock, mock:<s1,s2,..>, or http[:<model>].
    #[arg(long, default_value = "mock")]
    judge_backend: String,
    #[arg(long, default_value_t = 30)]
    max_steps: usize,
    /// Per-call timeout in seconds.
    #[arg(long, default_value_t = 360.0)]
    timeout: f64,
    #[arg(long, default_value_t = DEFAULT_RETRY_BUDGET)]
    retry_budget: usize,
    /// Input layers (defaults to `<tasks>/../data`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Scripts for the scripted model (defaults to `<tasks>/../scripts`).
    #[arg(long)]
    scripts: Option<PathBuf>,
    /// Tool manifest (defaults to the built-in pack).
    #[arg(long)]
    tools: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<bool> {
    if args.jobs == 0 || args.max_steps == 0 || args.judge_repeats == 0 {
        bail!("--jobs, --max-steps and --judge-repeats must be positive");
    }
    if !(args.timeout > 0.0) {
        bail!("--timeout must be positive");
    }
    let registry = load_registry(args.tools.as_deref())?;
    let mut cfg = RunConfig::for_suite(&args.tasks, &args.out, args.paradigm, ModelSpec::parse(&args.model)?);
    if let Some(d) = args.data {
        cfg.data_root = d;
    }
    if let Some(s) = args.scripts {
        cfg.scripts_dir = s;
    }
    cfg.jobs = args.jobs;
    cfg.limits = Limits { max_steps: args.max_steps, call_timeout: args.timeout };
    cfg.retry_budget = args.retry_budget;
    cfg.judge = if args.no_judge {
        None
    } else {
        Some(JudgeConfig { backend: JudgeSpec::parse(&args.judge_backend)?, repeats: args.judge_repeats })
    };
    let outcome = run_suite(&cfg, &registry)?;
    for r in outcome.results.iter().filter(|r| r.error.is_some()) {
        eprintln!("task {}: {}", r.report.task_id, r.error.as_deref().unwrap_or_default());
    }
    print!("{}", fs::read_to_string(&outcome.summary_path)?);
    eprintln!("results: {}", outcome.results_path.display());
    Ok(!outcome.has_errors())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Score { log, task, workspace, tools } => (|| {
            let registry = load_registry(tools.as_deref())?;
            let task = parse_task_spec(&fs::read_to_string(&task).with_context(|| task.display().to_string())?)?;
            let log = fs::read_to_string(&log).with_context(|| log.display().to_string())?;
            let report = score_offline(&log, &task, &WorkspaceSnapshot::new(workspace), &registry)?;
            println!("task_id,{}", METRIC_COLUMNS.join(","));
            println!("{},{}", report.task_id, metric_cells(&report).join(","));
            Ok(true)
        })(),
        Command::Report { results } => (|| {
            let rows = read_rows(&results).with_context(|| results.display().to_string())?;
            print!("{}", emit_report(&rows)?);
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Suite orchestration, offline re-scoring, the results table, and the
//! markdown report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{run_paradigm, GoldFollower, ModelClient, Paradigm, ScriptedModel};
use crate::judge::{self, compose_contrastive, judge_pair, load_image, HttpJudge, JudgeBackend, JudgeVerdict, MockJudge};
use crate::metrics::{efficiency, score_trajectory, JudgeSummary, MetricReport};
use crate::registry::{parse_manifest, Registry};
use crate::sandbox::{Clock, Limits, OutputProbe, SandboxError, SystemClock, Workspace, WorkspaceSnapshot, WorkerExecutor, TRAJECTORY_LOG};
use crate::tools::{builtin_executor, synthetic_registry};
use crate::trajectory::{parse_task_spec, parse_trajectory, serialize_trajectory, TaskSpec, Terminal, Trajectory};

/// `task_id` of the aggregate row in the results table.
pub const AGGREGATE_ID: &str = "ALL";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.md";
/// Marker for a metric with no value.
pub const ABSENT: &str = "n/a";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no task documents (*.json) found in {0}")]
    NoTasksFound(PathBuf),
    #[error("cannot load tool registry: {0}")]
    RegistryLoad(String),
    #[error("task {path}: {message}")]
    BadTask { path: PathBuf, message: String },
    #[error("invalid model backend `{0}` (expected scripted, gold, or http:<model>)")]
    BadModel(String),
    #[error("invalid judge backend `{0}` (expected mock, mock:<scores>, or http[:<model>])")]
    BadJudge(String),
    #[error("results file has no rows")]
    EmptyResults,
    #[error("{0}")]
    Trajectory(#[from] crate::trajectory::TrajectoryError),
    #[error("{0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("{0}")]
    Sandbox(#[from] SandboxError),
    #[error("results table: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Model backend selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    /// Per-task script at `<scripts>/<task_id>.json`.
    Scripted,
    /// Replays the gold toolchain.
    Gold,
    Http(String),
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s.split_once(':') {
            None if s == "scripted" => Ok(ModelSpec::Scripted),
            None if s == "gold" => Ok(ModelSpec::Gold),
            Some(("http" | "openai", m)) if !m.is_empty() => Ok(ModelSpec::Http(m.to_owned())),
            _ => Err(HarnessError::BadModel(s.to_owned())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Scripted => "scripted".into(),
            ModelSpec::Gold => "gold".into(),
            ModelSpec::Http(m) => m.clone(),
        }
    }
}

/// Judge backend selector. Each task gets a fresh backend instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeSpec {
    Mock(Vec<u8>),
    Http(Option<String>),
}

impl JudgeSpec {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::BadJudge(s.to_owned());
        match s.split_once(':') {
            None if s == "mock" => Ok(JudgeSpec::Mock(vec![60, 70, 80])),
            None if s == "http" => Ok(JudgeSpec::Http(None)),
            Some(("mock", list)) => {
                let scores = list
                    .split(',')
                    .map(|v| v.trim().parse::<u8>().ok().filter(|&x| x <= 100))
                    .collect::<Option<Vec<u8>>>()
                    .ok_or_else(bad)?;
                if scores.is_empty() {
                    return Err(bad());
                }
                Ok(JudgeSpec::Mock(scores))
            }
            Some(("http", m)) if !m.is_empty() => Ok(JudgeSpec::Http(Some(m.to_owned()))),
            _ => Err(bad()),
        }
    }

    fn backend(&self) -> Result<Box<dyn JudgeBackend>, judge::JudgeError> {
        Ok(match self {
            JudgeSpec::Mock(scores) => Box::new(MockJudge::scores(scores)),
            JudgeSpec::Http(model) => Box::new(HttpJudge::from_env(model.as_deref().unwrap_or("gpt-4o"))?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct JudgeConfig {
    pub backend: JudgeSpec,
    pub repeats: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tasks_dir: PathBuf,
    pub data_root: PathBuf,
    pub scripts_dir: PathBuf,
    pub out_dir: PathBuf,
    pub paradigm: Paradigm,
    pub model: ModelSpec,
    pub jobs: usize,
    pub judge: Option<JudgeConfig>,
    pub limits: Limits,
    pub retry_budget: usize,
}

impl RunConfig {
    /// Defaults for a suite laid out as `<suite>/{tasks,data,scripts}`.
    pub fn for_suite(tasks_dir: &Path, out_dir: &Path, paradigm: Paradigm, model: ModelSpec) -> Self {
        let suite = tasks_dir.parent().unwrap_or(Path::new("."));
        RunConfig {
            tasks_dir: tasks_dir.to_owned(),
            data_root: suite.join("data"),
            scripts_dir: suite.join("scripts"),
            out_dir: out_dir.to_owned(),
            paradigm,
            model,
            jobs: 1,
            judge: Some(JudgeConfig { backend: JudgeSpec::Mock(vec![60, 70, 80]), repeats: judge::DEFAULT_REPEATS }),
            limits: Limits::default(),
            retry_budget: crate::agents::DEFAULT_RETRY_BUDGET,
        }
    }
}

/// Builds the registry: the built-in pack, or the tools named in a manifest.
/// Manifest tools with a `worker` command run out of process; the rest must
/// name a built-in tool.
pub fn load_registry(manifest: Option<&Path>) -> Result<Registry, HarnessError> {
    let Some(path) = manifest else {
        return Ok(synthetic_registry());
    };
    let text = fs::read_to_string(path).map_err(|e| HarnessError::RegistryLoad(format!("{}: {e}", path.display())))?;
    let entries = parse_manifest(&text).map_err(|e| HarnessError::RegistryLoad(e.to_string()))?;
    let mut registry = Registry::new();
    for entry in entries {
        let executor = match &entry.worker {
            Some(cmd) => Arc::new(WorkerExecutor::new(cmd.clone())) as Arc<dyn crate::sandbox::ToolExecutor>,
            None => builtin_executor(&entry.name).ok_or_else(|| {
                HarnessError::RegistryLoad(format!("tool `{}` has no worker and is not a built-in tool", entry.name))
            })?,
        };
        registry.register(entry.schema(), executor).map_err(|e| HarnessError::RegistryLoad(e.to_string()))?;
    }
    if registry.is_empty() {
        return Err(HarnessError::RegistryLoad("manifest declares no tools".into()));
    }
    Ok(registry)
}

/// Task documents in `dir`, sorted by file name.
pub fn load_tasks(dir: &Path) -> Result<Vec<TaskSpec>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|_| HarnessError::NoTasksFound(dir.to_owned()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::NoTasksFound(dir.to_owned()));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            parse_task_spec(&text).map_err(|e| HarnessError::BadTask { path: p.clone(), message: e.to_string() })
        })
        .collect()
}

/// One task's outcome.
#[derive(Debug, Clone)]
pub struct TaskResult {
    pub report: MetricReport,
    pub terminal: Terminal,
    pub judge_scores: Vec<u8>,
    pub workspace: PathBuf,
    /// Harness-level problem (not an agent failure).
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub results: Vec<TaskResult>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
}

impl SuiteOutcome {
    pub fn has_errors(&self) -> bool {
        self.results.iter().any(|r| r.error.is_some())
    }
}

fn make_model(spec: &ModelSpec, task: &TaskSpec, scripts: &Path) -> Result<Box<dyn ModelClient>, String> {
    Ok(match spec {
        ModelSpec::Gold => Box::new(GoldFollower::new(task.gold_toolchain.steps.clone())),
        ModelSpec::Scripted => {
            let path = scripts.join(format!("{}.json", task.id));
            let text = fs::read_to_string(&path).map_err(|e| format!("script {}: {e}", path.display()))?;
            Box::new(ScriptedModel::from_json(&text).map_err(|e| format!("script {}: {e}", path.display()))?)
        }
        ModelSpec::Http(m) => Box::new(crate::agents::http::HttpModel::from_env(m).map_err(|e| e.to_string())?),
    })
}

/// Executes the gold toolchain in its own workspace to produce the
/// reference map.
pub fn replay_reference(
    task: &TaskSpec,
    registry: &Registry,
    data_root: &Path,
    run_root: &Path,
    limits: Limits,
) -> Result<PathBuf, String> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
    let mut ws = Workspace::create(task, data_root, run_root, limits, clock).map_err(|e| e.to_string())?;
    for step in &task.gold_toolchain.steps {
        let record = ws.execute(registry, &step.tool, &step.args).map_err(|e| e.to_string())?;
        if !record.is_success() {
            let why = record.error.map(|e| e.to_string()).unwrap_or_default();
            return Err(format!("gold step {} ({}) failed: {why}", step.index, step.tool));
        }
    }
    Ok(ws.root().join(&task.result_filename))
}

fn judge_task(task: &TaskSpec, prediction: &Path, reference: &Path, cfg: &JudgeConfig) -> Result<JudgeVerdict, String> {
    let reference = load_image(reference).map_err(|e| format!("reference map: {e}"))?;
    let Ok(pred) = load_image(prediction) else {
        return Ok(JudgeVerdict::zero(cfg.repeats));
    };
    let contrastive = compose_contrastive(&pred, &reference).map_err(|e| e.to_string())?;
    let backend = cfg.backend.backend().map_err(|e| e.to_string())?;
    judge_pair(&task.task_description, &contrastive, backend.as_ref(), cfg.repeats).map_err(|e| e.to_string())
}

fn run_task(task: &TaskSpec, registry: &Registry, cfg: &RunConfig) -> Result<TaskResult, String> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
    let mut ws = Workspace::create(task, &cfg.data_root, &cfg.out_dir.join("runs"), cfg.limits, clock).map_err(|e| e.to_string())?;
    let model = make_model(&cfg.model, task, &cfg.scripts_dir)?;
    let run = run_paradigm(cfg.paradigm, task, registry, &mut ws, model.as_ref(), cfg.retry_budget).map_err(|e| e.to_string())?;
    fs::write(ws.root().join(TRAJECTORY_LOG), serialize_trajectory(&run.trajectory)).map_err(|e| e.to_string())?;
    let transcripts = cfg.out_dir.join("transcripts");
    fs::create_dir_all(&transcripts).map_err(|e| e.to_string())?;
    let attempt = ws.root().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let transcript = serde_json::to_string_pretty(&run.transcript).map_err(|e| e.to_string())?;
    fs::write(transcripts.join(format!("{}.{}.{attempt}.json", task.id, cfg.paradigm)), transcript).map_err(|e| e.to_string())?;

    let mut report = score_trajectory(task, &run.trajectory, registry, &ws).map_err(|e| e.to_string())?;
    let mut judge_scores = Vec::new();
    let mut error = None;
    if let Some(jc) = &cfg.judge {
        let verdict = replay_reference(task, registry, &cfg.data_root, &cfg.out_dir.join("reference"), cfg.limits)
            .and_then(|reference| judge_task(task, &ws.root().join(&task.result_filename), &reference, jc));
        match verdict {
            Ok(v) => {
                report.judge = Some(JudgeSummary { mean: v.mean, std: v.std });
                judge_scores = v.scores;
            }
            Err(e) => error = Some(format!("judge: {e}")),
        }
    }
    Ok(TaskResult { report, terminal: run.trajectory.terminal, judge_scores, workspace: ws.root().to_owned(), error })
}

fn failed_result(task: &TaskSpec, message: String) -> TaskResult {
    TaskResult {
        report: MetricReport {
            task_id: task.id.clone(),
            tao: Default::default(),
            tio: 0.0,
            tem: 0.0,
            pea: 0.0,
            judge: None,
            eff: None,
            n_gt: task.gold_toolchain.len(),
            n_pred: 0,
            success: false,
        },
        terminal: Terminal::Aborted,
        judge_scores: Vec::new(),
        workspace: PathBuf::new(),
        error: Some(message),
    }
}

/// Runs every task in the suite, appends rows to `<out>/results.csv`, and
/// rewrites `<out>/summary.md` from the whole results file.
pub fn run_suite(cfg: &RunConfig, registry: &Registry) -> Result<SuiteOutcome, HarnessError> {
    let tasks = load_tasks(&cfg.tasks_dir)?;
    for task in &tasks {
        for step in &task.gold_toolchain.steps {
            if registry.lookup(&step.tool).is_none() {
                return Err(HarnessError::RegistryLoad(format!("task {} uses unregistered tool `{}`", task.id, step.tool)));
            }
        }
    }
    fs::create_dir_all(&cfg.out_dir)?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TaskResult>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.clamp(1, tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let result = run_task(task, registry, cfg).unwrap_or_else(|e| failed_result(task, e));
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(result);
            });
        }
    });
    let results: Vec<TaskResult> = slots.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter().flatten().collect();

    let model = cfg.model.label();
    let mut rows: Vec<ResultRow> = results.iter().map(|r| ResultRow::task(cfg.paradigm, &model, r)).collect();
    rows.push(ResultRow::aggregate(cfg.paradigm, &model, &results, cfg.judge.is_some()));
    let results_path = cfg.out_dir.join(RESULTS_FILE);
    append_rows(&results_path, &rows)?;
    let summary_path = cfg.out_dir.join(SUMMARY_FILE);
    fs::write(&summary_path, emit_report(&read_rows(&results_path)?)?)?;
    Ok(SuiteOutcome { results, results_path, summary_path })
}

/// Re-scores a recorded run from its log and workspace.
pub fn score_offline(
    log: &str,
    task: &TaskSpec,
    snapshot: &WorkspaceSnapshot,
    registry: &Registry,
) -> Result<MetricReport, HarnessError> {
    let trajectory: Trajectory = parse_trajectory(log)?;
    Ok(score_trajectory(task, &trajectory, registry, snapshot as &dyn OutputProbe)?)
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

fn opt(x: Option<String>) -> String {
    x.unwrap_or_default()
}

/// One line of the results table. Ratios are percentages with two decimals;
/// judge scores are on the 0-100 scale. Empty cells mean absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub paradigm: String,
    pub model: String,
    pub task_id: String,
    pub tao_p: String,
    pub tao_r: String,
    pub tao_f1: String,
    pub tio: String,
    pub tem: String,
    pub pea: String,
    pub judge_mean: String,
    pub judge_std: String,
    /// Per-task efficiency; macro efficiency on the aggregate row.
    pub eff: String,
    /// Micro efficiency; aggregate row only.
    pub eff_micro: String,
    pub n_gt: String,
    pub n_pred: String,
    pub success: String,
    pub terminal: String,
}

/// The metric cells shared by live and offline scoring, in table order:
/// tao_p, tao_r, tao_f1, tio, tem, pea, judge_mean, judge_std, eff.
pub fn metric_cells(r: &MetricReport) -> Vec<String> {
    vec![
        pct(r.tao.precision),
        pct(r.tao.recall),
        pct(r.tao.f1),
        pct(r.tio),
        pct(r.tem),
        pct(r.pea),
        opt(r.judge.map(|j| num(j.mean))),
        opt(r.judge.map(|j| num(j.std))),
        opt(r.eff.map(pct)),
    ]
}

pub const METRIC_COLUMNS: [&str; 9] = ["tao_p", "tao_r", "tao_f1", "tio", "tem", "pea", "judge_mean", "judge_std", "eff"];

impl ResultRow {
    fn from_cells(paradigm: Paradigm, model: &str, task_id: &str, c: Vec<String>) -> Self {
        let mut c = c.into_iter();
        let mut next = || c.next().unwrap_or_default();
        ResultRow {
            paradigm: paradigm.to_string(),
            model: model.to_owned(),
            task_id: task_id.to_owned(),
            tao_p: next(),
            tao_r: next(),
            tao_f1: next(),
            tio: next(),
            tem: next(),
            pea: next(),
            judge_mean: next(),
            judge_std: next(),
            eff: next(),
            eff_micro: String::new(),
            n_gt: String::new(),
            n_pred: String::new(),
            success: String::new(),
            terminal: String::new(),
        }
    }

    pub fn task(paradigm: Paradigm, model: &str, r: &TaskResult) -> Self {
        let mut row = Self::from_cells(paradigm, model, &r.report.task_id, metric_cells(&r.report));
        row.n_gt = r.report.n_gt.to_string();
        row.n_pred = r.report.n_pred.to_string();
        row.success = r.report.success.to_string();
        row.terminal = r.terminal.to_string();
        row
    }

    /// Means over tasks; judge mean and std across repeats of the per-repeat
    /// suite mean; macro and micro efficiency over successful tasks.
    pub fn aggregate(paradigm: Paradigm, model: &str, results: &[TaskResult], judged: bool) -> Self {
        let n = results.len().max(1) as f64;
        let mean = |f: &dyn Fn(&MetricReport) -> f64| results.iter().map(|r| f(&r.report)).sum::<f64>() / n;
        let judge = if judged { aggregate_judge(results) } else { None };
        let successes: Vec<(usize, usize)> =
            results.iter().filter(|r| r.report.success).map(|r| (r.report.n_gt, r.report.n_pred)).collect();
        let eff = efficiency(&successes);
        let mut row = Self::from_cells(
            paradigm,
            model,
            AGGREGATE_ID,
            vec![
                pct(mean(&|r| r.tao.precision)),
                pct(mean(&|r| r.tao.recall)),
                pct(mean(&|r| r.tao.f1)),
                pct(mean(&|r| r.tio)),
                pct(mean(&|r| r.tem)),
                pct(mean(&|r| r.pea)),
                opt(judge.map(|j| num(j.mean))),
                opt(judge.map(|j| num(j.std))),
                opt(eff.map(|e| pct(e.macro_avg))),
            ],
        );
        row.eff_micro = opt(eff.map(|e| pct(e.micro)));
        row.n_gt = results.iter().map(|r| r.report.n_gt).sum::<usize>().to_string();
        row.n_pred = results.iter().map(|r| r.report.n_pred).sum::<usize>().to_string();
        row.success = results.iter().filter(|r| r.report.success).count().to_string();
        row
    }
}

fn aggregate_judge(results: &[TaskResult]) -> Option<JudgeSummary> {
    let repeats = results.iter().map(|r| r.judge_scores.len()).max().filter(|&n| n > 0)?;
    if results.iter().any(|r| r.judge_scores.len() != repeats) {
        return None;
    }
    let per_repeat: Vec<f64> = (0..repeats)
        .map(|k| results.iter().map(|r| r.judge_scores[k] as f64).sum::<f64>() / results.len() as f64)
        .collect();
    let (mean, std) = judge::aggregate(&per_repeat);
    Some(JudgeSummary { mean, std })
}

pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let exists = path.exists() && fs::metadata(path)?.len() > 0;
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

/// Report columns, in order.
pub const REPORT_COLUMNS: [&str; 9] = ["TAO R", "TAO P", "TAO F1", "TIO", "TEM", "PEA", "VLM", "Eff-macro", "Eff-micro"];

fn report_cells(row: &ResultRow) -> [(Option<f64>, String); 9] {
    let cell = |s: &str| match s.parse::<f64>() {
        Ok(v) => (Some(v), s.to_owned()),
        Err(_) => (None, ABSENT.to_owned()),
    };
    let vlm = match (row.judge_mean.parse::<f64>(), row.judge_std.is_empty()) {
        (Ok(m), false) => (Some(m), format!("{} ± {}", row.judge_mean, row.judge_std)),
        (Ok(m), true) => (Some(m), row.judge_mean.clone()),
        _ => (None, ABSENT.to_owned()),
    };
    [
        cell(&row.tao_r),
        cell(&row.tao_p),
        cell(&row.tao_f1),
        cell(&row.tio),
        cell(&row.tem),
        cell(&row.pea),
        vlm,
        cell(&row.eff),
        cell(&row.eff_micro),
    ]
}

/// Markdown report: one table per paradigm, one row per model (its latest
/// aggregate row), best value per column in bold.
pub fn emit_report(rows: &[ResultRow]) -> Result<String, HarnessError> {
    let mut groups: BTreeMap<(usize, String), BTreeMap<String, ResultRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.task_id == AGGREGATE_ID) {
        let order = row.paradigm.parse::<Paradigm>().map(|p| p as usize).unwrap_or(usize::MAX);
        groups.entry((order, row.paradigm.clone())).or_default().insert(row.model.clone(), row.clone());
    }
    if groups.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let mut out = String::from("# Results\n");
    for ((_, paradigm), models) in &groups {
        out.push_str(&format!("\n## {paradigm}\n\n| Model | {} |\n", REPORT_COLUMNS.join(" | ")));
        out.push_str(&format!("|---|{}\n", "---:|".repeat(REPORT_COLUMNS.len())));
        let cells: Vec<(&String, [(Option<f64>, String); 9])> = models.iter().map(|(m, r)| (m, report_cells(r))).collect();
        let best: Vec<Option<f64>> = (0..REPORT_COLUMNS.len())
            .map(|c| cells.iter().filter_map(|(_, row)| row[c].0).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v)))))
            .collect();
        for (model, row) in &cells {
            let rendered: Vec<String> = row
                .iter()
                .zip(&best)
                .map(|((v, text), b)| match (v, b) {
                    (Some(v), Some(b)) if v == b => format!("**{text}**"),
                    _ => text.clone(),
                })
                .collect();
            out.push_str(&format!("| {model} | {} |\n", rendered.join(" | ")));
        }
    }
    out.push_str("\nRatios are percentages. VLM is the judge score (0-100), mean ± std over repeats. Best per column in bold.\n");
    Ok(out)
}

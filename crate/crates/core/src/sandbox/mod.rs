//! Per-task isolated workspaces and supervised tool execution.
//!
//! A workspace lives at `<run_root>/<task_id>/<attempt>/`. Inputs are copied
//! in, every call is counted against the step cap, each output path is
//! write-once unless the call passes `overwrite=true`, and failures reach the
//! agent only as [`DenoisedError`]s.

mod clock;
mod denoise;
pub mod worker;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use clock::{Clock, SimulatedClock, SystemClock};
pub use denoise::{denoise, DenoisedError, ErrorCategory, MAX_MESSAGE_CHARS};
pub use worker::{WorkerExecutor, WorkerSessions};

use crate::args::{ArgValue, Args};
use crate::paths::{normalize_relative, PathError};
use crate::registry::{Registry, OVERWRITE_ARG};
use crate::trajectory::{CallStatus, TaskSpec, ToolCallRecord, DEFAULT_CALL_TIMEOUT_SECS, DEFAULT_MAX_STEPS};

/// Environment variable overriding the default run root.
pub const RUN_ROOT_ENV: &str = "HARNESS_RUN_ROOT";
/// File name of the trajectory log inside a workspace.
pub const TRAJECTORY_LOG: &str = "trajectory.jsonl";

/// Slack between the cooperative deadline and the hard supervisor deadline.
const SUPERVISOR_GRACE_SECS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_steps: usize,
    /// Per-call wall-clock limit in seconds.
    pub call_timeout: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: DEFAULT_MAX_STEPS,
            call_timeout: DEFAULT_CALL_TIMEOUT_SECS,
        }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("input data `{0}` is missing from the data root")]
    MissingInputData(String),
    #[error("workspace `{0}` already exists")]
    WorkspaceCollision(PathBuf),
    #[error("step cap of {max} calls exceeded")]
    StepCapExceeded { max: usize },
    #[error("path `{0}` escapes the workspace")]
    PathEscapesWorkspace(String),
    #[error("workspace I/O: {0}")]
    Io(#[from] io::Error),
}

/// Successful tool result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolOutput {
    pub summary: String,
}

impl ToolOutput {
    pub fn new(summary: impl Into<String>) -> Self {
        ToolOutput { summary: summary.into() }
    }
}

/// Raw failure from a tool, before denoising.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolFailure {
    pub raw: String,
    pub category: Option<ErrorCategory>,
}

impl ToolFailure {
    pub fn new(raw: impl Into<String>, category: Option<ErrorCategory>) -> Self {
        ToolFailure { raw: raw.into(), category }
    }

    pub fn raw(raw: impl Into<String>) -> Self {
        Self::new(raw, None)
    }

    pub fn internal(raw: impl Into<String>) -> Self {
        Self::new(raw, Some(ErrorCategory::Internal))
    }

    pub fn timeout(limit: f64) -> Self {
        Self::new(
            format!("TimeoutError: call exceeded the {limit} s execution limit and was terminated"),
            Some(ErrorCategory::Timeout),
        )
    }

    pub fn is_timeout(&self) -> bool {
        self.category == Some(ErrorCategory::Timeout)
    }
}

/// Executes one tool call. Implementations must only touch files through the
/// context and should poll [`ToolContext::checkpoint`] during long work.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure>;
}

/// Workspace-scoped view handed to a running tool.
pub struct ToolContext {
    root: PathBuf,
    tool: String,
    step: u32,
    deadline: f64,
    call_timeout: f64,
    clock: Arc<dyn Clock>,
    cancelled: Arc<AtomicBool>,
    workers: Arc<WorkerSessions>,
}

impl ToolContext {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn tool(&self) -> &str {
        &self.tool
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn call_timeout(&self) -> f64 {
        self.call_timeout
    }

    pub fn workers(&self) -> &WorkerSessions {
        &self.workers
    }

    /// Seconds left before the call deadline.
    pub fn remaining(&self) -> f64 {
        self.deadline - self.clock.now()
    }

    pub fn checkpoint(&self) -> Result<(), ToolFailure> {
        if self.cancelled.load(Ordering::SeqCst) || self.remaining() <= 0.0 {
            Err(ToolFailure::timeout(self.call_timeout))
        } else {
            Ok(())
        }
    }

    /// Sleeps cooperatively, stopping at the deadline.
    pub fn sleep(&self, secs: f64) -> Result<(), ToolFailure> {
        let mut left = secs;
        while left > 0.0 {
            self.checkpoint()?;
            let slice = if self.clock.is_simulated() { left } else { left.min(0.05) };
            let slice = slice.min(self.remaining().max(0.0));
            self.clock.sleep(slice);
            left -= slice;
            if self.remaining() <= 0.0 && left > 0.0 {
                return Err(ToolFailure::timeout(self.call_timeout));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> Result<PathBuf, ToolFailure> {
        normalize_relative(rel)
            .map(|p| self.root.join(p))
            .map_err(|e| ToolFailure::new(format!("ValueError: {e}"), Some(ErrorCategory::BadParameter)))
    }

    pub fn read(&self, rel: &str) -> Result<Vec<u8>, ToolFailure> {
        let path = self.resolve(rel)?;
        fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => ToolFailure::new(
                format!("FileNotFoundError: [Errno 2] No such file or directory: '{rel}'"),
                Some(ErrorCategory::MissingFile),
            ),
            _ => ToolFailure::raw(format!("OSError: cannot read '{rel}': {e}")),
        })
    }

    pub fn read_to_string(&self, rel: &str) -> Result<String, ToolFailure> {
        let bytes = self.read(rel)?;
        String::from_utf8(bytes).map_err(|_| ToolFailure::raw(format!("UnicodeDecodeError: '{rel}' is not UTF-8")))
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), ToolFailure> {
        self.checkpoint()?;
        let path = self.resolve(rel)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ToolFailure::raw(format!("OSError: {e}")))?;
        }
        fs::write(&path, bytes).map_err(|e| ToolFailure::raw(format!("OSError: cannot write '{rel}': {e}")))
    }
}

/// Read-only existence probe over a workspace directory.
pub trait OutputProbe {
    fn output_exists(&self, rel: &str) -> bool;
}

/// A finished workspace directory, for offline scoring.
#[derive(Debug, Clone)]
pub struct WorkspaceSnapshot {
    root: PathBuf,
}

impl WorkspaceSnapshot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkspaceSnapshot { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self, rel: &str) -> Result<bool, SandboxError> {
        physical_exists(&self.root, rel)
    }
}

impl OutputProbe for WorkspaceSnapshot {
    fn output_exists(&self, rel: &str) -> bool {
        self.exists(rel).unwrap_or(false)
    }
}

fn physical_exists(root: &Path, rel: &str) -> Result<bool, SandboxError> {
    let norm = normalize_relative(rel).map_err(|e| match e {
        PathError::Empty => SandboxError::PathEscapesWorkspace(rel.to_owned()),
        _ => SandboxError::PathEscapesWorkspace(rel.to_owned()),
    })?;
    let path = root.join(norm);
    if !path.exists() {
        return Ok(false);
    }
    // Symlinks may still point outside the root.
    let real = path.canonicalize()?;
    let real_root = root.canonicalize()?;
    if !real.starts_with(&real_root) {
        return Err(SandboxError::PathEscapesWorkspace(rel.to_owned()));
    }
    Ok(true)
}

/// Default run root: `$HARNESS_RUN_ROOT`, else `./runs`.
pub fn default_run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub struct Workspace {
    task_id: String,
    root: PathBuf,
    step_count: usize,
    write_ledger: BTreeMap<String, u32>,
    limits: Limits,
    clock: Arc<dyn Clock>,
    workers: Arc<WorkerSessions>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("task_id", &self.task_id)
            .field("root", &self.root)
            .field("step_count", &self.step_count)
            .field("write_ledger", &self.write_ledger)
            .field("limits", &self.limits)
            .finish()
    }
}

impl Workspace {
    /// Creates `<run_root>/<task_id>/<n>/` for the first free attempt number
    /// `n` and stages the task's inputs into it.
    pub fn create(
        task: &TaskSpec,
        data_root: &Path,
        run_root: &Path,
        limits: Limits,
        clock: Arc<dyn Clock>,
    ) -> Result<Workspace, SandboxError> {
        check_inputs(task, data_root)?;
        let task_dir = run_root.join(sanitize_component(&task.id));
        fs::create_dir_all(&task_dir)?;
        let mut attempt = 1u32;
        let root = loop {
            let candidate = task_dir.join(attempt.to_string());
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    attempt += 1;
                    if attempt > 100_000 {
                        return Err(SandboxError::WorkspaceCollision(candidate));
                    }
                }
                Err(e) => return Err(e.into()),
            }
        };
        Self::stage(task, data_root, root, limits, clock)
    }

    /// Creates a workspace at exactly `root`, which must not exist yet.
    pub fn create_at(
        task: &TaskSpec,
        data_root: &Path,
        root: &Path,
        limits: Limits,
        clock: Arc<dyn Clock>,
    ) -> Result<Workspace, SandboxError> {
        check_inputs(task, data_root)?;
        if let Some(parent) = root.parent() {
            fs::create_dir_all(parent)?;
        }
        match fs::create_dir(root) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(SandboxError::WorkspaceCollision(root.to_owned()))
            }
            Err(e) => return Err(e.into()),
        }
        Self::stage(task, data_root, root.to_owned(), limits, clock)
    }

    fn stage(
        task: &TaskSpec,
        data_root: &Path,
        root: PathBuf,
        limits: Limits,
        clock: Arc<dyn Clock>,
    ) -> Result<Workspace, SandboxError> {
        let mut write_ledger = BTreeMap::new();
        for input in &task.data_description {
            let dest = root.join(&input.path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(data_root.join(&input.path), &dest)?;
            // Staged inputs are locked like any produced file.
            write_ledger.insert(input.path.clone(), 0);
        }
        Ok(Workspace {
            task_id: task.id.clone(),
            root,
            step_count: 0,
            write_ledger,
            limits,
            clock,
            workers: Arc::new(WorkerSessions::new()),
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Path → producing step (0 for staged inputs).
    pub fn write_ledger(&self) -> &BTreeMap<String, u32> {
        &self.write_ledger
    }

    pub fn snapshot(&self) -> WorkspaceSnapshot {
        WorkspaceSnapshot::new(self.root.clone())
    }

    /// True iff the file is physically present under the root.
    pub fn exists(&self, rel: &str) -> Result<bool, SandboxError> {
        physical_exists(&self.root, rel)
    }

    /// Runs one tool call. Every call consumes a step, whatever its outcome;
    /// only the call past the cap is refused, with [`SandboxError::StepCapExceeded`].
    pub fn execute(&mut self, registry: &Registry, tool: &str, args: &Args) -> Result<ToolCallRecord, SandboxError> {
        if self.step_count >= self.limits.max_steps {
            return Err(SandboxError::StepCapExceeded { max: self.limits.max_steps });
        }
        self.step_count += 1;
        let step = self.step_count as u32;
        let started = self.clock.now();

        let mut record = ToolCallRecord {
            step,
            tool: tool.to_owned(),
            args: args.clone(),
            status: CallStatus::Success,
            error: None,
            duration: 0.0,
            outputs_declared: Vec::new(),
            summary: None,
        };

        let validated = match registry.validate_args(tool, args) {
            Ok(v) => v,
            Err(e) => {
                if let Some(schema) = registry.lookup(tool) {
                    record.outputs_declared = schema.declared_outputs(args);
                }
                record.status = CallStatus::Rejected;
                record.error = Some(denoise(&e.to_string(), Some(ErrorCategory::BadParameter)));
                return Ok(record);
            }
        };
        let schema = registry.lookup(tool).expect("validated tool is registered");
        let executor = registry.executor(tool).expect("validated tool has an executor");
        record.args = validated.args.clone();
        record.outputs_declared = schema.declared_outputs(&validated.args);

        let overwrite = validated.args.get(OVERWRITE_ARG) == Some(&ArgValue::Bool(true));
        if !overwrite {
            let locked = record.outputs_declared.iter().find_map(|p| {
                if p == TRAJECTORY_LOG {
                    Some((p.clone(), None))
                } else {
                    self.write_ledger.get(p).map(|s| (p.clone(), Some(*s)))
                }
            });
            if let Some((path, by)) = locked {
                let origin = match by {
                    Some(0) => "it is a staged input".to_owned(),
                    Some(s) => format!("it was written by step {s}"),
                    None => "it is reserved by the harness".to_owned(),
                };
                let raw = format!(
                    "PermissionError: [Errno 13] Permission denied: '{path}' is locked because {origin}; pass overwrite=true or choose a new output path"
                );
                record.status = CallStatus::Error;
                record.error = Some(denoise(&raw, Some(ErrorCategory::FileLocked)));
                record.duration = self.clock.now() - started;
                return Ok(record);
            }
        }

        let ctx = ToolContext {
            root: self.root.clone(),
            tool: tool.to_owned(),
            step,
            deadline: started + self.limits.call_timeout,
            call_timeout: self.limits.call_timeout,
            clock: Arc::clone(&self.clock),
            cancelled: Arc::new(AtomicBool::new(false)),
            workers: Arc::clone(&self.workers),
        };
        let outcome = self.supervise(executor, ctx, validated.args);
        let elapsed = self.clock.now() - started;
        record.duration = elapsed.max(0.0);

        match outcome {
            Ok(output) if elapsed <= self.limits.call_timeout => {
                let missing = record
                    .outputs_declared
                    .iter()
                    .find(|p| !self.exists(p).unwrap_or(false))
                    .cloned();
                if let Some(path) = missing {
                    record.status = CallStatus::Error;
                    record.error = Some(denoise(
                        &format!("tool reported success but did not produce '{path}'"),
                        Some(ErrorCategory::Internal),
                    ));
                } else {
                    for p in &record.outputs_declared {
                        self.write_ledger.insert(p.clone(), step);
                    }
                    record.summary = Some(output.summary);
                }
            }
            Ok(_) => {
                record.status = CallStatus::Timeout;
                record.error = Some(denoise(&ToolFailure::timeout(self.limits.call_timeout).raw, Some(ErrorCategory::Timeout)));
            }
            Err(failure) if failure.is_timeout() || elapsed > self.limits.call_timeout => {
                record.status = CallStatus::Timeout;
                record.error = Some(denoise(&failure.raw, Some(ErrorCategory::Timeout)));
            }
            Err(failure) => {
                record.status = CallStatus::Error;
                record.error = Some(denoise(&failure.raw, failure.category));
            }
        }
        Ok(record)
    }

    /// Runs the executor under the call deadline. With a real clock the call
    /// runs on its own thread and is abandoned (and cancelled) once the
    /// deadline plus a short grace has passed.
    fn supervise(
        &self,
        executor: Arc<dyn ToolExecutor>,
        ctx: ToolContext,
        args: Args,
    ) -> Result<ToolOutput, ToolFailure> {
        if self.clock.is_simulated() {
            return executor.execute(&ctx, &args);
        }
        let cancelled = Arc::clone(&ctx.cancelled);
        let limit = self.limits.call_timeout;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let result = executor.execute(&ctx, &args);
            let _ = tx.send(result);
        });
        match rx.recv_timeout(Duration::from_secs_f64(limit + SUPERVISOR_GRACE_SECS)) {
            Ok(result) => result,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                cancelled.store(true, Ordering::SeqCst);
                Err(ToolFailure::timeout(limit))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(ToolFailure::internal("tool thread panicked")),
        }
    }
}

impl OutputProbe for Workspace {
    fn output_exists(&self, rel: &str) -> bool {
        self.exists(rel).unwrap_or(false)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        self.workers.shutdown();
    }
}

fn check_inputs(task: &TaskSpec, data_root: &Path) -> Result<(), SandboxError> {
    for input in &task.data_description {
        if !data_root.join(&input.path).is_file() {
            return Err(SandboxError::MissingInputData(input.path.clone()));
        }
    }
    Ok(())
}

fn sanitize_component(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

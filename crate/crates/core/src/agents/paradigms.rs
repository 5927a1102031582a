//! The four agent paradigms as loops over a [`ModelClient`] and a
//! [`Workspace`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{render_turn, Message, ModelClient, ModelError, ModelTurn, Plan, PlanStep, TurnKind};
use crate::registry::Registry;
use crate::sandbox::{SandboxError, Workspace};
use crate::trajectory::{CallStatus, TaskSpec, Terminal, ToolCallRecord, Trajectory};

/// Default attempts per plan step in Plan-and-React.
pub const DEFAULT_RETRY_BUDGET: usize = 3;
/// Marker in the user message that asks for a plan turn.
pub const PLAN_REQUEST: &str = "Respond with a plan turn";

const SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt.v1.txt");
pub const SYSTEM_PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "react")]
    React,
    #[serde(rename = "plan-solve")]
    PlanSolve,
    #[serde(rename = "plan-react")]
    PlanReact,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [Paradigm::Base, Paradigm::React, Paradigm::PlanSolve, Paradigm::PlanReact];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Base => "base",
            Paradigm::React => "react",
            Paradigm::PlanSolve => "plan-solve",
            Paradigm::PlanReact => "plan-react",
        }
    }

    fn instructions(self) -> &'static str {
        match self {
            Paradigm::Base => "Solve the task by calling tools one at a time. Finish with a final_answer turn.",
            Paradigm::React => {
                "Work in a Thought, Action, Observation loop. Every tool_call turn must carry your reasoning \
                 in `text`. Read each observation before deciding the next action. Finish with a final_answer turn."
            }
            Paradigm::PlanSolve => {
                "First produce a complete plan. Then you will be asked for exactly one tool_call per plan step, \
                 in order."
            }
            Paradigm::PlanReact => {
                "First produce a complete plan. Then execute it one step at a time. Within a step you may retry \
                 after errors, with reasoning in `text`, but you may not skip ahead to later steps. A final_answer \
                 turn inside a step gives the step up."
            }
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim().to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown paradigm `{s}` (expected base, react, plan-solve, or plan-react)"))
    }
}

/// Model-side failure that ended a run early.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentFailure {
    #[error("model protocol violation: {reason}")]
    ModelProtocolViolation { raw: String, reason: String },
    #[error("model did not produce a plan: {reason}")]
    MissingPlan { reason: String },
    #[error("model backend failed: {0}")]
    Backend(String),
}

/// Records produced while working on one plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpan {
    /// 1-based plan step.
    pub plan_step: usize,
    /// Trajectory steps of the calls made for this plan step.
    pub record_steps: Vec<u32>,
    /// Calls made or refused for this plan step.
    pub attempts: usize,
    pub succeeded: bool,
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub paradigm: Paradigm,
    pub trajectory: Trajectory,
    pub plan: Option<Plan>,
    pub spans: Vec<StepSpan>,
    pub transcript: Vec<Message>,
    pub failure: Option<AgentFailure>,
}

/// Opening user message for a task.
pub fn task_prompt(task: &TaskSpec) -> String {
    let mut s = format!("Task {}: {}\n", task.id, task.task_description.trim());
    if !task.data_description.is_empty() {
        s.push_str("\nInput data:\n");
        for d in &task.data_description {
            if d.metadata.trim().is_empty() {
                s.push_str(&format!("- {}\n", d.path));
            } else {
                s.push_str(&format!("- {}: {}\n", d.path, d.metadata.trim()));
            }
        }
    }
    if !task.drawing_style.trim().is_empty() {
        s.push_str(&format!("\nDrawing style: {}\n", task.drawing_style.trim()));
    }
    if !task.layers.is_empty() {
        s.push_str(&format!("Layers, bottom first: {}\n", task.layers.join(", ")));
    }
    s.push_str(&format!("\nSave the final map as `{}`.", task.result_filename));
    s
}

pub fn system_prompt(paradigm: Paradigm, ws: &Workspace) -> String {
    let limits = ws.limits();
    let base = SYSTEM_PROMPT
        .replace("{max_steps}", &limits.max_steps.to_string())
        .replace("{timeout}", &limits.call_timeout.to_string());
    format!("{}\n{}", base.trim_end(), paradigm.instructions())
}

/// Text fed back to the model after a call.
pub fn observation(record: &ToolCallRecord) -> String {
    let head = format!("Observation (step {}, {}): {}", record.step, record.tool, record.status);
    match (&record.error, &record.summary) {
        (Some(e), _) => format!("{head}. {e}"),
        (None, Some(s)) => format!("{head}. {s}"),
        (None, None) => head,
    }
}

const CORRECTION: &str = "Your last reply was not a valid turn";

struct Session<'a> {
    registry: &'a Registry,
    ws: &'a mut Workspace,
    model: &'a dyn ModelClient,
    manifest: String,
    context: Vec<Message>,
    trajectory: Trajectory,
}

enum Exec {
    Done(ToolCallRecord),
    CapReached,
}

impl<'a> Session<'a> {
    fn new(
        paradigm: Paradigm,
        task: &TaskSpec,
        registry: &'a Registry,
        ws: &'a mut Workspace,
        model: &'a dyn ModelClient,
    ) -> Self {
        let manifest = registry.render_manifest().unwrap_or_default();
        let context = vec![Message::system(system_prompt(paradigm, ws)), Message::user(task_prompt(task))];
        Session { registry, ws, model, manifest, context, trajectory: Trajectory::new(task.id.clone()) }
    }

    /// One model turn, with a single corrective re-prompt on a malformed or
    /// disallowed reply.
    fn ask(&mut self, check: impl Fn(&ModelTurn) -> Result<(), String>) -> Result<ModelTurn, AgentFailure> {
        let mut last = (String::new(), String::new());
        for attempt in 0..2 {
            let (raw, reason) = match self.model.generate(&self.context, &self.manifest) {
                Ok(turn) => match check(&turn) {
                    Ok(()) => {
                        self.context.push(Message::assistant(render_turn(&turn)));
                        return Ok(turn);
                    }
                    Err(reason) => (render_turn(&turn), reason),
                },
                Err(ModelError::Malformed { raw, reason }) => (raw, reason),
                Err(ModelError::Backend(e)) => return Err(AgentFailure::Backend(e)),
            };
            if attempt == 0 {
                self.context.push(Message::assistant(raw.clone()));
                self.context.push(Message::user(format!(
                    "{CORRECTION}: {reason}. Reply with exactly one JSON turn object."
                )));
            }
            last = (raw, reason);
        }
        Err(AgentFailure::ModelProtocolViolation { raw: last.0, reason: last.1 })
    }

    fn execute(&mut self, turn: &ModelTurn) -> Result<Exec, SandboxError> {
        let tool = turn.tool.as_deref().unwrap_or_default();
        let args = turn.args.clone().unwrap_or_default();
        match self.ws.execute(self.registry, tool, &args) {
            Ok(record) => {
                self.trajectory.records.push(record.clone());
                Ok(Exec::Done(record))
            }
            Err(SandboxError::StepCapExceeded { .. }) => {
                self.trajectory.terminal = Terminal::StepCapExceeded;
                Ok(Exec::CapReached)
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self, paradigm: Paradigm, plan: Option<Plan>, spans: Vec<StepSpan>, failure: Option<AgentFailure>) -> AgentRun {
        let mut trajectory = self.trajectory;
        if failure.is_some() {
            trajectory.terminal = Terminal::Aborted;
        }
        AgentRun { paradigm, trajectory, plan, spans, transcript: self.context, failure }
    }
}

fn no_plan(turn: &ModelTurn) -> Result<(), String> {
    match turn.kind {
        TurnKind::Plan => Err("a plan is not expected here; reply with a tool_call or final_answer".into()),
        _ => Ok(()),
    }
}

fn thought_before_action(turn: &ModelTurn) -> Result<(), String> {
    no_plan(turn)?;
    if turn.kind == TurnKind::ToolCall && turn.thought().is_none() {
        return Err("tool_call turns must carry a thought in `text`".into());
    }
    Ok(())
}

fn loop_run(
    paradigm: Paradigm,
    task: &TaskSpec,
    registry: &Registry,
    ws: &mut Workspace,
    model: &dyn ModelClient,
    check: fn(&ModelTurn) -> Result<(), String>,
) -> Result<AgentRun, SandboxError> {
    let mut s = Session::new(paradigm, task, registry, ws, model);
    loop {
        let turn = match s.ask(check) {
            Ok(t) => t,
            Err(f) => return Ok(s.finish(paradigm, None, Vec::new(), Some(f))),
        };
        if turn.kind == TurnKind::FinalAnswer {
            s.trajectory.terminal = Terminal::Completed;
            s.trajectory.final_answer = turn.text.clone();
            return Ok(s.finish(paradigm, None, Vec::new(), None));
        }
        match s.execute(&turn)? {
            Exec::Done(record) => s.context.push(Message::user(observation(&record))),
            Exec::CapReached => return Ok(s.finish(paradigm, None, Vec::new(), None)),
        }
    }
}

/// Tool calls until a final answer; observations are fed back unchanged.
pub fn run_base(task: &TaskSpec, registry: &Registry, ws: &mut Workspace, model: &dyn ModelClient) -> Result<AgentRun, SandboxError> {
    loop_run(Paradigm::Base, task, registry, ws, model, no_plan)
}

/// Like [`run_base`], but every action must be preceded by a thought.
pub fn run_react(task: &TaskSpec, registry: &Registry, ws: &mut Workspace, model: &dyn ModelClient) -> Result<AgentRun, SandboxError> {
    loop_run(Paradigm::React, task, registry, ws, model, thought_before_action)
}

fn request_plan(s: &mut Session<'_>) -> Result<Plan, AgentFailure> {
    s.context.push(Message::user(format!("{PLAN_REQUEST} listing every sub-task in order.")));
    s.ask(|t| match t.kind {
        TurnKind::Plan => Ok(()),
        _ => Err("expected a plan turn".into()),
    })
    .map(|t| Plan { steps: t.plan_steps })
    .map_err(|f| match f {
        AgentFailure::ModelProtocolViolation { reason, .. } => AgentFailure::MissingPlan { reason },
        other => other,
    })
}

fn step_directive(k: usize, n: usize, step: &PlanStep) -> String {
    match &step.suggested_tool {
        Some(tool) => format!("Plan step {k} of {n}: {} (suggested tool: {tool}).", step.description),
        None => format!("Plan step {k} of {n}: {}.", step.description),
    }
}

/// Plan once, then exactly one call per plan step. Failures are recorded and
/// execution moves on; observations are not fed back.
pub fn run_plan_solve(
    task: &TaskSpec,
    registry: &Registry,
    ws: &mut Workspace,
    model: &dyn ModelClient,
) -> Result<AgentRun, SandboxError> {
    let paradigm = Paradigm::PlanSolve;
    let mut s = Session::new(paradigm, task, registry, ws, model);
    let plan = match request_plan(&mut s) {
        Ok(p) => p,
        Err(f) => return Ok(s.finish(paradigm, None, Vec::new(), Some(f))),
    };
    let n = plan.steps.len();
    let mut spans = Vec::with_capacity(n);
    for (i, step) in plan.steps.iter().enumerate() {
        s.context.push(Message::user(format!("{} Emit exactly one tool_call turn for this step.", step_directive(i + 1, n, step))));
        let turn = match s.ask(|t| match t.kind {
            TurnKind::ToolCall => Ok(()),
            _ => Err("expected one tool_call turn for this plan step".into()),
        }) {
            Ok(t) => t,
            Err(f) => return Ok(s.finish(paradigm, Some(plan.clone()), spans, Some(f))),
        };
        match s.execute(&turn)? {
            Exec::Done(record) => spans.push(StepSpan {
                plan_step: i + 1,
                record_steps: vec![record.step],
                attempts: 1,
                succeeded: record.status == CallStatus::Success,
            }),
            Exec::CapReached => return Ok(s.finish(paradigm, Some(plan), spans, None)),
        }
    }
    s.trajectory.terminal = Terminal::Completed;
    s.trajectory.final_answer = Some(format!("executed {n} planned steps"));
    Ok(s.finish(paradigm, Some(plan), spans, None))
}

/// Plan once, then a bounded reactive loop per plan step. A step ends at its
/// first successful call, at a final_answer turn, or when `retry_budget`
/// attempts are used up; the run then moves to the next step. Calls to a tool
/// that a later step suggests (and the current step does not) are refused
/// without execution, and count as attempts.
pub fn run_plan_react(
    task: &TaskSpec,
    registry: &Registry,
    ws: &mut Workspace,
    model: &dyn ModelClient,
    retry_budget: usize,
) -> Result<AgentRun, SandboxError> {
    let paradigm = Paradigm::PlanReact;
    let budget = retry_budget.max(1);
    let mut s = Session::new(paradigm, task, registry, ws, model);
    let plan = match request_plan(&mut s) {
        Ok(p) => p,
        Err(f) => return Ok(s.finish(paradigm, None, Vec::new(), Some(f))),
    };
    let n = plan.steps.len();
    let mut spans = Vec::with_capacity(n);
    for (i, step) in plan.steps.iter().enumerate() {
        s.context.push(Message::user(step_directive(i + 1, n, step)));
        let mut span = StepSpan { plan_step: i + 1, record_steps: Vec::new(), attempts: 0, succeeded: false };
        while span.attempts < budget {
            let turn = match s.ask(thought_before_action) {
                Ok(t) => t,
                Err(f) => {
                    spans.push(span);
                    return Ok(s.finish(paradigm, Some(plan.clone()), spans, Some(f)));
                }
            };
            if turn.kind == TurnKind::FinalAnswer {
                break;
            }
            let tool = turn.tool.as_deref().unwrap_or_default();
            let ahead = step.suggested_tool.as_deref() != Some(tool)
                && plan.steps[i + 1..].iter().any(|later| later.suggested_tool.as_deref() == Some(tool));
            span.attempts += 1;
            if ahead {
                s.context.push(Message::user(format!(
                    "Refused: `{tool}` belongs to a later plan step. Stay on plan step {} of {n}.",
                    i + 1
                )));
                continue;
            }
            match s.execute(&turn)? {
                Exec::Done(record) => {
                    span.record_steps.push(record.step);
                    s.context.push(Message::user(observation(&record)));
                    if record.status == CallStatus::Success {
                        span.succeeded = true;
                        break;
                    }
                }
                Exec::CapReached => {
                    spans.push(span);
                    return Ok(s.finish(paradigm, Some(plan.clone()), spans, None));
                }
            }
        }
        spans.push(span);
    }
    let done = spans.iter().filter(|sp| sp.succeeded).count();
    s.trajectory.terminal = Terminal::Completed;
    s.trajectory.final_answer = Some(format!("{done} of {n} plan steps succeeded"));
    Ok(s.finish(paradigm, Some(plan), spans, None))
}

pub fn run_paradigm(
    paradigm: Paradigm,
    task: &TaskSpec,
    registry: &Registry,
    ws: &mut Workspace,
    model: &dyn ModelClient,
    retry_budget: usize,
) -> Result<AgentRun, SandboxError> {
    match paradigm {
        Paradigm::Base => run_base(task, registry, ws, model),
        Paradigm::React => run_react(task, registry, ws, model),
        Paradigm::PlanSolve => run_plan_solve(task, registry, ws, model),
        Paradigm::PlanReact => run_plan_react(task, registry, ws, model, retry_budget),
    }
}

//! Agent paradigms and the model backends that drive them.

pub mod http;
pub mod model;
pub mod paradigms;
pub mod scripted;

pub use model::{parse_turn, render_turn, Message, ModelClient, ModelError, ModelTurn, Plan, PlanStep, Role, TurnKind};
pub use paradigms::{
    run_base, run_paradigm, run_plan_react, run_plan_solve, run_react, AgentFailure, AgentRun, Paradigm, StepSpan,
    DEFAULT_RETRY_BUDGET,
};
pub use scripted::{GoldFollower, ScriptedModel};

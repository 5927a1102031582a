//! Model turns, the wire format they travel in, and the client interface.
//!
//! A turn is one JSON object:
//!
//! ```text
//! {"kind": "tool_call", "text": "<thought>", "tool": "buffer_features", "args": {"distance": 100}}
//! {"kind": "plan", "plan": ["reproject roads", {"description": "buffer", "tool": "buffer_features"}]}
//! {"kind": "final_answer", "text": "done"}
//! ```
//!
//! Surrounding whitespace and a Markdown code fence are tolerated. Unknown
//! field names are not.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::args::Args;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    ToolCall,
    Plan,
    FinalAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_tool: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTurn {
    pub kind: TurnKind,
    pub tool: Option<String>,
    pub args: Option<Args>,
    pub plan_steps: Vec<PlanStep>,
    /// Thought for tool calls, answer for final answers.
    pub text: Option<String>,
}

impl ModelTurn {
    pub fn tool_call(tool: impl Into<String>, args: Args) -> Self {
        ModelTurn { kind: TurnKind::ToolCall, tool: Some(tool.into()), args: Some(args), plan_steps: Vec::new(), text: None }
    }

    pub fn plan(steps: Vec<PlanStep>) -> Self {
        ModelTurn { kind: TurnKind::Plan, tool: None, args: None, plan_steps: steps, text: None }
    }

    pub fn final_answer(text: impl Into<String>) -> Self {
        ModelTurn { kind: TurnKind::FinalAnswer, tool: None, args: None, plan_steps: Vec::new(), text: Some(text.into()) }
    }

    pub fn with_thought(mut self, thought: impl Into<String>) -> Self {
        self.text = Some(thought.into());
        self
    }

    pub fn thought(&self) -> Option<&str> {
        self.text.as_deref().filter(|t| !t.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TurnParseError {
    #[error("turn is not a valid JSON object: {0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum WirePlanStep {
    Text(String),
    Full {
        description: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTurn {
    kind: TurnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    args: Option<Args>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plan: Option<Vec<WirePlanStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

pub fn parse_turn(raw: &str) -> Result<ModelTurn, TurnParseError> {
    let wire: WireTurn = serde_json::from_str(strip_fence(raw)).map_err(|e| TurnParseError::Syntax(e.to_string()))?;
    let plan_steps: Vec<PlanStep> = wire
        .plan
        .unwrap_or_default()
        .into_iter()
        .map(|s| match s {
            WirePlanStep::Text(description) => PlanStep { description, suggested_tool: None },
            WirePlanStep::Full { description, tool } => PlanStep { description, suggested_tool: tool },
        })
        .collect();
    let turn = ModelTurn { kind: wire.kind, tool: wire.tool, args: wire.args, plan_steps, text: wire.text };
    match turn.kind {
        TurnKind::ToolCall if turn.tool.as_deref().is_none_or(|t| t.trim().is_empty()) => {
            Err(TurnParseError::Invalid("tool_call turns need a `tool` name".into()))
        }
        TurnKind::ToolCall if turn.args.is_none() => Err(TurnParseError::Invalid("tool_call turns need an `args` object".into())),
        TurnKind::Plan if turn.plan_steps.is_empty() => Err(TurnParseError::Invalid("plan turns need a non-empty `plan` list".into())),
        _ => Ok(turn),
    }
}

/// Canonical single-line wire text of a turn.
pub fn render_turn(turn: &ModelTurn) -> String {
    let plan = (!turn.plan_steps.is_empty()).then(|| {
        turn.plan_steps
            .iter()
            .map(|s| WirePlanStep::Full { description: s.description.clone(), tool: s.suggested_tool.clone() })
            .collect()
    });
    let wire = WireTurn { kind: turn.kind, tool: turn.tool.clone(), args: turn.args.clone(), plan, text: turn.text.clone() };
    serde_json::to_string(&wire).expect("turn serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    /// The reply could not be read as a turn; carries the raw reply.
    #[error("malformed model turn ({reason}): {raw}")]
    Malformed { raw: String, reason: String },
    #[error("model backend failed: {0}")]
    Backend(String),
}

impl ModelError {
    pub fn malformed(raw: &str, e: TurnParseError) -> Self {
        ModelError::Malformed { raw: raw.to_owned(), reason: e.to_string() }
    }
}

/// Stateless model interface: one context in, one turn out.
pub trait ModelClient: Send + Sync {
    fn generate(&self, context: &[Message], manifest: &str) -> Result<ModelTurn, ModelError>;
}

/// Parsed assistant turns already in a context, in order.
pub fn prior_turns(context: &[Message]) -> impl Iterator<Item = Option<ModelTurn>> + '_ {
    context.iter().filter(|m| m.role == Role::Assistant).map(|m| parse_turn(&m.content).ok())
}

pub fn last_user(context: &[Message]) -> &str {
    context.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args;

    #[test]
    fn parses_each_kind() {
        let t = parse_turn(r#"{"kind":"tool_call","text":"buffer it","tool":"buffer_features","args":{"distance":100}}"#).unwrap();
        assert_eq!(t.tool.as_deref(), Some("buffer_features"));
        assert_eq!(t.thought(), Some("buffer it"));
        let p = parse_turn(r#"{"kind":"plan","plan":["a",{"description":"b","tool":"clip_layer"}]}"#).unwrap();
        assert_eq!(p.plan_steps[1].suggested_tool.as_deref(), Some("clip_layer"));
        assert_eq!(parse_turn(r#"{"kind":"final_answer","text":"ok"}"#).unwrap().kind, TurnKind::FinalAnswer);
    }

    #[test]
    fn tolerates_fences_and_whitespace() {
        let raw = "\n ```json\n{\"kind\": \"final_answer\", \"text\": \"x\"}\n```  \n";
        assert_eq!(parse_turn(raw).unwrap().text.as_deref(), Some("x"));
    }

    #[test]
    fn strict_on_fields_and_invariants() {
        assert!(matches!(parse_turn(r#"{"kind":"final_answer","answer":"x"}"#), Err(TurnParseError::Syntax(_))));
        assert!(matches!(parse_turn(r#"{"kind":"tool_call","args":{}}"#), Err(TurnParseError::Invalid(_))));
        assert!(matches!(parse_turn(r#"{"kind":"tool_call","tool":"x"}"#), Err(TurnParseError::Invalid(_))));
        assert!(matches!(parse_turn(r#"{"kind":"plan","plan":[]}"#), Err(TurnParseError::Invalid(_))));
        assert!(parse_turn("Sure! I will buffer the roads.").is_err());
    }

    #[test]
    fn render_round_trips() {
        let t = ModelTurn::tool_call("clip_layer", args! {"input" => "a.geojson"}).with_thought("clip");
        assert_eq!(parse_turn(&render_turn(&t)).unwrap(), t);
        let p = ModelTurn::plan(vec![PlanStep { description: "x".into(), suggested_tool: Some("y".into()) }]);
        assert_eq!(parse_turn(&render_turn(&p)).unwrap(), p);
    }
}

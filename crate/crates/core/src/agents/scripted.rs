//! Deterministic model backends for tests and offline runs.

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::model::{last_user, parse_turn, prior_turns, Message, ModelClient, ModelError, ModelTurn, PlanStep, Role, TurnKind};
use super::paradigms::PLAN_REQUEST;
use crate::trajectory::GoldStep;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptEntry {
    Turn(ModelTurn),
    /// Reply text sent as-is, typically malformed on purpose.
    Raw(String),
}

impl From<ModelTurn> for ScriptEntry {
    fn from(t: ModelTurn) -> Self {
        ScriptEntry::Turn(t)
    }
}

#[derive(Debug, Clone)]
pub struct Reaction {
    pub when: Regex,
    pub entry: ScriptEntry,
}

/// Replays a fixed turn sequence, with reactions keyed on the latest user
/// message.
///
/// If a reaction pattern matches the latest user message, the first such
/// reaction answers. Otherwise the next sequence entry answers, where "next"
/// counts earlier assistant turns that were not reactions. The reply is a
/// pure function of the context.
#[derive(Debug, Clone, Default)]
pub struct ScriptedModel {
    pub sequence: Vec<ScriptEntry>,
    pub reactions: Vec<Reaction>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script is not valid JSON: {0}")]
    Syntax(String),
    #[error("script entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("reaction {index}: bad pattern: {message}")]
    Pattern { index: usize, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDocument {
    #[serde(default)]
    sequence: Vec<serde_json::Value>,
    #[serde(default)]
    reactions: Vec<ReactionDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionDocument {
    when: String,
    turn: serde_json::Value,
}

fn entry_from_value(v: &serde_json::Value, index: usize) -> Result<ScriptEntry, ScriptError> {
    if let Some(raw) = v.get("raw").and_then(|r| r.as_str()) {
        if v.as_object().is_some_and(|o| o.len() == 1) {
            return Ok(ScriptEntry::Raw(raw.to_owned()));
        }
    }
    parse_turn(&v.to_string())
        .map(ScriptEntry::Turn)
        .map_err(|e| ScriptError::Entry { index, message: e.to_string() })
}

impl ScriptedModel {
    pub fn new(sequence: Vec<ScriptEntry>) -> Self {
        ScriptedModel { sequence, reactions: Vec::new() }
    }

    pub fn react(mut self, pattern: &str, entry: impl Into<ScriptEntry>) -> Self {
        let when = Regex::new(pattern).expect("reaction pattern compiles");
        self.reactions.push(Reaction { when, entry: entry.into() });
        self
    }

    /// Loads `{"sequence": [turn...], "reactions": [{"when": regex, "turn": turn}]}`.
    /// A turn written as `{"raw": "..."}` is replied verbatim.
    pub fn from_json(document: &str) -> Result<Self, ScriptError> {
        let doc: ScriptDocument = serde_json::from_str(document).map_err(|e| ScriptError::Syntax(e.to_string()))?;
        let sequence = doc.sequence.iter().enumerate().map(|(i, v)| entry_from_value(v, i)).collect::<Result<_, _>>()?;
        let mut reactions = Vec::new();
        for (i, r) in doc.reactions.iter().enumerate() {
            let when = Regex::new(&r.when).map_err(|e| ScriptError::Pattern { index: i, message: e.to_string() })?;
            reactions.push(Reaction { when, entry: entry_from_value(&r.turn, i)? });
        }
        Ok(ScriptedModel { sequence, reactions })
    }

    fn reaction_for(&self, user: &str) -> Option<&ScriptEntry> {
        self.reactions.iter().find(|r| r.when.is_match(user)).map(|r| &r.entry)
    }
}

impl ModelClient for ScriptedModel {
    fn generate(&self, context: &[Message], _manifest: &str) -> Result<ModelTurn, ModelError> {
        let entry = match self.reaction_for(last_user(context)) {
            Some(e) => Some(e),
            None => {
                let mut position = 0;
                let mut last_user_text = "";
                for m in context {
                    match m.role {
                        Role::User => last_user_text = &m.content,
                        Role::Assistant if self.reaction_for(last_user_text).is_none() => position += 1,
                        _ => {}
                    }
                }
                self.sequence.get(position)
            }
        };
        match entry {
            Some(ScriptEntry::Turn(t)) => Ok(t.clone()),
            Some(ScriptEntry::Raw(raw)) => parse_turn(raw).map_err(|e| ModelError::malformed(raw, e)),
            None => Ok(ModelTurn::final_answer("script exhausted")),
        }
    }
}

/// Emits the gold toolchain: a one-step-per-call plan when asked for a plan,
/// otherwise the next gold call not yet issued, then a final answer.
#[derive(Debug, Clone)]
pub struct GoldFollower {
    steps: Vec<GoldStep>,
}

impl GoldFollower {
    pub fn new(steps: Vec<GoldStep>) -> Self {
        GoldFollower { steps }
    }
}

impl ModelClient for GoldFollower {
    fn generate(&self, context: &[Message], _manifest: &str) -> Result<ModelTurn, ModelError> {
        if last_user(context).contains(PLAN_REQUEST) {
            return Ok(ModelTurn::plan(
                self.steps
                    .iter()
                    .map(|s| PlanStep { description: format!("run {}", s.tool), suggested_tool: Some(s.tool.clone()) })
                    .collect(),
            ));
        }
        let issued = prior_turns(context).flatten().filter(|t| t.kind == TurnKind::ToolCall).count();
        Ok(match self.steps.get(issued) {
            Some(s) => ModelTurn::tool_call(&s.tool, s.args.clone()).with_thought(format!("step {} calls {}", s.index, s.tool)),
            None => ModelTurn::final_answer("all steps issued"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args;

    fn ctx(turns: &[(&str, &str)]) -> Vec<Message> {
        turns
            .iter()
            .map(|(r, c)| match *r {
                "u" => Message::user(*c),
                "a" => Message::assistant(*c),
                _ => Message::system(*c),
            })
            .collect()
    }

    #[test]
    fn sequence_advances_past_reactions() {
        let a = ModelTurn::tool_call("a", args! {});
        let b = ModelTurn::tool_call("b", args! {});
        let fix = ModelTurn::tool_call("a", args! {"overwrite" => true});
        let m = ScriptedModel::new(vec![a.clone().into(), b.clone().into()]).react("file_locked", fix.clone());
        assert_eq!(m.generate(&ctx(&[("s", "sys"), ("u", "task")]), "").unwrap(), a);
        let c = ctx(&[("u", "task"), ("a", "x"), ("u", "[file_locked] nope")]);
        assert_eq!(m.generate(&c, "").unwrap(), fix);
        let c = ctx(&[("u", "task"), ("a", "x"), ("u", "[file_locked] nope"), ("a", "y"), ("u", "success")]);
        assert_eq!(m.generate(&c, "").unwrap(), b);
        let c = ctx(&[("u", "task"), ("a", "x"), ("u", "ok"), ("a", "y"), ("u", "ok")]);
        assert_eq!(m.generate(&c, "").unwrap().kind, TurnKind::FinalAnswer);
    }

    #[test]
    fn loads_json_scripts() {
        let m = ScriptedModel::from_json(
            r#"{"sequence":[{"raw":"oops"},{"kind":"final_answer","text":"done"}],
                "reactions":[{"when":"bad_parameter","turn":{"kind":"tool_call","tool":"t","args":{}}}]}"#,
        )
        .unwrap();
        assert!(matches!(m.generate(&ctx(&[("u", "go")]), ""), Err(ModelError::Malformed { .. })));
        assert_eq!(m.generate(&ctx(&[("u", "go"), ("a", "oops"), ("u", "fix it")]), "").unwrap().kind, TurnKind::FinalAnswer);
        assert!(ScriptedModel::from_json(r#"{"sequence":[{"kind":"nope"}]}"#).is_err());
        assert!(ScriptedModel::from_json(r#"{"steps":[]}"#).is_err());
    }
}

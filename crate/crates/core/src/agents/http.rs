//! OpenAI-compatible chat-completions model backend.

use std::time::Duration;

use super::model::{parse_turn, Message, ModelClient, ModelError, ModelTurn, Role};

#[derive(Debug, Clone)]
pub struct HttpModel {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpModel {
    /// Reads `MODEL_BASE_URL` and `MODEL_API_KEY`.
    pub fn from_env(model: &str) -> Result<Self, ModelError> {
        let base = std::env::var("MODEL_BASE_URL").map_err(|_| ModelError::Backend("MODEL_BASE_URL is not set".into()))?;
        Ok(HttpModel {
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: model.to_owned(),
            api_key: std::env::var("MODEL_API_KEY").ok(),
            timeout: Duration::from_secs(300),
        })
    }

    fn request_body(&self, context: &[Message], manifest: &str) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = context
            .iter()
            .map(|m| {
                let (role, content) = match m.role {
                    Role::System => ("system", format!("{}\n\nAvailable tools:\n{manifest}", m.content)),
                    Role::User => ("user", m.content.clone()),
                    Role::Assistant => ("assistant", m.content.clone()),
                };
                serde_json::json!({"role": role, "content": content})
            })
            .collect();
        serde_json::json!({"model": self.model, "messages": messages})
    }
}

impl ModelClient for HttpModel {
    fn generate(&self, context: &[Message], manifest: &str) -> Result<ModelTurn, ModelError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: serde_json::Value = req
            .send_json(self.request_body(context, manifest))
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| ModelError::Backend(e.to_string()))?;
        let text = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ModelError::Backend(format!("unexpected response shape: {reply}")))?;
        parse_turn(text).map_err(|e| ModelError::malformed(text, e))
    }
}

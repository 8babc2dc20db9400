//! Chat-completions style function-calling backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, Conversation, Decision, TaskError, ToolCall};
use crate::skills::tool_schemas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Attempts per request before the backend is reported unavailable.
    pub retries: u32,
    /// Invalid tool calls returned to the model before giving up.
    pub max_corrections: u32,
    pub temperature: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: "EEROOT_LLM_API_KEY".to_string(),
            timeout_secs: 30,
            retries: 3,
            max_corrections: 3,
            temperature: 0.0,
        }
    }
}

pub struct LlmBackend {
    cfg: LlmConfig,
    agent: ureq::Agent,
}

impl LlmBackend {
    pub fn new(cfg: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(cfg.timeout_secs))).build().into();
        Self { cfg, agent }
    }

    /// The request body for the next decision.
    pub fn request(&self, conv: &Conversation) -> Value {
        let mut messages = vec![
            json!({"role": "system", "content": conv.system_prompt}),
            json!({
                "role": "user",
                "content": format!(
                    "{}\n\nCurrent observation: {}",
                    conv.instruction,
                    serde_json::to_string(&conv.initial).unwrap_or_default()
                ),
            }),
        ];
        for t in &conv.turns {
            match &t.call {
                Some(c) => {
                    let id = format!("call_{}", t.iteration);
                    messages.push(json!({
                        "role": "assistant",
                        "content": t.reasoning,
                        "tool_calls": [{
                            "id": id,
                            "type": "function",
                            "function": {"name": c.name, "arguments": c.arguments.to_string()},
                        }],
                    }));
                    messages.push(json!({"role": "tool", "tool_call_id": id, "content": t.observation_text()}));
                }
                None => messages.push(json!({"role": "assistant", "content": t.reasoning})),
            }
        }
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": messages,
            "tools": tool_schemas(),
        })
    }

    fn post(&self, body: &Value) -> Result<Value, String> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }
}

/// Reads the first choice of a chat-completions response.
pub fn parse_response(resp: &Value) -> Result<Decision, String> {
    let message = resp.pointer("/choices/0/message").ok_or("response has no choices[0].message")?;
    let reasoning = message["content"].as_str().unwrap_or_default().to_string();
    let Some(call) = message["tool_calls"].as_array().and_then(|c| c.first()) else {
        return Ok(Decision::Done { reasoning });
    };
    let name = call.pointer("/function/name").and_then(Value::as_str).ok_or("tool call without a function name")?;
    let raw = &call.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
    // arguments arrive as a JSON string; anything unparsable is passed on for validation to reject
    let arguments = match raw {
        Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
        other => other.clone(),
    };
    Ok(Decision::Call { reasoning, call: ToolCall { name: name.to_string(), arguments } })
}

impl Backend for LlmBackend {
    fn decide(&mut self, conv: &Conversation) -> Result<Decision, TaskError> {
        if conv.trailing_rejections() > self.cfg.max_corrections as usize {
            return Err(TaskError::TooManyCorrections);
        }
        let body = self.request(conv);
        let mut last = String::new();
        for _ in 0..self.cfg.retries.max(1) {
            match self.post(&body).and_then(|r| parse_response(&r)) {
                Ok(d) => return Ok(d),
                Err(e) => last = e,
            }
        }
        Err(TaskError::BackendUnavailable(last))
    }
}

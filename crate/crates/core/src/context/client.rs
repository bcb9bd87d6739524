//! Text-generation client interface with a pure deterministic mock and a
//! remote HTTP chat implementation.

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned status {0}")]
    Status(u16),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: String },
}

/// Generation parameters surfaced on every call. Defaults follow the
/// deterministic inference setting: temperature 0, top_p 0.7.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { temperature: 0.0, top_p: 0.7, max_tokens: 1024 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub params: GenParams,
}

impl CompletionRequest {
    pub fn single_user(model: &str, content: impl Into<String>, params: GenParams) -> Self {
        CompletionRequest {
            model: model.to_string(),
            messages: vec![Message::user(content)],
            params,
        }
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// One-operation text generation interface.
pub trait TextGenClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

/// Deterministic mock: a pure function of the request.
///
/// Decision prompts (recognized by the `<selection>` format contract) get a
/// short reasoning line plus a selection block holding the first
/// `pick_count` candidate ids found in the prompt. Everything else is echoed
/// back with a summary header, which keeps dates and embedded numbers
/// visible to downstream assertions.
#[derive(Debug, Clone)]
pub struct MockClient {
    pub pick_count: usize,
}

impl Default for MockClient {
    fn default() -> Self {
        MockClient { pick_count: 3 }
    }
}

impl TextGenClient for MockClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let content = request.last_user_content();
        if content.contains("<selection>") {
            let ids = extract_bracketed_ids(content);
            let picked: Vec<&str> =
                ids.iter().take(self.pick_count).map(|s| s.as_str()).collect();
            let list = picked.join(", ");
            return Ok(format!(
                "Momentum in the current state favors the leading candidates; activating {list} \
                 for this holding period while the rest stay dormant.\n<selection>{list}</selection>"
            ));
        }
        Ok(format!("[mock-summary]\n{content}"))
    }
}

/// Candidate ids appear in decision prompts as `[id]` markers.
fn extract_bracketed_ids(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        rest = &rest[start + 1..];
        if let Some(end) = rest.find(']') {
            let token = &rest[..end];
            if !token.is_empty()
                && token.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !out.iter().any(|t| t == token)
            {
                out.push(token.to_string());
            }
            rest = &rest[end + 1..];
        } else {
            break;
        }
    }
    out
}

/// Remote chat-completion endpoint configuration. The auth token is read
/// from the named environment variable at call time.
#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    /// Full URL of the completion endpoint.
    pub endpoint: String,
    pub model: String,
    pub auth_env: Option<String>,
    pub timeout: Duration,
    pub retries: usize,
    pub backoff: Duration,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        HttpClientConfig {
            endpoint: String::new(),
            model: "default".into(),
            auth_env: None,
            timeout: Duration::from_secs(60),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Blocking HTTP client for the chat-completion wire contract:
/// POST `{model, messages, temperature, top_p, max_tokens}` returning JSON
/// with a text completion under `choices[0].message.content`,
/// `choices[0].text`, or a top-level `content`/`completion` field.
pub struct HttpTextGenClient {
    config: HttpClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpTextGenClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpTextGenClient { config, http })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        });
        let mut builder = self.http.post(&self.config.endpoint).json(&body);
        if let Some(var) = &self.config.auth_env {
            if let Ok(token) = std::env::var(var) {
                builder = builder.bearer_auth(token);
            }
        }
        let response = builder.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ClientError::Status(status.as_u16()));
        }
        let value: serde_json::Value =
            response.json().map_err(|e| ClientError::MalformedReply(e.to_string()))?;
        extract_completion(&value)
    }
}

fn extract_completion(value: &serde_json::Value) -> Result<String, ClientError> {
    let candidates = [
        value.pointer("/choices/0/message/content"),
        value.pointer("/choices/0/text"),
        value.get("content"),
        value.get("completion"),
    ];
    for c in candidates.into_iter().flatten() {
        if let Some(text) = c.as_str() {
            return Ok(text.to_string());
        }
    }
    Err(ClientError::MalformedReply(format!("no completion field in {value}")))
}

impl TextGenClient for HttpTextGenClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(err) => {
                    last = Some(err.to_string());
                    if attempt < self.config.retries {
                        std::thread::sleep(self.config.backoff * 2u32.pow(attempt as u32));
                    }
                }
            }
        }
        Err(ClientError::RetriesExhausted {
            attempts: self.config.retries + 1,
            last: last.unwrap_or_default(),
        })
    }
}

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ModelBackend};
use crate::agents::{MediaKind, MediaRef, Message, MessageRole, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub api_key_env: String,
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout_secs() -> f64 {
    120.0
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            api_key_env: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint_url.trim().is_empty() {
            return Err("endpoint_url is empty".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("model_name is empty".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be > 0".into());
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err("timeout_secs must be a finite number > 0".into());
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.endpoint_url.trim_end_matches('/'))
    }
}

fn file_url(path: &str) -> String {
    if path.contains("://") {
        path.to_string()
    } else {
        format!("file://{path}")
    }
}

/// Content parts carrying one media reference.
pub(crate) fn media_parts(media: &MediaRef) -> Result<Vec<Value>, BackendError> {
    match media.kind {
        MediaKind::Url | MediaKind::VideoFile => Ok(vec![json!({
            "type": "video_url",
            "video_url": { "url": file_url(&media.uri) }
        })]),
        MediaKind::FrameDir => {
            let dir = Path::new(&media.uri);
            let mut frames: Vec<String> = std::fs::read_dir(dir)
                .map_err(|e| BackendError::Media(format!("{}: {e}", media.uri)))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png" | "webp"))
                })
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            if frames.is_empty() {
                return Err(BackendError::Media(format!("{}: no frame images", media.uri)));
            }
            frames.sort();
            Ok(frames
                .iter()
                .map(|f| json!({ "type": "image_url", "image_url": { "url": file_url(f) } }))
                .collect())
        }
    }
}

/// The URL prefix under which a media reference appears on the wire.
pub(crate) fn media_url_prefix(media: &MediaRef) -> String {
    file_url(&media.uri)
}

pub(crate) fn wire_messages(messages: &[Message]) -> Result<Vec<Value>, BackendError> {
    messages
        .iter()
        .map(|m| {
            if m.media.is_empty() {
                return Ok(json!({ "role": m.role.as_str(), "content": m.content }));
            }
            let mut parts = Vec::new();
            for media in &m.media {
                parts.extend(media_parts(media)?);
            }
            parts.push(json!({ "type": "text", "text": m.content }));
            Ok(json!({ "role": m.role.as_str(), "content": parts }))
        })
        .collect()
}

pub(crate) fn request_body(config: &BackendConfig, messages: &[Message]) -> Result<Value, BackendError> {
    Ok(json!({
        "model": config.model_name,
        "messages": wire_messages(messages)?,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }))
}

fn reply_text(body: &Value) -> Result<String, BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::InvalidResponse(format!("unexpected content {other}"))),
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Transport)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut request = self.client.post(self.config.completions_url()).json(body);
        if !self.config.api_key_env.is_empty() {
            if let Ok(key) = std::env::var(&self.config.api_key_env) {
                if !key.is_empty() {
                    request = request.bearer_auth(key);
                }
            }
        }
        let response = request.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if !status.is_success() {
            return Err(BackendError::HttpStatus { code: status.as_u16(), body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        reply_text(&value)
    }
}

fn classify(err: reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(err.to_string())
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, _role: Role, messages: &[Message]) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        debug_assert!(messages.iter().all(|m| m.media.is_empty() || m.role == MessageRole::User));
        let body = request_body(&self.config, messages)?;
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * (1 << (attempt - 1))));
                }
                other => return other,
            }
        }
    }
}

//! Model backends: one request/response contract served by a live
//! chat-completions client or by a scripted fixture store.

mod fixtures;
mod http;
mod stub;

use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Message, Role};

pub use fixtures::{record, FixturePattern, FixtureStore, RecordingBackend, ScriptedBackend};
pub use http::{BackendConfig, HttpBackend};
pub use stub::{FixtureServer, ServerOptions};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("no fixture for key {key}")]
    FixtureMiss { key: String },
    #[error("failed to write fixtures: {0}")]
    WriteFailed(String),
    #[error("cannot attach media: {0}")]
    Media(String),
    #[error("empty message list")]
    EmptyPrompt,
}

impl BackendError {
    /// Transport-level failures worth retrying. Parse failures never reach
    /// this layer.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::HttpStatus { code, .. } => *code >= 500,
            _ => false,
        }
    }
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        (**self).complete(role, messages)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for &T {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        (**self).complete(role, messages)
    }
}

/// One backend per agent role; the roles may share an instance.
#[derive(Clone)]
pub struct Backends {
    pub witness: Arc<dyn ModelBackend>,
    pub detective: Arc<dyn ModelBackend>,
    pub supervisor: Arc<dyn ModelBackend>,
}

impl Backends {
    pub fn shared(backend: Arc<dyn ModelBackend>) -> Self {
        Backends { witness: backend.clone(), detective: backend.clone(), supervisor: backend }
    }

    pub fn for_role(&self, role: Role) -> &dyn ModelBackend {
        match role {
            Role::Witness => self.witness.as_ref(),
            Role::Detective => self.detective.as_ref(),
            Role::Supervisor => self.supervisor.as_ref(),
        }
    }

    pub fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        self.for_role(role).complete(role, messages)
    }
}

impl ModelBackend for Backends {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        Backends::complete(self, role, messages)
    }
}

fn normalize_text(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<String> = unified
        .split('\n')
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Canonical rendering used for fixture keys: role tags, content and media
/// video ids, with whitespace runs collapsed and `\n` line endings.
pub fn normalize_prompt(messages: &[Message]) -> String {
    let mut out = String::new();
    for message in messages {
        out.push('[');
        out.push_str(message.role.as_str());
        out.push_str("]\n");
        if !message.media.is_empty() {
            let ids: Vec<String> = message.media.iter().map(|m| normalize_text(&m.video_id)).collect();
            out.push_str("[media: ");
            out.push_str(&ids.join(", "));
            out.push_str("]\n");
        }
        out.push_str(&normalize_text(&message.content));
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the normalized prompt.
pub fn prompt_hash(messages: &[Message]) -> String {
    hex::encode(Sha256::digest(normalize_prompt(messages).as_bytes()))
}

pub fn fixture_key(role: Role, messages: &[Message]) -> String {
    format!("{role}:{}", prompt_hash(messages))
}

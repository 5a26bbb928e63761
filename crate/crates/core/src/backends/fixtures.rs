use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{fixture_key, normalize_prompt, BackendError, ModelBackend};
use crate::agents::{Message, Role};

/// Fallback rule, tried in file order after an exact key miss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixturePattern {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    pub response: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    entries: BTreeMap<String, String>,
    #[serde(default)]
    patterns: Vec<FixturePattern>,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureStore {
    entries: BTreeMap<String, String>,
    patterns: Vec<FixturePattern>,
    compiled: Vec<Option<Regex>>,
}

impl PartialEq for FixtureStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.patterns == other.patterns
    }
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: FixtureFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut store = FixtureStore { entries: file.entries, ..Default::default() };
        for pattern in file.patterns {
            store.add_pattern(pattern)?;
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        let file = FixtureFile { entries: self.entries.clone(), patterns: self.patterns.clone() };
        let mut s = serde_json::to_string_pretty(&file).expect("fixture file serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| BackendError::WriteFailed(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| BackendError::WriteFailed(format!("{}: {e}", path.display())))
    }

    pub fn insert(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.entries.insert(key.into(), response.into());
    }

    pub fn add_pattern(&mut self, pattern: FixturePattern) -> Result<(), String> {
        let compiled = match (&pattern.contains, &pattern.regex) {
            (Some(_), None) => None,
            (None, Some(re)) => Some(Regex::new(re).map_err(|e| format!("bad pattern regex `{re}`: {e}"))?),
            (None, None) if pattern.video_id.is_some() => None,
            _ => return Err("a pattern needs exactly one of `contains` or `regex` (or only `video_id`)".into()),
        };
        self.patterns.push(pattern);
        self.compiled.push(compiled);
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn patterns(&self) -> &[FixturePattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.entries.len() + self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exact key first, then patterns in order.
    pub fn lookup(&self, role: Role, messages: &[Message]) -> Result<&str, BackendError> {
        let key = fixture_key(role, messages);
        if let Some(hit) = self.entries.get(&key) {
            return Ok(hit);
        }
        let text = normalize_prompt(messages);
        let video_ids: Vec<&str> = messages.iter().flat_map(|m| m.media.iter().map(|r| r.video_id.as_str())).collect();
        for (pattern, compiled) in self.patterns.iter().zip(&self.compiled) {
            if pattern.role != role {
                continue;
            }
            if let Some(vid) = &pattern.video_id {
                if !video_ids.contains(&vid.as_str()) {
                    continue;
                }
            }
            let matched = match (&pattern.contains, compiled) {
                (Some(needle), _) => text.contains(needle.as_str()),
                (None, Some(re)) => re.is_match(&text),
                (None, None) => true,
            };
            if matched {
                return Ok(&pattern.response);
            }
        }
        Err(BackendError::FixtureMiss { key })
    }
}

/// Replays a fixture store. Never touches the network.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    store: Arc<FixtureStore>,
}

impl ScriptedBackend {
    pub fn new(store: FixtureStore) -> Self {
        ScriptedBackend { store: Arc::new(store) }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        self.store.lookup(role, messages).map(str::to_string)
    }
}

/// Calls the live backend and stores the reply under its fixture key.
pub fn record(
    live: &dyn ModelBackend,
    store: &mut FixtureStore,
    role: Role,
    messages: &[Message],
) -> Result<String, BackendError> {
    let reply = live.complete(role, messages)?;
    store.insert(fixture_key(role, messages), reply.clone());
    Ok(reply)
}

/// Wraps a live backend; every reply is added to the store and, when a
/// path is set, the store file is rewritten.
pub struct RecordingBackend {
    live: Arc<dyn ModelBackend>,
    store: Mutex<FixtureStore>,
    path: Option<PathBuf>,
}

impl RecordingBackend {
    pub fn new(live: Arc<dyn ModelBackend>, store: FixtureStore, path: Option<PathBuf>) -> Self {
        RecordingBackend { live, store: Mutex::new(store), path }
    }

    pub fn snapshot(&self) -> FixtureStore {
        self.store.lock().expect("fixture store lock").clone()
    }
}

impl ModelBackend for RecordingBackend {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        let reply = self.live.complete(role, messages)?;
        let mut store = self.store.lock().expect("fixture store lock");
        store.insert(fixture_key(role, messages), reply.clone());
        if let Some(path) = &self.path {
            store.save(path)?;
        }
        Ok(reply)
    }
}

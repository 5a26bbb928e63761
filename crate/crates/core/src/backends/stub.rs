//! In-process HTTP server that answers chat-completions requests from any
//! backend, usually a fixture store. Used to check that the HTTP client and
//! the scripted backend are interchangeable.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use super::http::media_url_prefix;
use super::{BackendError, ModelBackend};
use crate::agents::{MediaKind, MediaRef, Message, MessageRole, Role};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// The first `fail_first` requests get `fail_status` instead of a reply.
    pub fail_first: usize,
    pub fail_status: u16,
    /// Sleep before answering each request.
    pub delay: Duration,
}

struct Shared {
    backend: Arc<dyn ModelBackend>,
    models: BTreeMap<String, Role>,
    media: Vec<MediaRef>,
    options: ServerOptions,
    requests: AtomicUsize,
}

pub struct FixtureServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// `models` maps the request's `model` field to the agent role; `media`
    /// lets the server map content-part URLs back to video ids.
    pub fn start(
        backend: Arc<dyn ModelBackend>,
        models: BTreeMap<String, Role>,
        media: Vec<MediaRef>,
        options: ServerOptions,
    ) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared { backend, models, media, options, requests: AtomicUsize::new(0) });
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let shared = shared.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = shared.clone();
                    std::thread::spawn(move || {
                        let _ = serve_connection(stream, &shared);
                    });
                }
            })
        };
        Ok(FixtureServer { addr, shared, stop, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = handle_request(&request_line, &body, shared);
    let payload = payload.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        reason(status),
        payload.len()
    )?;
    stream.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn error_body(message: impl Into<String>) -> Value {
    json!({ "error": { "message": message.into() } })
}

fn handle_request(request_line: &str, body: &[u8], shared: &Shared) -> (u16, Value) {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    if !shared.options.delay.is_zero() {
        std::thread::sleep(shared.options.delay);
    }
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    if method != "POST" || path != "/v1/chat/completions" {
        return (404, error_body(format!("no route for {method} {path}")));
    }
    if n < shared.options.fail_first {
        return (shared.options.fail_status, error_body("injected failure"));
    }
    let request: Value = match serde_json::from_slice(body) {
        Ok(v) => v,
        Err(e) => return (400, error_body(format!("bad json: {e}"))),
    };
    let model = request["model"].as_str().unwrap_or_default();
    let Some(role) = shared.models.get(model).copied() else {
        return (404, error_body(format!("unknown model `{model}`")));
    };
    let messages = match decode_messages(&request["messages"], &shared.media) {
        Ok(m) => m,
        Err(e) => return (400, error_body(e)),
    };
    match shared.backend.complete(role, &messages) {
        Ok(reply) => (
            200,
            json!({
                "id": format!("stub-{n}"),
                "object": "chat.completion",
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": { "role": "assistant", "content": reply },
                    "finish_reason": "stop"
                }]
            }),
        ),
        Err(BackendError::FixtureMiss { key }) => (404, error_body(format!("fixture miss: {key}"))),
        Err(e) => (500, error_body(e.to_string())),
    }
}

fn find_media<'a>(url: &str, media: &'a [MediaRef]) -> Option<&'a MediaRef> {
    media.iter().find(|m| {
        let prefix = media_url_prefix(m);
        match m.kind {
            MediaKind::FrameDir => url.starts_with(&prefix),
            MediaKind::Url | MediaKind::VideoFile => url == prefix,
        }
    })
}

fn decode_messages(value: &Value, media: &[MediaRef]) -> Result<Vec<Message>, String> {
    let list = value.as_array().ok_or("messages is not an array")?;
    list.iter()
        .map(|m| {
            let role = match m["role"].as_str() {
                Some("system") => MessageRole::System,
                Some("user") => MessageRole::User,
                Some("assistant") => MessageRole::Assistant,
                other => return Err(format!("bad role {other:?}")),
            };
            match &m["content"] {
                Value::String(s) => Ok(Message { role, content: s.clone(), media: Vec::new() }),
                Value::Array(parts) => {
                    let mut content = String::new();
                    let mut refs: Vec<MediaRef> = Vec::new();
                    for part in parts {
                        let url = match part["type"].as_str() {
                            Some("text") => {
                                content.push_str(part["text"].as_str().unwrap_or_default());
                                continue;
                            }
                            Some("video_url") => part["video_url"]["url"].as_str(),
                            Some("image_url") => part["image_url"]["url"].as_str(),
                            other => return Err(format!("bad content part type {other:?}")),
                        };
                        let url = url.ok_or("content part without url")?;
                        let found = find_media(url, media).ok_or_else(|| format!("unregistered media url {url}"))?;
                        if refs.last() != Some(found) {
                            refs.push(found.clone());
                        }
                    }
                    Ok(Message { role, content, media: refs })
                }
                _ => Err("message content must be a string or an array".into()),
            }
        })
        .collect()
}

//! Prompt construction and reply parsing for the Witness, Detective and
//! Supervisor roles.
//!
//! Every reply grammar is line oriented (`KEY: value`, one directive per
//! line). Parsers scan for the first complete block, so models are free to
//! surround it with prose. All builders are pure: identical inputs give
//! byte-identical message lists.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeOp, NodeId, NodeStatus, SoTGraph};
use crate::labels::{AdLabel, LabelSet};
use crate::layer::LayerId;
use crate::orchestrator::BudgetState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Witness,
    Detective,
    Supervisor,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Witness, Role::Detective, Role::Supervisor];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Witness => "witness",
            Role::Detective => "detective",
            Role::Supervisor => "supervisor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "witness" => Ok(Role::Witness),
            "detective" => Ok(Role::Detective),
            "supervisor" => Ok(Role::Supervisor),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    VideoFile,
    FrameDir,
    Url,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub video_id: String,
    pub uri: String,
    pub kind: MediaKind,
}

impl MediaRef {
    /// Infers the kind from the uri: `http(s)://` is a URL, a trailing `/`
    /// marks a frame directory, anything else is a video file.
    pub fn new(video_id: impl Into<String>, uri: impl Into<String>) -> Self {
        let uri = uri.into();
        let kind = if uri.starts_with("http://") || uri.starts_with("https://") {
            MediaKind::Url
        } else if uri.ends_with('/') {
            MediaKind::FrameDir
        } else {
            MediaKind::VideoFile
        };
        MediaRef { video_id: video_id.into(), uri, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub media: Vec<MediaRef>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: MessageRole::System, content: content.into(), media: Vec::new() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: MessageRole::User, content: content.into(), media: Vec::new() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: MessageRole::Assistant, content: content.into(), media: Vec::new() }
    }

    pub fn user_with_media(content: impl Into<String>, media: MediaRef) -> Self {
        Message { role: MessageRole::User, content: content.into(), media: vec![media] }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("malformed output: {0}")]
    MalformedOutput(String),
    #[error("illegal target: {0}")]
    IllegalTarget(String),
    #[error("illegal operation: {0}")]
    IllegalOperation(String),
    #[error("expected {expected} questions, got {got}")]
    WrongCardinality { expected: String, got: usize },
    #[error("duplicate candidate questions: `{0}`")]
    DuplicateCandidates(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("exploration goal is empty")]
    EmptyGoal,
    #[error("question is empty")]
    EmptyQuestion,
}

impl AgentError {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentError::MalformedOutput(_) => "MalformedOutput",
            AgentError::IllegalTarget(_) => "IllegalTarget",
            AgentError::IllegalOperation(_) => "IllegalOperation",
            AgentError::WrongCardinality { .. } => "WrongCardinality",
            AgentError::DuplicateCandidates(_) => "DuplicateCandidates",
            AgentError::UnknownLabel(_) => "UnknownLabel",
            AgentError::EmptyGoal => "EmptyGoal",
            AgentError::EmptyQuestion => "EmptyQuestion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisorDecision {
    pub op: EdgeOp,
    pub target: NodeId,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectiveOutput {
    pub candidates: [String; 3],
    /// Zero-based.
    pub selected: usize,
    pub rationale: String,
}

impl DetectiveOutput {
    pub fn selected_question(&self) -> &str {
        &self.candidates[self.selected]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectiveMode {
    Proceed,
    Refine,
    Split { max_branches: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectiveReply {
    Proceed(DetectiveOutput),
    Refine(String),
    Split(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub ad: AdLabel,
    pub ac: String,
    pub evidence_summary: String,
}

impl Classification {
    pub fn fallback(labels: &LabelSet) -> Self {
        Classification {
            ad: AdLabel::Normal,
            ac: labels.normal_label().to_string(),
            evidence_summary: "parse-fallback".to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Line scanning

/// One `KEY: value` directive. Keys are matched case-insensitively.
struct Directive<'a> {
    key: String,
    value: &'a str,
}

fn directive(line: &str) -> Option<Directive<'_>> {
    let line = line.trim();
    let (key, value) = line.split_once(':')?;
    let key = key.trim();
    if key.is_empty() || key.len() > 12 || !key.chars().all(|c| c.is_ascii_alphanumeric()) {
        return None;
    }
    Some(Directive { key: key.to_ascii_uppercase(), value: value.trim() })
}

/// Directive lines only; prose and blank lines are dropped.
fn directives(text: &str) -> Vec<Directive<'_>> {
    text.lines().filter_map(directive).collect()
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn single_line(s: &str) -> String {
    collapse_ws(s)
}

fn check_distinct(questions: &[String]) -> Result<(), AgentError> {
    for (i, a) in questions.iter().enumerate() {
        for b in &questions[i + 1..] {
            if collapse_ws(a) == collapse_ws(b) {
                return Err(AgentError::DuplicateCandidates(collapse_ws(a)));
            }
        }
    }
    Ok(())
}

/// Reads `PREFIX1:`, `PREFIX2:`, ... directives in sequence starting at
/// `start`. Returns the values and the index just past them.
fn numbered_run<'a>(ds: &[Directive<'a>], start: usize, prefix: &str) -> (Vec<&'a str>, usize) {
    let mut out = Vec::new();
    let mut i = start;
    while i < ds.len() && ds[i].key == format!("{prefix}{}", out.len() + 1) {
        out.push(ds[i].value);
        i += 1;
    }
    (out, i)
}

// ---------------------------------------------------------------------------
// Supervisor

const SUPERVISOR_SYSTEM: &str = "You are the Supervisor of a video investigation. A Witness can see the video and answers questions; a Detective writes the questions. You manage the reasoning graph: at every turn pick one operation on one node and state the exploration goal the Detective should pursue.\n\nOperations:\n- proceed: the Detective proposes three follow-up questions under the target node and keeps the most relevant one.\n- refine: the Detective rewrites the target node's question using the context gathered so far.\n- split: the Detective divides the target node into several reasoning branches.\n- stop: mark the target node as fully explored. Stopping the layer root ends the layer.";

const SUPERVISOR_GRAMMAR: &str = "Reply with exactly these three lines:\nOPERATION: proceed|refine|split|stop\nTARGET: n<k>\nGOAL: <the exploration goal for the Detective; may be empty for stop>";

fn truncate_line(s: &str, max_chars: usize) -> String {
    let s = single_line(s);
    if s.chars().count() <= max_chars {
        s
    } else {
        let mut out: String = s.chars().take(max_chars).collect();
        out.push_str("...");
        out
    }
}

fn node_summary(graph: &SoTGraph, id: NodeId) -> String {
    let node = graph.node(id).expect("listed node exists");
    let depth = graph.depth(id).unwrap_or(0);
    let status = match node.status {
        NodeStatus::Open => "open",
        NodeStatus::Answered => "answered",
        NodeStatus::Stopped => "stopped",
    };
    let answer = node
        .answer
        .as_deref()
        .map(|a| truncate_line(a, 160))
        .unwrap_or_else(|| "(not yet answered)".to_string());
    format!(
        "{}- {} [{}, depth {}] Q: {} | A: {}",
        "  ".repeat(depth.saturating_sub(1)),
        id,
        status,
        depth,
        truncate_line(&node.question, 160),
        answer
    )
}

/// One line per finished layer, listed before `layer` in the graph.
pub fn layer_digest(graph: &SoTGraph, layer: LayerId) -> String {
    let nodes = graph.layer_nodes(layer);
    let answered = nodes.iter().filter(|n| n.answer.is_some()).count();
    let root_answer = nodes
        .first()
        .and_then(|n| n.answer.as_deref())
        .map(|a| truncate_line(a, 120))
        .unwrap_or_else(|| "(no answer)".to_string());
    format!("{layer}: {} nodes, {answered} answered; root answer: {root_answer}", nodes.len())
}

pub fn build_supervisor_prompt(graph: &SoTGraph, layer: LayerId, budget: &BudgetState) -> Vec<Message> {
    let mut user = String::new();
    let _ = writeln!(user, "Exploration layer: {layer} ({})", layer.theme());

    let completed: Vec<LayerId> = graph.layers().into_iter().filter(|l| *l < layer).collect();
    if !completed.is_empty() {
        let _ = writeln!(user, "\nCompleted layers:");
        for l in completed {
            let _ = writeln!(user, "- {}", layer_digest(graph, l));
        }
    }

    let nodes = graph.layer_nodes(layer);
    let _ = writeln!(user, "\nCurrent tree:");
    for node in &nodes {
        let _ = writeln!(user, "{}", node_summary(graph, node.id));
    }
    let open: Vec<String> = nodes.iter().filter(|n| !n.is_frozen()).map(|n| n.id.to_string()).collect();
    let _ = writeln!(
        user,
        "\nOpen nodes: {}",
        if open.is_empty() { "(none)".to_string() } else { open.join(", ") }
    );

    let turns_left = budget.turns_remaining();
    let _ = writeln!(
        user,
        "Budget: {turns_left} of {} turns remaining; {} of {} nodes remaining; maximum depth {}.",
        budget.max_turns_per_layer,
        budget.max_nodes_per_layer.saturating_sub(nodes.len()),
        budget.max_nodes_per_layer,
        budget.max_depth
    );
    if turns_left == 0 {
        let _ = writeln!(user, "The budget is exhausted: only `stop` is legal now.");
    }
    let _ = write!(user, "\n{SUPERVISOR_GRAMMAR}");

    vec![Message::system(SUPERVISOR_SYSTEM), Message::user(user)]
}

pub fn render_supervisor_decision(d: &SupervisorDecision) -> String {
    format!("OPERATION: {}\nTARGET: {}\nGOAL: {}", d.op, d.target, d.goal)
}

/// Grammar-level parse without graph validation.
fn scan_supervisor(text: &str) -> Result<SupervisorDecision, AgentError> {
    let ds = directives(text);
    let mut last_err = AgentError::MalformedOutput("no OPERATION line".into());
    for start in (0..ds.len()).filter(|&i| ds[i].key == "OPERATION") {
        let block = &ds[start..];
        if block.len() < 3 || block[1].key != "TARGET" || block[2].key != "GOAL" {
            last_err = AgentError::MalformedOutput("OPERATION must be followed by TARGET and GOAL lines".into());
            continue;
        }
        let op: EdgeOp = match block[0].value.to_ascii_lowercase().parse() {
            Ok(op) => op,
            Err(e) => {
                last_err = AgentError::MalformedOutput(e);
                continue;
            }
        };
        let target: NodeId = match block[1].value.parse() {
            Ok(t) => t,
            Err(e) => {
                last_err = AgentError::MalformedOutput(e);
                continue;
            }
        };
        return Ok(SupervisorDecision { op, target, goal: block[2].value.to_string() });
    }
    Err(last_err)
}

pub fn parse_supervisor_decision(text: &str, graph: &SoTGraph) -> Result<SupervisorDecision, AgentError> {
    let decision = scan_supervisor(text)?;
    let node = graph
        .node(decision.target)
        .ok_or_else(|| AgentError::IllegalTarget(format!("{} does not exist", decision.target)))?;
    if node.is_frozen() {
        return Err(AgentError::IllegalTarget(format!("{} is stopped", decision.target)));
    }
    if decision.op != EdgeOp::Stop && decision.goal.is_empty() {
        return Err(AgentError::IllegalOperation(format!("{} requires a goal", decision.op)));
    }
    if decision.op == EdgeOp::Refine && !node.children.is_empty() {
        return Err(AgentError::IllegalOperation(format!(
            "cannot refine {}: its question already has follow-ups",
            decision.target
        )));
    }
    Ok(decision)
}

/// The target named by a reply that parsed but failed validation.
pub fn supervisor_target_hint(text: &str) -> Option<NodeId> {
    scan_supervisor(text).ok().map(|d| d.target)
}

// ---------------------------------------------------------------------------
// Detective

const DETECTIVE_SYSTEM: &str = "You are the Detective in a video investigation. You cannot see the video; a Witness who can see it answers your questions. Write short, concrete questions the Witness can answer from what is visible, following the Supervisor's current exploration goal and the reasoning path so far.";

pub fn build_detective_prompt(
    goal: &str,
    context: &[(String, Option<String>)],
    mode: DetectiveMode,
) -> Result<Vec<Message>, AgentError> {
    if goal.trim().is_empty() {
        return Err(AgentError::EmptyGoal);
    }
    let mut user = String::new();
    let _ = writeln!(user, "Exploration goal: {}", single_line(goal));
    let _ = writeln!(user, "\nReasoning path so far (root first):");
    if context.is_empty() {
        let _ = writeln!(user, "(empty)");
    }
    for (i, (q, a)) in context.iter().enumerate() {
        let _ = writeln!(user, "{}. Q: {}", i + 1, single_line(q));
        let _ = writeln!(
            user,
            "   A: {}",
            a.as_deref().map(single_line).unwrap_or_else(|| "(not yet answered)".into())
        );
    }
    let _ = writeln!(user);
    match mode {
        DetectiveMode::Proceed => {
            let _ = write!(
                user,
                "Propose three distinct follow-up questions for the Witness and select the most relevant one for the goal.\nReply with exactly these lines:\nQ1: <question>\nQ2: <question>\nQ3: <question>\nSELECT: 1|2|3"
            );
        }
        DetectiveMode::Refine => {
            let previous = context.last().map(|(q, _)| single_line(q)).unwrap_or_default();
            let _ = write!(
                user,
                "Rewrite the previous question using the context gathered so far.\nQuestion to rewrite: {previous}\nReply with exactly one line:\nQR: <rewritten question>"
            );
        }
        DetectiveMode::Split { max_branches } => {
            let _ = write!(
                user,
                "Divide the last question into between 2 and {max_branches} distinct reasoning branches, one question per branch.\nReply with one line per branch:\nB1: <question>\nB2: <question>\n..."
            );
        }
    }
    Ok(vec![Message::system(DETECTIVE_SYSTEM), Message::user(user)])
}

pub fn render_detective_output(out: &DetectiveOutput) -> String {
    let mut s = format!(
        "Q1: {}\nQ2: {}\nQ3: {}\nSELECT: {}",
        out.candidates[0],
        out.candidates[1],
        out.candidates[2],
        out.selected + 1
    );
    if !out.rationale.is_empty() {
        let _ = write!(s, "\nRATIONALE: {}", out.rationale);
    }
    s
}

pub fn render_branches(branches: &[String]) -> String {
    branches
        .iter()
        .enumerate()
        .map(|(i, b)| format!("B{}: {b}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_proceed(text: &str) -> Result<DetectiveOutput, AgentError> {
    let ds = directives(text);
    let start = ds
        .iter()
        .position(|d| d.key == "Q1")
        .ok_or_else(|| AgentError::MalformedOutput("no Q1 line".into()))?;
    let (questions, next) = numbered_run(&ds, start, "Q");
    if questions.len() != 3 {
        return Err(AgentError::WrongCardinality { expected: "3".into(), got: questions.len() });
    }
    if let Some(q) = questions.iter().find(|q| q.is_empty()) {
        return Err(AgentError::MalformedOutput(format!("empty candidate `{q}`")));
    }
    let select = ds
        .get(next)
        .filter(|d| d.key == "SELECT")
        .ok_or_else(|| AgentError::MalformedOutput("Q3 must be followed by SELECT".into()))?;
    let selected = match select.value.parse::<usize>() {
        Ok(n @ 1..=3) => n - 1,
        _ => return Err(AgentError::MalformedOutput(format!("SELECT `{}` is not 1, 2 or 3", select.value))),
    };
    let candidates: Vec<String> = questions.iter().map(|q| q.to_string()).collect();
    check_distinct(&candidates)?;
    let rationale = ds
        .get(next + 1)
        .filter(|d| d.key == "RATIONALE")
        .map(|d| d.value.to_string())
        .unwrap_or_default();
    let candidates: [String; 3] = candidates.try_into().expect("three candidates");
    Ok(DetectiveOutput { candidates, selected, rationale })
}

pub fn parse_detective_output(text: &str, mode: DetectiveMode) -> Result<DetectiveReply, AgentError> {
    match mode {
        DetectiveMode::Proceed => parse_proceed(text).map(DetectiveReply::Proceed),
        DetectiveMode::Refine => {
            let ds = directives(text);
            let d = ds
                .iter()
                .find(|d| d.key == "QR")
                .ok_or_else(|| AgentError::MalformedOutput("no QR line".into()))?;
            if d.value.is_empty() {
                return Err(AgentError::MalformedOutput("empty QR question".into()));
            }
            Ok(DetectiveReply::Refine(d.value.to_string()))
        }
        DetectiveMode::Split { max_branches } => {
            let ds = directives(text);
            let start = ds
                .iter()
                .position(|d| d.key == "B1")
                .ok_or_else(|| AgentError::MalformedOutput("no B1 line".into()))?;
            let (branches, _) = numbered_run(&ds, start, "B");
            if branches.len() < 2 || branches.len() > max_branches {
                return Err(AgentError::WrongCardinality {
                    expected: format!("2..={max_branches}"),
                    got: branches.len(),
                });
            }
            if branches.iter().any(|b| b.is_empty()) {
                return Err(AgentError::MalformedOutput("empty branch question".into()));
            }
            let branches: Vec<String> = branches.iter().map(|b| b.to_string()).collect();
            check_distinct(&branches)?;
            Ok(DetectiveReply::Split(branches))
        }
    }
}

// ---------------------------------------------------------------------------
// Witness

pub const WITNESS_SYSTEM: &str = "You are the Witness. You are watching a surveillance video. Answer the question strictly from what is visible in the video. Describe literally what you see, without speculation; say so plainly if something cannot be seen.";

pub fn build_witness_prompt(media: &MediaRef, question: &str) -> Result<Vec<Message>, AgentError> {
    if question.trim().is_empty() {
        return Err(AgentError::EmptyQuestion);
    }
    Ok(vec![
        Message::system(WITNESS_SYSTEM),
        Message::user_with_media(question.trim(), media.clone()),
    ])
}

// ---------------------------------------------------------------------------
// Classification

const CLASSIFIER_SYSTEM: &str = "You are the Supervisor of a video investigation and must now give the final verdict on the video. Weigh the exploration findings together with the answers to the targeted anomaly questions.";

/// The classification grammar and the label vocabulary, appended to every
/// prompt that expects a verdict.
pub fn classification_instructions(labels: &LabelSet) -> String {
    format!(
        "Allowed AC labels: {}.\nUse AD: Normal only together with AC: {}.\nReply with exactly these lines:\nAD: Normal|Abnormal\nAC: <one allowed label>\nEVIDENCE: <one-sentence summary of the decisive evidence>",
        labels.all().join(", "),
        labels.normal_label()
    )
}

/// Exploration evidence for one layer: `(path of node ids, question, answer)`
/// for every answered node, in tree order.
pub type LayerEvidence = (LayerId, Vec<(Vec<NodeId>, String, String)>);

pub fn collect_layer_evidence(graph: &SoTGraph) -> Vec<LayerEvidence> {
    graph
        .layers()
        .into_iter()
        .map(|layer| {
            let rows = graph
                .layer_nodes(layer)
                .into_iter()
                .filter_map(|n| {
                    let answer = n.answer.clone()?;
                    let path = graph.ancestry(n.id).unwrap_or_default();
                    Some((path, n.question.clone(), answer))
                })
                .collect();
            (layer, rows)
        })
        .collect()
}

pub fn build_classification_prompt(
    exploration: &[LayerEvidence],
    anomaly_qa: &[(String, String)],
    labels: &LabelSet,
) -> Vec<Message> {
    let mut user = String::from("Exploration findings:\n");
    for (layer, rows) in exploration {
        let _ = writeln!(user, "[{layer}]");
        if rows.is_empty() {
            let _ = writeln!(user, "(no answered questions)");
        }
        for (path, q, a) in rows {
            let path: Vec<String> = path.iter().map(NodeId::to_string).collect();
            let _ = writeln!(user, "{}: Q: {} | A: {}", path.join(" > "), single_line(q), single_line(a));
        }
    }
    let _ = writeln!(user, "\nTargeted anomaly questions:");
    for (i, (q, a)) in anomaly_qa.iter().enumerate() {
        let _ = writeln!(user, "{}. Q: {}", i + 1, q);
        let _ = writeln!(user, "   A: {}", a);
    }
    let _ = write!(user, "\n{}", classification_instructions(labels));
    vec![Message::system(CLASSIFIER_SYSTEM), Message::user(user)]
}

pub fn render_classification(c: &Classification) -> String {
    format!("AD: {}\nAC: {}\nEVIDENCE: {}", c.ad.as_str(), c.ac, c.evidence_summary)
}

pub fn parse_classification(text: &str, labels: &LabelSet) -> Result<Classification, AgentError> {
    let ds = directives(text);
    let ad_at = ds
        .iter()
        .position(|d| d.key == "AD")
        .ok_or_else(|| AgentError::MalformedOutput("no AD line".into()))?;
    let ad_value = ds[ad_at].value;
    if !ad_value.eq_ignore_ascii_case("normal") && !ad_value.eq_ignore_ascii_case("abnormal") {
        return Err(AgentError::MalformedOutput(format!("AD `{ad_value}` is not Normal or Abnormal")));
    }
    let ac_at = ds[ad_at + 1..]
        .iter()
        .position(|d| d.key == "AC")
        .map(|p| p + ad_at + 1)
        .ok_or_else(|| AgentError::MalformedOutput("no AC line after AD".into()))?;
    let ac_raw = ds[ac_at].value;
    if ac_raw.is_empty() {
        return Err(AgentError::MalformedOutput("empty AC label".into()));
    }
    let ac = labels
        .canonical(ac_raw)
        .ok_or_else(|| AgentError::UnknownLabel(ac_raw.to_string()))?
        .to_string();
    let evidence_summary = ds[ac_at + 1..]
        .iter()
        .find(|d| d.key == "EVIDENCE")
        .map(|d| d.value.to_string())
        .unwrap_or_default();
    // The specific class wins over a contradicting binary flag.
    let ad = labels.ad_of(&ac);
    Ok(Classification { ad, ac, evidence_summary })
}

/// Appends the failed reply and a correction request, so a retry is a new
/// prompt rather than a byte-identical resend.
pub fn with_retry_feedback(messages: &[Message], reply: &str, error: &AgentError) -> Vec<Message> {
    let mut out = messages.to_vec();
    out.push(Message::assistant(reply));
    out.push(Message::user(format!(
        "Your previous reply could not be used ({}: {error}). Reply again using exactly the required lines.",
        error.kind()
    )));
    out
}

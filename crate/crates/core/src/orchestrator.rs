//! The CoAT session loop: per-layer exploration driven by Supervisor
//! decisions, then the anomaly classification layer and the final verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    self, build_detective_prompt, build_supervisor_prompt, build_witness_prompt, parse_classification,
    parse_detective_output, parse_supervisor_decision, supervisor_target_hint, with_retry_feedback, AgentError,
    Classification, DetectiveMode, DetectiveReply, MediaRef, Message, Role, SupervisorDecision,
};
use crate::backends::{fixture_key, prompt_hash, BackendError, Backends};
use crate::graph::{EdgeOp, GraphError, NodeId, NodeStatus, SoTGraph, DEFAULT_MAX_BRANCHES};
use crate::labels::{AdLabel, LabelSet};
use crate::layer::{LayerId, Variant};

pub const SESSION_FORMAT_VERSION: u32 = 1;
pub const NO_ANSWER: &str = "(no answer)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetState {
    #[serde(default = "default_max_turns")]
    pub max_turns_per_layer: u32,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes_per_layer: usize,
    #[serde(default)]
    pub turns_used: u32,
}

fn default_max_turns() -> u32 {
    8
}

fn default_max_depth() -> usize {
    5
}

fn default_max_nodes() -> usize {
    12
}

impl Default for BudgetState {
    fn default() -> Self {
        BudgetState {
            max_turns_per_layer: default_max_turns(),
            max_depth: default_max_depth(),
            max_nodes_per_layer: default_max_nodes(),
            turns_used: 0,
        }
    }
}

impl BudgetState {
    pub fn turns_remaining(&self) -> u32 {
        self.max_turns_per_layer.saturating_sub(self.turns_used)
    }

    /// A fresh copy for a new layer.
    pub fn fresh(&self) -> Self {
        BudgetState { turns_used: 0, ..self.clone() }
    }

    /// Why exploration of `layer` must halt, if it must.
    pub fn exhausted(&self, graph: &SoTGraph, layer: LayerId) -> Option<String> {
        if self.turns_used >= self.max_turns_per_layer {
            return Some(format!("turn budget of {} used", self.max_turns_per_layer));
        }
        let nodes = graph.layer_nodes(layer).len();
        if nodes >= self.max_nodes_per_layer {
            return Some(format!("node budget of {} reached", self.max_nodes_per_layer));
        }
        if graph.tree_depth(layer) >= self.max_depth {
            return Some(format!("maximum depth {} reached", self.max_depth));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub variant: Variant,
    pub budgets: BudgetState,
    pub anomaly_questions: Vec<String>,
    pub labels: LabelSet,
    pub retry_limit: u32,
    pub max_branches: usize,
}

impl SessionConfig {
    pub fn new(variant: Variant, anomaly_questions: Vec<String>) -> Self {
        SessionConfig {
            variant,
            budgets: BudgetState::default(),
            anomaly_questions,
            labels: LabelSet::default(),
            retry_limit: 3,
            max_branches: DEFAULT_MAX_BRANCHES,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let invalid = |m: &str| Err(SessionError::ConfigInvalid(m.to_string()));
        if self.anomaly_questions.is_empty() {
            return invalid("anomaly_questions must not be empty: the anomaly classification layer always runs");
        }
        if self.anomaly_questions.iter().any(|q| q.trim().is_empty()) {
            return invalid("anomaly_questions contains an empty question");
        }
        if self.budgets.max_turns_per_layer == 0 || self.budgets.max_depth == 0 || self.budgets.max_nodes_per_layer == 0 {
            return invalid("session budgets must all be >= 1");
        }
        if self.retry_limit == 0 {
            return invalid("retry_limit must be >= 1");
        }
        if self.max_branches < 2 {
            return invalid("max_branches must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    SessionStarted {
        seq: u64,
        video_id: String,
        strategy: String,
        variant: Option<String>,
        layers: Vec<LayerId>,
        max_branches: usize,
    },
    Seeded {
        seq: u64,
        layer: LayerId,
        root: NodeId,
        question: String,
    },
    LayerStarted {
        seq: u64,
        layer: LayerId,
    },
    Call {
        seq: u64,
        role: Role,
        prompt_hash: String,
        reply: String,
    },
    CallFailed {
        seq: u64,
        role: Role,
        prompt_hash: String,
        error: String,
    },
    ParseFailure {
        seq: u64,
        role: Role,
        error_kind: String,
        message: String,
    },
    Decision {
        seq: u64,
        turn: u32,
        op: EdgeOp,
        target: NodeId,
        goal: String,
    },
    Operation {
        seq: u64,
        turn: u32,
        layer: LayerId,
        op: EdgeOp,
        target: NodeId,
        questions: Vec<String>,
        created: Vec<NodeId>,
    },
    Answer {
        seq: u64,
        node: NodeId,
        answer: String,
    },
    ForcedStop {
        seq: u64,
        turn: u32,
        layer: LayerId,
        target: NodeId,
        reason: String,
    },
    BudgetExhausted {
        seq: u64,
        layer: LayerId,
        reason: String,
    },
    LayerFinished {
        seq: u64,
        layer: LayerId,
        turns_used: u32,
    },
    AnomalyAnswer {
        seq: u64,
        index: usize,
        question: String,
        answer: String,
    },
    ForcedFallback {
        seq: u64,
        role: Role,
        reason: String,
    },
    Classified {
        seq: u64,
        ad: AdLabel,
        ac: String,
    },
}

impl TraceEvent {
    pub fn seq(&self) -> u64 {
        match self {
            TraceEvent::SessionStarted { seq, .. }
            | TraceEvent::Seeded { seq, .. }
            | TraceEvent::LayerStarted { seq, .. }
            | TraceEvent::Call { seq, .. }
            | TraceEvent::CallFailed { seq, .. }
            | TraceEvent::ParseFailure { seq, .. }
            | TraceEvent::Decision { seq, .. }
            | TraceEvent::Operation { seq, .. }
            | TraceEvent::Answer { seq, .. }
            | TraceEvent::ForcedStop { seq, .. }
            | TraceEvent::BudgetExhausted { seq, .. }
            | TraceEvent::LayerFinished { seq, .. }
            | TraceEvent::AnomalyAnswer { seq, .. }
            | TraceEvent::ForcedFallback { seq, .. }
            | TraceEvent::Classified { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionResult {
    pub video_id: String,
    pub strategy: String,
    pub variant: Option<String>,
    pub graph: Option<SoTGraph>,
    pub anomaly_qa: Vec<(String, String)>,
    pub classification: Classification,
    pub trace: Vec<TraceEvent>,
    pub version: u32,
}

impl SessionResult {
    /// Report row this result belongs to, e.g. `coat-l4` or `tot`.
    pub fn row_name(&self) -> String {
        match &self.variant {
            Some(v) if self.strategy == "coat" => format!("coat-{v}"),
            _ => self.strategy.clone(),
        }
    }

    pub fn used_fallback(&self) -> bool {
        self.trace.iter().any(|e| matches!(e, TraceEvent::ForcedFallback { .. }))
    }

    pub fn backend_calls(&self) -> Vec<(Role, &str)> {
        self.trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Call { role, reply, .. } => Some((*role, reply.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("session result serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, GraphError> {
        let result: SessionResult =
            serde_json::from_slice(bytes).map_err(|e| GraphError::CorruptTrace(e.to_string()))?;
        if result.version != SESSION_FORMAT_VERSION {
            return Err(GraphError::CorruptTrace(format!("unsupported version {}", result.version)));
        }
        Ok(result)
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{role} backend call #{seq} failed: {source}")]
    Backend {
        role: Role,
        seq: u64,
        key: String,
        #[source]
        source: BackendError,
    },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("reasoning graph rejected an operation: {0}")]
    Graph(#[from] GraphError),
}

enum Supervised {
    Decision(SupervisorDecision),
    Forced { target: NodeId, reason: String },
}

/// One video's dialogue: backends, trace and counters. Strictly sequential.
pub struct Session<'a> {
    pub media: MediaRef,
    backends: &'a Backends,
    retry_limit: u32,
    trace: Vec<TraceEvent>,
    seq: u64,
    turn: u32,
}

impl<'a> Session<'a> {
    pub fn new(media: MediaRef, backends: &'a Backends, retry_limit: u32) -> Self {
        Session { media, backends, retry_limit: retry_limit.max(1), trace: Vec::new(), seq: 0, turn: 0 }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn emit(&mut self, make: impl FnOnce(u64) -> TraceEvent) {
        let seq = self.next_seq();
        self.trace.push(make(seq));
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<TraceEvent> {
        self.trace
    }

    pub fn retry_limit(&self) -> u32 {
        self.retry_limit
    }

    /// One backend round trip, recorded in the trace either way.
    pub fn call(&mut self, role: Role, messages: &[Message]) -> Result<String, SessionError> {
        let hash = prompt_hash(messages);
        let seq = self.next_seq();
        match self.backends.complete(role, messages) {
            Ok(reply) => {
                self.trace.push(TraceEvent::Call { seq, role, prompt_hash: hash, reply: reply.clone() });
                Ok(reply)
            }
            Err(source) => {
                self.trace.push(TraceEvent::CallFailed { seq, role, prompt_hash: hash, error: source.to_string() });
                Err(SessionError::Backend { role, seq, key: fixture_key(role, messages), source })
            }
        }
    }

    /// Calls `role` and parses the reply, re-prompting with feedback on
    /// parse errors. `Ok(Err(last_error))` means every attempt failed.
    pub fn call_parsed<T>(
        &mut self,
        role: Role,
        messages: Vec<Message>,
        mut parse: impl FnMut(&str) -> Result<T, AgentError>,
    ) -> Result<Result<T, (AgentError, String)>, SessionError> {
        let mut messages = messages;
        let mut last = None;
        for _ in 0..self.retry_limit {
            let reply = self.call(role, &messages)?;
            match parse(&reply) {
                Ok(value) => return Ok(Ok(value)),
                Err(err) => {
                    self.emit(|seq| TraceEvent::ParseFailure {
                        seq,
                        role,
                        error_kind: err.kind().to_string(),
                        message: err.to_string(),
                    });
                    messages = with_retry_feedback(&messages, &reply, &err);
                    last = Some((err, reply));
                }
            }
        }
        Ok(Err(last.expect("at least one attempt")))
    }

    /// Asks the Witness; empty replies are retried, then stored as a
    /// placeholder.
    pub fn ask_witness(&mut self, question: &str) -> Result<String, SessionError> {
        let media = self.media.clone();
        let messages = build_witness_prompt(&media, question).map_err(|e| SessionError::ConfigInvalid(e.to_string()))?;
        let outcome = self.call_parsed(Role::Witness, messages, |reply| {
            let trimmed = reply.trim();
            if trimmed.is_empty() {
                Err(AgentError::MalformedOutput("empty answer".into()))
            } else {
                Ok(trimmed.to_string())
            }
        })?;
        Ok(outcome.unwrap_or_else(|_| NO_ANSWER.to_string()))
    }

    /// Parses a classification reply with retries; falls back to Normal
    /// with a ForcedFallback event.
    pub fn classify(&mut self, role: Role, messages: Vec<Message>, labels: &LabelSet) -> Result<Classification, SessionError> {
        match self.call_parsed(role, messages, |reply| parse_classification(reply, labels))? {
            Ok(c) => {
                let (ad, ac) = (c.ad, c.ac.clone());
                self.emit(|seq| TraceEvent::Classified { seq, ad, ac });
                Ok(c)
            }
            Err((err, _)) => {
                let fallback = Classification::fallback(labels);
                let reason = format!("{} after {} attempts: {err}", err.kind(), self.retry_limit);
                self.emit(|seq| TraceEvent::ForcedFallback { seq, role, reason });
                let (ad, ac) = (fallback.ad, fallback.ac.clone());
                self.emit(|seq| TraceEvent::Classified { seq, ad, ac });
                Ok(fallback)
            }
        }
    }

    fn answer_node(&mut self, graph: &mut SoTGraph, node: NodeId) -> Result<(), SessionError> {
        let question = graph.node(node).ok_or(GraphError::UnknownNode(node))?.question.clone();
        let answer = self.ask_witness(&question)?;
        graph.record_answer(node, answer.clone())?;
        self.emit(|seq| TraceEvent::Answer { seq, node, answer });
        Ok(())
    }

    fn ensure_answered(&mut self, graph: &mut SoTGraph, node: NodeId) -> Result<(), SessionError> {
        if graph.node(node).map(|n| n.status) == Some(NodeStatus::Open) {
            self.answer_node(graph, node)?;
        }
        Ok(())
    }

    fn check_decision(
        graph: &SoTGraph,
        layer: LayerId,
        budget: &BudgetState,
        d: &SupervisorDecision,
    ) -> Result<(), AgentError> {
        let node = graph.node(d.target).expect("parser checked existence");
        if node.layer != layer {
            return Err(AgentError::IllegalTarget(format!("{} belongs to {}, not {layer}", d.target, node.layer)));
        }
        let grows = match d.op {
            EdgeOp::Proceed => 1,
            EdgeOp::Split => 2,
            EdgeOp::Refine | EdgeOp::Stop => 0,
        };
        if grows > 0 {
            let depth = graph.depth(d.target).unwrap_or(0);
            if depth + 1 > budget.max_depth {
                return Err(AgentError::IllegalOperation(format!(
                    "{} under {} would exceed maximum depth {}",
                    d.op, d.target, budget.max_depth
                )));
            }
            if graph.layer_nodes(layer).len() + grows > budget.max_nodes_per_layer {
                return Err(AgentError::IllegalOperation(format!(
                    "{} would exceed the node budget of {}",
                    d.op, budget.max_nodes_per_layer
                )));
            }
        }
        Ok(())
    }

    fn supervise(&mut self, graph: &SoTGraph, layer: LayerId, budget: &BudgetState) -> Result<Supervised, SessionError> {
        let root = graph.root(layer).ok_or(GraphError::MissingRoot(layer))?;
        let messages = build_supervisor_prompt(graph, layer, budget);
        let mut hint = None;
        let outcome = self.call_parsed(Role::Supervisor, messages, |reply| {
            let decision = parse_supervisor_decision(reply, graph);
            if let Err(AgentError::IllegalOperation(_)) = decision {
                hint = supervisor_target_hint(reply);
            }
            let decision = decision?;
            Self::check_decision(graph, layer, budget, &decision).inspect_err(|e| {
                if matches!(e, AgentError::IllegalOperation(_)) {
                    hint = Some(decision.target);
                }
            })?;
            Ok(decision)
        })?;
        Ok(match outcome {
            Ok(decision) => Supervised::Decision(decision),
            Err((err, _)) => {
                let target = hint
                    .filter(|t| graph.node(*t).is_some_and(|n| n.layer == layer && !n.is_frozen()))
                    .unwrap_or(root);
                Supervised::Forced { target, reason: format!("supervisor: {} after {} attempts: {err}", err.kind(), self.retry_limit) }
            }
        })
    }

    fn force_stop(&mut self, graph: &mut SoTGraph, layer: LayerId, target: NodeId, reason: String) -> Result<(), SessionError> {
        graph.mark_stopped(target, self.turn)?;
        let turn = self.turn;
        self.emit(|seq| TraceEvent::ForcedStop { seq, turn, layer, target, reason });
        Ok(())
    }

    fn ask_detective(
        &mut self,
        graph: &SoTGraph,
        target: NodeId,
        goal: &str,
        mode: DetectiveMode,
    ) -> Result<Result<DetectiveReply, String>, SessionError> {
        let context = graph.context_path(target)?;
        let messages = build_detective_prompt(goal, &context, mode).map_err(|e| SessionError::ConfigInvalid(e.to_string()))?;
        let outcome = self.call_parsed(Role::Detective, messages, |reply| parse_detective_output(reply, mode))?;
        Ok(outcome.map_err(|(err, _)| format!("detective: {} after {} attempts: {err}", err.kind(), self.retry_limit)))
    }

    fn log_operation(&mut self, layer: LayerId, op: EdgeOp, target: NodeId, questions: Vec<String>, created: Vec<NodeId>) {
        let turn = self.turn;
        self.emit(|seq| TraceEvent::Operation { seq, turn, layer, op, target, questions, created });
    }

    fn execute(&mut self, graph: &mut SoTGraph, layer: LayerId, budget: &BudgetState, d: SupervisorDecision) -> Result<(), SessionError> {
        let SupervisorDecision { op, target, goal } = d;
        match op {
            EdgeOp::Stop => {
                graph.mark_stopped(target, self.turn)?;
                self.log_operation(layer, op, target, Vec::new(), Vec::new());
            }
            EdgeOp::Proceed => {
                self.ensure_answered(graph, target)?;
                match self.ask_detective(graph, target, &goal, DetectiveMode::Proceed)? {
                    Ok(DetectiveReply::Proceed(out)) => {
                        let question = out.selected_question().to_string();
                        let child = graph.add_child(target, question.clone(), self.turn)?;
                        self.log_operation(layer, op, target, vec![question], vec![child]);
                        self.answer_node(graph, child)?;
                    }
                    Ok(_) => unreachable!("proceed mode yields candidates"),
                    Err(reason) => self.force_stop(graph, layer, target, reason)?,
                }
            }
            EdgeOp::Refine => match self.ask_detective(graph, target, &goal, DetectiveMode::Refine)? {
                Ok(DetectiveReply::Refine(question)) => {
                    graph.refine_node(target, question.clone(), self.turn)?;
                    self.log_operation(layer, op, target, vec![question], Vec::new());
                    self.answer_node(graph, target)?;
                }
                Ok(_) => unreachable!("refine mode yields one question"),
                Err(reason) => self.force_stop(graph, layer, target, reason)?,
            },
            EdgeOp::Split => {
                self.ensure_answered(graph, target)?;
                let room = budget.max_nodes_per_layer.saturating_sub(graph.layer_nodes(layer).len());
                let max_branches = graph.max_branches().min(room).max(2);
                match self.ask_detective(graph, target, &goal, DetectiveMode::Split { max_branches })? {
                    Ok(DetectiveReply::Split(branches)) => {
                        let created = graph.split_node(target, &branches, self.turn)?;
                        self.log_operation(layer, op, target, branches, created);
                    }
                    Ok(_) => unreachable!("split mode yields branches"),
                    Err(reason) => self.force_stop(graph, layer, target, reason)?,
                }
            }
        }
        Ok(())
    }

    /// Explores one layer until its root is stopped or the budget runs out.
    /// Returns the final budget state.
    pub fn run_layer(&mut self, graph: &mut SoTGraph, layer: LayerId, budget_template: &BudgetState) -> Result<BudgetState, SessionError> {
        let root = graph.root(layer).ok_or(GraphError::MissingRoot(layer))?;
        let mut budget = budget_template.fresh();
        self.emit(|seq| TraceEvent::LayerStarted { seq, layer });
        self.ensure_answered(graph, root)?;
        loop {
            if graph.node(root).is_some_and(|n| n.is_frozen()) {
                break;
            }
            if let Some(reason) = budget.exhausted(graph, layer) {
                self.emit(|seq| TraceEvent::BudgetExhausted { seq, layer, reason });
                break;
            }
            let supervised = self.supervise(graph, layer, &budget)?;
            self.turn += 1;
            budget.turns_used += 1;
            match supervised {
                Supervised::Decision(d) => {
                    let turn = self.turn;
                    let (op, target, goal) = (d.op, d.target, d.goal.clone());
                    self.emit(|seq| TraceEvent::Decision { seq, turn, op, target, goal });
                    self.execute(graph, layer, &budget, d)?;
                }
                Supervised::Forced { target, reason } => self.force_stop(graph, layer, target, reason)?,
            }
        }
        let turns_used = budget.turns_used;
        self.emit(|seq| TraceEvent::LayerFinished { seq, layer, turns_used });
        Ok(budget)
    }

    /// Puts every configured anomaly question to the Witness, in order.
    pub fn run_anomaly_layer(&mut self, questions: &[String]) -> Result<Vec<(String, String)>, SessionError> {
        if questions.is_empty() {
            return Err(SessionError::ConfigInvalid(
                "anomaly_questions must not be empty: the anomaly classification layer always runs".into(),
            ));
        }
        self.emit(|seq| TraceEvent::LayerStarted { seq, layer: LayerId::Criminal });
        let mut qa = Vec::with_capacity(questions.len());
        for (index, question) in questions.iter().enumerate() {
            let answer = self.ask_witness(question)?;
            let q = question.clone();
            let a = answer.clone();
            self.emit(|seq| TraceEvent::AnomalyAnswer { seq, index, question: q, answer: a });
            qa.push((question.clone(), answer));
        }
        let turns_used = 0;
        self.emit(|seq| TraceEvent::LayerFinished { seq, layer: LayerId::Criminal, turns_used });
        Ok(qa)
    }

    /// Final verdict from the exploration evidence plus the anomaly answers.
    pub fn finalize(&mut self, graph: &SoTGraph, anomaly_qa: &[(String, String)], labels: &LabelSet) -> Result<Classification, SessionError> {
        if anomaly_qa.is_empty() {
            return Err(SessionError::ConfigInvalid("finalize needs anomaly-layer answers".into()));
        }
        let evidence = agents::collect_layer_evidence(graph);
        let messages = agents::build_classification_prompt(&evidence, anomaly_qa, labels);
        self.classify(Role::Supervisor, messages, labels)
    }
}

pub fn seed_questions(layers: &[LayerId]) -> BTreeMap<LayerId, String> {
    layers.iter().map(|l| (*l, l.seed_question().to_string())).collect()
}

/// Runs a full CoAT session for one video.
pub fn run_session(video: &MediaRef, config: &SessionConfig, backends: &Backends) -> Result<SessionResult, SessionError> {
    config.validate()?;
    let layers = config.variant.layers();
    let mut graph = SoTGraph::with_max_branches(&layers, &seed_questions(&layers), config.max_branches)?;
    let mut session = Session::new(video.clone(), backends, config.retry_limit);

    let (video_id, variant, max_branches) = (video.video_id.clone(), config.variant.to_string(), config.max_branches);
    let layer_list = layers.clone();
    session.emit(|seq| TraceEvent::SessionStarted {
        seq,
        video_id,
        strategy: "coat".into(),
        variant: Some(variant),
        layers: layer_list,
        max_branches,
    });
    for layer in &layers {
        let root = graph.root(*layer).expect("seeded");
        let question = graph.node(root).expect("seeded").question.clone();
        let layer = *layer;
        session.emit(|seq| TraceEvent::Seeded { seq, layer, root, question });
    }

    for layer in &layers {
        session.run_layer(&mut graph, *layer, &config.budgets)?;
    }
    let anomaly_qa = session.run_anomaly_layer(&config.anomaly_questions)?;
    let classification = session.finalize(&graph, &anomaly_qa, &config.labels)?;

    Ok(SessionResult {
        video_id: video.video_id.clone(),
        strategy: "coat".into(),
        variant: Some(config.variant.to_string()),
        graph: Some(graph),
        anomaly_qa,
        classification,
        trace: session.into_trace(),
        version: SESSION_FORMAT_VERSION,
    })
}

/// Rebuilds the reasoning graph from a trace's seed, operation and answer
/// events alone.
pub fn replay_graph(trace: &[TraceEvent]) -> Result<SoTGraph, GraphError> {
    let (layers, max_branches) = trace
        .iter()
        .find_map(|e| match e {
            TraceEvent::SessionStarted { layers, max_branches, .. } => Some((layers.clone(), *max_branches)),
            _ => None,
        })
        .ok_or_else(|| GraphError::CorruptTrace("no session_started event".into()))?;
    let seeds: BTreeMap<LayerId, String> = trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Seeded { layer, question, .. } => Some((*layer, question.clone())),
            _ => None,
        })
        .collect();
    let mut graph = SoTGraph::with_max_branches(&layers, &seeds, max_branches)?;
    for event in trace {
        match event {
            TraceEvent::Operation { turn, op, target, questions, created, .. } => match op {
                EdgeOp::Proceed => {
                    let question = questions.first().ok_or_else(|| GraphError::CorruptTrace("proceed without question".into()))?;
                    let id = graph.add_child(*target, question.clone(), *turn)?;
                    if created.as_slice() != [id] {
                        return Err(GraphError::CorruptTrace(format!("proceed created {id}, trace says {created:?}")));
                    }
                }
                EdgeOp::Refine => {
                    let question = questions.first().ok_or_else(|| GraphError::CorruptTrace("refine without question".into()))?;
                    graph.refine_node(*target, question.clone(), *turn)?;
                }
                EdgeOp::Split => {
                    let ids = graph.split_node(*target, questions, *turn)?;
                    if &ids != created {
                        return Err(GraphError::CorruptTrace("split ids diverge from trace".into()));
                    }
                }
                EdgeOp::Stop => graph.mark_stopped(*target, *turn)?,
            },
            TraceEvent::ForcedStop { turn, target, .. } => graph.mark_stopped(*target, *turn)?,
            TraceEvent::Answer { node, answer, .. } => graph.record_answer(*node, answer.clone())?,
            _ => {}
        }
    }
    Ok(graph)
}

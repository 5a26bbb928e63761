//! State-of-Thoughts reasoning graph.
//!
//! A forest of question/answer nodes, one tree per exploration layer. Parent
//! links carry the Proceed/Split edges; Refine and Stop are in-place events
//! and only show up in the event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::layer::LayerId;

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_BRANCHES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('n')
            .ok_or_else(|| format!("node id `{s}` must start with `n`"))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("node id `{s}` is not of the form n<k>"));
        }
        digits
            .parse::<u64>()
            .map(NodeId)
            .map_err(|e| format!("node id `{s}`: {e}"))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeOp {
    Proceed,
    Refine,
    Split,
    Stop,
}

impl EdgeOp {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeOp::Proceed => "proceed",
            EdgeOp::Refine => "refine",
            EdgeOp::Split => "split",
            EdgeOp::Stop => "stop",
        }
    }
}

impl fmt::Display for EdgeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proceed" => Ok(EdgeOp::Proceed),
            "refine" => Ok(EdgeOp::Refine),
            "split" => Ok(EdgeOp::Split),
            "stop" => Ok(EdgeOp::Stop),
            other => Err(format!("unknown operation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Open,
    Answered,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtNode {
    pub id: NodeId,
    pub layer: LayerId,
    pub question: String,
    pub answer: Option<String>,
    pub status: NodeStatus,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub question_history: Vec<String>,
    pub turn: u32,
}

impl ThoughtNode {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_frozen(&self) -> bool {
        self.status == NodeStatus::Stopped
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEvent {
    pub turn: u32,
    pub node: NodeId,
    pub op: EdgeOp,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("layer {0} listed more than once")]
    DuplicateLayer(LayerId),
    #[error("no root question for layer {0}")]
    MissingRoot(LayerId),
    #[error("graph needs at least one layer")]
    NoLayers,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is stopped")]
    NodeFrozen(NodeId),
    #[error("split needs at least 2 branches, got {0}")]
    TooFewBranches(usize),
    #[error("split allows at most {max} branches, got {got}")]
    TooManyBranches { got: usize, max: usize },
    #[error("node {0} is already answered")]
    AlreadyAnswered(NodeId),
    #[error("empty answer for node {0}")]
    EmptyAnswer(NodeId),
    #[error("turn {turn} is earlier than the last logged turn {last}")]
    TurnRegression { turn: u32, last: u32 },
    #[error("corrupt trace: {0}")]
    CorruptTrace(String),
}

/// The reasoning forest plus its operation log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoTGraph {
    nodes: BTreeMap<NodeId, ThoughtNode>,
    roots: BTreeMap<LayerId, NodeId>,
    next_id: u64,
    events: Vec<GraphEvent>,
    max_branches: usize,
}

impl SoTGraph {
    pub fn new(layers: &[LayerId], root_questions: &BTreeMap<LayerId, String>) -> Result<Self, GraphError> {
        Self::with_max_branches(layers, root_questions, DEFAULT_MAX_BRANCHES)
    }

    pub fn with_max_branches(
        layers: &[LayerId],
        root_questions: &BTreeMap<LayerId, String>,
        max_branches: usize,
    ) -> Result<Self, GraphError> {
        if layers.is_empty() {
            return Err(GraphError::NoLayers);
        }
        let mut seen = BTreeSet::new();
        for layer in layers {
            if !seen.insert(*layer) {
                return Err(GraphError::DuplicateLayer(*layer));
            }
            if !root_questions.contains_key(layer) {
                return Err(GraphError::MissingRoot(*layer));
            }
        }
        let mut graph = SoTGraph {
            nodes: BTreeMap::new(),
            roots: BTreeMap::new(),
            next_id: 1,
            events: Vec::new(),
            max_branches,
        };
        for layer in layers {
            let id = graph.alloc(*layer, root_questions[layer].clone(), None, 0);
            graph.roots.insert(*layer, id);
        }
        Ok(graph)
    }

    fn alloc(&mut self, layer: LayerId, question: String, parent: Option<NodeId>, turn: u32) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            ThoughtNode {
                id,
                layer,
                question,
                answer: None,
                status: NodeStatus::Open,
                parent,
                children: Vec::new(),
                question_history: Vec::new(),
                turn,
            },
        );
        id
    }

    fn check_turn(&self, turn: u32) -> Result<(), GraphError> {
        match self.events.last() {
            Some(last) if turn < last.turn => Err(GraphError::TurnRegression { turn, last: last.turn }),
            _ => Ok(()),
        }
    }

    fn open_node(&self, id: NodeId) -> Result<&ThoughtNode, GraphError> {
        let node = self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))?;
        if node.is_frozen() {
            return Err(GraphError::NodeFrozen(id));
        }
        Ok(node)
    }

    pub fn add_child(&mut self, parent: NodeId, question: impl Into<String>, turn: u32) -> Result<NodeId, GraphError> {
        let layer = self.open_node(parent)?.layer;
        self.check_turn(turn)?;
        let id = self.alloc(layer, question.into(), Some(parent), turn);
        self.node_mut(parent).children.push(id);
        self.events.push(GraphEvent { turn, node: id, op: EdgeOp::Proceed });
        Ok(id)
    }

    pub fn refine_node(&mut self, id: NodeId, new_question: impl Into<String>, turn: u32) -> Result<(), GraphError> {
        self.open_node(id)?;
        self.check_turn(turn)?;
        let node = self.node_mut(id);
        let old = std::mem::replace(&mut node.question, new_question.into());
        node.question_history.push(old);
        node.answer = None;
        node.status = NodeStatus::Open;
        self.events.push(GraphEvent { turn, node: id, op: EdgeOp::Refine });
        Ok(())
    }

    pub fn split_node(&mut self, id: NodeId, branch_questions: &[String], turn: u32) -> Result<Vec<NodeId>, GraphError> {
        let layer = self.open_node(id)?.layer;
        if branch_questions.len() < 2 {
            return Err(GraphError::TooFewBranches(branch_questions.len()));
        }
        if branch_questions.len() > self.max_branches {
            return Err(GraphError::TooManyBranches {
                got: branch_questions.len(),
                max: self.max_branches,
            });
        }
        self.check_turn(turn)?;
        let mut created = Vec::with_capacity(branch_questions.len());
        for question in branch_questions {
            let child = self.alloc(layer, question.clone(), Some(id), turn);
            self.node_mut(id).children.push(child);
            self.events.push(GraphEvent { turn, node: child, op: EdgeOp::Split });
            created.push(child);
        }
        Ok(created)
    }

    /// Idempotent; only the first transition is logged.
    pub fn mark_stopped(&mut self, id: NodeId, turn: u32) -> Result<(), GraphError> {
        let node = self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))?;
        if node.is_frozen() {
            return Ok(());
        }
        self.check_turn(turn)?;
        self.node_mut(id).status = NodeStatus::Stopped;
        self.events.push(GraphEvent { turn, node: id, op: EdgeOp::Stop });
        Ok(())
    }

    pub fn record_answer(&mut self, id: NodeId, answer: impl Into<String>) -> Result<(), GraphError> {
        let node = self.open_node(id)?;
        if node.status == NodeStatus::Answered {
            return Err(GraphError::AlreadyAnswered(id));
        }
        let answer = answer.into();
        if answer.trim().is_empty() {
            return Err(GraphError::EmptyAnswer(id));
        }
        let node = self.node_mut(id);
        node.answer = Some(answer);
        node.status = NodeStatus::Answered;
        Ok(())
    }

    /// Question/answer pairs from the layer root down to `id`, root first.
    pub fn context_path(&self, id: NodeId) -> Result<Vec<(String, Option<String>)>, GraphError> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(current) = cursor {
            let node = self.nodes.get(&current).ok_or(GraphError::UnknownNode(current))?;
            path.push((node.question.clone(), node.answer.clone()));
            cursor = node.parent;
        }
        path.reverse();
        Ok(path)
    }

    /// Node ids from the layer root down to `id`.
    pub fn ancestry(&self, id: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let mut ids = Vec::new();
        let mut cursor = Some(id);
        while let Some(current) = cursor {
            let node = self.nodes.get(&current).ok_or(GraphError::UnknownNode(current))?;
            ids.push(current);
            cursor = node.parent;
        }
        ids.reverse();
        Ok(ids)
    }

    /// Root has depth 1.
    pub fn depth(&self, id: NodeId) -> Result<usize, GraphError> {
        self.ancestry(id).map(|a| a.len())
    }

    /// Pre-order walk of one layer's tree.
    pub fn layer_nodes(&self, layer: LayerId) -> Vec<&ThoughtNode> {
        let mut out = Vec::new();
        let Some(root) = self.roots.get(&layer) else {
            return out;
        };
        let mut stack = vec![*root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[&id];
            out.push(node);
            stack.extend(node.children.iter().rev().copied());
        }
        out
    }

    pub fn tree_depth(&self, layer: LayerId) -> usize {
        self.layer_nodes(layer)
            .iter()
            .map(|n| self.depth(n.id).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn node(&self, id: NodeId) -> Option<&ThoughtNode> {
        self.nodes.get(&id)
    }

    fn node_mut(&mut self, id: NodeId) -> &mut ThoughtNode {
        self.nodes.get_mut(&id).expect("node checked by caller")
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ThoughtNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self, layer: LayerId) -> Option<NodeId> {
        self.roots.get(&layer).copied()
    }

    pub fn roots(&self) -> &BTreeMap<LayerId, NodeId> {
        &self.roots
    }

    pub fn layers(&self) -> Vec<LayerId> {
        self.roots.keys().copied().collect()
    }

    pub fn events(&self) -> &[GraphEvent] {
        &self.events
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn max_branches(&self) -> usize {
        self.max_branches
    }

    /// Full structural check; returns the first violated invariant.
    pub fn validate(&self) -> Result<(), String> {
        for (layer, root) in &self.roots {
            let node = self.nodes.get(root).ok_or(format!("root {root} of {layer} missing"))?;
            if node.parent.is_some() || node.layer != *layer {
                return Err(format!("root {root} is not a root of {layer}"));
            }
        }
        let root_ids: BTreeSet<NodeId> = self.roots.values().copied().collect();
        for (id, node) in &self.nodes {
            if *id != node.id {
                return Err(format!("node keyed {id} carries id {}", node.id));
            }
            if id.0 == 0 || id.0 >= self.next_id {
                return Err(format!("node {id} outside allocated range"));
            }
            match node.parent {
                None => {
                    if !root_ids.contains(id) {
                        return Err(format!("parentless node {id} is not a layer root"));
                    }
                }
                Some(parent) => {
                    let p = self.nodes.get(&parent).ok_or(format!("parent {parent} of {id} missing"))?;
                    if p.children.iter().filter(|c| **c == *id).count() != 1 {
                        return Err(format!("{id} not listed exactly once under {parent}"));
                    }
                    if p.layer != node.layer {
                        return Err(format!("{id} crosses layers"));
                    }
                }
            }
            for child in &node.children {
                let c = self.nodes.get(child).ok_or(format!("child {child} of {id} missing"))?;
                if c.parent != Some(*id) {
                    return Err(format!("child {child} does not point back to {id}"));
                }
            }
            match node.status {
                NodeStatus::Answered => {
                    if node.answer.as_deref().is_none_or(|a| a.trim().is_empty()) {
                        return Err(format!("{id} answered without an answer"));
                    }
                }
                NodeStatus::Open => {
                    if node.answer.is_some() {
                        return Err(format!("open node {id} carries an answer"));
                    }
                }
                NodeStatus::Stopped => {}
            }
            let refines = self
                .events
                .iter()
                .filter(|e| e.node == *id && e.op == EdgeOp::Refine)
                .count();
            if refines != node.question_history.len() {
                return Err(format!("{id} has {} history entries but {refines} refine events", node.question_history.len()));
            }
        }
        // Every node reachable from exactly one root means forest + acyclic.
        let mut seen = BTreeSet::new();
        for root in self.roots.values() {
            let mut stack = vec![*root];
            while let Some(id) = stack.pop() {
                if !seen.insert(id) {
                    return Err(format!("node {id} reached twice"));
                }
                stack.extend(self.nodes[&id].children.iter().copied());
            }
        }
        if seen.len() != self.nodes.len() {
            return Err("unreachable nodes present".into());
        }
        for pair in self.events.windows(2) {
            if pair[1].turn < pair[0].turn {
                return Err("event turns decrease".into());
            }
        }
        for event in &self.events {
            let node = self.nodes.get(&event.node).ok_or(format!("event on missing node {}", event.node))?;
            if matches!(event.op, EdgeOp::Proceed | EdgeOp::Split) && node.parent.is_none() {
                return Err(format!("edge event into root {}", event.node));
            }
        }
        for node in self.nodes.values().filter(|n| n.parent.is_some()) {
            let incoming = self
                .events
                .iter()
                .filter(|e| e.node == node.id && matches!(e.op, EdgeOp::Proceed | EdgeOp::Split))
                .count();
            if incoming != 1 {
                return Err(format!("{} has {incoming} incoming edges", node.id));
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&GraphDoc::from(self)).expect("graph document always serializes")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, GraphError> {
        let doc: GraphDoc = serde_json::from_slice(bytes).map_err(|e| GraphError::CorruptTrace(e.to_string()))?;
        SoTGraph::try_from(doc)
    }
}

/// Stable JSON form of a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub version: u32,
    pub nodes: BTreeMap<NodeId, ThoughtNode>,
    pub roots: BTreeMap<LayerId, NodeId>,
    pub events: Vec<GraphEvent>,
    pub next_id: u64,
    pub max_branches: usize,
}

impl From<&SoTGraph> for GraphDoc {
    fn from(g: &SoTGraph) -> Self {
        GraphDoc {
            version: GRAPH_FORMAT_VERSION,
            nodes: g.nodes.clone(),
            roots: g.roots.clone(),
            events: g.events.clone(),
            next_id: g.next_id,
            max_branches: g.max_branches,
        }
    }
}

impl TryFrom<GraphDoc> for SoTGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, Self::Error> {
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::CorruptTrace(format!("unsupported version {}", doc.version)));
        }
        let graph = SoTGraph {
            nodes: doc.nodes,
            roots: doc.roots,
            next_id: doc.next_id,
            events: doc.events,
            max_branches: doc.max_branches,
        };
        graph.validate().map_err(GraphError::CorruptTrace)?;
        Ok(graph)
    }
}

impl Serialize for SoTGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SoTGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(deserializer)?;
        SoTGraph::try_from(doc).map_err(serde::de::Error::custom)
    }
}

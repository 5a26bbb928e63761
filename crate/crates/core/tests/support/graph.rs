//! Random operation sequences for the reasoning forest and an invariant
//! checker written independently of `SoTGraph::validate`.

use std::collections::{BTreeMap, BTreeSet};

use coat_core::graph::{GraphError, NodeId, NodeStatus, SoTGraph, ThoughtNode};
use coat_core::layer::LayerId;
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Step {
    Proceed(usize),
    Refine(usize),
    Split(usize, usize),
    Stop(usize),
    Answer(usize),
}

pub fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        3 => any::<usize>().prop_map(Step::Proceed),
        1 => any::<usize>().prop_map(Step::Refine),
        // Branch counts outside 2..=3 must be rejected without effect.
        2 => (any::<usize>(), 0usize..6).prop_map(|(n, k)| Step::Split(n, k)),
        2 => any::<usize>().prop_map(Step::Stop),
        2 => any::<usize>().prop_map(Step::Answer),
    ]
}

pub fn layers() -> impl Strategy<Value = Vec<LayerId>> {
    proptest::sample::subsequence(LayerId::EXPLORATION.to_vec(), 1..=4)
}

pub fn pick(g: &SoTGraph, n: usize) -> NodeId {
    let ids: Vec<NodeId> = g.nodes().map(|node| node.id).collect();
    ids[n % ids.len()]
}

/// Structural invariants, checked from first principles.
pub fn check_forest(g: &SoTGraph) -> Result<(), String> {
    let nodes: BTreeMap<NodeId, &ThoughtNode> = g.nodes().map(|n| (n.id, n)).collect();
    if nodes.len() != g.len() {
        return Err("duplicate ids".into());
    }
    for (layer, root) in g.roots() {
        let r = nodes.get(root).ok_or("missing root")?;
        if r.parent.is_some() || r.layer != *layer {
            return Err(format!("bad root {root}"));
        }
    }
    let mut reached = BTreeSet::new();
    for node in nodes.values() {
        if node.id.0 >= g.next_id() {
            return Err(format!("{} not below next_id", node.id));
        }
        match node.parent {
            None => {
                if g.roots().get(&node.layer) != Some(&node.id) {
                    return Err(format!("{} is parentless but not a root", node.id));
                }
            }
            Some(p) => {
                let parent = nodes.get(&p).ok_or(format!("{} has dangling parent", node.id))?;
                if parent.layer != node.layer {
                    return Err(format!("{} crosses layers", node.id));
                }
                if parent.children.iter().filter(|c| **c == node.id).count() != 1 {
                    return Err(format!("{p} does not list child {} exactly once", node.id));
                }
            }
        }
        for c in &node.children {
            if nodes.get(c).and_then(|c| c.parent) != Some(node.id) {
                return Err(format!("child {c} of {} does not point back", node.id));
            }
        }
        // Walking up must reach the layer root in fewer than |V| steps.
        let mut cur = node.id;
        let mut steps = 0;
        while let Some(p) = nodes[&cur].parent {
            cur = p;
            steps += 1;
            if steps > nodes.len() {
                return Err(format!("cycle above {}", node.id));
            }
        }
        if g.roots().get(&node.layer) != Some(&cur) {
            return Err(format!("{} does not descend from its layer root", node.id));
        }
        reached.insert(node.id);
        match node.status {
            NodeStatus::Answered if node.answer.is_none() => return Err(format!("{} answered without answer", node.id)),
            NodeStatus::Open if node.answer.is_some() => return Err(format!("{} open with an answer", node.id)),
            _ => {}
        }
    }
    if reached.len() != nodes.len() {
        return Err("unreachable nodes".into());
    }
    let turns: Vec<u32> = g.events().iter().map(|e| e.turn).collect();
    if turns.windows(2).any(|w| w[0] > w[1]) {
        return Err("event turns decrease".into());
    }
    Ok(())
}

/// Invariants relating the graph before and after one step.
pub fn check_transition(before: &SoTGraph, after: &SoTGraph) -> Result<(), String> {
    for old in before.nodes() {
        let new = after.node(old.id).ok_or(format!("{} vanished", old.id))?;
        if old.is_frozen() && new != old {
            return Err(format!("stopped node {} changed", old.id));
        }
        if !new.question_history.starts_with(&old.question_history) {
            return Err(format!("history of {} rewritten", old.id));
        }
        match new.question_history.len() - old.question_history.len() {
            0 if new.question != old.question => return Err(format!("{} question changed without history", old.id)),
            0 => {}
            1 if new.question_history.last() == Some(&old.question) => {}
            _ => return Err(format!("history of {} grew wrongly", old.id)),
        }
        if !new.children.starts_with(&old.children) {
            return Err(format!("children of {} reordered", old.id));
        }
    }
    if !after.events().starts_with(before.events()) {
        return Err("event log rewritten".into());
    }
    Ok(())
}

pub fn apply(g: &mut SoTGraph, step: &Step, turn: u32) -> Result<(), GraphError> {
    match *step {
        Step::Proceed(n) => g.add_child(pick(g, n), format!("follow-up at turn {turn}"), turn).map(drop),
        Step::Refine(n) => g.refine_node(pick(g, n), format!("refined at turn {turn}"), turn),
        Step::Split(n, k) => {
            let qs: Vec<String> = (0..k).map(|i| format!("branch {i} at turn {turn}")).collect();
            g.split_node(pick(g, n), &qs, turn).map(drop)
        }
        Step::Stop(n) => g.mark_stopped(pick(g, n), turn),
        Step::Answer(n) => g.record_answer(pick(g, n), format!("answer at turn {turn}")),
    }
}

/// Applies `steps` to a fresh forest over `layers`, checking every
/// invariant after each step and the serialization round trip at the end.
pub fn check_sequence(layers: &[LayerId], steps: &[Step]) -> Result<(), String> {
    let roots: BTreeMap<LayerId, String> = layers.iter().map(|l| (*l, l.seed_question().to_string())).collect();
    let mut g = SoTGraph::new(layers, &roots).map_err(|e| e.to_string())?;
    for (i, s) in steps.iter().enumerate() {
        let before = g.clone();
        let target = match s {
            Step::Proceed(n) | Step::Refine(n) | Step::Split(n, _) | Step::Stop(n) | Step::Answer(n) => pick(&g, *n),
        };
        let was_frozen = g.node(target).ok_or("picked a missing node")?.is_frozen();
        let outcome = apply(&mut g, s, i as u32 + 1);
        match (&outcome, s) {
            (Err(_), _) if g != before => return Err(format!("step {i}: failed {s:?} mutated the graph")),
            (Ok(()), Step::Stop(_)) | (Err(_), _) => {}
            (Ok(()), _) if was_frozen => return Err(format!("step {i}: {s:?} on a stopped node succeeded")),
            (Ok(()), _) => {}
        }
        if was_frozen && !matches!(s, Step::Stop(_)) && outcome != Err(GraphError::NodeFrozen(target)) {
            return Err(format!("step {i}: {s:?} on stopped {target} gave {outcome:?}"));
        }
        if let Step::Split(_, k) = s {
            if !was_frozen && !(2..=3).contains(k) && outcome.is_ok() {
                return Err(format!("step {i}: split into {k} accepted"));
            }
        }
        check_forest(&g).map_err(|e| format!("step {i}: {e}"))?;
        check_transition(&before, &g).map_err(|e| format!("step {i}: {e}"))?;
    }
    g.validate().map_err(|e| format!("validate: {e}"))?;
    let bytes = g.serialize();
    let back = SoTGraph::deserialize(&bytes).map_err(|e| e.to_string())?;
    if back != g || back.serialize() != bytes {
        return Err("serialization round trip changed the graph".into());
    }
    Ok(())
}

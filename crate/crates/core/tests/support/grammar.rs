//! Generators and a malformed-reply corpus for the three agent grammars.

use std::collections::BTreeMap;

use coat_core::agents::{
    parse_classification, parse_detective_output, parse_supervisor_decision, render_branches, render_classification,
    render_detective_output, render_supervisor_decision, AgentError, Classification, DetectiveMode, DetectiveOutput,
    DetectiveReply, SupervisorDecision,
};
use coat_core::graph::{EdgeOp, NodeId, SoTGraph};
use coat_core::labels::LabelSet;
use coat_core::layer::LayerId;
use proptest::prelude::*;

/// Root `n1` (answered, with children), open leaves `n2`..`n5`, stopped `n6`.
pub fn fixture_graph() -> SoTGraph {
    let roots: BTreeMap<LayerId, String> = [(LayerId::Scenario, "Where is this?".to_string())].into();
    let mut g = SoTGraph::new(&[LayerId::Scenario], &roots).unwrap();
    g.record_answer(NodeId(1), "A shop.").unwrap();
    for i in 2..=6 {
        g.add_child(NodeId(1), format!("Question {i}?"), 1).unwrap();
    }
    g.mark_stopped(NodeId(6), 2).unwrap();
    g
}

/// One-line free text: no surrounding whitespace, never empty.
pub fn text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.?'():-]{0,58}[A-Za-z0-9?.)]".prop_map(|s| s.to_string())
}

pub fn decision() -> impl Strategy<Value = SupervisorDecision> {
    (0usize..4, 1u64..=5, text(), any::<bool>()).prop_map(|(op, target, goal, empty_goal)| {
        let op = [EdgeOp::Proceed, EdgeOp::Refine, EdgeOp::Split, EdgeOp::Stop][op];
        // n1 has children, so it can be refined only in another graph.
        let target = if op == EdgeOp::Refine && target == 1 { NodeId(2) } else { NodeId(target) };
        let goal = if op == EdgeOp::Stop && empty_goal { String::new() } else { goal };
        SupervisorDecision { op, target, goal }
    })
}

fn folded_distinct(qs: &[String]) -> bool {
    let folded: std::collections::BTreeSet<String> =
        qs.iter().map(|q| q.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
    folded.len() == qs.len()
}

pub fn detective_output() -> impl Strategy<Value = DetectiveOutput> {
    (prop::collection::vec(text(), 3), 0usize..3, prop::option::of(text()))
        .prop_filter("candidates distinct after whitespace folding", |(qs, _, _)| folded_distinct(qs))
        .prop_map(|(qs, selected, rationale)| DetectiveOutput {
            candidates: [qs[0].clone(), qs[1].clone(), qs[2].clone()],
            selected,
            rationale: rationale.unwrap_or_default(),
        })
}

pub fn branches() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(text(), 2..=3).prop_filter("distinct after folding", |v| folded_distinct(v))
}

pub fn classification(labels: &LabelSet) -> impl Strategy<Value = Classification> {
    let all: Vec<String> = labels.all().iter().map(|s| s.to_string()).collect();
    let labels = labels.clone();
    (prop::sample::select(all), prop::option::of(text())).prop_map(move |(ac, ev)| Classification {
        ad: labels.ad_of(&ac),
        ac,
        evidence_summary: ev.unwrap_or_default(),
    })
}

pub fn supervisor_round_trip(d: &SupervisorDecision, g: &SoTGraph) -> Result<(), String> {
    let text = render_supervisor_decision(d);
    match parse_supervisor_decision(&text, g) {
        Ok(back) if &back == d => Ok(()),
        other => Err(format!("{text:?} -> {other:?}")),
    }
}

pub fn detective_round_trip(out: &DetectiveOutput) -> Result<(), String> {
    let text = render_detective_output(out);
    match parse_detective_output(&text, DetectiveMode::Proceed) {
        Ok(DetectiveReply::Proceed(back)) if &back == out => Ok(()),
        other => Err(format!("{text:?} -> {other:?}")),
    }
}

pub fn branches_round_trip(bs: &[String]) -> Result<(), String> {
    let text = render_branches(bs);
    match parse_detective_output(&text, DetectiveMode::Split { max_branches: 3 }) {
        Ok(DetectiveReply::Split(back)) if back == bs => Ok(()),
        other => Err(format!("{text:?} -> {other:?}")),
    }
}

pub fn classification_round_trip(c: &Classification, labels: &LabelSet) -> Result<(), String> {
    let text = render_classification(c);
    match parse_classification(&text, labels) {
        Ok(back) if &back == c => Ok(()),
        other => Err(format!("{text:?} -> {other:?}")),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Grammar {
    Supervisor,
    Proceed,
    Refine,
    Split,
    Classification,
}

/// Hand-written malformed replies and the error kind each must produce.
pub const MALFORMED: &[(Grammar, &str, &str)] = &[
    (Grammar::Supervisor, "", "MalformedOutput"),
    (Grammar::Supervisor, "I think we should look at the door.", "MalformedOutput"),
    (Grammar::Supervisor, "OPERATION: jump\nTARGET: n2\nGOAL: look", "MalformedOutput"),
    (Grammar::Supervisor, "OPERATION: proceed\nTARGET: node2\nGOAL: look", "MalformedOutput"),
    (Grammar::Supervisor, "OPERATION: proceed\nGOAL: look", "MalformedOutput"),
    (Grammar::Supervisor, "TARGET: n2\nOPERATION: proceed\nGOAL: look", "MalformedOutput"),
    (Grammar::Supervisor, "OPERATION: proceed\nTARGET: n99\nGOAL: look", "IllegalTarget"),
    (Grammar::Supervisor, "OPERATION: split\nTARGET: n6\nGOAL: look", "IllegalTarget"),
    (Grammar::Supervisor, "OPERATION: refine\nTARGET: n1\nGOAL: sharpen", "IllegalOperation"),
    (Grammar::Supervisor, "OPERATION: proceed\nTARGET: n2\nGOAL:", "IllegalOperation"),
    (Grammar::Proceed, "Q1: a?\nQ2: b?\nSELECT: 1", "WrongCardinality"),
    (Grammar::Proceed, "Q1: a?\nQ2: b?\nQ3: c?\nQ4: d?\nSELECT: 1", "WrongCardinality"),
    (Grammar::Proceed, "Q1: a?\nQ2: b?\nQ3: c?\nSELECT: 4", "MalformedOutput"),
    (Grammar::Proceed, "Q1: a?\nQ2: b?\nQ3: c?\nSELECT: two", "MalformedOutput"),
    (Grammar::Proceed, "Q1: a?\nQ2: b?\nQ3: c?", "MalformedOutput"),
    (Grammar::Proceed, "Q1: same?\nQ2: same?\nQ3: c?\nSELECT: 1", "DuplicateCandidates"),
    (Grammar::Proceed, "Q1: a?\nQ2:\nQ3: c?\nSELECT: 2", "MalformedOutput"),
    (Grammar::Proceed, "Ask about the door.", "MalformedOutput"),
    (Grammar::Refine, "QR:", "MalformedOutput"),
    (Grammar::Refine, "The question is fine as it is.", "MalformedOutput"),
    (Grammar::Split, "B1: only one branch?", "WrongCardinality"),
    (Grammar::Split, "B1: a?\nB2: b?\nB3: c?\nB4: d?", "WrongCardinality"),
    (Grammar::Split, "B1: left side?\nB2:  left   side? ", "DuplicateCandidates"),
    (Grammar::Classification, "AD: Abnormal\nAC: Jaywalking\nEVIDENCE: crossing", "UnknownLabel"),
    (Grammar::Classification, "AD: Suspicious\nAC: Robbery\nEVIDENCE: gun", "MalformedOutput"),
    (Grammar::Classification, "AC: Robbery\nEVIDENCE: gun", "MalformedOutput"),
    (Grammar::Classification, "AD: Abnormal\nEVIDENCE: gun", "MalformedOutput"),
    (Grammar::Classification, "AD: Abnormal\nAC:\nEVIDENCE: gun", "MalformedOutput"),
    (Grammar::Classification, "The video looks like a robbery.", "MalformedOutput"),
];

pub fn parse_error_kind(grammar: Grammar, text: &str, graph: &SoTGraph, labels: &LabelSet) -> Option<&'static str> {
    let err: Option<AgentError> = match grammar {
        Grammar::Supervisor => parse_supervisor_decision(text, graph).err(),
        Grammar::Proceed => parse_detective_output(text, DetectiveMode::Proceed).err(),
        Grammar::Refine => parse_detective_output(text, DetectiveMode::Refine).err(),
        Grammar::Split => parse_detective_output(text, DetectiveMode::Split { max_branches: 3 }).err(),
        Grammar::Classification => parse_classification(text, labels).err(),
    };
    err.map(|e| e.kind())
}

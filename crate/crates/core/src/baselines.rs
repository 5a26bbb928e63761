//! Comparison reasoning strategies sharing the CoAT backend contract and
//! trace schema: Direct, CoT, ToT, IoT and LCoT.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{classification_instructions, AgentError, MediaRef, Message, Role, WITNESS_SYSTEM};
use crate::backends::Backends;
use crate::labels::LabelSet;
use crate::orchestrator::{Session, SessionError, SessionResult, TraceEvent, SESSION_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    Cot,
    Tot,
    Iot,
    Lcot,
    Coat,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Cot => "cot",
            Strategy::Tot => "tot",
            Strategy::Iot => "iot",
            Strategy::Lcot => "lcot",
            Strategy::Coat => "coat",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Strategy::Direct),
            "cot" => Ok(Strategy::Cot),
            "tot" => Ok(Strategy::Tot),
            "iot" => Ok(Strategy::Iot),
            "lcot" => Ok(Strategy::Lcot),
            "coat" => Ok(Strategy::Coat),
            other => Err(format!("unknown strategy `{other}` (expected direct|cot|tot|iot|lcot|coat)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_breadth")]
    pub tot_breadth: usize,
    #[serde(default = "default_depth")]
    pub tot_depth: usize,
    #[serde(default = "default_iters")]
    pub iot_max_iters: usize,
    #[serde(default = "default_lcot_layers")]
    pub lcot_layers: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
}

fn default_breadth() -> usize {
    3
}

fn default_depth() -> usize {
    2
}

fn default_iters() -> usize {
    4
}

fn default_lcot_layers() -> usize {
    4
}

fn default_retry_limit() -> u32 {
    3
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            tot_breadth: default_breadth(),
            tot_depth: default_depth(),
            iot_max_iters: default_iters(),
            lcot_layers: default_lcot_layers(),
            retry_limit: default_retry_limit(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::ConfigInvalid(m.into()));
        if self.tot_breadth == 0 || self.tot_depth == 0 {
            return bad("tot_breadth and tot_depth must be >= 1");
        }
        if self.iot_max_iters == 0 {
            return bad("iot_max_iters must be >= 1");
        }
        if self.lcot_layers < 2 {
            return bad("lcot_layers must be >= 2");
        }
        if self.retry_limit == 0 {
            return bad("retry_limit must be >= 1");
        }
        Ok(())
    }
}

const COT_INSTRUCTION: &str = "Think step by step: first describe what happens in the video, then reason about whether any of it is a crime or anomaly, and only then give your final answer.";

const LCOT_PERSPECTIVES: [&str; 4] = [
    "the setting: location, time of day and the objects in view",
    "the people: who is present, what they look like and how they move",
    "the interactions: how people treat each other and any physical contact",
    "the events: the sequence of actions and anything that breaks the normal routine",
];

fn witness_message(media: &MediaRef, text: String) -> Vec<Message> {
    vec![Message::system(WITNESS_SYSTEM), Message::user_with_media(text, media.clone())]
}

fn start(session: &mut Session<'_>, strategy: Strategy) {
    let video_id = session.media.video_id.clone();
    session.emit(|seq| TraceEvent::SessionStarted {
        seq,
        video_id,
        strategy: strategy.to_string(),
        variant: None,
        layers: Vec::new(),
        max_branches: 0,
    });
}

fn finish(session: Session<'_>, strategy: Strategy, classification: crate::agents::Classification) -> SessionResult {
    SessionResult {
        video_id: session.media.video_id.clone(),
        strategy: strategy.to_string(),
        variant: None,
        graph: None,
        anomaly_qa: Vec::new(),
        classification,
        trace: session.into_trace(),
        version: SESSION_FORMAT_VERSION,
    }
}

fn non_empty(reply: &str) -> Result<String, AgentError> {
    let t = reply.trim();
    if t.is_empty() {
        Err(AgentError::MalformedOutput("empty reply".into()))
    } else {
        Ok(t.to_string())
    }
}

/// Single Witness prompt asking for the verdict directly.
pub fn run_direct(video: &MediaRef, backends: &Backends, labels: &LabelSet, cfg: &BaselineConfig) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let mut session = Session::new(video.clone(), backends, cfg.retry_limit);
    start(&mut session, Strategy::Direct);
    let text = format!("Classify this surveillance video.\n{}", classification_instructions(labels));
    let c = session.classify(Role::Witness, witness_message(video, text), labels)?;
    Ok(finish(session, Strategy::Direct, c))
}

/// Single Witness prompt with a step-by-step reasoning instruction.
pub fn run_cot(video: &MediaRef, backends: &Backends, labels: &LabelSet, cfg: &BaselineConfig) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let mut session = Session::new(video.clone(), backends, cfg.retry_limit);
    start(&mut session, Strategy::Cot);
    let text = format!("Classify this surveillance video.\n{COT_INSTRUCTION}\n{}", classification_instructions(labels));
    let c = session.classify(Role::Witness, witness_message(video, text), labels)?;
    Ok(finish(session, Strategy::Cot, c))
}

fn render_steps(steps: &[String]) -> String {
    if steps.is_empty() {
        return "(none yet)\n".into();
    }
    let mut s = String::new();
    for (i, step) in steps.iter().enumerate() {
        let _ = writeln!(s, "Step {}: {}", i + 1, step);
    }
    s
}

pub fn parse_score(text: &str) -> Result<u32, AgentError> {
    let line = text
        .lines()
        .filter_map(|l| l.trim().split_once(':'))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case("SCORE"))
        .ok_or_else(|| AgentError::MalformedOutput("no SCORE line".into()))?;
    match line.1.trim().parse::<u32>() {
        Ok(n @ 1..=10) => Ok(n),
        _ => Err(AgentError::MalformedOutput(format!("SCORE `{}` is not an integer in 1..=10", line.1.trim()))),
    }
}

/// Breadth-first expansion of the single best path: at each level the
/// Witness proposes `breadth` next steps, the Supervisor scores each, the
/// best (lowest index on ties) is kept. Calls: 2·breadth·depth + 1.
pub fn run_tot(video: &MediaRef, backends: &Backends, labels: &LabelSet, cfg: &BaselineConfig) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let mut session = Session::new(video.clone(), backends, cfg.retry_limit);
    start(&mut session, Strategy::Tot);
    let mut path: Vec<String> = Vec::new();
    for _level in 0..cfg.tot_depth {
        let mut candidates = Vec::with_capacity(cfg.tot_breadth);
        for i in 0..cfg.tot_breadth {
            let text = format!(
                "We are deciding whether this surveillance video shows a crime.\nReasoning so far:\n{}Propose candidate {} of {} for the next reasoning step, based on what you can see. Reply with one short paragraph.",
                render_steps(&path),
                i + 1,
                cfg.tot_breadth
            );
            let proposal = session
                .call_parsed(Role::Witness, witness_message(video, text), non_empty)?
                .unwrap_or_else(|_| "(no proposal)".to_string());
            candidates.push(proposal);
        }
        let mut scores = Vec::with_capacity(candidates.len());
        for candidate in &candidates {
            let text = format!(
                "Reasoning so far:\n{}Candidate next step: {}\nRate from 1 to 10 how much this step helps decide whether the video shows a crime.\nReply with exactly one line:\nSCORE: <integer 1-10>",
                render_steps(&path),
                candidate
            );
            let messages = vec![Message::system("You evaluate reasoning steps."), Message::user(text)];
            let score = session.call_parsed(Role::Supervisor, messages, parse_score)?.unwrap_or(0);
            scores.push(score);
        }
        let best = scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if *s > scores[best] { i } else { best });
        path.push(candidates.swap_remove(best));
    }
    let text = format!(
        "Classify this surveillance video using the reasoning below.\nReasoning:\n{}{}",
        render_steps(&path),
        classification_instructions(labels)
    );
    let c = session.classify(Role::Witness, witness_message(video, text), labels)?;
    Ok(finish(session, Strategy::Tot, c))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuideReply {
    Probe(String),
    Done,
}

pub fn parse_guide(text: &str) -> Result<GuideReply, AgentError> {
    for line in text.lines().map(str::trim) {
        if line.eq_ignore_ascii_case("DONE") {
            return Ok(GuideReply::Done);
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("QN") {
                let v = v.trim();
                if v.is_empty() {
                    return Err(AgentError::MalformedOutput("empty QN question".into()));
                }
                return Ok(GuideReply::Probe(v.to_string()));
            }
        }
    }
    Err(AgentError::MalformedOutput("expected `QN: <question>` or `DONE`".into()))
}

fn render_context(context: &[(String, String)]) -> String {
    if context.is_empty() {
        return "(none yet)\n".into();
    }
    let mut s = String::new();
    for (i, (q, a)) in context.iter().enumerate() {
        let _ = writeln!(s, "{}. Q: {}\n   A: {}", i + 1, q, a);
    }
    s
}

/// Inner dialogue: a guide LLM asks probe questions until `DONE` or the
/// iteration cap, then the Witness classifies with the gathered context.
pub fn run_iot(video: &MediaRef, backends: &Backends, labels: &LabelSet, cfg: &BaselineConfig) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let mut session = Session::new(video.clone(), backends, cfg.retry_limit);
    start(&mut session, Strategy::Iot);
    let mut context: Vec<(String, String)> = Vec::new();
    for _ in 0..cfg.iot_max_iters {
        let text = format!(
            "You guide an inner dialogue about a surveillance video that you cannot see; a Witness who can see it answers your questions. The goal is to decide whether the video shows a crime.\nContext so far:\n{}Ask the next most useful question, or finish.\nReply with exactly one line: `QN: <question>` or `DONE`.",
            render_context(&context)
        );
        let messages = vec![Message::system("You are the guide of an iterative inner dialogue."), Message::user(text)];
        match session.call_parsed(Role::Detective, messages, parse_guide)? {
            Ok(GuideReply::Probe(question)) => {
                let answer = session.ask_witness(&question)?;
                context.push((question, answer));
            }
            Ok(GuideReply::Done) | Err(_) => break,
        }
    }
    let text = format!(
        "Classify this surveillance video using the context below.\nContext:\n{}{}",
        render_context(&context),
        classification_instructions(labels)
    );
    let c = session.classify(Role::Witness, witness_message(video, text), labels)?;
    Ok(finish(session, Strategy::Iot, c))
}

pub fn lcot_perspective(k: usize) -> String {
    let base = LCOT_PERSPECTIVES[k % LCOT_PERSPECTIVES.len()];
    if k < LCOT_PERSPECTIVES.len() {
        base.to_string()
    } else {
        format!("{base} (independent pass {})", k + 1)
    }
}

/// Independent Witness passes from fixed perspectives, then one Supervisor
/// cross-check over all of them.
pub fn run_lcot(video: &MediaRef, backends: &Backends, labels: &LabelSet, cfg: &BaselineConfig) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let mut session = Session::new(video.clone(), backends, cfg.retry_limit);
    start(&mut session, Strategy::Lcot);
    let mut passes = Vec::with_capacity(cfg.lcot_layers);
    for k in 0..cfg.lcot_layers {
        let text = format!(
            "Analyse this surveillance video focusing only on {}. Reason step by step about what you see and say whether anything suggests a crime.",
            lcot_perspective(k)
        );
        let pass = session
            .call_parsed(Role::Witness, witness_message(video, text), non_empty)?
            .unwrap_or_else(|_| "(no analysis)".to_string());
        passes.push(pass);
    }
    let mut text = String::from("Independent analyses of the same surveillance video:\n");
    for (k, pass) in passes.iter().enumerate() {
        let _ = writeln!(text, "[Layer {}: {}]\n{}", k + 1, lcot_perspective(k), pass);
    }
    let _ = write!(
        text,
        "\nList any inconsistencies between the layers, treat unsupported claims as possible hallucinations, then give the final verdict.\n{}",
        classification_instructions(labels)
    );
    let messages = vec![Message::system("You cross-check independent analyses of a video."), Message::user(text)];
    let c = session.classify(Role::Supervisor, messages, labels)?;
    Ok(finish(session, Strategy::Lcot, c))
}

/// Dispatches a baseline strategy. `Coat` is not a baseline.
pub fn run_baseline(
    strategy: Strategy,
    video: &MediaRef,
    backends: &Backends,
    labels: &LabelSet,
    cfg: &BaselineConfig,
) -> Result<SessionResult, SessionError> {
    match strategy {
        Strategy::Direct => run_direct(video, backends, labels, cfg),
        Strategy::Cot => run_cot(video, backends, labels, cfg),
        Strategy::Tot => run_tot(video, backends, labels, cfg),
        Strategy::Iot => run_iot(video, backends, labels, cfg),
        Strategy::Lcot => run_lcot(video, backends, labels, cfg),
        Strategy::Coat => Err(SessionError::ConfigInvalid("coat is not a baseline strategy".into())),
    }
}

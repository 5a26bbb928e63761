//! Shared helpers for integration tests: a deterministic rule-based model
//! that plays all three roles, the synthetic video set behind the golden
//! fixture store, and a queue-driven backend for fault injection.
#![allow(dead_code)]

pub mod grammar;
pub mod graph;
pub mod oracle;
pub mod stub;

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use coat_core::agents::{Message, MessageRole, Role};
use coat_core::backends::{BackendError, Backends, FixtureStore, ModelBackend, RecordingBackend};
use coat_core::baselines::Strategy;
use coat_core::config::AppConfig;
use coat_core::eval::{ManifestEntry, Resolution};
use coat_core::layer::Variant;
use coat_core::orchestrator::SessionResult;
use coat_core::runner::RunPlan;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_dir() -> PathBuf {
    crate_dir().join("fixtures").join("golden")
}

pub fn golden_store_path() -> PathBuf {
    golden_dir().join("store.json")
}

pub fn golden_manifest_path() -> PathBuf {
    golden_dir().join("manifest.jsonl")
}

/// What the Witness "sees" in one synthetic video.
pub struct Video {
    pub id: &'static str,
    pub gold: &'static str,
    pub resolution: Resolution,
    pub dataset: &'static str,
    setting: &'static str,
    people: &'static str,
    interaction: &'static str,
    event: &'static str,
    /// Answers to the six default anomaly questions, in config order.
    anomaly: [&'static str; 6],
    /// Verdict the Witness gives when asked to classify with no help.
    naive_verdict: &'static str,
}

const NOTHING: &str = "No, nothing like that is visible.";

pub const VIDEOS: [Video; 6] = [
    Video {
        id: "robbery_store",
        gold: "Robbery",
        resolution: Resolution::High,
        dataset: "UCF-Crime",
        setting: "A small convenience store at night, seen from a ceiling camera behind the counter.",
        people: "A clerk behind the counter and a man in a dark hoodie standing at the register.",
        interaction: "The man leans over the counter toward the clerk, who steps back with raised hands.",
        event: "The man points a handgun at the clerk, who empties the register into a bag and hands it over.",
        anomaly: [
            "Yes, the man in the hoodie holds a black handgun.",
            "He does not strike anyone, but he shoves a counter display aside.",
            "The clerk hands him cash from the register and he leaves with it.",
            "No fire or smoke is visible.",
            "The clerk keeps his hands raised and looks frightened.",
            "A display rack is knocked over.",
        ],
        naive_verdict: "Normal",
    },
    Video {
        id: "park_walk",
        gold: "Normal",
        resolution: Resolution::Low,
        dataset: "UCF-Crime",
        setting: "A city park on a sunny afternoon with a paved path and benches.",
        people: "Two adults walking a dog and a cyclist passing by.",
        interaction: "The two adults chat while walking; the cyclist rings a bell and passes.",
        event: "People stroll along the path and nothing unusual happens.",
        anomaly: [NOTHING, NOTHING, NOTHING, NOTHING, NOTHING, NOTHING],
        naive_verdict: "Normal",
    },
    Video {
        id: "car_fire",
        gold: "Arson",
        resolution: Resolution::High,
        dataset: "BetterUCF",
        setting: "A residential street at night with cars parked along the curb.",
        people: "A single person in a cap near a parked sedan.",
        interaction: "The person looks around, crouches by the sedan, then runs away.",
        event: "After the person leaves, flames spread from under the sedan's hood.",
        anomaly: [
            "The person carries a small canister, but no weapon.",
            NOTHING,
            NOTHING,
            "Yes, bright flames and thick smoke rise from the parked sedan.",
            "The person runs off quickly.",
            "The sedan is burning.",
        ],
        naive_verdict: "Arson",
    },
    Video {
        id: "street_fight",
        gold: "Fighting",
        resolution: Resolution::Low,
        dataset: "BetterUCF",
        setting: "A sidewalk outside a bar late at night.",
        people: "Four young men, two of them arguing loudly.",
        interaction: "The argument escalates and the two men shove each other.",
        event: "One man punches the other, and the two grapple until the others pull them apart.",
        anomaly: [
            NOTHING,
            "Yes, one man punches the other several times.",
            NOTHING,
            NOTHING,
            "One man falls to the ground holding his face.",
            NOTHING,
        ],
        naive_verdict: "Fighting",
    },
    Video {
        id: "shop_browse",
        gold: "Normal",
        resolution: Resolution::High,
        dataset: "BetterUCF",
        setting: "A clothing store during the day with racks of shirts.",
        people: "A woman with a large tote bag browsing and a cashier.",
        interaction: "The woman asks the cashier a question and is pointed to a rack.",
        event: "The woman slips a scarf into her tote bag to free her hands, then pays for everything at the counter.",
        anomaly: [
            NOTHING,
            NOTHING,
            "She puts a scarf in her bag but later pays at the counter.",
            NOTHING,
            NOTHING,
            NOTHING,
        ],
        naive_verdict: "Normal",
    },
    Video {
        id: "parking_theft",
        gold: "Stealing",
        resolution: Resolution::Low,
        dataset: "UCF-Crime",
        setting: "An open-air parking lot in daylight.",
        people: "A man in a grey jacket walking between parked cars.",
        interaction: "He tries several car door handles while glancing around.",
        event: "He breaks a car window and pulls a laptop bag out of the parked car.",
        anomaly: [
            NOTHING,
            NOTHING,
            "Yes, he breaks a car window and takes a laptop bag.",
            NOTHING,
            NOTHING,
            "A car window is shattered.",
        ],
        naive_verdict: "Normal",
    },
];

pub fn video(id: &str) -> &'static Video {
    VIDEOS.iter().find(|v| v.id == id).unwrap_or_else(|| panic!("unknown synthetic video {id}"))
}

pub fn manifest_entries() -> Vec<ManifestEntry> {
    VIDEOS
        .iter()
        .map(|v| ManifestEntry {
            video_id: v.id.into(),
            uri: format!("videos/{}.mp4", v.id),
            gold_label: v.gold.into(),
            resolution: v.resolution,
            dataset: v.dataset.into(),
        })
        .collect()
}

pub fn manifest_jsonl(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
}

/// The three videos the golden determinism suite runs.
pub const GOLDEN_TRIO: [&str; 3] = ["robbery_store", "park_walk", "car_fire"];

/// Every plan the golden store covers: five CoAT variants, five baselines.
pub fn all_plans(cfg: &AppConfig) -> Vec<RunPlan> {
    let mut plans: Vec<RunPlan> = Variant::ALL
        .iter()
        .map(|v| {
            let mut session = cfg.session.clone();
            session.variant = *v;
            RunPlan { strategy: Strategy::Coat, session, baselines: cfg.baselines.clone() }
        })
        .collect();
    for s in [Strategy::Direct, Strategy::Cot, Strategy::Tot, Strategy::Iot, Strategy::Lcot] {
        plans.push(RunPlan { strategy: s, session: cfg.session.clone(), baselines: cfg.baselines.clone() });
    }
    plans
}

pub fn coat_plan(cfg: &AppConfig, variant: Variant) -> RunPlan {
    let mut session = cfg.session.clone();
    session.variant = variant;
    RunPlan { strategy: Strategy::Coat, session, baselines: cfg.baselines.clone() }
}

/// Runs every plan over every synthetic video against the rule-based
/// model and returns the recorded store and the results.
pub fn regenerate_golden() -> (FixtureStore, Vec<SessionResult>) {
    let cfg = AppConfig::default_config();
    let recorder = Arc::new(RecordingBackend::new(Arc::new(SyntheticModel), FixtureStore::new(), None));
    let backends = Backends::shared(recorder.clone());
    let mut results = Vec::new();
    for plan in all_plans(&cfg) {
        for entry in manifest_entries() {
            results.push(plan.run(&entry.media(), &backends).expect("synthetic model never fails"));
        }
    }
    (recorder.snapshot(), results)
}

// ---------------------------------------------------------------------------
// Rule-based model

/// Plays Witness, Detective and Supervisor with fixed rules that read the
/// prompts produced by the library. Deterministic and total.
pub struct SyntheticModel;

fn user_text(messages: &[Message]) -> &str {
    messages
        .iter()
        .find(|m| m.role == MessageRole::User)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn is_retry(messages: &[Message]) -> bool {
    messages.iter().any(|m| m.role == MessageRole::Assistant)
}

fn video_of(messages: &[Message]) -> Option<&'static Video> {
    messages.iter().flat_map(|m| &m.media).find_map(|m| VIDEOS.iter().find(|v| v.id == m.video_id))
}

/// The visible facts in a prompt: answers and analyses, with questions and
/// the output instructions removed.
fn evidence(prompt: &str) -> String {
    let body = prompt.split("Allowed AC labels").next().unwrap_or(prompt);
    body.lines()
        .filter_map(|l| {
            if let Some(i) = l.rfind("A: ") {
                Some(&l[i + 3..])
            } else if l.contains("Q:") {
                None
            } else {
                Some(l)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn keyword_verdict(text: &str) -> &'static str {
    let t = text.to_ascii_lowercase();
    for (kw, label) in [
        ("handgun", "Robbery"),
        ("flames", "Arson"),
        ("punches", "Fighting"),
        ("car window", "Stealing"),
        ("slips", "Shoplifting"),
    ] {
        if t.contains(kw) {
            return label;
        }
    }
    "Normal"
}

fn verdict(label: &str, why: &str) -> String {
    let ad = if label == "Normal" { "Normal" } else { "Abnormal" };
    format!("AD: {ad}\nAC: {label}\nEVIDENCE: {why}")
}

impl Video {
    fn describe(&self, question: &str) -> &'static str {
        let q = question.to_ascii_lowercase();
        let anomaly_keys = ["weapon", "physically attack", "take property", "fire, smoke", "injured", "damaged"];
        if let Some(i) = anomaly_keys.iter().position(|k| q.contains(k)) {
            return self.anomaly[i];
        }
        if ["relate", "interact", "gesture"].iter().any(|k| q.contains(k)) {
            self.interaction
        } else if ["happen", "event"].iter().any(|k| q.contains(k)) {
            self.event
        } else if ["people", "who", "wearing"].iter().any(|k| q.contains(k)) {
            self.people
        } else if ["setting", "where", "scene"].iter().any(|k| q.contains(k)) {
            self.setting
        } else {
            self.event
        }
    }
}

fn witness(messages: &[Message]) -> String {
    let Some(v) = video_of(messages) else { return String::new() };
    let prompt = user_text(messages);
    if prompt.contains("AD: Normal|Abnormal") {
        if prompt.contains("Reasoning:") || prompt.contains("Context:") {
            let label = keyword_verdict(&evidence(prompt));
            return verdict(label, "Decided from the gathered context.");
        }
        return verdict(v.naive_verdict, "Nothing in the footage clearly stands out.");
    }
    if let Some(rest) = prompt.split("Propose candidate ").nth(1) {
        return match rest.chars().next() {
            Some('1') => v.setting,
            Some('2') => v.people,
            _ => v.event,
        }
        .to_string();
    }
    if let Some(rest) = prompt.split("focusing only on ").nth(1) {
        let fact = if rest.starts_with("the setting") {
            v.setting
        } else if rest.starts_with("the people") {
            v.people
        } else if rest.starts_with("the interactions") {
            v.interaction
        } else {
            v.event
        };
        return format!("{fact} Considering only this aspect, I note the above.");
    }
    v.describe(prompt).to_string()
}

fn layer_goal(prompt: &str) -> &'static str {
    let layer = prompt.lines().next().unwrap_or("");
    if layer.contains("L1_") {
        "Clarify the setting of the scene"
    } else if layer.contains("L2_") {
        "Identify the people involved and what they are wearing"
    } else if layer.contains("L3_") {
        "Examine how the people interact"
    } else {
        "Establish what happens and in what order"
    }
}

struct TreeView {
    ids: Vec<String>,
    turns_used: u32,
    exhausted: bool,
}

fn tree_view(prompt: &str) -> TreeView {
    let mut ids = Vec::new();
    let mut in_tree = false;
    for line in prompt.lines() {
        if line.starts_with("Current tree:") {
            in_tree = true;
            continue;
        }
        if in_tree {
            let t = line.trim_start();
            match t.strip_prefix("- ") {
                Some(rest) => ids.push(rest.split_whitespace().next().unwrap_or("").to_string()),
                None => break,
            }
        }
    }
    let mut turns_used = 0;
    if let Some(line) = prompt.lines().find(|l| l.starts_with("Budget: ")) {
        let nums: Vec<u32> = line
            .trim_start_matches("Budget: ")
            .split(|c: char| !c.is_ascii_digit())
            .filter_map(|s| s.parse().ok())
            .collect();
        if nums.len() >= 2 {
            turns_used = nums[1].saturating_sub(nums[0]);
        }
    }
    TreeView { ids, turns_used, exhausted: prompt.contains("only `stop` is legal") }
}

fn supervisor(messages: &[Message]) -> String {
    let prompt = user_text(messages);
    if prompt.contains("AD: Normal|Abnormal") {
        let label = keyword_verdict(&evidence(prompt));
        return verdict(label, "Decisive cues taken from the witness answers.");
    }
    if let Some(rest) = prompt.split("Candidate next step: ").nth(1) {
        let candidate = rest.lines().next().unwrap_or("");
        return format!("SCORE: {}", 3 + candidate.len() % 7);
    }
    let view = tree_view(prompt);
    let root = view.ids.first().cloned().unwrap_or_else(|| "n1".into());
    let stop = |target: &str| format!("OPERATION: stop\nTARGET: {target}\nGOAL:");
    if is_retry(messages) || view.exhausted || view.ids.is_empty() {
        return stop(&root);
    }
    let goal = layer_goal(prompt);
    let newest = view.ids.iter().max_by_key(|id| id[1..].parse::<u64>().unwrap_or(0)).cloned().unwrap_or(root.clone());
    let second_newest = format!("n{}", newest[1..].parse::<u64>().unwrap_or(1).saturating_sub(1));
    let (op, target) = match view.turns_used {
        0 => ("proceed", root.clone()),
        1 => ("split", newest),
        2 => ("proceed", second_newest),
        3 => ("refine", newest),
        _ => return stop(&root),
    };
    format!("OPERATION: {op}\nTARGET: {target}\nGOAL: {goal}")
}

fn detective(messages: &[Message]) -> String {
    let prompt = user_text(messages);
    if prompt.contains("`QN: <question>`") {
        let asked = prompt
            .lines()
            .filter(|l| l.split_once(". Q:").is_some_and(|(n, _)| n.trim().parse::<u32>().is_ok()))
            .count();
        return match asked {
            0 => "QN: Who is in the scene and what are they wearing?".into(),
            1 => "QN: What happens next in the video?".into(),
            _ => "DONE".into(),
        };
    }
    let goal = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Exploration goal: "))
        .unwrap_or("Look closer")
        .to_string();
    let depth = prompt.lines().filter(|l| l.split_once(". Q:").is_some()).count();
    if prompt.contains("QR: <rewritten question>") {
        let previous = prompt.lines().find_map(|l| l.strip_prefix("Question to rewrite: ")).unwrap_or("");
        return format!("QR: {previous} Please be as specific as possible.");
    }
    if prompt.contains("B1: <question>") {
        return format!(
            "B1: {goal}: what is on the left side of the frame?\nB2: {goal}: what is on the right side of the frame?"
        );
    }
    format!(
        "Q1: {goal}: what is the most noticeable detail (step {depth})?\nQ2: {goal}: what changes over time (step {depth})?\nQ3: {goal}: what is in the background (step {depth})?\nSELECT: {}\nRATIONALE: The goal asks for the clearest visible cue.",
        depth % 3 + 1
    )
}

impl ModelBackend for SyntheticModel {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        Ok(match role {
            Role::Witness => witness(messages),
            Role::Detective => detective(messages),
            Role::Supervisor => supervisor(messages),
        })
    }
}

// ---------------------------------------------------------------------------
// Fault injection

/// Serves queued replies per role, falling back to another backend when a
/// queue is empty. Records every request.
pub struct SequenceBackend {
    queues: Mutex<BTreeMap<Role, VecDeque<String>>>,
    fallback: Option<Arc<dyn ModelBackend>>,
    pub calls: Mutex<Vec<(Role, Vec<Message>)>>,
}

impl SequenceBackend {
    pub fn new(fallback: Option<Arc<dyn ModelBackend>>) -> Self {
        SequenceBackend { queues: Mutex::new(BTreeMap::new()), fallback, calls: Mutex::new(Vec::new()) }
    }

    pub fn push(&self, role: Role, replies: &[&str]) {
        let mut q = self.queues.lock().unwrap();
        q.entry(role).or_default().extend(replies.iter().map(|s| s.to_string()));
    }

    pub fn call_count(&self, role: Role) -> usize {
        self.calls.lock().unwrap().iter().filter(|(r, _)| *r == role).count()
    }
}

impl ModelBackend for SequenceBackend {
    fn complete(&self, role: Role, messages: &[Message]) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push((role, messages.to_vec()));
        let queued = self.queues.lock().unwrap().get_mut(&role).and_then(VecDeque::pop_front);
        match (queued, &self.fallback) {
            (Some(reply), _) => Ok(reply),
            (None, Some(fb)) => fb.complete(role, messages),
            (None, None) => Err(BackendError::Transport(format!("no queued reply for {role}"))),
        }
    }
}

pub fn shipped_store() -> FixtureStore {
    FixtureStore::load(&golden_store_path()).expect("golden store loads")
}

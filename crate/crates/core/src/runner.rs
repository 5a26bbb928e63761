//! Runs one strategy over one video or a whole manifest. The manifest
//! driver is the only place that spawns threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::agents::MediaRef;
use crate::backends::Backends;
use crate::baselines::{run_baseline, BaselineConfig, Strategy};
use crate::eval::ManifestEntry;
use crate::orchestrator::{run_session, SessionConfig, SessionError, SessionResult};

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub strategy: Strategy,
    pub session: SessionConfig,
    pub baselines: BaselineConfig,
}

impl RunPlan {
    pub fn run(&self, video: &MediaRef, backends: &Backends) -> Result<SessionResult, SessionError> {
        match self.strategy {
            Strategy::Coat => run_session(video, &self.session, backends),
            other => run_baseline(other, video, backends, &self.session.labels, &self.baselines),
        }
    }

    /// Report row produced by this plan, e.g. `coat-l4`.
    pub fn row_name(&self) -> String {
        match self.strategy {
            Strategy::Coat => format!("coat-{}", self.session.variant.as_str()),
            other => other.to_string(),
        }
    }
}

pub struct VideoOutcome {
    pub video_id: String,
    pub result: Result<SessionResult, SessionError>,
}

/// Runs `plan` over every entry with at most `workers` concurrent
/// sessions. Outcomes are returned sorted by video id.
pub fn run_manifest(entries: &[ManifestEntry], plan: &RunPlan, backends: &Backends, workers: usize) -> Vec<VideoOutcome> {
    let workers = workers.clamp(1, entries.len().max(1));
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<VideoOutcome>> = Mutex::new(Vec::with_capacity(entries.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = entries.get(i) else { break };
                let result = plan.run(&entry.media(), backends);
                done.lock().expect("outcome lock").push(VideoOutcome { video_id: entry.video_id.clone(), result });
            });
        }
    });
    let mut out = done.into_inner().expect("outcome lock");
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    out
}

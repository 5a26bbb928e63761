//! A three-agent (Witness, Detective, Supervisor) reasoning loop over a
//! layered State-of-Thoughts forest, with baseline prompting strategies and
//! an evaluation harness for video anomaly detection and classification.

pub mod agents;
pub mod backends;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod eval;
pub mod graph;
pub mod labels;
pub mod layer;
pub mod orchestrator;
pub mod runner;

pub use agents::{Classification, MediaRef, Role};
pub use backends::{Backends, BackendError, ModelBackend};
pub use graph::{EdgeOp, NodeId, SoTGraph};
pub use labels::{AdLabel, LabelSet};
pub use layer::{LayerId, Variant};
pub use orchestrator::{run_session, SessionConfig, SessionError, SessionResult};

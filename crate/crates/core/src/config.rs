//! TOML configuration: per-role backends, session bounds, labels, anomaly
//! questions, baseline bounds and evaluation settings.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::backends::BackendConfig;
use crate::baselines::{BaselineConfig, Strategy};
use crate::labels::LabelSet;
use crate::layer::Variant;
use crate::orchestrator::{BudgetState, SessionConfig};

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackends {
    witness: Option<BackendConfig>,
    detective: Option<BackendConfig>,
    supervisor: Option<BackendConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    strategy: Option<String>,
    variant: Option<String>,
    retry_limit: Option<u32>,
    max_branches: Option<usize>,
    #[serde(default)]
    budgets: BudgetState,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabels {
    normal: Option<String>,
    crime: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestions {
    questions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBaselines {
    tot_breadth: Option<usize>,
    tot_depth: Option<usize>,
    iot_max_iters: Option<usize>,
    lcot_layers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    workers: Option<usize>,
    ac_include_normal: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    backend: Option<RawBackends>,
    session: Option<RawSession>,
    labels: Option<RawLabels>,
    anomaly_questions: Option<RawQuestions>,
    baselines: Option<RawBaselines>,
    eval: Option<RawEval>,
}

/// Backends per role. Absent sections are only an error when a live run
/// needs them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleBackends {
    pub witness: Option<BackendConfig>,
    pub detective: Option<BackendConfig>,
    pub supervisor: Option<BackendConfig>,
}

impl RoleBackends {
    pub fn require(&self) -> Result<[BackendConfig; 3], ConfigError> {
        let get = |c: &Option<BackendConfig>, name: &str| {
            c.clone().ok_or_else(|| ConfigError::MissingKey(format!("backend.{name}")))
        };
        Ok([get(&self.witness, "witness")?, get(&self.detective, "detective")?, get(&self.supervisor, "supervisor")?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub workers: usize,
    pub ac_include_normal: bool,
}

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub backends: RoleBackends,
    pub strategy: Strategy,
    pub session: SessionConfig,
    pub baselines: BaselineConfig,
    pub eval: EvalSettings,
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;

        let questions = raw
            .anomaly_questions
            .and_then(|q| q.questions)
            .ok_or_else(|| ConfigError::MissingKey("anomaly_questions.questions".into()))?;

        let labels = match raw.labels {
            None => LabelSet::default(),
            Some(l) => {
                let normal = l.normal.ok_or_else(|| ConfigError::MissingKey("labels.normal".into()))?;
                let crime = l.crime.ok_or_else(|| ConfigError::MissingKey("labels.crime".into()))?;
                LabelSet::new(normal, crime).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
        };

        let s = raw.session.unwrap_or_default();
        let strategy: Strategy = s.strategy.as_deref().unwrap_or("coat").parse().map_err(ConfigError::Invalid)?;
        let variant: Variant = s.variant.as_deref().unwrap_or("l4").parse().map_err(ConfigError::Invalid)?;
        let mut session = SessionConfig::new(variant, questions);
        session.labels = labels;
        session.budgets = s.budgets;
        if let Some(r) = s.retry_limit {
            session.retry_limit = r;
        }
        if let Some(b) = s.max_branches {
            session.max_branches = b;
        }
        session.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut baselines = BaselineConfig { retry_limit: session.retry_limit, ..Default::default() };
        if let Some(b) = raw.baselines {
            baselines.tot_breadth = b.tot_breadth.unwrap_or(baselines.tot_breadth);
            baselines.tot_depth = b.tot_depth.unwrap_or(baselines.tot_depth);
            baselines.iot_max_iters = b.iot_max_iters.unwrap_or(baselines.iot_max_iters);
            baselines.lcot_layers = b.lcot_layers.unwrap_or(baselines.lcot_layers);
        }
        baselines.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let e = raw.eval.unwrap_or_default();
        let eval = EvalSettings { workers: e.workers.unwrap_or(4), ac_include_normal: e.ac_include_normal.unwrap_or(true) };
        if eval.workers == 0 {
            return Err(ConfigError::Invalid("eval.workers must be >= 1".into()));
        }

        let b = raw.backend.unwrap_or_default();
        for (name, cfg) in [("witness", &b.witness), ("detective", &b.detective), ("supervisor", &b.supervisor)] {
            if let Some(cfg) = cfg {
                cfg.validate().map_err(|e| ConfigError::Invalid(format!("backend.{name}: {e}")))?;
            }
        }
        let backends = RoleBackends { witness: b.witness, detective: b.detective, supervisor: b.supervisor };

        Ok(AppConfig { backends, strategy, session, baselines, eval })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn default_config() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn labels(&self) -> &LabelSet {
        &self.session.labels
    }
}

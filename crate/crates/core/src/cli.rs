//! Command-line front end. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other failure |
//! | 2 | backend error (fixture miss, HTTP failure) |
//! | 3 | invalid or incomplete configuration |
//! | 4 | invalid manifest |
//! | 5 | unknown baseline row |
//! | 64 | command-line usage error |

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agents::MediaRef;
use crate::backends::{Backends, FixtureStore, HttpBackend, ModelBackend, RecordingBackend, ScriptedBackend};
use crate::baselines::Strategy;
use crate::config::{AppConfig, ConfigError};
use crate::eval::{self, EvalError, ManifestEntry, PredictionRecord, ReportOptions};
use crate::layer::Variant;
use crate::orchestrator::{SessionError, SessionResult};
use crate::runner::{run_manifest, RunPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MANIFEST: i32 = 4;
pub const EXIT_BASELINE: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "coat", version, about = "Multi-agent anomaly reasoning over surveillance videos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session on one video and print `<video_id>\t<AD>\t<AC>`.
    Run(RunArgs),
    /// Run the selected strategy over a manifest and score it.
    Eval(EvalArgs),
    /// Like `run`/`eval`, but strictly offline from a fixture store.
    Replay(TargetArgs),
    /// Like `run`/`eval` against live backends, recording every reply.
    Record(TargetArgs),
    /// Merge prediction files into one metrics report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SessionFlags {
    /// TOML config; the built-in default is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixture store to replay instead of calling live endpoints.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Record live replies into this fixture store.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Video id from `--manifest`, or a video path/URI.
    pub video: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub flags: SessionFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub flags: SessionFlags,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Single video; omit to process the whole `--manifest`.
    pub video: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub flags: SessionFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitBy {
    Resolution,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Predictions JSONL files written by `eval`.
    #[arg(required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Row to compute deltas against, e.g. `direct`.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_enum)]
    pub split_by: Option<SplitBy>,
    #[arg(long, default_value = "report")]
    pub output: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match &e {
            SessionError::Backend { key, .. } => CliError::new(EXIT_BACKEND, format!("{e}\nfixture key: {key}")),
            SessionError::ConfigInvalid(_) => CliError::new(EXIT_CONFIG, e.to_string()),
            SessionError::Graph(_) => CliError::new(EXIT_FAILURE, e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::ManifestInvalid { .. } => EXIT_MANIFEST,
            EvalError::UnknownBaselineRow(_) => EXIT_BASELINE,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(&a.video, a.manifest.as_deref(), &a.flags, out),
        Command::Eval(a) => cmd_eval(&a.manifest, a.workers, &a.flags, out, err),
        Command::Replay(a) => {
            if a.flags.fixtures.is_none() {
                return Err(CliError::new(EXIT_CONFIG, "replay requires --fixtures"));
            }
            if a.flags.record.is_some() {
                return Err(CliError::new(EXIT_CONFIG, "replay is offline; --record is not allowed"));
            }
            target(a, out, err)
        }
        Command::Record(a) => {
            if a.flags.record.is_none() {
                return Err(CliError::new(EXIT_CONFIG, "record requires --record <fixture store>"));
            }
            target(a, out, err)
        }
        Command::Report(a) => cmd_report(&a, out),
    }
}

fn target(a: TargetArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match (&a.video, &a.manifest) {
        (Some(video), manifest) => cmd_run(video, manifest.as_deref(), &a.flags, out),
        (None, Some(manifest)) => cmd_eval(manifest, a.workers, &a.flags, out, err),
        (None, None) => Err(CliError::new(EXIT_USAGE, "give a video or --manifest")),
    }
}

fn load_config(path: Option<&Path>) -> Result<AppConfig, CliError> {
    Ok(match path {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default_config(),
    })
}

fn plan(cfg: &AppConfig, flags: &SessionFlags) -> RunPlan {
    let mut session = cfg.session.clone();
    if let Some(v) = flags.variant {
        session.variant = v;
    }
    RunPlan { strategy: flags.strategy.unwrap_or(cfg.strategy), session, baselines: cfg.baselines.clone() }
}

fn build_backends(cfg: &AppConfig, flags: &SessionFlags) -> Result<Backends, CliError> {
    let fixtures = match &flags.fixtures {
        Some(path) => Some(FixtureStore::load(path).map_err(|e| CliError::new(EXIT_CONFIG, e))?),
        None => None,
    };
    match (&flags.record, fixtures) {
        (None, Some(store)) => Ok(Backends::shared(Arc::new(ScriptedBackend::new(store)))),
        (record, seed) => {
            let [w, d, s] = cfg.backends.require()?;
            let http = |c| -> Result<Arc<dyn ModelBackend>, CliError> {
                Ok(Arc::new(HttpBackend::new(c).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?))
            };
            let live = Backends { witness: http(w)?, detective: http(d)?, supervisor: http(s)? };
            match record {
                None => Ok(live),
                Some(path) => {
                    // Extend an existing store rather than overwrite it.
                    let store = match seed {
                        Some(store) => store,
                        None if path.exists() => FixtureStore::load(path).map_err(|e| CliError::new(EXIT_CONFIG, e))?,
                        None => FixtureStore::new(),
                    };
                    let recorder = RecordingBackend::new(Arc::new(live), store, Some(path.clone()));
                    Ok(Backends::shared(Arc::new(recorder)))
                }
            }
        }
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn trace_path(output: &Path, result: &SessionResult) -> PathBuf {
    output.join("traces").join(file_stem(&result.row_name())).join(format!("{}.json", file_stem(&result.video_id)))
}

fn write_trace(output: &Path, result: &SessionResult) -> Result<PathBuf, CliError> {
    let path = trace_path(output, result);
    let dir = path.parent().expect("trace path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    std::fs::write(&path, result.to_json()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn resolve_video(video: &str, manifest: Option<&Path>, cfg: &AppConfig) -> Result<MediaRef, CliError> {
    if let Some(path) = manifest {
        let entries = eval::load_manifest(path, cfg.labels())?;
        if let Some(e) = entries.iter().find(|e| e.video_id == video) {
            return Ok(e.media());
        }
    }
    let id = Path::new(video.trim_end_matches('/'))
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| video.to_string());
    Ok(MediaRef::new(id, video))
}

fn cmd_run(video: &str, manifest: Option<&Path>, flags: &SessionFlags, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(flags.config.as_deref())?;
    let media = resolve_video(video, manifest, &cfg)?;
    let backends = build_backends(&cfg, flags)?;
    let result = plan(&cfg, flags).run(&media, &backends)?;
    write_trace(&flags.output, &result)?;
    let _ = writeln!(out, "{}\t{}\t{}", result.video_id, result.classification.ad.as_str(), result.classification.ac);
    Ok(())
}

fn cmd_eval(
    manifest: &Path,
    workers: Option<usize>,
    flags: &SessionFlags,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load_config(flags.config.as_deref())?;
    let entries: Vec<ManifestEntry> = eval::load_manifest(manifest, cfg.labels())?;
    if entries.is_empty() {
        return Err(CliError::new(EXIT_MANIFEST, format!("{}: manifest has no entries", manifest.display())));
    }
    let workers = workers.unwrap_or(cfg.eval.workers);
    if workers == 0 {
        return Err(CliError::new(EXIT_USAGE, "--workers must be >= 1"));
    }
    let backends = build_backends(&cfg, flags)?;
    let plan = plan(&cfg, flags);
    let row = plan.row_name();

    let mut preds = Vec::new();
    let mut failures = String::new();
    let mut first_error: Option<CliError> = None;
    for outcome in run_manifest(&entries, &plan, &backends, workers) {
        match outcome.result {
            Ok(result) => {
                write_trace(&flags.output, &result)?;
                preds.push(PredictionRecord::from_result(&result));
            }
            Err(e) => {
                let e = CliError::from(e);
                let _ = writeln!(err, "{}: {}", outcome.video_id, e.message);
                let line = serde_json::json!({ "video_id": outcome.video_id, "error": e.message });
                failures.push_str(&line.to_string());
                failures.push('\n');
                first_error.get_or_insert(e);
            }
        }
    }

    let output = &flags.output;
    std::fs::create_dir_all(output).map_err(|e| io_err(output, e))?;
    let stem = file_stem(&row);
    let failures_path = output.join(format!("failures-{stem}.jsonl"));
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| io_err(&failures_path, e))?;
        }
    } else {
        std::fs::write(&failures_path, &failures).map_err(|e| io_err(&failures_path, e))?;
    }
    if preds.is_empty() {
        return Err(first_error.unwrap_or_else(|| CliError::new(EXIT_FAILURE, "no video was scored")));
    }
    let preds_path = output.join(format!("predictions-{stem}.jsonl"));
    std::fs::write(&preds_path, eval::predictions_to_jsonl(&preds)).map_err(|e| io_err(&preds_path, e))?;

    let options = ReportOptions { ac_include_normal: cfg.eval.ac_include_normal, ..Default::default() };
    let report = eval::build_report(&preds, &entries, cfg.labels(), &options)?;
    eval::write_report(&report, &output.join(format!("report-{stem}"))).map_err(|e| io_err(output, e))?;
    let _ = write!(out, "{}", report.to_text());
    Ok(())
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let labels = cfg.labels();
    let entries = eval::load_manifest(&a.manifest, labels)?;
    let mut preds = Vec::new();
    for path in &a.predictions {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let parsed = eval::parse_predictions(&text, labels).map_err(|e| CliError::new(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
        preds.extend(parsed);
    }
    let options = ReportOptions {
        baseline_row: a.baseline.clone(),
        ac_include_normal: cfg.eval.ac_include_normal,
        split_by_resolution: a.split_by == Some(SplitBy::Resolution),
    };
    let report = eval::build_report(&preds, &entries, labels, &options)?;
    eval::write_report(&report, &a.output).map_err(|e| io_err(&a.output, e))?;
    let _ = write!(out, "{}", report.to_text());
    Ok(())
}

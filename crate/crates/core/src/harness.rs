//! Experiment harness: configuration, matrix execution, ingestion and
//! report generation over a runs directory.

use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::TemplateSet;
use crate::analytics::{anova_table, apply_issues, apply_manual_session, emit_report, IssueReport, ManualTestSession, ReportFiles};
use crate::domain::{parse_process_model, sanitize_label, ProcessModel, ProjectSpec, RunConfig, RunLimits, RunRecord, RunStatus};
use crate::engine;
use crate::gateway::{CompletionBackend, OpenAiBackend, OpenAiConfig, PlaybackBackend};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("no run {0} under the runs directory")]
    UnknownRun(String),
    #[error("malformed file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error("no runs found")]
    NoRuns,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Playback {
        file: PathBuf,
    },
    /// The credential is read from `credential_env`; keys never appear in config.
    Live {
        base_url: String,
        credential_env: String,
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub label: String,
    pub backend: BackendSpec,
}

fn default_parallelism() -> usize {
    1
}

/// The experiment document. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Project spec files.
    pub projects: Vec<PathBuf>,
    pub processes: Vec<String>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub limits: RunLimits,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub temperature: f64,
    /// Directory of template overrides layered on the built-in set.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
}

/// A loaded, validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub projects: Vec<ProjectSpec>,
    pub processes: Vec<ProcessModel>,
    pub output_dir: PathBuf,
    pub templates: TemplateSet,
    base_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(config, &base_dir)
    }

    pub fn from_config(config: ExperimentConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        if config.projects.is_empty() || config.processes.is_empty() || config.models.is_empty() {
            return Err(config_err("projects, processes and models must all be non-empty"));
        }
        if config.parallelism == 0 {
            return Err(config_err("parallelism must be at least 1"));
        }
        if config.limits.max_sprints == 0 {
            return Err(config_err("limits.max_sprints must be at least 1"));
        }
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };

        let mut projects: Vec<ProjectSpec> = Vec::new();
        for p in &config.projects {
            let file = resolve(p);
            let text = std::fs::read_to_string(&file).map_err(|e| config_err(format!("{}: {e}", file.display())))?;
            let spec = ProjectSpec::from_json(&text).map_err(|e| config_err(format!("{}: {e}", file.display())))?;
            if sanitize_label(&spec.id) != spec.id {
                return Err(config_err(format!("project id {:?} is not a plain path component", spec.id)));
            }
            if projects.iter().any(|q| q.id == spec.id) {
                return Err(config_err(format!("duplicate project id {}", spec.id)));
            }
            projects.push(spec);
        }

        let mut processes = Vec::new();
        for name in &config.processes {
            let p = parse_process_model(name).map_err(|e| config_err(e.to_string()))?;
            if processes.contains(&p) {
                return Err(config_err(format!("duplicate process {p}")));
            }
            processes.push(p);
        }

        let mut seen = Vec::new();
        for m in &config.models {
            let dir = sanitize_label(&m.label);
            if m.label.trim().is_empty() || seen.contains(&dir) {
                return Err(config_err(format!("model label {:?} is empty or not unique", m.label)));
            }
            seen.push(dir);
            match &m.backend {
                BackendSpec::Playback { file } => {
                    let f = resolve(file);
                    if !f.is_file() {
                        return Err(config_err(format!("{}: playback file not found", f.display())));
                    }
                }
                BackendSpec::Live { base_url, credential_env, .. } => {
                    if base_url.trim().is_empty() || credential_env.trim().is_empty() {
                        return Err(config_err(format!("{}: base_url and credential_env are required", m.label)));
                    }
                }
            }
        }

        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::with_overrides(&resolve(dir)).map_err(|e| config_err(e.to_string()))?,
            None => TemplateSet::builtin(),
        };

        Ok(Experiment {
            output_dir: resolve(&config.output_dir),
            projects,
            processes,
            templates,
            base_dir: base_dir.to_path_buf(),
            config,
        })
    }

    /// One run config per matrix cell, ordered project, process, model.
    pub fn cells(&self, seed_override: Option<u64>) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for project in &self.projects {
            for &process in &self.processes {
                for model in &self.config.models {
                    let mut cfg = RunConfig::new(project.clone(), process, model.label.clone());
                    cfg.seed = seed_override.unwrap_or(self.config.seed);
                    cfg.limits = self.config.limits;
                    cfg.temperature = self.config.temperature;
                    out.push(cfg);
                }
            }
        }
        out
    }

    /// Builds one backend per model, in config order. Live backends need
    /// their credential variable set.
    pub fn backends(&self) -> Result<Vec<Box<dyn CompletionBackend>>, HarnessError> {
        self.config
            .models
            .iter()
            .map(|m| -> Result<Box<dyn CompletionBackend>, HarnessError> {
                match &m.backend {
                    BackendSpec::Playback { file } => {
                        let path = if file.is_absolute() { file.clone() } else { self.base_dir.join(file) };
                        Ok(Box::new(PlaybackBackend::from_path(&path).map_err(|e| config_err(e.to_string()))?))
                    }
                    BackendSpec::Live { base_url, credential_env, model, timeout_secs } => {
                        let cfg = OpenAiConfig {
                            base_url: base_url.clone(),
                            credential_env: credential_env.clone(),
                            model: model.clone(),
                            timeout_secs: timeout_secs.unwrap_or(300),
                        };
                        Ok(Box::new(OpenAiBackend::from_config(&cfg).map_err(|e| config_err(e.to_string()))?))
                    }
                }
            })
            .collect()
    }
}

/// What happened to one matrix cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub run_id: String,
    pub status: RunStatus,
    pub record: Option<RunRecord>,
}

impl CellOutcome {
    pub fn summary_line(&self) -> String {
        match (&self.status, &self.record) {
            (RunStatus::Completed, Some(r)) => format!(
                "{}: completed files={} loc={} tokens={}",
                self.run_id, r.size.files, r.size.loc, r.cost.total_tokens
            ),
            (RunStatus::Completed, None) => format!("{}: completed", self.run_id),
            (RunStatus::Failed(why), _) => format!("{}: failed: {why}", self.run_id),
        }
    }
}

fn run_cell(exp: &Experiment, cfg: &RunConfig, backend: &dyn CompletionBackend) -> CellOutcome {
    let run_id = cfg.run_id();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        engine::run(cfg, backend, &exp.templates, &exp.output_dir)
    }));
    match result {
        Ok(Ok(out)) => CellOutcome { run_id, status: out.record.status.clone(), record: Some(out.record) },
        Ok(Err(e)) => CellOutcome { run_id, status: RunStatus::Failed(e.to_string()), record: None },
        Err(_) => CellOutcome { run_id, status: RunStatus::Failed("run panicked".into()), record: None },
    }
}

/// Runs every cell on at most `parallelism` worker threads. Outcomes come
/// back in cell order whatever the interleaving.
pub fn run_matrix(
    exp: &Experiment,
    backends: &[Box<dyn CompletionBackend>],
    seed_override: Option<u64>,
    mut on_done: impl FnMut(&CellOutcome) + Send,
) -> Vec<CellOutcome> {
    let cells = exp.cells(seed_override);
    let models = exp.config.models.len();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; cells.len()]);
    let report = Mutex::new(&mut on_done);
    let workers = exp.config.parallelism.min(cells.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = cells.get(i) else { break };
                let outcome = run_cell(exp, cfg, backends[i % models].as_ref());
                (report.lock().unwrap_or_else(|e| e.into_inner()))(&outcome);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestKind {
    Issues,
    Manual,
}

fn malformed(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::MalformedFile { path: path.display().to_string(), message: message.to_string() }
}

fn record_path(runs_dir: &Path, run_id: &str) -> Result<PathBuf, HarnessError> {
    let rel = Path::new(run_id);
    if run_id.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(HarnessError::UnknownRun(run_id.to_string()));
    }
    let path = runs_dir.join(rel).join("record.json");
    if path.is_file() {
        Ok(path)
    } else {
        Err(HarnessError::UnknownRun(run_id.to_string()))
    }
}

fn read_record(path: &Path) -> Result<RunRecord, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e))
}

fn write_record(path: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(record).map_err(std::io::Error::from)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Applies an issue export or manual test session to the run it names and
/// re-persists the record. Ingesting the same file twice is a no-op.
pub fn ingest(kind: IngestKind, file: &Path, runs_dir: &Path) -> Result<RunRecord, HarnessError> {
    let text = std::fs::read_to_string(file).map_err(|e| malformed(file, e))?;
    let (run_id, apply): (String, Box<dyn Fn(&mut RunRecord) -> bool>) = match kind {
        IngestKind::Issues => {
            let report: IssueReport = serde_json::from_str(&text).map_err(|e| malformed(file, e))?;
            (report.run_id.clone(), Box::new(move |r| {
                apply_issues(r, &report);
                true
            }))
        }
        IngestKind::Manual => {
            let session: ManualTestSession = serde_json::from_str(&text).map_err(|e| malformed(file, e))?;
            (session.run_id.clone(), Box::new(move |r| apply_manual_session(r, &session)))
        }
    };
    let path = record_path(runs_dir, &run_id)?;
    let mut record = read_record(&path)?;
    if !apply(&mut record) {
        return Err(malformed(file, "session has no test cases"));
    }
    write_record(&path, &record)?;
    Ok(record)
}

/// Every `record.json` below `runs_dir`, ordered by path.
pub fn load_records(runs_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut out = Vec::new();
    if !runs_dir.is_dir() {
        return Ok(out);
    }
    for entry in walkdir::WalkDir::new(runs_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| std::io::Error::other(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == "record.json" {
            out.push(read_record(entry.path())?);
        }
    }
    Ok(out)
}

/// Writes the report files for every persisted run.
pub fn report(runs_dir: &Path, out_dir: &Path) -> Result<ReportFiles, HarnessError> {
    let records = load_records(runs_dir)?;
    if records.is_empty() {
        return Err(HarnessError::NoRuns);
    }
    let rows = anova_table(&records);
    Ok(emit_report(&rows, &records, out_dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn project(dir: &Path, id: &str) -> PathBuf {
        write(
            dir,
            &format!("{id}.json"),
            &format!(r#"{{"id":"{id}","title":"{id}","requirement_text":"Build {id}.","target_language_label":"JavaScript"}}"#),
        )
    }

    #[test]
    fn cells_cover_the_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let mut projects = Vec::new();
        for i in 0..11 {
            projects.push(project(dir.path(), &format!("p{i}")));
        }
        write(dir.path(), "play.json", r#"{"entries":[]}"#);
        let models = (0..4)
            .map(|i| ModelSpec { label: format!("m{i}"), backend: BackendSpec::Playback { file: "play.json".into() } })
            .collect();
        let config = ExperimentConfig {
            projects,
            processes: vec!["waterfall".into(), "V-Model".into(), "agile".into()],
            models,
            limits: RunLimits::default(),
            parallelism: 4,
            output_dir: "runs".into(),
            seed: 7,
            temperature: 0.0,
            templates_dir: None,
        };
        let exp = Experiment::from_config(config, dir.path()).unwrap();
        let cells = exp.cells(None);
        assert_eq!(cells.len(), 132);
        assert!(cells.iter().all(|c| c.seed == 7));
        assert!(exp.cells(Some(9)).iter().all(|c| c.seed == 9));
        let ids: std::collections::BTreeSet<_> = cells.iter().map(RunConfig::run_id).collect();
        assert_eq!(ids.len(), 132);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let p = project(dir.path(), "snake");
        let base = format!(
            r#"{{"projects":["{}"],"processes":["agile"],"models":[{{"label":"m","backend":{{"kind":"playback","file":"missing.json"}}}}],"output_dir":"runs"}}"#,
            p.display()
        );
        let cfg = write(dir.path(), "a.json", &base);
        assert!(matches!(Experiment::load(&cfg), Err(HarnessError::Config(_))));
        let cfg = write(dir.path(), "b.json", "{not json");
        assert!(matches!(Experiment::load(&cfg), Err(HarnessError::Config(_))));
        let cfg = write(dir.path(), "c.json", &base.replace("agile", "spiral"));
        assert!(matches!(Experiment::load(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn record_paths_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(record_path(dir.path(), "../x"), Err(HarnessError::UnknownRun(_))));
        assert!(matches!(record_path(dir.path(), "/etc"), Err(HarnessError::UnknownRun(_))));
        assert!(matches!(record_path(dir.path(), "a/b/c"), Err(HarnessError::UnknownRun(_))));
    }
}

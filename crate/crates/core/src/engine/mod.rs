//! Process engines: Waterfall, V-Model and Agile as sequential state machines.
//!
//! Each engine activates roles in a fixed schedule. Artifacts travel through
//! the message pool (every role reads its inputs from its own subscription)
//! and are persisted in the run workspace.

pub mod backlog;
mod agile;
mod linear;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentContext, AgentError, Bindings, Parsed, PriorArtifact, TemplateSet, Turn};
use crate::domain::{failure_ratio, ratio_to_f64, roles_for, Phase, ProcessModel, RoleKind, RunConfig, RunRecord, RunStatus, Stage};
use crate::gateway::{CompletionBackend, TokenLedger};
use crate::pool::{Draft, Filter, Message, MessageId, MessageKind, MessagePool, PoolError, SubscriptionId};
use crate::workspace::{Workspace, WorkspaceError};

pub use agile::run_agile;
pub use backlog::{backlog_from_prd, BacklogItem};
pub use linear::{run_vmodel, run_waterfall};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{phase} failed: {cause}")]
    RunFailed { phase: Phase, cause: String },
    #[error("missing test plan for {0}")]
    MissingPlan(Stage),
    #[error("schedule violation: {0}")]
    ScheduleViolation(String),
    #[error("persisting run: {0}")]
    Persist(String),
}

impl From<PoolError> for EngineError {
    fn from(e: PoolError) -> Self {
        EngineError::Persist(e.to_string())
    }
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Persist(e.to_string())
    }
}

impl From<serde_json::Error> for EngineError {
    fn from(e: serde_json::Error) -> Self {
        EngineError::Persist(e.to_string())
    }
}

fn failed(phase: Phase, cause: impl ToString) -> EngineError {
    EngineError::RunFailed { phase, cause: cause.to_string() }
}

/// Where an engine is in its schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub process: ProcessModel,
    pub current_phase: Option<Phase>,
    pub completed_phases: Vec<Phase>,
    pub sprint_index: Option<u32>,
    pub halted: Option<String>,
}

impl EngineState {
    pub fn new(process: ProcessModel) -> Self {
        EngineState { process, current_phase: None, completed_phases: Vec::new(), sprint_index: None, halted: None }
    }

    /// Moves to `phase`, completing the current one. Re-entering a phase is
    /// refused, except that Agile may repeat a stage in a later sprint.
    pub fn enter(&mut self, phase: Phase) -> Result<(), EngineError> {
        if self.current_phase == Some(phase) {
            return Ok(());
        }
        let revisit = self.completed_phases.iter().chain(self.current_phase.as_ref()).any(|done| {
            done.stage == phase.stage
                && match self.process {
                    ProcessModel::Agile => done.sprint >= phase.sprint,
                    _ => true,
                }
        });
        if revisit {
            return Err(EngineError::ScheduleViolation(format!("{phase} re-entered")));
        }
        if let Some(prev) = self.current_phase.take() {
            self.completed_phases.push(prev);
        }
        self.current_phase = Some(phase);
        if phase.sprint.is_some() {
            self.sprint_index = phase.sprint;
        }
        Ok(())
    }

    /// Completes the current phase without starting another.
    pub fn finish(&mut self) {
        if let Some(prev) = self.current_phase.take() {
            self.completed_phases.push(prev);
        }
    }

    pub fn halt(&mut self, reason: impl Into<String>) {
        self.halted = Some(reason.into());
    }
}

/// One scheduled role activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasePlan {
    pub phase: Phase,
    pub actor: RoleKind,
    pub consumes: &'static [MessageKind],
    pub produces: MessageKind,
    /// V-Model only: the phase on the other leg of the V.
    pub validation_pair: Option<Phase>,
}

/// The V-Model pairing of a development stage with its testing stage, in
/// either direction.
pub fn validation_pair(stage: Stage) -> Option<Stage> {
    match stage {
        Stage::Requirements => Some(Stage::AcceptanceTesting),
        Stage::AcceptanceTesting => Some(Stage::Requirements),
        Stage::Design => Some(Stage::IntegrationTesting),
        Stage::IntegrationTesting => Some(Stage::Design),
        Stage::Implementation => Some(Stage::UnitTesting),
        Stage::UnitTesting => Some(Stage::Implementation),
        _ => None,
    }
}

const fn step(stage: Stage, actor: RoleKind, consumes: &'static [MessageKind], produces: MessageKind) -> PhasePlan {
    PhasePlan { phase: Phase::new(stage), actor, consumes, produces, validation_pair: None }
}

const fn paired(mut p: PhasePlan, with: Stage) -> PhasePlan {
    p.validation_pair = Some(Phase::new(with));
    p
}

use MessageKind as K;
use RoleKind as R;

const WATERFALL: [PhasePlan; 7] = [
    step(Stage::Requirements, R::ProjectManager, &[], K::RequirementDoc),
    step(Stage::Design, R::Designer, &[K::RequirementDoc], K::DesignDoc),
    step(Stage::Implementation, R::Developer, &[K::DesignDoc], K::CodeBundle),
    step(Stage::UnitTesting, R::UnitTestExecutor, &[K::DesignDoc, K::CodeBundle], K::TestReport),
    step(Stage::IntegrationTesting, R::IntegrationTestExecutor, &[K::DesignDoc, K::CodeBundle, K::TestReport], K::TestReport),
    step(Stage::AcceptanceTesting, R::AcceptanceTestExecutor, &[K::RequirementDoc, K::CodeBundle, K::TestReport], K::TestReport),
    step(Stage::Deployment, R::Deployer, &[K::CodeBundle, K::TestReport], K::DeploymentNote),
];

const VMODEL: [PhasePlan; 9] = [
    step(Stage::Requirements, R::ProjectManager, &[], K::RequirementDoc),
    paired(step(Stage::Requirements, R::AcceptanceTestExecutor, &[K::RequirementDoc], K::TestPlan), Stage::AcceptanceTesting),
    step(Stage::Design, R::Designer, &[K::RequirementDoc], K::DesignDoc),
    paired(step(Stage::Design, R::IntegrationTestExecutor, &[K::DesignDoc], K::TestPlan), Stage::IntegrationTesting),
    step(Stage::Implementation, R::Developer, &[K::DesignDoc], K::CodeBundle),
    paired(step(Stage::Implementation, R::UnitTestExecutor, &[K::DesignDoc, K::CodeBundle], K::TestPlan), Stage::UnitTesting),
    paired(step(Stage::UnitTesting, R::UnitTestExecutor, &[K::TestPlan, K::DesignDoc, K::CodeBundle], K::TestReport), Stage::Implementation),
    paired(step(Stage::IntegrationTesting, R::IntegrationTestExecutor, &[K::TestPlan, K::DesignDoc, K::CodeBundle], K::TestReport), Stage::Design),
    paired(step(Stage::AcceptanceTesting, R::AcceptanceTestExecutor, &[K::TestPlan, K::RequirementDoc, K::CodeBundle], K::TestReport), Stage::Requirements),
];

/// Agile steps; everything after the first repeats once per sprint.
const AGILE: [PhasePlan; 7] = [
    step(Stage::Requirements, R::ProjectManager, &[], K::RequirementDoc),
    step(Stage::SprintPlanning, R::SprintManager, &[K::RequirementDoc, K::SprintRetro], K::SprintPlan),
    step(Stage::Design, R::Designer, &[K::RequirementDoc, K::SprintPlan, K::DesignDoc], K::DesignDoc),
    step(Stage::Implementation, R::Developer, &[K::DesignDoc, K::SprintPlan], K::CodeBundle),
    step(Stage::Testing, R::Tester, &[K::RequirementDoc, K::CodeBundle], K::TestReport),
    step(Stage::Deployment, R::Deployer, &[K::CodeBundle, K::TestReport], K::DeploymentNote),
    step(Stage::SprintReview, R::SprintManager, &[K::TestReport], K::SprintRetro),
];

/// The canonical schedule of a process.
pub fn schedule(process: ProcessModel) -> &'static [PhasePlan] {
    match process {
        ProcessModel::Waterfall => &WATERFALL,
        ProcessModel::VModel => &VMODEL,
        ProcessModel::Agile => &AGILE,
    }
}

/// A V-Model link from a test plan to the report that executed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEdge {
    pub plan: MessageId,
    pub report: MessageId,
    pub stage: Stage,
}

/// Plan-to-report edges found in a transcript. An edge counts only when the
/// referenced plan was drafted in the stage paired with the report's stage.
pub fn traceability_edges(transcript: &[Message]) -> Vec<TraceEdge> {
    let by_id: BTreeMap<MessageId, &Message> = transcript.iter().map(|m| (m.id, m)).collect();
    let mut edges = Vec::new();
    for report in transcript.iter().filter(|m| m.kind == MessageKind::TestReport) {
        for r in &report.references {
            let Some(plan) = by_id.get(r) else { continue };
            if plan.kind == MessageKind::TestPlan && validation_pair(plan.phase.stage) == Some(report.phase.stage) {
                edges.push(TraceEdge { plan: plan.id, report: report.id, stage: report.phase.stage });
            }
        }
    }
    edges
}

/// Workspace path of a document message.
fn doc_path(kind: MessageKind, phase: Phase) -> String {
    let sprint = phase.sprint.unwrap_or(0);
    match kind {
        K::RequirementDoc => "docs/prd.json".into(),
        K::DesignDoc => "docs/design.json".into(),
        K::TestPlan => format!(
            "docs/test_plans/{}.json",
            validation_pair(phase.stage).map(Stage::slug).unwrap_or(phase.stage.slug())
        ),
        K::TestReport => match phase.sprint {
            Some(s) => format!("docs/test_reports/sprint-{s}.json"),
            None => format!("docs/test_reports/{}.json", phase.stage.slug()),
        },
        K::DeploymentNote => "docs/deployment.json".into(),
        K::SprintPlan => format!("docs/sprints/sprint-{sprint}-plan.json"),
        K::SprintRetro => format!("docs/sprints/sprint-{sprint}-retro.json"),
        K::CodeBundle => "docs/code.md".into(),
    }
}

/// Mutable state of one run, shared by the engine drivers.
pub struct RunContext<'a> {
    pub(crate) cfg: &'a RunConfig,
    agents: AgentContext<'a>,
    templates: &'a TemplateSet,
    pub(crate) pool: MessagePool,
    pub(crate) ws: Workspace,
    pub(crate) ledger: TokenLedger,
    pub(crate) state: EngineState,
    plan: &'static [PhasePlan],
    subs: BTreeMap<RoleKind, SubscriptionId>,
    inbox: BTreeMap<RoleKind, Vec<Message>>,
    pub(crate) tests_failed: u64,
    pub(crate) tests_total: u64,
}

impl<'a> RunContext<'a> {
    pub fn new(cfg: &'a RunConfig, backend: &'a dyn CompletionBackend, templates: &'a TemplateSet, ws: Workspace) -> Self {
        let plan = schedule(cfg.process);
        let pool = MessagePool::new();
        let mut subs = BTreeMap::new();
        for &role in roles_for(cfg.process) {
            let kinds: BTreeSet<MessageKind> =
                plan.iter().filter(|p| p.actor == role).flat_map(|p| p.consumes.iter().copied()).collect();
            if !kinds.is_empty() {
                subs.insert(role, pool.subscribe(role, Filter::kinds(kinds)));
            }
        }
        RunContext {
            cfg,
            agents: AgentContext::new(backend, cfg),
            templates,
            pool,
            ws,
            ledger: TokenLedger::new(),
            state: EngineState::new(cfg.process),
            plan,
            subs,
            inbox: BTreeMap::new(),
            tests_failed: 0,
            tests_total: 0,
        }
    }

    /// Roles whose schedule steps consume `kind`.
    fn recipients(&self, kind: MessageKind) -> BTreeSet<RoleKind> {
        self.plan.iter().filter(|p| p.consumes.contains(&kind)).map(|p| p.actor).collect()
    }

    /// Pulls newly published messages into `role`'s inbox.
    fn sync(&mut self, role: RoleKind) -> Result<(), EngineError> {
        if let Some(&sub) = self.subs.get(&role) {
            let new = self.pool.poll(sub)?;
            self.inbox.entry(role).or_default().extend(new);
        }
        Ok(())
    }

    fn inbox(&self, role: RoleKind) -> &[Message] {
        self.inbox.get(&role).map(Vec::as_slice).unwrap_or(&[])
    }

    fn latest(&self, role: RoleKind, kind: MessageKind) -> Option<&Message> {
        self.inbox(role).iter().rev().find(|m| m.kind == kind)
    }

    /// Bindings every template may use, from the project and `role`'s inbox.
    fn base_bindings(&self, role: RoleKind) -> Bindings {
        let mut b = Bindings::new()
            .set("project_name", self.cfg.project.title.clone())
            .set("requirement", self.cfg.project.requirement_text.clone());
        if let Some(m) = self.latest(role, K::RequirementDoc) {
            b = b.set("prd", m.content.clone());
        }
        if let Some(m) = self.latest(role, K::DesignDoc) {
            b = b.set("detailed_design", m.content.clone());
        }
        b
    }

    fn code_prior(&self) -> Vec<PriorArtifact> {
        self.ws.code_files().map(|a| PriorArtifact::new(a.path.clone(), a.text())).collect()
    }

    fn activate(&mut self, role: RoleKind, phase: Phase, kind: MessageKind, bindings: &Bindings) -> Result<Turn, AgentError> {
        let template = self.templates.get(&self.cfg.project.id, self.cfg.process, role, phase.stage)?;
        self.agents.invoke(role, phase, kind, template, bindings, &mut self.ledger)
    }

    /// Persists an agent's output and publishes it.
    fn store(&mut self, role: RoleKind, phase: Phase, turn: &Turn, references: Vec<MessageId>) -> Result<Message, EngineError> {
        let kind = turn.output.kind;
        let (content, refs) = match &turn.output.parsed {
            Parsed::Code(bundle) => {
                let written = self.ws.write_bundle(bundle).map_err(|e| failed(phase, e))?;
                (bundle.to_fenced(), written.into_iter().map(|a| a.path).collect())
            }
            Parsed::Doc(doc) => {
                let text = doc.to_pretty();
                (text.clone(), vec![self.write_doc(kind, phase, text)?])
            }
            Parsed::Report(report) => {
                self.tests_failed += report.failed_count();
                self.tests_total += report.total();
                let text = serde_json::to_string_pretty(report)?;
                (text.clone(), vec![self.write_doc(kind, phase, text)?])
            }
        };
        let mut draft = Draft::new(role, phase, kind, content).to(self.recipients(kind)).with_refs(refs);
        draft.references = references;
        draft.prompt = Some(turn.prompt.clone());
        self.publish(draft)
    }

    fn write_doc(&mut self, kind: MessageKind, phase: Phase, text: String) -> Result<String, EngineError> {
        let path = doc_path(kind, phase);
        self.ws.write(&path, kind, text).map_err(|e| match e {
            WorkspaceError::IoFailure(_) => EngineError::Persist(e.to_string()),
            other => failed(phase, other),
        })?;
        Ok(path)
    }

    fn publish(&mut self, mut draft: Draft) -> Result<Message, EngineError> {
        if !roles_for(self.cfg.process).contains(&draft.sender) {
            return Err(EngineError::ScheduleViolation(format!("{} is not a {} role", draft.sender, self.cfg.process)));
        }
        if self.cfg.process == ProcessModel::Waterfall {
            draft.handoff_owner = Some(RoleKind::Developer);
        }
        Ok(self.pool.publish(draft)?)
    }
}

/// Everything an engine produced, before persistence.
#[derive(Debug)]
pub struct Execution {
    pub record: RunRecord,
    pub state: EngineState,
    pub transcript: Vec<Message>,
    pub ledger: TokenLedger,
    pub workspace: Workspace,
    pub error: Option<EngineError>,
}

/// Runs the engine for `config.process` against `workspace`.
pub fn execute(
    config: &RunConfig,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
    workspace: Workspace,
) -> Execution {
    let mut r = RunContext::new(config, backend, templates, workspace);
    let deterministic = backend.is_deterministic();
    let outcome = match config.process {
        ProcessModel::Waterfall => run_waterfall(&mut r),
        ProcessModel::VModel => run_vmodel(&mut r),
        ProcessModel::Agile => run_agile(&mut r, deterministic),
    };
    let error = outcome.err();
    match &error {
        Some(e) => r.state.halt(e.to_string()),
        None => r.state.finish(),
    }
    r.pool.close();

    let mut record = RunRecord {
        config: config.clone(),
        status: match &error {
            Some(e) => RunStatus::Failed(e.to_string()),
            None => RunStatus::Completed,
        },
        size: Default::default(),
        cost: Default::default(),
        quality: Default::default(),
        transcript_path: String::new(),
    };
    record.cost.total_tokens = r.ledger.total_tokens();
    record.cost.wall_time = r.ledger.total_latency();
    let size = r.ws.measure_size();
    record.set_size(size.files, size.loc, size.artifact_files);
    record.quality.ai_bug_rate = failure_ratio(r.tests_failed, r.tests_total).map(ratio_to_f64);

    Execution {
        record,
        state: r.state,
        transcript: r.pool.transcript(),
        ledger: r.ledger,
        workspace: r.ws,
        error,
    }
}

/// Result of [`run`]: the persisted record plus the engine's view of the run.
#[derive(Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub state: EngineState,
    pub transcript: Vec<Message>,
    pub error: Option<EngineError>,
    pub run_dir: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Runs one cell into `runs_root/{project}/{process}/{model}/`, replacing any
/// earlier contents of that directory. Engine failures are reported in the
/// output and the record; only persistence failures return `Err`.
pub fn run(
    config: &RunConfig,
    backend: &dyn CompletionBackend,
    templates: &TemplateSet,
    runs_root: &Path,
) -> Result<RunOutput, EngineError> {
    let run_id = config.run_id();
    let run_dir = runs_root.join(&run_id);
    if run_dir.exists() {
        std::fs::remove_dir_all(&run_dir)?;
    }
    std::fs::create_dir_all(&run_dir)?;
    let ws = Workspace::on_disk(run_dir.join("workspace"), run_dir.join("snapshots")).map_err(|e| EngineError::Persist(e.to_string()))?;

    let Execution { mut record, state, transcript, ledger, workspace, error } = execute(config, backend, templates, ws);
    if let Some(e) = &error {
        log::warn!("{run_id}: {e}");
    }
    if record.cost.total_tokens != ledger.total_tokens() || record.size.files != workspace.measure_size().files {
        return Err(EngineError::Persist(format!("{run_id}: record disagrees with ledger or workspace")));
    }

    let transcript_file = run_dir.join("transcript.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&transcript_file)?);
    for m in &transcript {
        serde_json::to_writer(&mut out, m)?;
        std::io::Write::write_all(&mut out, b"\n")?;
    }
    std::io::Write::flush(&mut out)?;
    drop(out);

    record.transcript_path = format!("{run_id}/transcript.jsonl");
    write_json(&run_dir.join("ledger.json"), &ledger)?;
    write_json(&run_dir.join("record.json"), &record)?;
    Ok(RunOutput { record, state, transcript, error, run_dir })
}
